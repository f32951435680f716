//! Multi-index sets for the tensorized basis and their orderings.
//!
//! * "A": total degree `k1 + k2`, ties by increasing `k1`. Positions are
//!   independent of the truncation degree.
//! * "B": lexicographic on the square set, by `k2` then `k1`.
//! * "C": diagonal ordering of the square set; agrees with A on `K^p`.
//!
//! All math-facing positions (`position_a`, `pi_map`) are 1-based.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index `(k1, k2)` of the tensorized Babuška-Shen function `eta_k1 (x) eta_k2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex {
    pub k1: u32,
    pub k2: u32,
}

impl MultiIndex {
    pub fn new(k1: u32, k2: u32) -> Result<Self> {
        if k1 < 2 || k2 < 2 {
            return Err(Error::InvalidIndex(k1 as i64, k2 as i64));
        }
        Ok(Self { k1, k2 })
    }

    /// Total degree `k1 + k2`.
    pub fn total(&self) -> u32 {
        self.k1 + self.k2
    }

    pub fn l1_distance(&self, other: &MultiIndex) -> u32 {
        self.k1.abs_diff(other.k1) + self.k2.abs_diff(other.k2)
    }

    pub fn parity_block(&self) -> ParityBlock {
        ParityBlock::of(self.k1, self.k2)
    }
}

impl Ord for MultiIndex {
    /// The A-ordering.
    fn cmp(&self, other: &Self) -> Ordering {
        self.total()
            .cmp(&other.total())
            .then(self.k1.cmp(&other.k1))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.k1, self.k2)
    }
}

/// 1-based rank of `k` in the A-ordering of the whole index set.
pub fn position_a(k: MultiIndex) -> Result<usize> {
    let k = MultiIndex::new(k.k1, k.k2)?;
    let s = k.total() as usize;
    Ok((s - 4) * (s - 3) / 2 + (k.k1 as usize - 1))
}

/// Inverse of [`position_a`].
pub fn index_at_position_a(pos: usize) -> Result<MultiIndex> {
    if pos == 0 {
        return Err(Error::OutOfRange { index: 0, max: usize::MAX });
    }
    // largest s with (s-4)(s-3)/2 < pos
    let mut s = 4usize;
    while (s - 3) * (s - 2) / 2 < pos {
        s += 1;
    }
    let offset = pos - (s - 4) * (s - 3) / 2;
    MultiIndex::new(offset as u32 + 1, (s - offset - 1) as u32)
}

/// Even/odd family of a tensorized BS function in each direction. `eta_k`
/// has the parity of `k`; the first sign refers to `k1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParityBlock {
    #[serde(rename = "++")]
    EvenEven,
    #[serde(rename = "+-")]
    EvenOdd,
    #[serde(rename = "-+")]
    OddEven,
    #[serde(rename = "--")]
    OddOdd,
}

impl ParityBlock {
    pub const ALL: [ParityBlock; 4] = [
        ParityBlock::EvenEven,
        ParityBlock::EvenOdd,
        ParityBlock::OddEven,
        ParityBlock::OddOdd,
    ];

    pub fn of(k1: u32, k2: u32) -> Self {
        match (k1.is_multiple_of(2), k2.is_multiple_of(2)) {
            (true, true) => ParityBlock::EvenEven,
            (true, false) => ParityBlock::EvenOdd,
            (false, true) => ParityBlock::OddEven,
            (false, false) => ParityBlock::OddOdd,
        }
    }

    /// Smallest admissible `(k1, k2)` in the block.
    pub fn first(&self) -> (u32, u32) {
        match self {
            ParityBlock::EvenEven => (2, 2),
            ParityBlock::EvenOdd => (2, 3),
            ParityBlock::OddEven => (3, 2),
            ParityBlock::OddOdd => (3, 3),
        }
    }

    pub fn contains(&self, k: &MultiIndex) -> bool {
        k.parity_block() == *self
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            ParityBlock::EvenEven => "++",
            ParityBlock::EvenOdd => "+-",
            ParityBlock::OddEven => "-+",
            ParityBlock::OddOdd => "--",
        }
    }
}

impl fmt::Display for ParityBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for ParityBlock {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "++" | "ee" => Ok(ParityBlock::EvenEven),
            "+-" | "eo" => Ok(ParityBlock::EvenOdd),
            "-+" | "oe" => Ok(ParityBlock::OddEven),
            "--" | "oo" => Ok(ParityBlock::OddOdd),
            _ => Err(Error::InvalidArgument(format!("unknown parity block `{s}`"))),
        }
    }
}

/// Parity block of `k`; free-function form of [`MultiIndex::parity_block`].
pub fn parity_block(k: MultiIndex) -> ParityBlock {
    k.parity_block()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IndexOrdering {
    /// Total degree, then `k1`.
    A,
    /// Lexicographic: `k2`, then `k1`.
    B,
    /// Diagonal ordering of the square set.
    C,
}

/// An ordered finite subset of the index set.
#[derive(Debug, Clone)]
pub struct IndexSet {
    indices: Vec<MultiIndex>,
    ordering: IndexOrdering,
    degree: u32,
    lookup: HashMap<MultiIndex, usize>,
}

impl IndexSet {
    fn from_sorted(indices: Vec<MultiIndex>, ordering: IndexOrdering, degree: u32) -> Self {
        let lookup = indices.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        Self {
            indices,
            ordering,
            degree,
            lookup,
        }
    }

    /// `K^p = { k : k1 + k2 <= p }` in the A-ordering, optionally restricted
    /// to one parity block.
    pub fn total_degree(p: u32, block: Option<ParityBlock>) -> Self {
        let mut indices = Vec::new();
        for s in 4..=p {
            for k1 in 2..=s - 2 {
                let k = MultiIndex { k1, k2: s - k1 };
                if block.is_none_or(|b| b.contains(&k)) {
                    indices.push(k);
                }
            }
        }
        Self::from_sorted(indices, IndexOrdering::A, p)
    }

    /// Square set `{ k : k_i <= p }` in the B (lexicographic) or C (diagonal)
    /// ordering.
    pub fn square(p: u32, ordering: IndexOrdering, block: Option<ParityBlock>) -> Self {
        let mut indices = Vec::new();
        for k2 in 2..=p {
            for k1 in 2..=p {
                let k = MultiIndex { k1, k2 };
                if block.is_none_or(|b| b.contains(&k)) {
                    indices.push(k);
                }
            }
        }
        if ordering != IndexOrdering::B {
            indices.sort();
        }
        Self::from_sorted(indices, ordering, p)
    }

    /// Arbitrary set sorted in the A-ordering.
    pub fn from_indices<I: IntoIterator<Item = MultiIndex>>(indices: I) -> Self {
        let set: BTreeSet<MultiIndex> = indices.into_iter().collect();
        let degree = set.iter().map(|k| k.total()).max().unwrap_or(0);
        Self::from_sorted(set.into_iter().collect(), IndexOrdering::A, degree)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn ordering(&self) -> IndexOrdering {
        self.ordering
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// 0-based position of `k` in this set.
    pub fn position(&self, k: &MultiIndex) -> Option<usize> {
        self.lookup.get(k).copied()
    }

    pub fn get(&self, i: usize) -> MultiIndex {
        self.indices[i]
    }

    pub fn contains(&self, k: &MultiIndex) -> bool {
        self.lookup.contains_key(k)
    }

    /// Largest l1 distance between two members.
    pub fn l1_diameter(&self) -> u32 {
        let (mut lo1, mut hi1, mut lo2, mut hi2) = (u32::MAX, 0, u32::MAX, 0);
        let (mut lo_s, mut hi_s, mut lo_d, mut hi_d) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
        for k in &self.indices {
            lo1 = lo1.min(k.k1);
            hi1 = hi1.max(k.k1);
            lo2 = lo2.min(k.k2);
            hi2 = hi2.max(k.k2);
            let s = (k.k1 + k.k2) as i64;
            let d = k.k1 as i64 - k.k2 as i64;
            lo_s = lo_s.min(s);
            hi_s = hi_s.max(s);
            lo_d = lo_d.min(d);
            hi_d = hi_d.max(d);
        }
        if self.indices.is_empty() {
            return 0;
        }
        // ||a - b||_1 = max(|ds|, |dd|) in rotated coordinates
        (hi_s - lo_s).max(hi_d - lo_d) as u32
    }
}

/// Splits a C-ordering position `u` (1-based) on an `n x n` grid into the
/// diagonal number `d` and the position `e` along it.
pub fn diagonal_coordinates(u: usize, n: usize) -> Result<(usize, usize)> {
    if n == 0 || u == 0 || u > n * n {
        return Err(Error::OutOfRange { index: u, max: n * n });
    }
    let mut before = 0;
    for d in 1..=2 * n - 1 {
        let len = d.min(n) - d.saturating_sub(n);
        if u <= before + len {
            return Ok((d, u - before));
        }
        before += len;
    }
    unreachable!("u <= n^2 is always located on some diagonal")
}

/// Permutation from the diagonal (C) ordering to the lexicographic (B)
/// ordering of an `n x n` grid: `pi(u) = n (min(d,n) - e) + max(0, d-n) + e`.
pub fn pi_map(u: usize, n: usize) -> Result<usize> {
    let (d, e) = diagonal_coordinates(u, n)?;
    Ok(n * (d.min(n) - e) + d.saturating_sub(n) + e)
}

/// Grid coordinates `(l, m)` of a lexicographic position `alpha = n(m-1) + l`.
pub fn lexicographic_coordinates(alpha: usize, n: usize) -> (usize, usize) {
    ((alpha - 1) % n + 1, (alpha - 1) / n + 1)
}

/// `{ k in K : ||k - l||_1 <= radius for some l in lambda }`.
pub fn enrich<'a, I>(lambda: I, radius: u32) -> BTreeSet<MultiIndex>
where
    I: IntoIterator<Item = &'a MultiIndex>,
{
    let mut out = BTreeSet::new();
    let r = radius as i64;
    for k in lambda {
        for d1 in -r..=r {
            let rest = r - d1.abs();
            let k1 = k.k1 as i64 + d1;
            if k1 < 2 {
                continue;
            }
            for d2 in -rest..=rest {
                let k2 = k.k2 as i64 + d2;
                if k2 >= 2 {
                    out.insert(MultiIndex {
                        k1: k1 as u32,
                        k2: k2 as u32,
                    });
                }
            }
        }
    }
    out
}

/// Cardinality of a full two-dimensional l1 ball of the given radius.
pub fn l1_ball_size(radius: u32) -> usize {
    let j = radius as usize;
    2 * j * j + 2 * j + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(k1: u32, k2: u32) -> MultiIndex {
        MultiIndex::new(k1, k2).unwrap()
    }

    #[test]
    fn a_positions() {
        assert_eq!(position_a(mi(2, 2)).unwrap(), 1);
        assert_eq!(position_a(mi(2, 3)).unwrap(), 2);
        assert_eq!(position_a(mi(3, 2)).unwrap(), 3);
        assert!(position_a(mi(2, 4)).unwrap() < position_a(mi(4, 2)).unwrap());
        assert!(position_a(MultiIndex { k1: 1, k2: 5 }).is_err());
    }

    #[test]
    fn a_positions_match_enumeration_and_are_stable_in_p() {
        let big = IndexSet::total_degree(40, None);
        for (i, k) in big.indices().iter().enumerate() {
            assert_eq!(position_a(*k).unwrap(), i + 1);
            assert_eq!(index_at_position_a(i + 1).unwrap(), *k);
        }
        let small = IndexSet::total_degree(17, None);
        assert_eq!(small.indices(), &big.indices()[..small.len()]);
    }

    #[test]
    fn pi_map_examples() {
        assert_eq!(pi_map(1, 1).unwrap(), 1);
        assert_eq!(pi_map(2, 3).unwrap(), 4);
        assert_eq!(pi_map(3, 3).unwrap(), 2);
        assert!(pi_map(10, 3).is_err());
        assert!(pi_map(0, 3).is_err());
    }

    /// Brute force: list the grid in the C ordering and look each point up in
    /// the lexicographic ordering.
    fn brute_pi(n: usize) -> Vec<usize> {
        let mut pts: Vec<(usize, usize)> = Vec::new();
        for m in 1..=n {
            for l in 1..=n {
                pts.push((l, m));
            }
        }
        let lex = pts.clone();
        pts.sort_by_key(|&(l, m)| (l + m, l));
        pts.iter()
            .map(|p| lex.iter().position(|q| q == p).unwrap() + 1)
            .collect()
    }

    #[test]
    fn pi_map_matches_brute_force_and_is_bijective() {
        for n in 1..=50 {
            let mapped: Vec<usize> = (1..=n * n).map(|u| pi_map(u, n).unwrap()).collect();
            if n <= 12 {
                assert_eq!(mapped, brute_pi(n), "n = {n}");
            }
            let mut sorted = mapped.clone();
            sorted.sort_unstable();
            assert!(sorted.iter().copied().eq(1..=n * n), "n = {n}");
        }
    }

    #[test]
    fn c_ordering_agrees_with_a_on_total_degree_set() {
        let p = 12;
        let c = IndexSet::square(p, IndexOrdering::C, None);
        let a = IndexSet::total_degree(p, None);
        assert_eq!(&c.indices()[..a.len()], a.indices());
        // pi_map on the (p-1)x(p-1) grid sends C positions to B positions
        let b = IndexSet::square(p, IndexOrdering::B, None);
        let n = (p - 1) as usize;
        for u in 1..=n * n {
            let k = c.get(u - 1);
            assert_eq!(b.position(&k).unwrap() + 1, pi_map(u, n).unwrap());
        }
    }

    #[test]
    fn nesting_of_square_and_total_degree_sets() {
        for p in 4..=200u32 {
            let inner = IndexSet::square(p / 2, IndexOrdering::B, None);
            let mid = IndexSet::total_degree(p, None);
            assert!(inner.indices().iter().all(|k| mid.contains(k)), "p = {p}");
            assert!(mid.indices().iter().all(|k| k.k1 <= p && k.k2 <= p));
        }
    }

    #[test]
    fn cardinality_grows_quadratically() {
        for p in [10u32, 40, 100] {
            let n = IndexSet::total_degree(p, None).len();
            let pp = (p - 3) as usize;
            assert_eq!(n, pp * (pp + 1) / 2);
        }
    }

    #[test]
    fn enrich_examples() {
        let lam = [mi(5, 5)];
        assert_eq!(enrich(&lam, 0), lam.iter().copied().collect());
        let got = enrich(&lam, 1);
        let want: BTreeSet<_> = [mi(5, 5), mi(4, 5), mi(6, 5), mi(5, 4), mi(5, 6)].into();
        assert_eq!(got, want);
        let got = enrich(&[mi(2, 2)], 1);
        let want: BTreeSet<_> = [mi(2, 2), mi(3, 2), mi(2, 3)].into();
        assert_eq!(got, want);
    }

    #[test]
    fn parity_examples() {
        assert_eq!(parity_block(mi(2, 2)), ParityBlock::EvenEven);
        assert_eq!(parity_block(mi(3, 2)), ParityBlock::OddEven);
        assert_eq!(parity_block(mi(3, 3)), ParityBlock::OddOdd);
        assert_eq!(ParityBlock::OddEven.to_string(), "-+");
        assert_eq!("+-".parse::<ParityBlock>().unwrap(), ParityBlock::EvenOdd);
    }

    #[test]
    fn diameter_matches_brute_force() {
        let set = IndexSet::total_degree(14, Some(ParityBlock::EvenEven));
        let brute = set
            .indices()
            .iter()
            .flat_map(|a| set.indices().iter().map(move |b| a.l1_distance(b)))
            .max()
            .unwrap();
        assert_eq!(set.l1_diameter(), brute);
    }

    proptest::proptest! {
        #[test]
        fn enrich_cardinality_bounded_by_ball(
            pts in proptest::collection::vec((2u32..30, 2u32..30), 1..12),
            radius in 0u32..6,
        ) {
            let lam: BTreeSet<MultiIndex> = pts.iter().map(|&(a, b)| mi(a, b)).collect();
            let out = enrich(&lam, radius);
            proptest::prop_assert!(out.len() <= l1_ball_size(radius) * lam.len());
            proptest::prop_assert!(lam.is_subset(&out));
            for k in &out {
                proptest::prop_assert!(lam.iter().any(|l| l.l1_distance(k) <= radius));
            }
        }
    }
}
