//! Permutations of `[n]`, their cycle statistics, and exhaustive enumeration
//! of the symmetric group.
//!
//! Every public interface speaks 1-based indices, matching the usual
//! `σ(1), …, σ(n)` notation; images are stored 0-based internally.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_dim, Error, Result};

/// Largest `n` for which [`enumerate_all`] will run.
pub const MAX_ENUMERATION_N: usize = 12;

/// A bijection on `[n]`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    /// Builds a permutation from its 1-based image list `(σ(1), …, σ(n))`.
    pub fn new(images: &[usize]) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        let mut map = Vec::with_capacity(n);
        for &img in images {
            if img == 0 || img > n {
                return Err(Error::InvalidPermutation(format!(
                    "image {img} outside [1, {n}]"
                )));
            }
            if std::mem::replace(&mut seen[img - 1], true) {
                return Err(Error::InvalidPermutation(format!("image {img} repeated")));
            }
            map.push(img - 1);
        }
        Ok(Permutation { map })
    }

    /// Builds a permutation from 0-based images.
    pub fn from_zero_based(map: Vec<usize>) -> Result<Self> {
        let one_based: Vec<usize> = map.iter().map(|&x| x + 1).collect();
        Self::new(&one_based)
    }

    pub(crate) fn from_zero_based_unchecked(map: Vec<usize>) -> Self {
        debug_assert!(is_bijection(&map));
        Permutation { map }
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            map: (0..n).collect(),
        }
    }

    /// The transposition swapping `a` and `b` (1-based) on `[n]`.
    pub fn transposition(n: usize, a: usize, b: usize) -> Result<Self> {
        if a == 0 || b == 0 || a > n || b > n || a == b {
            return Err(Error::InvalidPermutation(format!(
                "transposition ({a} {b}) on [{n}]"
            )));
        }
        let mut map: Vec<usize> = (0..n).collect();
        map.swap(a - 1, b - 1);
        Ok(Permutation { map })
    }

    /// Parses cycle notation such as `(1)(2)(354)` or `(1 2 10)(3 4)`.
    ///
    /// Elements not mentioned are fixed points. Without spaces each digit is
    /// one element, which is only unambiguous for `n <= 9`.
    pub fn from_cycles(n: usize, text: &str) -> Result<Self> {
        let mut map: Vec<Option<usize>> = vec![None; n];
        let mut rest = text.trim();
        while !rest.is_empty() {
            let body_end = rest
                .find(')')
                .filter(|_| rest.starts_with('('))
                .ok_or_else(|| Error::InvalidPermutation(format!("malformed cycles {text:?}")))?;
            let body = &rest[1..body_end];
            let elems: Vec<usize> = if body.contains(' ') || body.contains(',') {
                body.split([' ', ','])
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<usize>()
                            .map_err(|e| Error::InvalidPermutation(format!("{s:?}: {e}")))
                    })
                    .collect::<Result<_>>()?
            } else {
                body.chars()
                    .map(|c| {
                        c.to_digit(10).map(|d| d as usize).ok_or_else(|| {
                            Error::InvalidPermutation(format!("bad element {c:?}"))
                        })
                    })
                    .collect::<Result<_>>()?
            };
            for (k, &e) in elems.iter().enumerate() {
                if e == 0 || e > n {
                    return Err(Error::InvalidPermutation(format!("{e} outside [1, {n}]")));
                }
                let next = elems[(k + 1) % elems.len()];
                if map[e - 1].replace(next - 1).is_some() {
                    return Err(Error::InvalidPermutation(format!("{e} appears twice")));
                }
            }
            rest = rest[body_end + 1..].trim_start();
        }
        let map: Vec<usize> = map
            .into_iter()
            .enumerate()
            .map(|(i, m)| m.unwrap_or(i))
            .collect();
        if !is_bijection(&map) {
            return Err(Error::InvalidPermutation(format!("{text:?} is not a bijection")));
        }
        Ok(Permutation { map })
    }

    pub fn n(&self) -> usize {
        self.map.len()
    }

    /// `σ(i)` for 1-based `i`.
    pub fn apply(&self, i: usize) -> usize {
        self.map[i - 1] + 1
    }

    /// 1-based image list.
    pub fn images(&self) -> Vec<usize> {
        self.map.iter().map(|&x| x + 1).collect()
    }

    pub fn as_zero_based(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &x)| i == x)
    }

    /// Disjoint cycles (1-based), each starting at its smallest element,
    /// ordered by that element.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut cycle = Vec::new();
            let mut j = start;
            while !seen[j] {
                seen[j] = true;
                cycle.push(j + 1);
                j = self.map[j];
            }
            out.push(cycle);
        }
        out
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation{}", self)
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let spaced = self.n() > 9;
        for cycle in self.cycles() {
            f.write_str("(")?;
            for (k, e) in cycle.iter().enumerate() {
                if spaced && k > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{e}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Cycle-length census: `count(l)` is the number of cycles of length `l`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CycleType {
    // counts[l - 1] = c_l
    counts: Vec<usize>,
}

impl CycleType {
    pub fn n(&self) -> usize {
        self.counts.len()
    }

    /// `c_l` for `l >= 1`; zero for `l > n`.
    pub fn count(&self, len: usize) -> usize {
        assert!(len >= 1, "cycle lengths start at 1");
        self.counts.get(len - 1).copied().unwrap_or(0)
    }

    /// `(l, c_l)` pairs with `c_l > 0`.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k + 1, c))
    }

    /// Number of cycles of length at least two.
    pub fn long_cycles(&self) -> usize {
        self.counts.iter().skip(1).sum()
    }

    /// `Σ l·c_l`, which always equals `n`.
    pub fn weighted_total(&self) -> usize {
        self.counts
            .iter()
            .enumerate()
            .map(|(k, &c)| (k + 1) * c)
            .sum()
    }
}

fn is_bijection(map: &[usize]) -> bool {
    let mut seen = vec![false; map.len()];
    map.iter()
        .all(|&x| x < map.len() && !std::mem::replace(&mut seen[x], true))
}

fn same_n(a: &Permutation, b: &Permutation) -> Result<()> {
    if a.n() != b.n() {
        Err(Error::DimensionMismatch {
            left: a.n(),
            right: b.n(),
        })
    } else {
        Ok(())
    }
}

/// `result(i) = σ1(σ2(i))`.
pub fn compose(s1: &Permutation, s2: &Permutation) -> Result<Permutation> {
    same_n(s1, s2)?;
    Ok(Permutation {
        map: s2.map.iter().map(|&x| s1.map[x]).collect(),
    })
}

pub fn inverse(s: &Permutation) -> Permutation {
    let mut inv = vec![0; s.n()];
    for (i, &x) in s.map.iter().enumerate() {
        inv[x] = i;
    }
    Permutation { map: inv }
}

pub fn cycle_type(s: &Permutation) -> CycleType {
    let mut counts = vec![0; s.n()];
    visit_cycle_lengths(&s.map, |len| counts[len - 1] += 1);
    CycleType { counts }
}

/// Number of cycles of length larger than one.
pub fn c_long(s: &Permutation) -> usize {
    long_cycles_of(&s.map)
}

/// Number of cycles of length larger than one in `σ1 ∘ σ2⁻¹`.
pub fn c_pair(s1: &Permutation, s2: &Permutation) -> Result<usize> {
    same_n(s1, s2)?;
    let inv2 = inverse(s2);
    Ok(long_cycles_of_composition(&s1.map, &inv2.map))
}

#[inline]
fn visit_cycle_lengths(map: &[usize], mut f: impl FnMut(usize)) {
    let n = map.len();
    // bitmask fast path covers every n this crate enumerates
    if n <= 64 {
        let mut seen = 0u64;
        for start in 0..n {
            if seen >> start & 1 == 1 {
                continue;
            }
            let mut len = 0;
            let mut j = start;
            while seen >> j & 1 == 0 {
                seen |= 1 << j;
                j = map[j];
                len += 1;
            }
            f(len);
        }
    } else {
        let mut seen = vec![false; n];
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut j = start;
            while !seen[j] {
                seen[j] = true;
                j = map[j];
                len += 1;
            }
            f(len);
        }
    }
}

/// Long-cycle count of a 0-based image slice.
#[inline]
pub(crate) fn long_cycles_of(map: &[usize]) -> usize {
    let mut c = 0;
    visit_cycle_lengths(map, |len| {
        if len > 1 {
            c += 1
        }
    });
    c
}

/// Long-cycle count of `outer ∘ inner` without materializing it.
#[inline]
pub(crate) fn long_cycles_of_composition(outer: &[usize], inner: &[usize]) -> usize {
    let n = outer.len();
    debug_assert!(n <= 64);
    let mut seen = 0u64;
    let mut c = 0;
    for start in 0..n {
        if seen >> start & 1 == 1 {
            continue;
        }
        let mut len = 0;
        let mut j = start;
        while seen >> j & 1 == 0 {
            seen |= 1 << j;
            j = outer[inner[j]];
            len += 1;
        }
        if len > 1 {
            c += 1;
        }
    }
    c
}

/// Advances `p` to its lexicographic successor; returns `false` after the
/// last permutation (leaving `p` unchanged).
pub(crate) fn next_lex(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// The permutation of lexicographic rank `rank` (0-based images).
pub(crate) fn unrank_lex(n: usize, mut rank: u64) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n);
    for k in (0..n).rev() {
        let f = (1..=k as u64).product::<u64>();
        let idx = (rank / f) as usize;
        rank %= f;
        out.push(pool.remove(idx));
    }
    out
}

pub(crate) fn factorial_u64(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// Calls `f` on every permutation of `[n]` with lexicographic rank in
/// `start..end`, as 0-based image slices, in order.
pub(crate) fn for_each_in_rank_range(n: usize, start: u64, end: u64, mut f: impl FnMut(&[usize])) {
    if start >= end {
        return;
    }
    let mut p = unrank_lex(n, start);
    let mut rank = start;
    loop {
        f(&p);
        rank += 1;
        if rank >= end || !next_lex(&mut p) {
            break;
        }
    }
}

/// Splits `0..n!` into fixed ranges of at most `chunk` ranks. The split
/// depends only on `n` and `chunk`.
pub(crate) fn rank_chunks(n: usize, chunk: u64) -> Vec<(u64, u64)> {
    let total = factorial_u64(n);
    let mut out = Vec::new();
    let mut s = 0;
    while s < total {
        let e = (s + chunk).min(total);
        out.push((s, e));
        s = e;
    }
    out
}

/// Lexicographic iterator over `S_n`.
#[derive(Debug, Clone)]
pub struct LexPermutations {
    current: Option<Vec<usize>>,
    remaining: u64,
}

impl LexPermutations {
    /// Permutations with lexicographic rank in `start..start + count`,
    /// for splitting enumeration across workers.
    pub fn range(n: usize, start: u64, count: u64) -> Result<Self> {
        check_dim("enumerate_all", n, MAX_ENUMERATION_N)?;
        let total = factorial_u64(n);
        let start = start.min(total);
        Ok(LexPermutations {
            current: (start < total).then(|| unrank_lex(n, start)),
            remaining: count.min(total - start),
        })
    }
}

impl Iterator for LexPermutations {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        if self.remaining == 0 {
            return None;
        }
        let cur = self.current.as_mut()?;
        let out = Permutation { map: cur.clone() };
        self.remaining -= 1;
        if !next_lex(cur) {
            self.current = None;
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (r, Some(r))
    }
}

/// All `n!` permutations of `[n]` in lexicographic order.
pub fn enumerate_all(n: usize) -> Result<LexPermutations> {
    LexPermutations::range(n, 0, u64::MAX)
}

impl FromStr for Permutation {
    type Err = Error;

    /// Parses a comma- or space-separated 1-based image list, e.g. `2,1,3`.
    fn from_str(s: &str) -> Result<Self> {
        let images = s
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| Error::InvalidPermutation(format!("{t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Permutation::new(&images)
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn perm_strategy(n: usize) -> impl Strategy<Value = Permutation> {
        Just((0..n).collect::<Vec<usize>>())
            .prop_shuffle()
            .prop_map(|m| Permutation::from_zero_based(m).unwrap())
    }

    fn triple() -> impl Strategy<Value = (Permutation, Permutation, Permutation)> {
        (1usize..=9).prop_flat_map(|n| (perm_strategy(n), perm_strategy(n), perm_strategy(n)))
    }

    proptest! {
        #[test]
        fn c_pair_is_symmetric((a, b, _) in triple()) {
            prop_assert_eq!(c_pair(&a, &b).unwrap(), c_pair(&b, &a).unwrap());
        }

        #[test]
        fn c_pair_is_left_translation_invariant((r, a, b) in triple()) {
            let ra = compose(&r, &a).unwrap();
            let rb = compose(&r, &b).unwrap();
            prop_assert_eq!(c_pair(&ra, &rb).unwrap(), c_pair(&a, &b).unwrap());
        }

        #[test]
        fn c_pair_matches_composed_definition((a, b, _) in triple()) {
            let q = compose(&a, &inverse(&b)).unwrap();
            prop_assert_eq!(c_pair(&a, &b).unwrap(), c_long(&q));
        }

        #[test]
        fn cycle_census_sums_to_n((a, _, _) in triple()) {
            let ct = cycle_type(&a);
            prop_assert_eq!(ct.weighted_total(), a.n());
        }

        #[test]
        fn cycle_notation_round_trips((a, _, _) in triple()) {
            let back = Permutation::from_cycles(a.n(), &a.to_string()).unwrap();
            prop_assert_eq!(back, a);
        }
    }
}
