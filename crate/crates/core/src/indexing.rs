//! Multi-index enumeration.
//!
//! Indices are 1-based throughout, matching the usual notation for
//! `I_n = {1 <= i_1 < ... < i_d <= n}` and the cube `C_n = {1..=n}^d`.
//! Every generator yields tuples in lexicographic order and is lazy, so the
//! caller decides whether to materialize `n^d` tuples.

use std::fmt;

use crate::error::{Error, Result};

/// An ordered tuple of positive indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        MultiIndex(entries)
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn is_increasing(&self) -> bool {
        self.0.windows(2).all(|w| w[0] < w[1])
    }

    pub fn contains(&self, value: usize) -> bool {
        self.0.contains(&value)
    }

    /// Entries at the positions in `subset`, in position order.
    pub fn restrict(&self, subset: IndexSubset) -> Vec<usize> {
        subset.members().map(|p| self.0[p]).collect()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(v: Vec<usize>) -> Self {
        MultiIndex(v)
    }
}

/// A subset of the coordinate positions `{0, .., d-1}` stored as a bitmask.
///
/// Positions are 0-based here (they address slots of a tuple, not sample
/// indices).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexSubset {
    mask: u64,
    arity: usize,
}

impl IndexSubset {
    pub const MAX_ARITY: usize = 63;

    pub fn from_mask(mask: u64, arity: usize) -> Self {
        assert!(arity <= Self::MAX_ARITY, "arity {arity} too large");
        let full = (1u64 << arity) - 1;
        IndexSubset {
            mask: mask & full,
            arity,
        }
    }

    pub fn from_positions(positions: &[usize], arity: usize) -> Self {
        let mask = positions.iter().fold(0u64, |m, &p| {
            assert!(p < arity, "position {p} out of range for arity {arity}");
            m | (1 << p)
        });
        Self::from_mask(mask, arity)
    }

    pub fn empty(arity: usize) -> Self {
        Self::from_mask(0, arity)
    }

    pub fn full(arity: usize) -> Self {
        Self::from_mask(u64::MAX, arity)
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.arity
    }

    pub fn contains(&self, position: usize) -> bool {
        position < self.arity && self.mask & (1 << position) != 0
    }

    pub fn complement(&self) -> Self {
        Self::from_mask(!self.mask, self.arity)
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.arity).filter(move |&p| self.contains(p))
    }

    /// All subsets of `{0..arity}` with exactly `size` members, in increasing
    /// mask order.
    pub fn of_size(arity: usize, size: usize) -> impl Iterator<Item = IndexSubset> {
        (0..(1u64 << arity))
            .filter(move |m| m.count_ones() as usize == size)
            .map(move |m| IndexSubset::from_mask(m, arity))
    }

    /// The nonempty proper subsets (the family over which the overlap sums run).
    pub fn proper_nonempty(arity: usize) -> impl Iterator<Item = IndexSubset> {
        let full = (1u64 << arity) - 1;
        (1..full).map(move |m| IndexSubset::from_mask(m, arity))
    }
}

impl fmt::Display for IndexSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, p) in self.members().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", p + 1)?;
        }
        write!(f, "}}")
    }
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = match acc.checked_mul((n - j) as u128) {
            Some(v) => v / (j as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Lexicographic stream over `I_n` (strictly increasing `d`-tuples).
#[derive(Clone, Debug)]
pub struct IncreasingIndices {
    n: usize,
    current: Option<Vec<usize>>,
    remaining: Option<u128>,
}

impl IncreasingIndices {
    fn first(n: usize, d: usize) -> Option<Vec<usize>> {
        (d >= 1 && n >= d).then(|| (1..=d).collect())
    }

    /// Start the stream at the tuple of lexicographic rank `rank` and stop
    /// after `len` tuples. Used to split a stream into ranges.
    pub fn range(n: usize, d: usize, rank: u128, len: u128) -> Self {
        let total = binomial(n as u64, d as u64);
        let current = if rank < total {
            Some(unrank_increasing(n, d, rank))
        } else {
            None
        };
        IncreasingIndices {
            n,
            current,
            remaining: Some(len.min(total.saturating_sub(rank))),
        }
    }
}

impl Iterator for IncreasingIndices {
    type Item = MultiIndex;

    fn next(&mut self) -> Option<MultiIndex> {
        if let Some(rem) = self.remaining.as_mut() {
            if *rem == 0 {
                return None;
            }
            *rem -= 1;
        }
        let cur = self.current.take()?;
        let out = MultiIndex(cur.clone());
        self.current = next_combination(cur, self.n);
        Some(out)
    }
}

fn next_combination(mut c: Vec<usize>, n: usize) -> Option<Vec<usize>> {
    let d = c.len();
    let mut pos = d;
    while pos > 0 {
        pos -= 1;
        // largest value allowed at `pos` is n - (d - 1 - pos)
        if c[pos] < n - (d - 1 - pos) {
            c[pos] += 1;
            for q in pos + 1..d {
                c[q] = c[q - 1] + 1;
            }
            return Some(c);
        }
    }
    None
}

/// The increasing tuple of lexicographic rank `rank` in `I_n`.
pub fn unrank_increasing(n: usize, d: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(d);
    let mut low = 1usize;
    for slot in 0..d {
        let left = d - slot - 1;
        let mut v = low;
        loop {
            let block = binomial((n - v) as u64, left as u64);
            if rank < block {
                break;
            }
            rank -= block;
            v += 1;
        }
        out.push(v);
        low = v + 1;
    }
    out
}

/// Lexicographic stream over `I_n`.
pub fn enumerate_increasing(n: usize, d: usize) -> IncreasingIndices {
    IncreasingIndices {
        n,
        current: IncreasingIndices::first(n, d),
        remaining: None,
    }
}

/// Lexicographic stream over the cube `C_n = {1..=n}^d`.
#[derive(Clone, Debug)]
pub struct CubeIndices {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for CubeIndices {
    type Item = MultiIndex;

    fn next(&mut self) -> Option<MultiIndex> {
        let cur = self.current.take()?;
        let out = MultiIndex(cur.clone());
        let mut next = cur;
        let mut pos = next.len();
        let mut advanced = false;
        while pos > 0 {
            pos -= 1;
            if next[pos] < self.n {
                next[pos] += 1;
                for v in next.iter_mut().skip(pos + 1) {
                    *v = 1;
                }
                advanced = true;
                break;
            }
        }
        if advanced {
            self.current = Some(next);
        }
        Some(out)
    }
}

pub fn enumerate_cube(n: usize, d: usize) -> CubeIndices {
    CubeIndices {
        n,
        current: (d >= 1 && n >= 1).then(|| vec![1; d]),
    }
}

/// Increasing tuples of `I_n` that contain `n` (the tuples added when the
/// sample grows from `n-1` to `n`).
#[derive(Clone, Debug)]
pub struct NewIndices {
    n: usize,
    head: Option<IncreasingIndices>,
    single: bool,
}

impl Iterator for NewIndices {
    type Item = MultiIndex;

    fn next(&mut self) -> Option<MultiIndex> {
        if self.single {
            self.single = false;
            return Some(MultiIndex(vec![self.n]));
        }
        let mut v = self.head.as_mut()?.next()?.into_vec();
        v.push(self.n);
        Some(MultiIndex(v))
    }
}

pub fn new_indices(n: usize, d: usize) -> NewIndices {
    NewIndices {
        n,
        head: (d >= 2 && n >= d).then(|| enumerate_increasing(n - 1, d - 1)),
        single: d == 1 && n >= 1,
    }
}

/// Calls `visit` on every increasing `k`-subset of `{1..=n}` without
/// allocating per tuple. Stops early when `visit` returns `false`.
pub fn visit_increasing(n: usize, k: usize, mut visit: impl FnMut(&[usize]) -> bool) -> bool {
    if k == 0 {
        return visit(&[]);
    }
    if n < k {
        return true;
    }
    let mut c: Vec<usize> = (1..=k).collect();
    loop {
        if !visit(&c) {
            return false;
        }
        let mut pos = k;
        loop {
            if pos == 0 {
                return true;
            }
            pos -= 1;
            if c[pos] < n - (k - 1 - pos) {
                c[pos] += 1;
                for q in pos + 1..k {
                    c[q] = c[q - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Calls `visit` on every tuple of `{1..=n}^k`. Stops early when `visit`
/// returns `false`.
pub fn visit_cube(n: usize, k: usize, mut visit: impl FnMut(&[usize]) -> bool) -> bool {
    if k == 0 {
        return visit(&[]);
    }
    if n == 0 {
        return true;
    }
    let mut c = vec![1usize; k];
    loop {
        if !visit(&c) {
            return false;
        }
        let mut pos = k;
        loop {
            if pos == 0 {
                return true;
            }
            pos -= 1;
            if c[pos] < n {
                c[pos] += 1;
                for v in c.iter_mut().skip(pos + 1) {
                    *v = 1;
                }
                break;
            }
        }
    }
}

/// Calls `visit` on every tuple of `C_m \ C_{m-1}`, i.e. the cube tuples
/// whose largest entry equals `m`. The tuples are partitioned by the first
/// position holding `m`, so no tuple is visited twice.
pub fn visit_new_cube(m: usize, d: usize, mut visit: impl FnMut(&[usize]) -> bool) -> bool {
    if m == 0 || d == 0 {
        return true;
    }
    let mut buf = vec![0usize; d];
    for first in 0..d {
        // positions < first range over 1..m-1, position `first` is m,
        // positions > first range over 1..m
        if first > 0 && m == 1 {
            continue;
        }
        for v in buf.iter_mut().take(first) {
            *v = 1;
        }
        buf[first] = m;
        for v in buf.iter_mut().skip(first + 1) {
            *v = 1;
        }
        loop {
            if !visit(&buf) {
                return false;
            }
            // odometer, skipping position `first`
            let mut pos = d;
            let mut advanced = false;
            while pos > 0 {
                pos -= 1;
                if pos == first {
                    continue;
                }
                let cap = if pos < first { m - 1 } else { m };
                if buf[pos] < cap {
                    buf[pos] += 1;
                    for q in pos + 1..d {
                        if q != first {
                            buf[q] = 1;
                        }
                    }
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                break;
            }
        }
    }
    true
}

/// Whether [`overlap_family`] enumerates increasing tuples (`J(i,I)`) or
/// cube tuples with coordinatewise matching (the decoupled family).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OverlapMode {
    Coupled,
    Decoupled,
}

/// Tuples `j` whose overlap pattern with `i` is exactly `subset`.
///
/// * Coupled: `j` ranges over `I_n` and `{k : i_k appears in j} = subset`.
/// * Decoupled: `j` ranges over `C_n`, `j_k = i_k` for `k` in `subset` and
///   `j_k != i_k` otherwise.
///
/// Results are in lexicographic order.
pub fn overlap_family(
    i: &MultiIndex,
    subset: IndexSubset,
    n: usize,
    mode: OverlapMode,
) -> Result<Vec<MultiIndex>> {
    let d = i.arity();
    if subset.arity() != d {
        return Err(Error::ArityMismatch {
            expected: d,
            found: subset.arity(),
        });
    }
    match mode {
        OverlapMode::Coupled => {
            if !i.is_increasing() {
                return Err(Error::InvalidArgument(format!(
                    "overlap family needs an increasing index, got {i}"
                )));
            }
            if n < d {
                return Ok(Vec::new());
            }
            let fixed: Vec<usize> = i.restrict(subset);
            let pool: Vec<usize> = (1..=n).filter(|v| !i.contains(*v)).collect();
            let free = d - fixed.len();
            let mut out = Vec::new();
            visit_increasing(pool.len(), free, |pick| {
                let mut v: Vec<usize> = pick.iter().map(|&p| pool[p - 1]).collect();
                v.extend_from_slice(&fixed);
                v.sort_unstable();
                out.push(MultiIndex(v));
                true
            });
            out.sort();
            Ok(out)
        }
        OverlapMode::Decoupled => {
            if n == 0 {
                return Ok(Vec::new());
            }
            let free: Vec<usize> = subset.complement().members().collect();
            let mut out = Vec::new();
            // each free slot takes n - 1 values (anything but i_k)
            visit_cube(n.saturating_sub(1), free.len(), |pick| {
                let mut v = i.entries().to_vec();
                for (slot, &p) in free.iter().zip(pick) {
                    let skip = i.entries()[*slot];
                    v[*slot] = if p >= skip { p + 1 } else { p };
                }
                out.push(MultiIndex(v));
                true
            });
            Ok(out)
        }
    }
}

/// A half-open block of sample indices `(lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockRange {
    pub lo: u64,
    pub hi: u64,
}

impl BlockRange {
    pub fn contains(&self, v: u64) -> bool {
        self.lo < v && v <= self.hi
    }

    pub fn width(&self) -> u64 {
        self.hi - self.lo
    }
}

/// The `d` consecutive blocks `((m-1) 2^{k-l}, m 2^{k-l}]`, `m = 1..=d`.
pub fn dyadic_blocks(k: u32, l: u32, d: usize) -> Result<Vec<BlockRange>> {
    if d == 0 {
        return Err(Error::InvalidArgument("arity must be at least 1".into()));
    }
    if l >= 63 || (1u64 << l) < d as u64 {
        return Err(Error::InvalidArgument(format!(
            "2^{l} is smaller than the arity {d}"
        )));
    }
    if k < l || k >= 63 {
        return Err(Error::InvalidArgument(format!(
            "level k={k} must satisfy l={l} <= k < 63"
        )));
    }
    let w = 1u64 << (k - l);
    Ok((1..=d as u64)
        .map(|m| BlockRange {
            lo: (m - 1) * w,
            hi: m * w,
        })
        .collect())
}
