//! Partitions, collision types, collision counts, and assignment sets.
//!
//! The objects here are the combinatorial substrate of the coalescent:
//!
//! * [`IntegerPartition`] — an unordered shape `(n_1 >= n_2 >= ... >= 1)`;
//! * [`Composition`] — an ordered tuple of positive parts;
//! * [`SetPartition`] — a partition of `{1..n}` in canonical form;
//! * [`FrozenPartition`] — a set partition whose blocks are active or frozen;
//! * [`CollisionType`] — the type `(b; k_1..k_r; s)` of a simultaneous
//!   collision: out of `b` active blocks, `r` groups of sizes `k_i >= 2`
//!   merge and `s = b - sum k_i` blocks are untouched;
//! * [`collision_count`] — the number `d(b; k; s)` of distinct collisions of
//!   a given type;
//! * [`assignments`] — the ways to distribute the merge-group sizes of a
//!   collision type over the parts of a composition, used by the recursion
//!   on partition probabilities.

use std::collections::BTreeMap;
use std::fmt;

use num::bigint::BigInt;
use num::{One, Zero};

use crate::{Error, Result};

/// `n!` as a big integer.
pub fn factorial(n: usize) -> BigInt {
    let mut acc = BigInt::one();
    for i in 2..=n {
        acc *= BigInt::from(i);
    }
    acc
}

/// Binomial coefficient `C(n, k)` (zero when `k > n`).
pub fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// Falling factorial `n (n-1) ... (n-k+1)` (zero when `k > n`).
pub fn falling_factorial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut acc = BigInt::one();
    for i in 0..k {
        acc *= BigInt::from(n - i);
    }
    acc
}

/// Bell number `B(n)`: the number of set partitions of an `n`-element set.
pub fn bell_number(n: usize) -> BigInt {
    // Bell triangle.
    let mut row = vec![BigInt::one()];
    for _ in 1..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(row.last().unwrap().clone());
        for v in &row {
            let last = next.last().unwrap().clone();
            next.push(last + v);
        }
        row = next;
    }
    row.last().cloned().unwrap_or_else(BigInt::one)
}

/// An unordered partition of a positive integer: parts sorted non-increasing.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IntegerPartition {
    parts: Vec<usize>,
}

impl IntegerPartition {
    /// Build a shape from parts in any order; rejects empty input and zeros.
    pub fn new(mut parts: Vec<usize>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidPartition(
                "integer partition needs at least one part".into(),
            ));
        }
        if parts.iter().any(|&p| p == 0) {
            return Err(Error::InvalidPartition(
                "integer partition parts must be positive".into(),
            ));
        }
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Ok(IntegerPartition { parts })
    }

    /// The shape `(1, 1, ..., 1)` with `m` parts.
    pub fn ones(m: usize) -> Result<Self> {
        IntegerPartition::new(vec![1; m])
    }

    /// Parts, non-increasing.
    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    /// Sum of parts.
    pub fn n(&self) -> usize {
        self.parts.iter().sum()
    }

    /// Number of parts.
    pub fn num_parts(&self) -> usize {
        self.parts.len()
    }

    /// Multiplicity of the value `j` among the parts.
    pub fn multiplicity(&self, j: usize) -> usize {
        self.parts.iter().filter(|&&p| p == j).count()
    }

    /// Map from part value to multiplicity.
    pub fn multiplicities(&self) -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for &p in &self.parts {
            *m.entry(p).or_insert(0) += 1;
        }
        m
    }
}

impl fmt::Display for IntegerPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, p) in self.parts.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ")")
    }
}

/// All integer partitions of `n`, in descending lexicographic order
/// (`(n)` first, `(1,...,1)` last).
pub fn integer_partitions(n: usize) -> Vec<IntegerPartition> {
    fn rec(remaining: usize, max_part: usize, prefix: &mut Vec<usize>, out: &mut Vec<IntegerPartition>) {
        if remaining == 0 {
            out.push(IntegerPartition {
                parts: prefix.clone(),
            });
            return;
        }
        for p in (1..=remaining.min(max_part)).rev() {
            prefix.push(p);
            rec(remaining - p, p, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(n, n, &mut Vec::new(), &mut out);
    }
    out
}

/// The number of set partitions of `{1..n}` with a given shape:
/// `n! / (prod_i n_i! * prod_j m_j!)` where `m_j` is the multiplicity of `j`.
pub fn shape_multiplicity(shape: &IntegerPartition) -> BigInt {
    let mut denom = BigInt::one();
    for &p in shape.parts() {
        denom *= factorial(p);
    }
    for (_, m) in shape.multiplicities() {
        denom *= factorial(m);
    }
    factorial(shape.n()) / denom
}

/// An ordered tuple of positive parts.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Composition {
    parts: Vec<usize>,
}

impl Composition {
    /// Build a composition; rejects empty input and zero parts.
    pub fn new(parts: Vec<usize>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidPartition(
                "composition needs at least one part".into(),
            ));
        }
        if parts.iter().any(|&p| p == 0) {
            return Err(Error::InvalidPartition(
                "composition parts must be positive".into(),
            ));
        }
        Ok(Composition { parts })
    }

    /// Parts in their given order.
    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    /// Sum of parts.
    pub fn n(&self) -> usize {
        self.parts.iter().sum()
    }

    /// Number of parts.
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    /// `true` when there are no parts (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Forget the order.
    pub fn shape(&self) -> IntegerPartition {
        IntegerPartition::new(self.parts.clone()).expect("composition parts are positive")
    }
}

impl From<&IntegerPartition> for Composition {
    fn from(shape: &IntegerPartition) -> Self {
        Composition {
            parts: shape.parts().to_vec(),
        }
    }
}

/// A partition of `{1..n}` in canonical form: blocks sorted internally and
/// ordered by least element.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SetPartition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

fn canonicalize_blocks(mut blocks: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    for b in &mut blocks {
        b.sort_unstable();
    }
    blocks.sort_by_key(|b| b[0]);
    blocks
}

fn validate_cover(n: usize, blocks: &[Vec<usize>]) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidPartition("ground set must be nonempty".into()));
    }
    let mut seen = vec![false; n + 1];
    let mut count = 0usize;
    for b in blocks {
        if b.is_empty() {
            return Err(Error::InvalidPartition("empty block".into()));
        }
        for &e in b {
            if e == 0 || e > n {
                return Err(Error::InvalidPartition(format!(
                    "element {e} outside 1..={n}"
                )));
            }
            if seen[e] {
                return Err(Error::InvalidPartition(format!("element {e} repeated")));
            }
            seen[e] = true;
            count += 1;
        }
    }
    if count != n {
        return Err(Error::InvalidPartition(format!(
            "blocks cover {count} of {n} elements"
        )));
    }
    Ok(())
}

impl SetPartition {
    /// Build a partition of `{1..n}` from blocks (canonicalized, validated).
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        validate_cover(n, &blocks)?;
        Ok(SetPartition {
            n,
            blocks: canonicalize_blocks(blocks),
        })
    }

    /// The partition of `{1..n}` into singletons.
    pub fn singletons(n: usize) -> Result<Self> {
        SetPartition::new(n, (1..=n).map(|i| vec![i]).collect())
    }

    /// Size of the ground set.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Blocks in canonical order.
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Number of blocks.
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// The shape (unordered block sizes).
    pub fn shape(&self) -> IntegerPartition {
        IntegerPartition::new(self.blocks.iter().map(Vec::len).collect())
            .expect("set partition has nonempty blocks")
    }

    /// Restriction to `{1..m}`, `1 <= m <= n`.
    pub fn restrict(&self, m: usize) -> Result<SetPartition> {
        if m == 0 || m > self.n {
            return Err(Error::InvalidPartition(format!(
                "restriction size {m} outside 1..={}",
                self.n
            )));
        }
        let blocks: Vec<Vec<usize>> = self
            .blocks
            .iter()
            .map(|b| b.iter().copied().filter(|&e| e <= m).collect::<Vec<_>>())
            .filter(|b: &Vec<usize>| !b.is_empty())
            .collect();
        SetPartition::new(m, blocks)
    }
}

impl fmt::Display for SetPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            write!(f, "{{")?;
            for (i, e) in b.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{e}")?;
            }
            write!(f, "}}")?;
        }
        Ok(())
    }
}

/// All set partitions of `{1..n}` in restricted-growth-string order (the
/// canonical block labels are growth-string values, so this order is
/// lexicographic on canonical forms). Guarded by `cap`.
pub fn set_partitions(n: usize, cap: usize) -> Result<Vec<SetPartition>> {
    if n == 0 {
        return Err(Error::InvalidPartition("ground set must be nonempty".into()));
    }
    if n > cap {
        return Err(Error::CapExceeded { n, cap });
    }
    let mut out = Vec::new();
    // rgs[i] = block label of element i+1; labels are dense from 0.
    fn rec(i: usize, n: usize, next_label: usize, rgs: &mut Vec<usize>, out: &mut Vec<SetPartition>) {
        if i == n {
            let blocks_count = next_label;
            let mut blocks = vec![Vec::new(); blocks_count];
            for (e, &lbl) in rgs.iter().enumerate() {
                blocks[lbl].push(e + 1);
            }
            out.push(SetPartition {
                n,
                blocks: canonicalize_blocks(blocks),
            });
            return;
        }
        for lbl in 0..=next_label {
            rgs.push(lbl);
            rec(i + 1, n, next_label.max(lbl + 1), rgs, out);
            rgs.pop();
        }
    }
    rec(0, n, 0, &mut Vec::new(), &mut out);
    Ok(out)
}

/// Whether a block of a [`FrozenPartition`] can still take part in events.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BlockStatus {
    /// The block may merge or freeze.
    Active,
    /// The block is frozen: it never changes again.
    Frozen,
}

/// A partition of `{1..n}` whose blocks are each active or frozen.
///
/// This is the state of the coalescent with freeze. Canonical form as for
/// [`SetPartition`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrozenPartition {
    n: usize,
    blocks: Vec<(Vec<usize>, BlockStatus)>,
}

impl FrozenPartition {
    /// Build a partially frozen partition (canonicalized, validated).
    pub fn new(n: usize, mut blocks: Vec<(Vec<usize>, BlockStatus)>) -> Result<Self> {
        let plain: Vec<Vec<usize>> = blocks.iter().map(|(b, _)| b.clone()).collect();
        validate_cover(n, &plain)?;
        for (b, _) in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort_by_key(|(b, _)| b[0]);
        Ok(FrozenPartition { n, blocks })
    }

    /// All of `{1..n}` as active singletons: the initial coalescent state.
    pub fn singletons_active(n: usize) -> Result<Self> {
        FrozenPartition::new(n, (1..=n).map(|i| (vec![i], BlockStatus::Active)).collect())
    }

    /// Size of the ground set.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Blocks with statuses, canonical order.
    pub fn blocks(&self) -> &[(Vec<usize>, BlockStatus)] {
        &self.blocks
    }

    /// Indices (into [`blocks`](Self::blocks)) of the active blocks.
    pub fn active_indices(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, (_, st))| *st == BlockStatus::Active)
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of active blocks.
    pub fn active_count(&self) -> usize {
        self.blocks
            .iter()
            .filter(|(_, st)| *st == BlockStatus::Active)
            .count()
    }

    /// `true` once every block is frozen (the chain is absorbed).
    pub fn is_absorbed(&self) -> bool {
        self.active_count() == 0
    }

    /// Forget the statuses.
    pub fn induced(&self) -> SetPartition {
        SetPartition {
            n: self.n,
            blocks: self.blocks.iter().map(|(b, _)| b.clone()).collect(),
        }
    }

    /// The shape (unordered block sizes, statuses ignored).
    pub fn shape(&self) -> IntegerPartition {
        self.induced().shape()
    }

    /// Restriction to `{1..m}`, statuses carried along.
    pub fn restrict(&self, m: usize) -> Result<FrozenPartition> {
        if m == 0 || m > self.n {
            return Err(Error::InvalidPartition(format!(
                "restriction size {m} outside 1..={}",
                self.n
            )));
        }
        let blocks: Vec<(Vec<usize>, BlockStatus)> = self
            .blocks
            .iter()
            .map(|(b, st)| (b.iter().copied().filter(|&e| e <= m).collect::<Vec<_>>(), *st))
            .filter(|(b, _)| !b.is_empty())
            .collect();
        FrozenPartition::new(m, blocks)
    }

    /// Freeze the active block at `block_idx` (an index into
    /// [`blocks`](Self::blocks)).
    pub fn freeze(&self, block_idx: usize) -> Result<FrozenPartition> {
        match self.blocks.get(block_idx) {
            None => Err(Error::InvalidPartition(format!(
                "block index {block_idx} out of range"
            ))),
            Some((_, BlockStatus::Frozen)) => Err(Error::InvalidPartition(
                "cannot freeze a frozen block".into(),
            )),
            Some(_) => {
                let mut blocks = self.blocks.clone();
                blocks[block_idx].1 = BlockStatus::Frozen;
                Ok(FrozenPartition { n: self.n, blocks })
            }
        }
    }

    /// Apply a collision: each group is a set of at least two indices of
    /// active blocks (indices into [`blocks`](Self::blocks)); groups must be
    /// disjoint. Each group merges into a single active block.
    pub fn collide(&self, groups: &[Vec<usize>]) -> Result<FrozenPartition> {
        if groups.is_empty() {
            return Err(Error::InvalidPartition("collision needs a group".into()));
        }
        let mut used = vec![false; self.blocks.len()];
        for g in groups {
            if g.len() < 2 {
                return Err(Error::InvalidPartition(
                    "collision group needs at least two blocks".into(),
                ));
            }
            for &i in g {
                match self.blocks.get(i) {
                    None => {
                        return Err(Error::InvalidPartition(format!(
                            "block index {i} out of range"
                        )))
                    }
                    Some((_, BlockStatus::Frozen)) => {
                        return Err(Error::InvalidPartition(
                            "frozen blocks cannot collide".into(),
                        ))
                    }
                    Some(_) => {}
                }
                if used[i] {
                    return Err(Error::InvalidPartition(format!(
                        "block index {i} in two groups"
                    )));
                }
                used[i] = true;
            }
        }
        let mut blocks: Vec<(Vec<usize>, BlockStatus)> = self
            .blocks
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(_, b)| b.clone())
            .collect();
        for g in groups {
            let mut merged = Vec::new();
            for &i in g {
                merged.extend_from_slice(&self.blocks[i].0);
            }
            blocks.push((merged, BlockStatus::Active));
        }
        FrozenPartition::new(self.n, blocks)
    }
}

/// The type `(b; k_1, ..., k_r; s)` of a simultaneous collision: from `b`
/// active blocks, `r >= 1` groups of sizes `k_1 >= ... >= k_r >= 2` merge and
/// `s = b - sum k_i >= 0` blocks are untouched.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CollisionType {
    ks: Vec<usize>,
    s: usize,
}

impl CollisionType {
    /// Build a collision type from group sizes (any order) and the number of
    /// untouched blocks.
    pub fn new(mut ks: Vec<usize>, s: usize) -> Result<Self> {
        if ks.is_empty() {
            return Err(Error::InvalidPartition(
                "collision type needs at least one merge group".into(),
            ));
        }
        if ks.iter().any(|&k| k < 2) {
            return Err(Error::InvalidPartition(
                "merge group sizes must be at least 2".into(),
            ));
        }
        ks.sort_unstable_by(|a, b| b.cmp(a));
        Ok(CollisionType { ks, s })
    }

    /// Merge group sizes, non-increasing.
    pub fn ks(&self) -> &[usize] {
        &self.ks
    }

    /// Number of untouched blocks.
    pub fn s(&self) -> usize {
        self.s
    }

    /// Number of merge groups `r`.
    pub fn r(&self) -> usize {
        self.ks.len()
    }

    /// Total number of affected-or-untouched blocks `b = sum k_i + s`.
    pub fn b(&self) -> usize {
        self.ks.iter().sum::<usize>() + self.s
    }

    /// Sum of the merge group sizes.
    pub fn sum_ks(&self) -> usize {
        self.ks.iter().sum()
    }

    /// Multiplicity of the value `j` among the `k_i`.
    pub fn multiplicity(&self, j: usize) -> usize {
        self.ks.iter().filter(|&&k| k == j).count()
    }
}

impl fmt::Display for CollisionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, k) in self.ks.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, "}};{}", self.s)
    }
}

/// All collision types with `b` active blocks, ordered by total merged mass
/// ascending, then descending-lexicographic group sizes. Empty for `b < 2`.
pub fn collision_types(b: usize) -> Vec<CollisionType> {
    fn parts_ge2(remaining: usize, max_part: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if remaining == 0 {
            out.push(prefix.clone());
            return;
        }
        if remaining < 2 {
            return;
        }
        for p in (2..=remaining.min(max_part)).rev() {
            prefix.push(p);
            parts_ge2(remaining - p, p, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for total in 2..=b {
        let mut parts = Vec::new();
        parts_ge2(total, total, &mut Vec::new(), &mut parts);
        for ks in parts {
            out.push(CollisionType { ks, s: b - total });
        }
    }
    out
}

/// The number `d(b; k_1..k_r; s)` of distinct collisions of a given type:
/// `b! / (s! * prod_j (j!)^{m_j} * m_j!)` where `m_j` is the multiplicity of
/// `j` among the `k_i`.
pub fn collision_count(t: &CollisionType) -> BigInt {
    let mut denom = factorial(t.s());
    let mut mult: BTreeMap<usize, usize> = BTreeMap::new();
    for &k in t.ks() {
        *mult.entry(k).or_insert(0) += 1;
    }
    for (j, m) in mult {
        for _ in 0..m {
            denom *= factorial(j);
        }
        denom *= factorial(m);
    }
    factorial(t.b()) / denom
}

/// One way to distribute the merge-group sizes of a collision type over the
/// parts of a composition: `groups()[i]` is the multiset (non-increasing) of
/// sizes assigned to part `i`, possibly empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    groups: Vec<Vec<usize>>,
}

impl Assignment {
    /// Per-part assigned group sizes.
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

/// All ways to distribute the multiset `ks` over the parts of `comp`, every
/// element used exactly once, such that the sizes assigned to part `i` sum to
/// at most `comp.parts()[i]`. Two distributions are the same assignment when
/// every part receives the same multiset.
pub fn assignments(ks: &[usize], comp: &Composition) -> Result<Vec<Assignment>> {
    if ks.is_empty() {
        return Err(Error::InvalidPartition(
            "assignment needs a nonempty multiset".into(),
        ));
    }
    if ks.iter().any(|&k| k == 0) {
        return Err(Error::InvalidPartition(
            "assignment values must be positive".into(),
        ));
    }
    // Distinct values, descending, with multiplicities.
    let mut mult: BTreeMap<usize, usize> = BTreeMap::new();
    for &k in ks {
        *mult.entry(k).or_insert(0) += 1;
    }
    let values: Vec<(usize, usize)> = mult.into_iter().rev().collect();
    let parts = comp.parts();

    // For one value with multiplicity c, enumerate count vectors over parts
    // subject to the per-part remaining capacity.
    fn spread(
        vi: usize,
        values: &[(usize, usize)],
        remaining: &mut Vec<usize>,
        chosen: &mut Vec<Vec<usize>>,
        out: &mut Vec<Assignment>,
    ) {
        if vi == values.len() {
            let groups = chosen
                .iter()
                .map(|counts| {
                    let mut g = Vec::new();
                    for (j, &(v, _)) in values.iter().enumerate() {
                        for _ in 0..counts[j] {
                            g.push(v);
                        }
                    }
                    g
                })
                .collect();
            out.push(Assignment { groups });
            return;
        }
        let (value, c) = values[vi];
        let nparts = remaining.len();
        fn place(
            part: usize,
            left: usize,
            value: usize,
            vi: usize,
            values: &[(usize, usize)],
            remaining: &mut Vec<usize>,
            chosen: &mut Vec<Vec<usize>>,
            out: &mut Vec<Assignment>,
        ) {
            let nparts = remaining.len();
            if part == nparts {
                if left == 0 {
                    spread(vi + 1, values, remaining, chosen, out);
                }
                return;
            }
            let fit = remaining[part] / value;
            for take in 0..=fit.min(left) {
                remaining[part] -= take * value;
                chosen[part][vi] = take;
                place(part + 1, left - take, value, vi, values, remaining, chosen, out);
                chosen[part][vi] = 0;
                remaining[part] += take * value;
            }
        }
        place(0, c, value, vi, values, remaining, chosen, out);
        let _ = nparts;
    }

    let mut remaining: Vec<usize> = parts.to_vec();
    let mut chosen: Vec<Vec<usize>> = vec![vec![0; values.len()]; parts.len()];
    let mut out = Vec::new();
    spread(0, &values, &mut remaining, &mut chosen, &mut out);
    Ok(out)
}
