//! Markov chains attached to a coalescent with freeze, exact small-state
//! solvers, Monte Carlo batch samplers, and empirical-vs-exact statistics.
//!
//! Three chains share the rows `q(b: ...)`:
//!
//! * the **freeze-merge chain**: the jump chain of the coalescent on
//!   partially frozen partitions, started from active singletons and run to
//!   absorption ([`fm_step`], [`run_fm`]);
//! * the **continuous-time coalescent**: the same jumps with exponential
//!   holding times of rate `Phi(b)` ([`simulate_continuous`]);
//! * the **ball chain**: a sequential-addition chain on plain partitions of
//!   `{1..n}` driven by the single row `q(n: ...)`, whose stationary law is
//!   exactly the absorbed partition law ([`sa_step`],
//!   [`sa_transition_matrix`], [`stationary_distribution`]).
//!
//! For cross-validation there are two exact small-`n` solvers that avoid the
//! partition-probability recursion entirely: [`exact_fm_absorption`] solves
//! the absorption law of the freeze-merge chain state by state, and the
//! transition-matrix path solves the ball chain's stationary law by exact
//! linear algebra. Monte Carlo batches use one deterministic RNG stream per
//! replica ([`replica_rng`]), so the parallel and sequential samplers return
//! identical tallies for the same master seed.

use std::collections::BTreeMap;

use num::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::combinatorics::{
    collision_count, integer_partitions, set_partitions, shape_multiplicity, CollisionType,
    FrozenPartition, IntegerPartition, SetPartition,
};
use crate::eppf::EppfTable;
use crate::measures::{q_row, QArray, QRow, XiModel};
use crate::rational::{rat_to_f64, rat_usize, Rat};
use crate::{Error, Result};

/// The RNG for one replica of a batch: one ChaCha8 stream per replica index,
/// all derived from the same master seed. Streams are independent, and a
/// replica's draws do not depend on how replicas are scheduled.
pub fn replica_rng(master_seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replica);
    rng
}

/// An event drawn from a q row.
#[derive(Clone, Debug, PartialEq, Eq)]
enum RowEvent {
    Freeze,
    Collide(CollisionType),
}

/// Sample one event from a row (cumulative inverse method on f64 weights;
/// only entries with positive probability participate).
fn sample_event<R: Rng>(row: &QRow, rng: &mut R) -> RowEvent {
    let mut events: Vec<(f64, RowEvent)> = Vec::with_capacity(row.entries().len() + 1);
    if row.q_freeze().is_positive() {
        events.push((rat_to_f64(row.q_freeze()), RowEvent::Freeze));
    }
    for (t, v) in row.entries() {
        if v.is_positive() {
            events.push((rat_to_f64(v), RowEvent::Collide(t.clone())));
        }
    }
    debug_assert!(!events.is_empty(), "q row has no positive entry");
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (w, e) in &events {
        acc += w;
        if u < acc {
            return e.clone();
        }
    }
    events.last().expect("nonempty").1.clone()
}

/// Split a shuffled list of active block indices into merge groups of the
/// given sizes (prefix slices). With a uniformly random order this draws a
/// uniformly random collision of that type.
fn collision_groups_from_order(order: &[usize], ks: &[usize]) -> Vec<Vec<usize>> {
    let mut groups = Vec::with_capacity(ks.len());
    let mut at = 0;
    for &k in ks {
        groups.push(order[at..at + k].to_vec());
        at += k;
    }
    groups
}

/// Apply one drawn event to a state.
fn apply_event<R: Rng>(
    state: &FrozenPartition,
    event: &RowEvent,
    rng: &mut R,
) -> Result<FrozenPartition> {
    let mut active = state.active_indices();
    match event {
        RowEvent::Freeze => {
            let i = rng.random_range(0..active.len());
            state.freeze(active[i])
        }
        RowEvent::Collide(t) => {
            active.shuffle(rng);
            state.collide(&collision_groups_from_order(&active, t.ks()))
        }
    }
}

/// One step of the freeze-merge chain: draw an event from the row at the
/// current number of active blocks and apply it to a uniformly random choice
/// of blocks. Requires `row.b() == state.active_count() >= 1`.
pub fn fm_step<R: Rng>(
    state: &FrozenPartition,
    row: &QRow,
    rng: &mut R,
) -> Result<FrozenPartition> {
    let b = state.active_count();
    if b == 0 {
        return Err(Error::InvalidPartition(
            "freeze-merge step on an absorbed state".into(),
        ));
    }
    if row.b() != b {
        return Err(Error::InvalidQ(format!(
            "row is for b = {}, state has {b} active blocks",
            row.b()
        )));
    }
    apply_event(state, &sample_event(row, rng), rng)
}

/// Run the freeze-merge chain from active singletons of `{1..n}` to
/// absorption and return the absorbed partition (statuses dropped).
///
/// The active count strictly decreases at every step, so at most `n` steps
/// happen; the `2n - 1` budget is a defensive diagnostic for corrupt rows.
pub fn run_fm<R: Rng>(n: usize, q: &QArray, rng: &mut R) -> Result<SetPartition> {
    if n == 0 || n > q.n() {
        return Err(Error::InvalidQ(format!(
            "n = {n} outside the q array (rows up to {})",
            q.n()
        )));
    }
    let budget = 2 * n - 1;
    let mut state = FrozenPartition::singletons_active(n)?;
    let mut steps = 0;
    while !state.is_absorbed() {
        if steps >= budget {
            return Err(Error::StepBudget { budget });
        }
        let row = q.row(state.active_count())?;
        state = fm_step(&state, row, rng)?;
        steps += 1;
    }
    Ok(state.induced())
}

/// A continuous-time path of the coalescent with freeze: the state after
/// each jump, with strictly increasing jump times, starting at time zero.
#[derive(Clone, Debug)]
pub struct Trajectory {
    events: Vec<(f64, FrozenPartition)>,
}

impl Trajectory {
    /// `(time, state)` pairs; the first entry is the initial state at 0.
    pub fn events(&self) -> &[(f64, FrozenPartition)] {
        &self.events
    }

    /// The absorbed final state.
    pub fn terminal(&self) -> &FrozenPartition {
        &self.events.last().expect("nonempty trajectory").1
    }

    /// Time of the last event (absorption).
    pub fn absorption_time(&self) -> f64 {
        self.events.last().expect("nonempty trajectory").0
    }

    /// Number of jumps taken.
    pub fn num_jumps(&self) -> usize {
        self.events.len() - 1
    }
}

/// Simulate the continuous-time coalescent with freeze from active
/// singletons of `{1..n}` to absorption. Requires `rho > 0` (otherwise the
/// chain never absorbs).
pub fn simulate_continuous<R: Rng>(
    model: &XiModel,
    n: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::InvalidPartition("n must be >= 1".into()));
    }
    if !model.freeze_rate().is_positive() {
        return Err(Error::ZeroFreezeRate);
    }
    // Rates and rows for every active count that can occur.
    let mut rows: Vec<Option<(f64, QRow)>> = vec![None; n + 1];
    for b in 1..=n {
        let total = crate::measures::total_rates(model, b).total;
        rows[b] = Some((rat_to_f64(&total), q_row(model, b)?));
    }
    let mut state = FrozenPartition::singletons_active(n)?;
    let mut t = 0.0_f64;
    let mut events = vec![(t, state.clone())];
    while !state.is_absorbed() {
        let (phi, row) = rows[state.active_count()].as_ref().expect("filled");
        let exp = rand_distr::Exp::new(*phi)
            .map_err(|e| Error::InvalidModel(format!("holding rate: {e}")))?;
        let mut dt: f64 = exp.sample(rng);
        while dt <= 0.0 {
            dt = exp.sample(rng);
        }
        t += dt;
        state = apply_event(&state, &sample_event(row, rng), rng)?;
        events.push((t, state.clone()));
    }
    Ok(Trajectory { events })
}

/// One step of the ball chain on partitions of `{1..n}`, driven by the row
/// `q(n: ...)` (note: `n` is the number of *balls*, not blocks).
///
/// With probability `q(n:1)` a uniform ball is moved to its own box; with
/// probability `q(n: k_1..k_r; s)` sets of `k_i - 1` balls are drawn
/// sequentially without replacement, `r` distinct remaining balls are
/// marked, and set `i` joins the box of mark `i`; empty boxes are dropped.
pub fn sa_step<R: Rng>(p: &SetPartition, row: &QRow, rng: &mut R) -> Result<SetPartition> {
    let n = p.n();
    if row.b() != n {
        return Err(Error::InvalidQ(format!(
            "row is for b = {}, partition has {n} balls",
            row.b()
        )));
    }
    match sample_event(row, rng) {
        RowEvent::Freeze => {
            let ball = rng.random_range(1..=n);
            sa_apply_singleton(p, ball)
        }
        RowEvent::Collide(t) => {
            let mut order: Vec<usize> = (1..=n).collect();
            order.shuffle(rng);
            let mut at = 0;
            let mut sets: Vec<Vec<usize>> = Vec::with_capacity(t.r());
            for &k in t.ks() {
                sets.push(order[at..at + k - 1].to_vec());
                at += k - 1;
            }
            let marks: Vec<usize> = order[at..at + t.r()].to_vec();
            sa_apply_collision(p, &sets, &marks)
        }
    }
}

/// Move one ball into its own box.
fn sa_apply_singleton(p: &SetPartition, ball: usize) -> Result<SetPartition> {
    let mut blocks: Vec<Vec<usize>> = p
        .blocks()
        .iter()
        .map(|b| b.iter().copied().filter(|&e| e != ball).collect())
        .filter(|b: &Vec<usize>| !b.is_empty())
        .collect();
    blocks.push(vec![ball]);
    SetPartition::new(p.n(), blocks)
}

/// Move each set of balls into the box of the corresponding mark. The sets
/// and marks must be pairwise disjoint.
fn sa_apply_collision(
    p: &SetPartition,
    sets: &[Vec<usize>],
    marks: &[usize],
) -> Result<SetPartition> {
    let removed: std::collections::BTreeSet<usize> = sets.iter().flatten().copied().collect();
    let mut blocks: Vec<Vec<usize>> = p
        .blocks()
        .iter()
        .map(|b| b.iter().copied().filter(|e| !removed.contains(e)).collect())
        .collect();
    for (set, &mark) in sets.iter().zip(marks) {
        let idx = blocks
            .iter()
            .position(|b| b.contains(&mark))
            .ok_or_else(|| Error::InvalidPartition(format!("mark {mark} not in a box")))?;
        blocks[idx].extend_from_slice(set);
    }
    SetPartition::new(
        p.n(),
        blocks.into_iter().filter(|b| !b.is_empty()).collect(),
    )
}

/// The exact one-step transition matrix of the ball chain on all partitions
/// of `{1..n}`, `n = row.b()`, guarded by `cap`.
#[derive(Clone, Debug)]
pub struct SaTransitionMatrix {
    /// All partitions of `{1..n}` in enumeration order.
    pub states: Vec<SetPartition>,
    /// Row-stochastic transition probabilities, indexed like `states`.
    pub probs: Vec<Vec<Rat>>,
}

/// Build the exact transition matrix by enumerating every way the step can
/// draw its sets and marks, with exact probabilities.
pub fn sa_transition_matrix(row: &QRow, cap: usize) -> Result<SaTransitionMatrix> {
    let n = row.b();
    let states = set_partitions(n, cap)?;
    let index: BTreeMap<SetPartition, usize> = states
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();
    let mut probs = vec![vec![Rat::zero(); states.len()]; states.len()];

    // Enumerate subsets of `pool` of size `k` (as sorted vectors).
    fn subsets(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        fn rec(pool: &[usize], k: usize, from: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in from..pool.len() {
                cur.push(pool[i]);
                rec(pool, k, i + 1, cur, out);
                cur.pop();
            }
        }
        rec(pool, k, 0, &mut Vec::new(), &mut out);
        out
    }

    for (i, state) in states.iter().enumerate() {
        if row.q_freeze().is_positive() {
            let per_ball = row.q_freeze() / rat_usize(n);
            for ball in 1..=n {
                let next = sa_apply_singleton(state, ball)?;
                probs[i][index[&next]] += &per_ball;
            }
        }
        for (t, qv) in row.entries() {
            if qv.is_zero() {
                continue;
            }
            // Depth-first over the sequential set draws, then the marks.
            struct Ctx<'a> {
                state: &'a SetPartition,
                ks: &'a [usize],
                qv: &'a Rat,
                index: &'a BTreeMap<SetPartition, usize>,
                row_probs: &'a mut Vec<Rat>,
            }
            fn draw_sets(
                ctx: &mut Ctx<'_>,
                slot: usize,
                pool: Vec<usize>,
                sets: &mut Vec<Vec<usize>>,
                weight: Rat,
            ) -> Result<()> {
                if slot == ctx.ks.len() {
                    // Ordered tuples of r distinct marks from the pool.
                    let r = ctx.ks.len();
                    let denom = Rat::from_integer(crate::combinatorics::falling_factorial(
                        pool.len(),
                        r,
                    ));
                    let mut marks = Vec::with_capacity(r);
                    fn draw_marks(
                        ctx: &mut Ctx<'_>,
                        pool: &[usize],
                        marks: &mut Vec<usize>,
                        r: usize,
                        sets: &[Vec<usize>],
                        weight: &Rat,
                    ) -> Result<()> {
                        if marks.len() == r {
                            let next = sa_apply_collision(ctx.state, sets, marks)?;
                            ctx.row_probs[ctx.index[&next]] += weight;
                            return Ok(());
                        }
                        for &m in pool {
                            if marks.contains(&m) {
                                continue;
                            }
                            marks.push(m);
                            draw_marks(ctx, pool, marks, r, sets, weight)?;
                            marks.pop();
                        }
                        Ok(())
                    }
                    let w = weight * ctx.qv / denom;
                    return draw_marks(ctx, &pool, &mut marks, r, sets, &w);
                }
                let k = ctx.ks[slot] - 1;
                let count = Rat::from_integer(crate::combinatorics::binomial(pool.len(), k));
                for set in subsets(&pool, k) {
                    let rest: Vec<usize> =
                        pool.iter().copied().filter(|e| !set.contains(e)).collect();
                    sets.push(set);
                    draw_sets(ctx, slot + 1, rest, sets, &weight / &count)?;
                    sets.pop();
                }
                Ok(())
            }
            let mut row_probs = std::mem::take(&mut probs[i]);
            let mut ctx = Ctx {
                state,
                ks: t.ks(),
                qv,
                index: &index,
                row_probs: &mut row_probs,
            };
            draw_sets(&mut ctx, 0, (1..=n).collect(), &mut Vec::new(), Rat::one())?;
            probs[i] = row_probs;
        }
        let sum: Rat = probs[i].iter().sum();
        if !sum.is_one() {
            return Err(Error::InvalidQ(format!(
                "transition row for state {state} sums to {sum}"
            )));
        }
    }
    Ok(SaTransitionMatrix { states, probs })
}

/// The unique stationary distribution of a transition matrix, solved by
/// exact Gaussian elimination on `M^T - I`.
///
/// Fails with [`Error::NonUniqueStationary`] when the fixed-vector space has
/// dimension above one (rank of `M^T - I` below `N - 1`).
pub fn stationary_distribution(mat: &SaTransitionMatrix) -> Result<Vec<Rat>> {
    let n = mat.states.len();
    // a = M^T - I.
    let mut a: Vec<Vec<Rat>> = (0..n)
        .map(|r| {
            (0..n)
                .map(|c| {
                    let mut v = mat.probs[c][r].clone();
                    if r == c {
                        v -= Rat::one();
                    }
                    v
                })
                .collect()
        })
        .collect();

    // Row echelon form with a smallest-entry pivot heuristic (keeps the
    // rational entries from blowing up).
    let mut pivot_cols = Vec::new();
    let mut rank = 0;
    for col in 0..n {
        let mut best: Option<(usize, usize)> = None; // (row, size score)
        for (r, row) in a.iter().enumerate().skip(rank) {
            if !row[col].is_zero() {
                let score = row[col].numer().bits() as usize + row[col].denom().bits() as usize;
                if best.map_or(true, |(_, s)| score < s) {
                    best = Some((r, score));
                }
            }
        }
        let Some((r, _)) = best else { continue };
        a.swap(rank, r);
        let inv = a[rank][col].clone();
        for c in col..n {
            let v = a[rank][c].clone() / &inv;
            a[rank][c] = v;
        }
        for r2 in 0..n {
            if r2 != rank && !a[r2][col].is_zero() {
                let f = a[r2][col].clone();
                for c in col..n {
                    let v = a[r2][c].clone() - &f * &a[rank][c];
                    a[r2][c] = v;
                }
            }
        }
        pivot_cols.push(col);
        rank += 1;
    }
    if rank != n - 1 {
        return Err(Error::NonUniqueStationary {
            kernel_dim: n - rank,
        });
    }
    // The single free column gets value one; pivots are read off directly
    // (the echelon form is fully reduced).
    let free_col = (0..n)
        .find(|c| !pivot_cols.contains(c))
        .expect("rank is n - 1");
    let mut x = vec![Rat::zero(); n];
    x[free_col] = Rat::one();
    for (i, &pc) in pivot_cols.iter().enumerate() {
        x[pc] = -a[i][free_col].clone();
    }
    let sum: Rat = x.iter().sum();
    if sum.is_zero() {
        return Err(Error::NonUniqueStationary { kernel_dim: 1 });
    }
    let pi: Vec<Rat> = x.into_iter().map(|v| v / &sum).collect();
    if pi.iter().any(Signed::is_negative) {
        return Err(Error::InvalidQ(
            "stationary solve produced a negative entry".into(),
        ));
    }
    Ok(pi)
}

/// All distinct collisions of the given merge-group sizes among the listed
/// active block indices. Groups of equal size are produced in one canonical
/// order (increasing minima), so each collision appears exactly once; the
/// number of results is `d(b; k; s)`.
fn collision_groupings(active: &[usize], ks: &[usize]) -> Vec<Vec<Vec<usize>>> {
    fn subsets_with_floor(pool: &[usize], k: usize, min_floor: Option<usize>) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        fn rec(pool: &[usize], k: usize, from: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in from..pool.len() {
                cur.push(pool[i]);
                rec(pool, k, i + 1, cur, out);
                cur.pop();
            }
        }
        rec(pool, k, 0, &mut Vec::new(), &mut out);
        out.into_iter()
            .filter(|s| min_floor.is_none_or(|f| s[0] > f))
            .collect()
    }
    fn rec(
        pool: Vec<usize>,
        ks: &[usize],
        prev: Option<(usize, usize)>,
        cur: &mut Vec<Vec<usize>>,
        out: &mut Vec<Vec<Vec<usize>>>,
    ) {
        let Some((&k, rest)) = ks.split_first() else {
            out.push(cur.clone());
            return;
        };
        let floor = match prev {
            Some((pk, pmin)) if pk == k => Some(pmin),
            _ => None,
        };
        for set in subsets_with_floor(&pool, k, floor) {
            let next_pool: Vec<usize> = pool.iter().copied().filter(|e| !set.contains(e)).collect();
            let min = set[0];
            cur.push(set);
            rec(next_pool, rest, Some((k, min)), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(active.to_vec(), ks, None, &mut Vec::new(), &mut out);
    out
}

/// The exact absorption law of the freeze-merge chain on `{1..n}`,
/// `n = q.n()`, as a map from absorbed partitions to probabilities.
///
/// Solved by exact dynamic programming over the (acyclic) state space of
/// partially frozen partitions — the active count strictly decreases — with
/// uniform choice among the `d(b;k;s)` collisions of each type. Independent
/// of the partition-probability recursion, which it cross-validates.
/// Guarded by `cap` (the state space grows fast).
pub fn exact_fm_absorption(
    q: &QArray,
    cap: usize,
) -> Result<BTreeMap<SetPartition, Rat>> {
    let n = q.n();
    if n > cap {
        return Err(Error::CapExceeded { n, cap });
    }
    type Dist = BTreeMap<SetPartition, Rat>;
    fn absorb(
        state: &FrozenPartition,
        q: &QArray,
        memo: &mut BTreeMap<FrozenPartition, Dist>,
    ) -> Result<Dist> {
        if let Some(d) = memo.get(state) {
            return Ok(d.clone());
        }
        if state.is_absorbed() {
            let mut d = Dist::new();
            d.insert(state.induced(), Rat::one());
            return Ok(d);
        }
        let b = state.active_count();
        let row = q.row(b)?;
        let active = state.active_indices();
        let mut dist = Dist::new();
        let add = |d: Dist, w: &Rat, dist: &mut Dist| {
            for (p, v) in d {
                *dist.entry(p).or_insert_with(Rat::zero) += v * w;
            }
        };
        if row.q_freeze().is_positive() {
            let w = row.q_freeze() / rat_usize(b);
            for &i in &active {
                let d = absorb(&state.freeze(i)?, q, memo)?;
                add(d, &w, &mut dist);
            }
        }
        for (t, qv) in row.entries() {
            if qv.is_zero() {
                continue;
            }
            let groupings = collision_groupings(&active, t.ks());
            debug_assert_eq!(
                Rat::from_integer(collision_count(t)),
                rat_usize(groupings.len())
            );
            let w = qv / Rat::from_integer(collision_count(t));
            for g in groupings {
                let d = absorb(&state.collide(&g)?, q, memo)?;
                add(d, &w, &mut dist);
            }
        }
        memo.insert(state.clone(), dist.clone());
        Ok(dist)
    }
    let start = FrozenPartition::singletons_active(n)?;
    let dist = absorb(&start, q, &mut BTreeMap::new())?;
    let total: Rat = dist.values().sum();
    if !total.is_one() {
        return Err(Error::InvalidQ(format!(
            "absorption law sums to {total}"
        )));
    }
    Ok(dist)
}

/// Shape tallies of a sample of partitions of a common `{1..n}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmpiricalEppf {
    n: usize,
    total: u64,
    counts: BTreeMap<IntegerPartition, u64>,
}

impl EmpiricalEppf {
    /// An empty tally for partitions of `{1..n}`.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidPartition("n must be >= 1".into()));
        }
        Ok(EmpiricalEppf {
            n,
            total: 0,
            counts: BTreeMap::new(),
        })
    }

    /// Tally one observed shape.
    pub fn record(&mut self, shape: IntegerPartition) -> Result<()> {
        if shape.n() != self.n {
            return Err(Error::InvalidPartition(format!(
                "shape {shape} has size {}, tally is for {}",
                shape.n(),
                self.n
            )));
        }
        *self.counts.entry(shape).or_insert(0) += 1;
        self.total += 1;
        Ok(())
    }

    /// Tally a whole sample of set partitions (all of the same ground set).
    pub fn from_samples(samples: &[SetPartition]) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptySample)?;
        let mut emp = EmpiricalEppf::new(first.n())?;
        for s in samples {
            if s.n() != emp.n {
                return Err(Error::InvalidPartition(format!(
                    "sample mixes ground sets of size {} and {}",
                    emp.n,
                    s.n()
                )));
            }
            emp.record(s.shape())?;
        }
        Ok(emp)
    }

    /// Merge two tallies over the same ground set (associative and
    /// commutative, so parallel reduction order does not matter).
    pub fn merge(mut self, other: EmpiricalEppf) -> Result<Self> {
        if other.n != self.n {
            return Err(Error::InvalidPartition(format!(
                "cannot merge tallies for sizes {} and {}",
                self.n, other.n
            )));
        }
        for (s, c) in other.counts {
            *self.counts.entry(s).or_insert(0) += c;
        }
        self.total += other.total;
        Ok(self)
    }

    /// Ground set size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of samples tallied.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Count of one shape.
    pub fn count(&self, shape: &IntegerPartition) -> u64 {
        self.counts.get(shape).copied().unwrap_or(0)
    }

    /// All `(shape, count)` pairs in shape order.
    pub fn counts(&self) -> &BTreeMap<IntegerPartition, u64> {
        &self.counts
    }

    /// Observed relative frequency of a shape.
    pub fn freq(&self, shape: &IntegerPartition) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.count(shape) as f64 / self.total as f64
    }

    /// Estimate of the partition probability function at a shape: the shape
    /// frequency divided by the number of partitions of that shape.
    pub fn eppf_estimate(&self, shape: &IntegerPartition) -> f64 {
        let mult = rat_to_f64(&Rat::from_integer(shape_multiplicity(shape)));
        self.freq(shape) / mult
    }

    /// Binomial standard error of the shape frequency.
    pub fn std_error(&self, shape: &IntegerPartition) -> f64 {
        if self.total == 0 {
            return f64::NAN;
        }
        let f = self.freq(shape);
        (f * (1.0 - f) / self.total as f64).sqrt()
    }
}

/// Absorbed shapes of `samples` independent freeze-merge runs, one RNG
/// stream per replica, sequential driver.
pub fn sample_fm_sequential(
    n: usize,
    q: &QArray,
    samples: u64,
    master_seed: u64,
) -> Result<EmpiricalEppf> {
    let mut emp = EmpiricalEppf::new(n)?;
    for replica in 0..samples {
        let mut rng = replica_rng(master_seed, replica);
        emp.record(run_fm(n, q, &mut rng)?.shape())?;
    }
    Ok(emp)
}

/// Absorbed shapes of `samples` independent freeze-merge runs, one RNG
/// stream per replica, data-parallel driver. Identical output to
/// [`sample_fm_sequential`] for the same seed.
#[cfg(feature = "parallel")]
pub fn sample_fm_parallel(
    n: usize,
    q: &QArray,
    samples: u64,
    master_seed: u64,
) -> Result<EmpiricalEppf> {
    use rayon::prelude::*;
    let empty = EmpiricalEppf::new(n)?;
    (0..samples)
        .into_par_iter()
        .try_fold(
            || empty.clone(),
            |mut emp, replica| {
                let mut rng = replica_rng(master_seed, replica);
                emp.record(run_fm(n, q, &mut rng)?.shape())?;
                Ok(emp)
            },
        )
        .try_reduce(|| empty.clone(), |a, b| a.merge(b))
}

/// Absorbed shapes of `samples` freeze-merge runs: parallel when the
/// `parallel` feature is enabled, sequential otherwise. Same output either
/// way for the same master seed.
pub fn sample_fm(n: usize, q: &QArray, samples: u64, master_seed: u64) -> Result<EmpiricalEppf> {
    #[cfg(feature = "parallel")]
    {
        sample_fm_parallel(n, q, samples, master_seed)
    }
    #[cfg(not(feature = "parallel"))]
    {
        sample_fm_sequential(n, q, samples, master_seed)
    }
}

/// Aggregate of a batch of continuous-time runs: absorbed shapes plus time
/// and jump-count totals.
#[derive(Clone, Debug)]
pub struct ContinuousBatch {
    /// Absorbed shape tallies.
    pub shapes: EmpiricalEppf,
    /// Sum of absorption times (summed in replica order).
    pub total_time: f64,
    /// Sum of jump counts.
    pub total_jumps: u64,
}

impl ContinuousBatch {
    /// Mean absorption time.
    pub fn mean_absorption_time(&self) -> f64 {
        self.total_time / self.shapes.total() as f64
    }

    /// Mean number of jumps.
    pub fn mean_jumps(&self) -> f64 {
        self.total_jumps as f64 / self.shapes.total() as f64
    }
}

fn continuous_replica(
    model: &XiModel,
    n: usize,
    master_seed: u64,
    replica: u64,
) -> Result<(IntegerPartition, f64, u64)> {
    let mut rng = replica_rng(master_seed, replica);
    let traj = simulate_continuous(model, n, &mut rng)?;
    Ok((
        traj.terminal().shape(),
        traj.absorption_time(),
        traj.num_jumps() as u64,
    ))
}

/// Run `samples` continuous-time replicas sequentially.
pub fn sample_continuous_sequential(
    model: &XiModel,
    n: usize,
    samples: u64,
    master_seed: u64,
) -> Result<ContinuousBatch> {
    let mut shapes = EmpiricalEppf::new(n)?;
    let mut total_time = 0.0;
    let mut total_jumps = 0;
    for replica in 0..samples {
        let (shape, time, jumps) = continuous_replica(model, n, master_seed, replica)?;
        shapes.record(shape)?;
        total_time += time;
        total_jumps += jumps;
    }
    Ok(ContinuousBatch {
        shapes,
        total_time,
        total_jumps,
    })
}

/// Run `samples` continuous-time replicas in parallel. Per-replica results
/// are collected in replica order before the floating-point sums, so the
/// output is identical to the sequential driver for the same seed.
#[cfg(feature = "parallel")]
pub fn sample_continuous_parallel(
    model: &XiModel,
    n: usize,
    samples: u64,
    master_seed: u64,
) -> Result<ContinuousBatch> {
    use rayon::prelude::*;
    let per: Vec<(IntegerPartition, f64, u64)> = (0..samples)
        .into_par_iter()
        .map(|replica| continuous_replica(model, n, master_seed, replica))
        .collect::<Result<Vec<_>>>()?;
    let mut shapes = EmpiricalEppf::new(n)?;
    let mut total_time = 0.0;
    let mut total_jumps = 0;
    for (shape, time, jumps) in per {
        shapes.record(shape)?;
        total_time += time;
        total_jumps += jumps;
    }
    Ok(ContinuousBatch {
        shapes,
        total_time,
        total_jumps,
    })
}

/// Run `samples` continuous-time replicas: parallel when the `parallel`
/// feature is enabled, sequential otherwise. Same output either way.
pub fn sample_continuous(
    model: &XiModel,
    n: usize,
    samples: u64,
    master_seed: u64,
) -> Result<ContinuousBatch> {
    #[cfg(feature = "parallel")]
    {
        sample_continuous_parallel(model, n, samples, master_seed)
    }
    #[cfg(not(feature = "parallel"))]
    {
        sample_continuous_sequential(model, n, samples, master_seed)
    }
}

/// Run the ball chain for `steps` steps from `start` and tally the shape
/// after every step (inherently sequential: each state feeds the next).
pub fn sa_occupancy(
    start: &SetPartition,
    row: &QRow,
    steps: u64,
    master_seed: u64,
) -> Result<EmpiricalEppf> {
    let mut emp = EmpiricalEppf::new(start.n())?;
    let mut rng = replica_rng(master_seed, 0);
    let mut state = start.clone();
    for _ in 0..steps {
        state = sa_step(&state, row, &mut rng)?;
        emp.record(state.shape())?;
    }
    Ok(emp)
}

/// A chi-square test result.
#[derive(Clone, Debug)]
pub struct ChiSquareReport {
    /// The chi-square statistic.
    pub statistic: f64,
    /// Degrees of freedom (cells minus one).
    pub df: usize,
    /// Upper tail probability of the statistic.
    pub p_value: f64,
    /// Number of cells entering the statistic.
    pub cells: usize,
}

fn chi_square_p(statistic: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df as f64).expect("df >= 1");
    1.0 - dist.cdf(statistic)
}

/// Goodness of fit of an empirical shape tally against the exact law of the
/// absorbed partition at the tally's size.
///
/// Cells are the shapes with positive exact probability (the support is
/// known exactly; zero-probability cells are dropped). An observation
/// outside the support is a hard error — it means the sampler and the exact
/// law disagree about what is possible.
pub fn chi_square_vs_exact(emp: &EmpiricalEppf, exact: &EppfTable) -> Result<ChiSquareReport> {
    if emp.total() == 0 {
        return Err(Error::EmptySample);
    }
    let n = emp.n();
    if exact.n() < n {
        return Err(Error::InvalidEppf(format!(
            "exact table covers sizes up to {}, need {n}",
            exact.n()
        )));
    }
    let total = emp.total() as f64;
    let mut statistic = 0.0;
    let mut cells = 0usize;
    let mut support: std::collections::BTreeSet<IntegerPartition> =
        std::collections::BTreeSet::new();
    for shape in integer_partitions(n) {
        let p = exact.shape_probability(&shape)?;
        if p.is_zero() {
            continue;
        }
        support.insert(shape.clone());
        let expected = rat_to_f64(&p) * total;
        let observed = emp.count(&shape) as f64;
        statistic += (observed - expected).powi(2) / expected;
        cells += 1;
    }
    for shape in emp.counts().keys() {
        if !support.contains(shape) {
            return Err(Error::InvalidEppf(format!(
                "observed shape {shape} has exact probability zero"
            )));
        }
    }
    let df = cells.saturating_sub(1);
    Ok(ChiSquareReport {
        statistic,
        df,
        p_value: chi_square_p(statistic, df),
        cells,
    })
}

/// Two-sample chi-square test that two shape tallies draw from the same
/// law, with pooled expected counts.
pub fn chi_square_two_sample(
    a: &EmpiricalEppf,
    b: &EmpiricalEppf,
) -> Result<ChiSquareReport> {
    if a.n() != b.n() {
        return Err(Error::InvalidPartition(format!(
            "tallies compare sizes {} and {}",
            a.n(),
            b.n()
        )));
    }
    if a.total() == 0 || b.total() == 0 {
        return Err(Error::EmptySample);
    }
    let (na, nb) = (a.total() as f64, b.total() as f64);
    let mut cells = 0usize;
    let mut statistic = 0.0;
    let shapes: std::collections::BTreeSet<IntegerPartition> = a
        .counts()
        .keys()
        .chain(b.counts().keys())
        .cloned()
        .collect();
    for shape in shapes {
        let oa = a.count(&shape) as f64;
        let ob = b.count(&shape) as f64;
        let pooled = (oa + ob) / (na + nb);
        let (ea, eb) = (na * pooled, nb * pooled);
        statistic += (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb;
        cells += 1;
    }
    let df = cells.saturating_sub(1);
    Ok(ChiSquareReport {
        statistic,
        df,
        p_value: chi_square_p(statistic, df),
        cells,
    })
}

/// Total-variation distance between an empirical shape tally and the exact
/// shape law at the same size.
pub fn tv_distance_to_exact(emp: &EmpiricalEppf, exact: &EppfTable) -> Result<f64> {
    if emp.total() == 0 {
        return Err(Error::EmptySample);
    }
    let mut tv = 0.0;
    for shape in integer_partitions(emp.n()) {
        let p = rat_to_f64(&exact.shape_probability(&shape)?);
        tv += (emp.freq(&shape) - p).abs();
    }
    Ok(tv / 2.0)
}
