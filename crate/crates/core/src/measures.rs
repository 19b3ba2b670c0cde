//! Finitely supported Xi measures and exact collision rates.
//!
//! A model is a finite measure on the infinite simplex
//! `Delta = {x_1 >= x_2 >= ... >= 0, sum x_j <= 1}` together with a freeze
//! rate `rho`:
//!
//! * a Kingman mass `a` at the zero point (binary collisions),
//! * finitely many atoms at points with finitely many positive coordinates
//!   (simultaneous multiple collisions),
//! * optionally a single-collision part whose intensity is a Beta density
//!   with integer parameters (a Lambda component, e.g. Bolthausen–Sznitman).
//!
//! The rate of one specific collision of type `(b; k_1..k_r; s)` is
//!
//! ```text
//! lambda_{b;k;s} = a 1{r=1, k=2}
//!   + sum_atoms w * [ sum_{l=0..s} C(s,l) (1-sum_j x_j)^{s-l}
//!       sum_{distinct i_1..i_{r+l}} x_{i_1}^{k_1} ... x_{i_r}^{k_r}
//!                                   x_{i_{r+1}} ... x_{i_{r+l}} ] / sum_j x_j^2
//!   + 1{r=1} * mass * B(k-2+alpha, b-k+beta) / B(alpha, beta).
//! ```
//!
//! With `d(b;k;s)` ways to pick the collision, the total rate out of `b`
//! active blocks is `Phi(b) = rho b + sum_types d * lambda`, and the jump
//! chain moves by the row `q(b: ...)` of normalized rates. Rows are linked
//! across `b` by an exact consistency relation; [`backward_q`] runs it in
//! reverse to rebuild every row from row `n` alone, and [`recover_rates`]
//! turns rows back into rates given the single free scale `Phi(1)`.

use std::collections::BTreeMap;

use num::{One, Signed, Zero};

use crate::combinatorics::{
    binomial, collision_count, collision_types, factorial, CollisionType,
};
use crate::rational::{rat_pow, rat_usize, Rat};
use crate::{Error, Result};

/// A point of the simplex with finitely many positive coordinates:
/// `x_1 >= x_2 >= ... > 0` and `sum x_j <= 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimplexPoint {
    coords: Vec<Rat>,
}

impl SimplexPoint {
    /// Build a point from coordinates; trailing zeros are dropped, the rest
    /// must be positive, non-increasing, and sum to at most one.
    pub fn new(mut coords: Vec<Rat>) -> Result<Self> {
        while coords.last().is_some_and(Zero::is_zero) {
            coords.pop();
        }
        if coords.is_empty() {
            return Err(Error::InvalidModel(
                "simplex point needs a positive coordinate".into(),
            ));
        }
        if coords.iter().any(|x| !x.is_positive()) {
            return Err(Error::InvalidModel(
                "simplex coordinates must be positive (zeros only trailing)".into(),
            ));
        }
        if coords.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidModel(
                "simplex coordinates must be non-increasing".into(),
            ));
        }
        let sum: Rat = coords.iter().sum();
        if sum > Rat::one() {
            return Err(Error::InvalidModel(
                "simplex coordinates must sum to at most one".into(),
            ));
        }
        Ok(SimplexPoint { coords })
    }

    /// Positive coordinates, non-increasing.
    pub fn coords(&self) -> &[Rat] {
        &self.coords
    }

    /// Sum of the coordinates.
    pub fn coord_sum(&self) -> Rat {
        self.coords.iter().sum()
    }

    /// Sum of squared coordinates (`> 0`).
    pub fn coord_sum_squares(&self) -> Rat {
        self.coords.iter().map(|x| x * x).sum()
    }
}

/// A single-collision (Lambda) component with Beta(`alpha`, `beta`) density,
/// integer parameters, carrying total mass `mass`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BetaPart {
    /// First Beta parameter (`>= 1`).
    pub alpha: u32,
    /// Second Beta parameter (`>= 1`).
    pub beta: u32,
    /// Total mass of this component (`> 0`).
    pub mass: Rat,
}

/// A finitely supported coalescent model: Kingman mass, simplex atoms, an
/// optional Beta single-collision part, and the freeze rate `rho`.
#[derive(Clone, Debug, PartialEq)]
pub struct XiModel {
    kingman_mass: Rat,
    atoms: Vec<(Rat, SimplexPoint)>,
    beta: Option<BetaPart>,
    freeze_rate: Rat,
}

impl XiModel {
    /// Build and validate a model. The total coalescence mass
    /// (Kingman + atoms + Beta) must be positive; the freeze rate and the
    /// Kingman mass must be non-negative; atom weights must be positive.
    pub fn new(
        kingman_mass: Rat,
        atoms: Vec<(Rat, SimplexPoint)>,
        beta: Option<BetaPart>,
        freeze_rate: Rat,
    ) -> Result<Self> {
        if kingman_mass.is_negative() {
            return Err(Error::InvalidModel("Kingman mass must be >= 0".into()));
        }
        if freeze_rate.is_negative() {
            return Err(Error::InvalidModel("freeze rate must be >= 0".into()));
        }
        if atoms.iter().any(|(w, _)| !w.is_positive()) {
            return Err(Error::InvalidModel("atom weights must be > 0".into()));
        }
        if let Some(b) = &beta {
            if b.alpha == 0 || b.beta == 0 {
                return Err(Error::InvalidModel(
                    "Beta parameters must be positive integers".into(),
                ));
            }
            if !b.mass.is_positive() {
                return Err(Error::InvalidModel("Beta mass must be > 0".into()));
            }
        }
        let model = XiModel {
            kingman_mass,
            atoms,
            beta,
            freeze_rate,
        };
        if !model.total_mass().is_positive() {
            return Err(Error::InvalidModel(
                "total coalescence mass must be > 0".into(),
            ));
        }
        Ok(model)
    }

    /// Pure Kingman coalescent with freeze: binary collisions at rate `mass`
    /// per pair, freeze at rate `rho` per block.
    pub fn kingman(mass: Rat, freeze_rate: Rat) -> Result<Self> {
        XiModel::new(mass, Vec::new(), None, freeze_rate)
    }

    /// Embed a finitely supported single-collision (Lambda) measure: each
    /// atom `(w, x)` with `x` in `(0, 1]` becomes a simplex atom of weight
    /// `w` at the one-coordinate point `(x)`.
    pub fn embed_lambda(lambda_atoms: &[(Rat, Rat)], freeze_rate: Rat) -> Result<Self> {
        let atoms = lambda_atoms
            .iter()
            .map(|(w, x)| Ok((w.clone(), SimplexPoint::new(vec![x.clone()])?)))
            .collect::<Result<Vec<_>>>()?;
        XiModel::new(Rat::zero(), atoms, None, freeze_rate)
    }

    /// Mass at the Kingman (zero) point.
    pub fn kingman_mass(&self) -> &Rat {
        &self.kingman_mass
    }

    /// Simplex atoms as `(weight, point)` pairs.
    pub fn atoms(&self) -> &[(Rat, SimplexPoint)] {
        &self.atoms
    }

    /// The Beta single-collision part, if any.
    pub fn beta(&self) -> Option<&BetaPart> {
        self.beta.as_ref()
    }

    /// Freeze rate `rho` per active block.
    pub fn freeze_rate(&self) -> &Rat {
        &self.freeze_rate
    }

    /// Total coalescence mass (Kingman + atom weights + Beta mass).
    pub fn total_mass(&self) -> Rat {
        let mut m = self.kingman_mass.clone();
        for (w, _) in &self.atoms {
            m += w;
        }
        if let Some(b) = &self.beta {
            m += &b.mass;
        }
        m
    }
}

/// Exact Beta function with positive integer arguments:
/// `B(p, q) = (p-1)! (q-1)! / (p+q-1)!`.
fn beta_fn(p: usize, q: usize) -> Rat {
    Rat::new(
        factorial(p - 1) * factorial(q - 1),
        factorial(p + q - 1),
    )
}

/// Contribution of one simplex atom (without its weight) to the rate of one
/// collision of type `t`.
fn atom_rate(point: &SimplexPoint, t: &CollisionType) -> Rat {
    let xs = point.coords();
    let m = xs.len();
    let r = t.r();
    let s = t.s();
    if r > m {
        return Rat::zero();
    }
    let leftover = Rat::one() - point.coord_sum();
    // Sum over ordered tuples of distinct coordinate indices carrying the
    // exponents k_1..k_r followed by `extra` exponents of one.
    fn tuple_sum(xs: &[Rat], used: &mut Vec<bool>, exps: &[usize], at: usize) -> Rat {
        if at == exps.len() {
            return Rat::one();
        }
        let mut acc = Rat::zero();
        for i in 0..xs.len() {
            if used[i] {
                continue;
            }
            used[i] = true;
            acc += rat_pow(&xs[i], exps[at]) * tuple_sum(xs, used, exps, at + 1);
            used[i] = false;
        }
        acc
    }
    let mut numer = Rat::zero();
    for l in 0..=s.min(m - r) {
        let mut exps: Vec<usize> = t.ks().to_vec();
        exps.extend(std::iter::repeat(1).take(l));
        let tuples = tuple_sum(xs, &mut vec![false; m], &exps, 0);
        numer += Rat::from_integer(binomial(s, l)) * rat_pow(&leftover, s - l) * tuples;
    }
    numer / point.coord_sum_squares()
}

/// Exact rate `lambda_{b; k_1..k_r; s}` of one specific collision of type
/// `t` under `model`.
pub fn collision_rate(model: &XiModel, t: &CollisionType) -> Rat {
    let mut rate = Rat::zero();
    for (w, point) in model.atoms() {
        rate += w * atom_rate(point, t);
    }
    if t.r() == 1 {
        let k = t.ks()[0];
        if k == 2 {
            rate += model.kingman_mass();
        }
        if let Some(bp) = model.beta() {
            let (alpha, beta) = (bp.alpha as usize, bp.beta as usize);
            rate += &bp.mass * beta_fn(k - 2 + alpha, t.b() - k + beta) / beta_fn(alpha, beta);
        }
    }
    rate
}

/// All rates out of a state with `b` active blocks: the total freeze rate
/// `rho b`, each collision type's weighted rate `d(b;k;s) lambda_{b;k;s}`,
/// and the grand total `Phi(b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TotalRates {
    /// Number of active blocks.
    pub b: usize,
    /// Total freeze rate `rho b`.
    pub freeze: Rat,
    /// Per-type `(type, lambda, d * lambda)` in [`collision_types`] order.
    pub per_type: Vec<(CollisionType, Rat, Rat)>,
    /// Grand total `Phi(b)`.
    pub total: Rat,
}

/// Compute every rate out of a state with `b >= 1` active blocks.
pub fn total_rates(model: &XiModel, b: usize) -> TotalRates {
    let freeze = model.freeze_rate() * rat_usize(b);
    let mut per_type = Vec::new();
    let mut total = freeze.clone();
    for t in collision_types(b) {
        let lambda = collision_rate(model, &t);
        let weighted = Rat::from_integer(collision_count(&t)) * &lambda;
        total += &weighted;
        per_type.push((t, lambda, weighted));
    }
    TotalRates {
        b,
        freeze,
        per_type,
        total,
    }
}

/// One row of jump-chain probabilities at `b` active blocks: the freeze
/// probability `q(b:1)` and `q(b: k_1..k_r; s)` for every collision type of
/// `b`, all non-negative and summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct QRow {
    b: usize,
    q_freeze: Rat,
    entries: Vec<(CollisionType, Rat)>,
}

impl QRow {
    /// Build a row; missing collision types are filled with zero; entries
    /// must be non-negative and sum (with `q_freeze`) to exactly one.
    pub fn new(b: usize, q_freeze: Rat, entries: Vec<(CollisionType, Rat)>) -> Result<Self> {
        if b == 0 {
            return Err(Error::InvalidQ("q row needs b >= 1".into()));
        }
        if q_freeze.is_negative() {
            return Err(Error::InvalidQ("q(b:1) must be >= 0".into()));
        }
        let mut map: BTreeMap<CollisionType, Rat> = BTreeMap::new();
        for (t, v) in entries {
            if t.b() != b {
                return Err(Error::InvalidQ(format!(
                    "type {t} does not have b = {b}"
                )));
            }
            if v.is_negative() {
                return Err(Error::InvalidQ(format!("q({b}: {t}) must be >= 0")));
            }
            if map.insert(t.clone(), v).is_some() {
                return Err(Error::InvalidQ(format!("type {t} given twice")));
            }
        }
        let mut full = Vec::new();
        let mut sum = q_freeze.clone();
        for t in collision_types(b) {
            let v = map.remove(&t).unwrap_or_else(Rat::zero);
            sum += &v;
            full.push((t, v));
        }
        if let Some((t, _)) = map.into_iter().next() {
            return Err(Error::InvalidQ(format!("unknown type {t} for b = {b}")));
        }
        if !sum.is_one() {
            return Err(Error::InvalidQ(format!(
                "row b = {b} sums to {sum}, expected 1"
            )));
        }
        Ok(QRow {
            b,
            q_freeze,
            entries: full,
        })
    }

    /// The row at one active block: freezing is certain.
    pub fn certain_freeze() -> QRow {
        QRow {
            b: 1,
            q_freeze: Rat::one(),
            entries: Vec::new(),
        }
    }

    /// Number of active blocks.
    pub fn b(&self) -> usize {
        self.b
    }

    /// Probability that the next event is a freeze.
    pub fn q_freeze(&self) -> &Rat {
        &self.q_freeze
    }

    /// Per-type probabilities in [`collision_types`] order (complete).
    pub fn entries(&self) -> &[(CollisionType, Rat)] {
        &self.entries
    }

    /// Probability of a given collision type (zero if absent).
    pub fn get(&self, t: &CollisionType) -> Rat {
        self.entries
            .iter()
            .find(|(u, _)| u == t)
            .map(|(_, v)| v.clone())
            .unwrap_or_else(Rat::zero)
    }
}

/// Jump-chain rows for `b = 1..=n`.
#[derive(Clone, Debug, PartialEq)]
pub struct QArray {
    rows: Vec<QRow>,
}

impl QArray {
    /// Build from rows for `b = 1, 2, ..., n` in order.
    pub fn new(rows: Vec<QRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidQ("q array needs at least row 1".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.b() != i + 1 {
                return Err(Error::InvalidQ(format!(
                    "row {} has b = {}, expected {}",
                    i,
                    row.b(),
                    i + 1
                )));
            }
        }
        Ok(QArray { rows })
    }

    /// Largest `b` covered.
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// The row at `b` active blocks (`1 <= b <= n`).
    pub fn row(&self, b: usize) -> Result<&QRow> {
        self.rows.get(b.wrapping_sub(1)).ok_or_else(|| {
            Error::InvalidQ(format!("row b = {b} outside 1..={}", self.rows.len()))
        })
    }

    /// All rows, `b` ascending.
    pub fn rows(&self) -> &[QRow] {
        &self.rows
    }

    /// Drop rows above `m`.
    pub fn truncate(&self, m: usize) -> Result<QArray> {
        if m == 0 || m > self.rows.len() {
            return Err(Error::InvalidQ(format!(
                "truncation {m} outside 1..={}",
                self.rows.len()
            )));
        }
        QArray::new(self.rows[..m].to_vec())
    }
}

/// The jump-chain row at `b` active blocks: every rate divided by `Phi(b)`.
/// Fails with [`Error::ZeroTotalRate`] when `Phi(b) = 0`.
pub fn q_row(model: &XiModel, b: usize) -> Result<QRow> {
    let rates = total_rates(model, b);
    if !rates.total.is_positive() {
        return Err(Error::ZeroTotalRate { b });
    }
    let entries = rates
        .per_type
        .iter()
        .map(|(t, _, weighted)| (t.clone(), weighted / &rates.total))
        .collect();
    QRow::new(b, rates.freeze / &rates.total, entries)
}

/// Jump-chain rows for `b = 1..=n`. Row 1 is freeze-certain by definition
/// (even when `rho = 0`, where the continuous chain has no exit from one
/// active block but the row is still the identity of the recursion).
pub fn q_array(model: &XiModel, n: usize) -> Result<QArray> {
    if n == 0 {
        return Err(Error::InvalidQ("q array needs n >= 1".into()));
    }
    let mut rows = vec![QRow::certain_freeze()];
    for b in 2..=n {
        rows.push(q_row(model, b)?);
    }
    QArray::new(rows)
}

/// Result of checking the rate consistency relation
/// `lambda_{b;k;s} = sum_i lambda_{b+1;k with k_i+1;s}
///                  + s lambda_{b+1;k,2;s-1} + lambda_{b+1;k;s+1}`
/// for every type at every `b` in `2..b_max`.
#[derive(Clone, Debug)]
pub struct ConsistencyReport {
    /// Largest `b` whose rates entered the check.
    pub b_max: usize,
    /// Number of `(b, type)` pairs checked.
    pub checked: usize,
    /// Largest absolute residual (exactly zero for a true model).
    pub max_abs_residual: Rat,
    /// A `(b, type)` attaining the largest residual, if any was nonzero.
    pub worst: Option<(usize, CollisionType)>,
}

/// Check the consistency relation for all types with `2 <= b < b_max`.
pub fn check_rate_consistency(model: &XiModel, b_max: usize) -> ConsistencyReport {
    let mut checked = 0;
    let mut max_abs = Rat::zero();
    let mut worst = None;
    for b in 2..b_max {
        for t in collision_types(b) {
            let lhs = collision_rate(model, &t);
            let mut rhs = Rat::zero();
            for i in 0..t.r() {
                let mut ks = t.ks().to_vec();
                ks[i] += 1;
                let up = CollisionType::new(ks, t.s()).expect("bumped type is valid");
                rhs += collision_rate(model, &up);
            }
            if t.s() >= 1 {
                let mut ks = t.ks().to_vec();
                ks.push(2);
                let up = CollisionType::new(ks, t.s() - 1).expect("extended type is valid");
                rhs += rat_usize(t.s()) * collision_rate(model, &up);
            }
            let up = CollisionType::new(t.ks().to_vec(), t.s() + 1).expect("same type, s+1");
            rhs += collision_rate(model, &up);
            let residual = (lhs - rhs).abs();
            checked += 1;
            if residual > max_abs {
                max_abs = residual;
                worst = Some((b, t));
            }
        }
    }
    ConsistencyReport {
        b_max,
        checked,
        max_abs_residual: max_abs,
        worst,
    }
}

/// The ratio `Phi(b) / Phi(b+1)` read off the row at `b + 1` active blocks:
/// `1 - q(b+1:1)/(b+1) - 2 q(b+1:{2}; b-1)/(b+1)`.
fn phi_ratio(upper: &QRow) -> Result<Rat> {
    let b = upper.b() - 1;
    let pair = CollisionType::new(vec![2], b - 1).expect("pair type");
    let bp1 = rat_usize(b + 1);
    Ok(Rat::one() - upper.q_freeze() / &bp1 - rat_usize(2) * upper.get(&pair) / &bp1)
}

/// Rebuild the rows at `1..b` active blocks from the row at `b` alone, using
/// the consistency relation in reverse. The result includes the input row.
///
/// Fails when the input row is not consistent with any coalescent model
/// (a reconstructed entry goes negative, a row stops summing to one, or a
/// ratio `Phi(b)/Phi(b+1)` is non-positive, which for a true row happens
/// only at `b = 1` with `q(2:1) = 0`).
pub fn backward_q(top: &QRow) -> Result<QArray> {
    let n = top.b();
    let mut rows: Vec<QRow> = vec![top.clone()];
    for b in (1..n).rev() {
        let upper = rows.last().expect("nonempty");
        let ratio = phi_ratio(upper)?;
        if !ratio.is_positive() {
            return Err(if b == 1 {
                Error::NoFreezing
            } else {
                Error::InvalidQ(format!(
                    "Phi({b})/Phi({}) = {ratio} is not positive",
                    b + 1
                ))
            });
        }
        let bp1 = rat_usize(b + 1);
        let q_freeze = rat_usize(b) / &bp1 * upper.q_freeze() / &ratio;
        let mut entries = Vec::new();
        for t in collision_types(b) {
            let mut acc = Rat::zero();
            // One merge group grows by one block.
            let mut seen = std::collections::BTreeSet::new();
            for &j in t.ks() {
                if !seen.insert(j) {
                    continue;
                }
                let mut ks = t.ks().to_vec();
                let pos = ks.iter().position(|&k| k == j).expect("present");
                ks[pos] += 1;
                let up = CollisionType::new(ks, t.s()).expect("bumped type");
                let coeff = rat_usize(j + 1) * rat_usize(t.multiplicity(j + 1) + 1) / &bp1;
                acc += coeff * upper.get(&up);
            }
            // A new pair forms among the untouched blocks.
            if t.s() >= 1 {
                let mut ks = t.ks().to_vec();
                ks.push(2);
                let up = CollisionType::new(ks, t.s() - 1).expect("extended type");
                let coeff = rat_usize(2) * rat_usize(t.multiplicity(2) + 1) / &bp1;
                acc += coeff * upper.get(&up);
            }
            // The extra block is untouched.
            let up = CollisionType::new(t.ks().to_vec(), t.s() + 1).expect("same type, s+1");
            acc += rat_usize(t.s() + 1) / &bp1 * upper.get(&up);
            entries.push((t, acc / &ratio));
        }
        rows.push(QRow::new(b, q_freeze, entries)?);
    }
    rows.reverse();
    QArray::new(rows)
}

/// A table of exact collision rates `lambda_{b; k; s}` for `2 <= b <= n`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    rates: BTreeMap<(usize, CollisionType), Rat>,
}

impl RateTable {
    /// The rate of one collision of type `t` at `b = t.b()` active blocks.
    pub fn get(&self, t: &CollisionType) -> Rat {
        self.rates
            .get(&(t.b(), t.clone()))
            .cloned()
            .unwrap_or_else(Rat::zero)
    }

    /// All `(b, type, rate)` entries, `b` ascending then type order.
    pub fn iter(&self) -> impl Iterator<Item = (&(usize, CollisionType), &Rat)> {
        self.rates.iter()
    }

    fn insert(&mut self, t: CollisionType, rate: Rat) {
        self.rates.insert((t.b(), t), rate);
    }
}

/// Rates and totals recovered from a q array by [`recover_rates`].
#[derive(Clone, Debug)]
pub struct RecoveredRates {
    /// Collision rates for every type with `2 <= b <= n`.
    pub rates: RateTable,
    /// Freeze rate `rho` (equals the given `Phi(1)`).
    pub freeze_rate: Rat,
    /// Total rates `Phi(1), ..., Phi(n)`.
    pub totals: Vec<Rat>,
}

/// Reconstruct all collision rates from the jump-chain rows, given the one
/// free scale `Phi(1) = rho > 0`.
///
/// `Phi` grows by `Phi(b+1) = Phi(b) / ratio(b)` with the ratio read off row
/// `b+1`; rates follow from `lambda = q Phi / d`. Requires `q(2:1) > 0` when
/// `n >= 2` (otherwise the scale cannot propagate: no freezing) and checks
/// that `Phi(b) q(b:1) / b` is the same `rho` for every row (exact row
/// consistency), failing loudly otherwise.
pub fn recover_rates(q: &QArray, phi_1: &Rat) -> Result<RecoveredRates> {
    if !phi_1.is_positive() {
        return Err(Error::InvalidModel("Phi(1) must be > 0".into()));
    }
    let n = q.n();
    if n >= 2 && q.row(2)?.q_freeze().is_zero() {
        return Err(Error::NoFreezing);
    }
    let rho = phi_1.clone();
    let mut totals = vec![phi_1.clone()];
    for b in 1..n {
        let ratio = phi_ratio(q.row(b + 1)?)?;
        if !ratio.is_positive() {
            return Err(Error::InvalidQ(format!(
                "Phi({b})/Phi({}) = {ratio} is not positive",
                b + 1
            )));
        }
        let next = totals[b - 1].clone() / ratio;
        totals.push(next);
    }
    let mut rates = RateTable {
        rates: BTreeMap::new(),
    };
    for b in 1..=n {
        let row = q.row(b)?;
        let implied_rho = &totals[b - 1] * row.q_freeze() / rat_usize(b);
        if implied_rho != rho {
            return Err(Error::InvalidQ(format!(
                "rows are not mutually consistent: row {b} implies rho = {implied_rho}, row 1 implies {rho}"
            )));
        }
        for (t, qv) in row.entries() {
            let lambda = qv * &totals[b - 1] / Rat::from_integer(collision_count(t));
            rates.insert(t.clone(), lambda);
        }
    }
    Ok(RecoveredRates {
        rates,
        freeze_rate: rho,
        totals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_int};

    fn kingman_half() -> XiModel {
        XiModel::kingman(rat_int(1), rat(1, 2)).unwrap()
    }

    /// Single atom at (1/2, 1/4), weight 1, no Kingman part, rho = 1/2.
    fn atom_model() -> XiModel {
        let p = SimplexPoint::new(vec![rat(1, 2), rat(1, 4)]).unwrap();
        XiModel::new(Rat::zero(), vec![(rat_int(1), p)], None, rat(1, 2)).unwrap()
    }

    /// Two atoms plus Kingman mass 1/4, rho = 1/3.
    fn two_atom_model() -> XiModel {
        let p1 = SimplexPoint::new(vec![rat(1, 2), rat(1, 4)]).unwrap();
        let p2 = SimplexPoint::new(vec![rat(2, 3), rat(1, 5)]).unwrap();
        XiModel::new(
            rat(1, 4),
            vec![(rat(1, 2), p1), (rat(1, 3), p2)],
            None,
            rat(1, 3),
        )
        .unwrap()
    }

    /// Bolthausen–Sznitman: Beta(1,1) = uniform density, mass 1, rho = 1.
    fn bs_model() -> XiModel {
        XiModel::new(
            Rat::zero(),
            Vec::new(),
            Some(BetaPart {
                alpha: 1,
                beta: 1,
                mass: rat_int(1),
            }),
            rat_int(1),
        )
        .unwrap()
    }

    #[test]
    fn simplex_point_validation() {
        assert!(SimplexPoint::new(vec![rat(1, 2), rat(1, 4), Rat::zero()]).is_ok());
        assert!(SimplexPoint::new(vec![Rat::zero()]).is_err());
        assert!(SimplexPoint::new(vec![rat(1, 4), rat(1, 2)]).is_err()); // increasing
        assert!(SimplexPoint::new(vec![rat(3, 4), rat(1, 2)]).is_err()); // sum > 1
        assert!(SimplexPoint::new(vec![rat(1, 2), rat(-1, 4)]).is_err());
        let p = SimplexPoint::new(vec![rat(1, 2), rat(1, 2)]).unwrap();
        assert_eq!(p.coord_sum(), rat_int(1));
    }

    #[test]
    fn model_validation() {
        assert!(XiModel::new(Rat::zero(), Vec::new(), None, rat(1, 2)).is_err()); // no mass
        assert!(XiModel::kingman(rat_int(-1), Rat::zero()).is_err());
        assert!(XiModel::kingman(rat_int(1), rat_int(-1)).is_err());
        // rho = 0 with positive mass is a valid model (no absorption though).
        assert!(XiModel::kingman(rat_int(1), Rat::zero()).is_ok());
    }

    #[test]
    fn kingman_rates() {
        let m = kingman_half();
        // Only pair collisions have positive rate.
        let pair3 = CollisionType::new(vec![2], 1).unwrap();
        assert_eq!(collision_rate(&m, &pair3), rat_int(1));
        let triple = CollisionType::new(vec![3], 0).unwrap();
        assert_eq!(collision_rate(&m, &triple), Rat::zero());
        let double_pair = CollisionType::new(vec![2, 2], 0).unwrap();
        assert_eq!(collision_rate(&m, &double_pair), Rat::zero());
        // Frozen oracle: at b = 3, freeze total 3/2, pair total 3, Phi = 9/2.
        let tr = total_rates(&m, 3);
        assert_eq!(tr.freeze, rat(3, 2));
        assert_eq!(tr.total, rat(9, 2));
        let (t, lambda, weighted) = &tr.per_type[0];
        assert_eq!(t, &pair3);
        assert_eq!(lambda, &rat_int(1));
        assert_eq!(weighted, &rat_int(3));
    }

    #[test]
    fn atom_rate_examples() {
        // Frozen oracle values, derived by hand from the integral formula
        // at the point (1/2, 1/4): sum of squares 5/16.
        let m = atom_model();
        assert_eq!(
            collision_rate(&m, &CollisionType::new(vec![2], 1).unwrap()),
            rat(11, 20)
        );
        assert_eq!(
            collision_rate(&m, &CollisionType::new(vec![2, 2], 0).unwrap()),
            rat(1, 10)
        );
        // Three or more groups need three positive coordinates: rate 0.
        assert_eq!(
            collision_rate(&m, &CollisionType::new(vec![2, 2, 2], 0).unwrap()),
            Rat::zero()
        );
    }

    #[test]
    fn beta_rate_examples() {
        let m = bs_model();
        // Frozen oracle: B(1,3)/B(1,1) = 1/3 for (b;k;s) = (4;{2};2).
        assert_eq!(
            collision_rate(&m, &CollisionType::new(vec![2], 2).unwrap()),
            rat(1, 3)
        );
        // No simultaneous collisions from a Lambda part.
        assert_eq!(
            collision_rate(&m, &CollisionType::new(vec![2, 2], 0).unwrap()),
            Rat::zero()
        );
        // Bolthausen–Sznitman closed form: lambda_{b;k;s} =
        // (k-2)! (b-k)! / (b-1)!.
        for b in 2..=6usize {
            for k in 2..=b {
                let t = CollisionType::new(vec![k], b - k).unwrap();
                let expect = Rat::new(
                    factorial(k - 2) * factorial(b - k),
                    factorial(b - 1),
                );
                assert_eq!(collision_rate(&m, &t), expect, "b={b} k={k}");
            }
        }
    }

    #[test]
    fn embedded_lambda_atom_rates() {
        // Lambda = delta_{1/2}: lambda_{b;{k};b-k} = 2^{2-b} for all k.
        let m = XiModel::embed_lambda(&[(rat_int(1), rat(1, 2))], rat(1, 2)).unwrap();
        for b in 2..=7usize {
            for k in 2..=b {
                let t = CollisionType::new(vec![k], b - k).unwrap();
                assert_eq!(
                    collision_rate(&m, &t),
                    rat_pow(&rat(1, 2), b - 2),
                    "b={b} k={k}"
                );
            }
        }
        // Lambda = delta_1: total merge has rate 1, partial merges rate 0.
        let m1 = XiModel::embed_lambda(&[(rat_int(1), rat_int(1))], rat(1, 2)).unwrap();
        for b in 2..=6usize {
            for k in 2..=b {
                let t = CollisionType::new(vec![k], b - k).unwrap();
                let expect = if k == b { rat_int(1) } else { Rat::zero() };
                assert_eq!(collision_rate(&m1, &t), expect, "b={b} k={k}");
            }
        }
    }

    #[test]
    fn rate_consistency_exact_for_all_models() {
        for (name, m) in [
            ("kingman", kingman_half()),
            ("atom", atom_model()),
            ("two_atom", two_atom_model()),
            ("bs", bs_model()),
        ] {
            let rep = check_rate_consistency(&m, 8);
            assert!(rep.checked > 0);
            assert!(
                rep.max_abs_residual.is_zero(),
                "{name}: residual {} at {:?}",
                rep.max_abs_residual,
                rep.worst
            );
        }
    }

    #[test]
    fn q_rows_normalize_and_match_hand_values() {
        let m = kingman_half();
        // Frozen oracle: q(3:1) = 1/3, q(3:{2};1) = 2/3.
        let row = q_row(&m, 3).unwrap();
        assert_eq!(row.q_freeze(), &rat(1, 3));
        assert_eq!(row.get(&CollisionType::new(vec![2], 1).unwrap()), rat(2, 3));
        // Kingman with rho: q(b:1) = 2 rho / (2 rho + a (b-1)).
        for b in 1..=8usize {
            let row = q_row(&m, b).unwrap();
            let expect = rat_int(1) / (rat_int(1) + rat_usize(b - 1));
            assert_eq!(row.q_freeze(), &expect, "b={b}");
        }
        // Rows sum to one for every model, b <= 8 (QRow::new enforces it;
        // this exercises construction across models).
        for m in [atom_model(), two_atom_model(), bs_model()] {
            let q = q_array(&m, 8).unwrap();
            assert_eq!(q.n(), 8);
            assert_eq!(q.row(1).unwrap().q_freeze(), &rat_int(1));
        }
    }

    #[test]
    fn q_row_degenerate_total() {
        // rho = 0 leaves Phi(1) = 0: row 1 is undefined as a ratio.
        let m = XiModel::kingman(rat_int(1), Rat::zero()).unwrap();
        assert!(matches!(q_row(&m, 1), Err(Error::ZeroTotalRate { b: 1 })));
        // But the array still exists (row 1 is freeze-certain by definition).
        let q = q_array(&m, 4).unwrap();
        assert_eq!(q.row(2).unwrap().q_freeze(), &Rat::zero());
    }

    #[test]
    fn qrow_validation_rejects_bad_rows() {
        let pair = CollisionType::new(vec![2], 0).unwrap();
        // Sum != 1.
        assert!(QRow::new(2, rat(1, 2), vec![(pair.clone(), rat(1, 3))]).is_err());
        // Negative entry.
        assert!(QRow::new(2, rat(3, 2), vec![(pair.clone(), rat(-1, 2))]).is_err());
        // Wrong b on the type.
        let pair3 = CollisionType::new(vec![2], 1).unwrap();
        assert!(QRow::new(2, rat(1, 2), vec![(pair3, rat(1, 2))]).is_err());
        // Duplicate type.
        assert!(QRow::new(
            2,
            Rat::zero(),
            vec![(pair.clone(), rat(1, 2)), (pair, rat(1, 2))]
        )
        .is_err());
    }

    #[test]
    fn backward_reconstruction_round_trip() {
        for (name, m) in [
            ("kingman", kingman_half()),
            ("atom", atom_model()),
            ("two_atom", two_atom_model()),
            ("bs", bs_model()),
        ] {
            let q = q_array(&m, 8).unwrap();
            let rebuilt = backward_q(q.row(8).unwrap()).unwrap();
            assert_eq!(&rebuilt, &q, "{name}");
        }
    }

    #[test]
    fn backward_hand_value() {
        // Frozen oracle: Kingman rho = 1/2 from b = 3 gives q(2:1) = 1/2.
        let m = kingman_half();
        let row3 = q_row(&m, 3).unwrap();
        let rebuilt = backward_q(&row3).unwrap();
        assert_eq!(rebuilt.row(2).unwrap().q_freeze(), &rat(1, 2));
    }

    #[test]
    fn backward_no_freezing() {
        // Pure coalescent (rho = 0): reconstruction stops at b = 1.
        let m = XiModel::kingman(rat_int(1), Rat::zero()).unwrap();
        let q = q_array(&m, 3).unwrap();
        assert!(matches!(
            backward_q(q.row(3).unwrap()),
            Err(Error::NoFreezing)
        ));
    }

    #[test]
    fn recover_rates_round_trip() {
        for (name, m) in [
            ("kingman", kingman_half()),
            ("atom", atom_model()),
            ("two_atom", two_atom_model()),
            ("bs", bs_model()),
        ] {
            let q = q_array(&m, 7).unwrap();
            // Exact recovery with the true scale.
            let rec = recover_rates(&q, m.freeze_rate()).unwrap();
            assert_eq!(&rec.freeze_rate, m.freeze_rate(), "{name}");
            for b in 2..=7 {
                assert_eq!(rec.totals[b - 1], total_rates(&m, b).total, "{name} b={b}");
                for t in collision_types(b) {
                    assert_eq!(rec.rates.get(&t), collision_rate(&m, &t), "{name} {t}");
                }
            }
            // With a different scale everything is multiplied by one factor.
            let scaled = recover_rates(&q, &rat_int(3)).unwrap();
            let factor = rat_int(3) / m.freeze_rate();
            for t in collision_types(5) {
                assert_eq!(
                    scaled.rates.get(&t),
                    collision_rate(&m, &t) * &factor,
                    "{name} {t}"
                );
            }
        }
    }

    #[test]
    fn recover_rates_requires_freezing_and_consistency() {
        let m = XiModel::kingman(rat_int(1), Rat::zero()).unwrap();
        let q = q_array(&m, 3).unwrap();
        assert!(matches!(
            recover_rates(&q, &rat_int(1)),
            Err(Error::NoFreezing)
        ));
        // Pure freeze (q(2:1) = 1) is fine: zero collision rates.
        let pure = QArray::new(vec![
            QRow::certain_freeze(),
            QRow::new(2, rat_int(1), vec![]).unwrap(),
        ])
        .unwrap();
        let rec = recover_rates(&pure, &rat(1, 2)).unwrap();
        assert_eq!(
            rec.rates.get(&CollisionType::new(vec![2], 0).unwrap()),
            Rat::zero()
        );
        // Mismatched rows are rejected: splicing a row from a model with a
        // different rho-to-Phi relationship breaks the per-row rho check.
        // (The atom model would *not* do: it has lambda(2;{2};0) = 2 rho,
        // exactly like the Kingman model, so its rows splice consistently.)
        let a = q_array(&kingman_half(), 3).unwrap();
        let b = q_array(&two_atom_model(), 3).unwrap();
        let spliced = QArray::new(vec![
            a.row(1).unwrap().clone(),
            a.row(2).unwrap().clone(),
            b.row(3).unwrap().clone(),
        ])
        .unwrap();
        assert!(recover_rates(&spliced, &rat(1, 2)).is_err());
    }
}
