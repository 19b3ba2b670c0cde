//! The exchangeable partition probability function (EPPF) of the absorbed
//! coalescent, its structural checks, and the inverse map back to q rows.
//!
//! Restricting the absorbed partition to `{1..m}` gives an exchangeable
//! partition of `{1..m}` whose law is a symmetric function `p` of block
//! sizes. Conditioning on the first event of the jump chain started from `m`
//! active singletons yields the recursion (of the Möhle type)
//!
//! ```text
//! p(n_1..n_l) = q(m:1)/m * sum_{i: n_i = 1} p(..n_i removed..)
//!   + sum_types q(m: k; s) * sum_{assignments h in H_k(n_1..n_l)}
//!       [ prod_i d(n_i; h_i; n_i - sum h_i) / d(m; k; s) ] * p(..reduced..)
//! ```
//!
//! with `p(1) = 1`, where an assignment distributes the merge-group sizes
//! over the parts (each size used exactly once) and the reduced part is
//! `n_i - sum h_i + |h_i|`. [`solve_moehle`] evaluates the recursion bottom
//! up; [`check_addition_rule`] verifies the marginal-consistency identity
//! that characterizes EPPFs; [`ewens_eppf`] is the closed form reached by
//! Kingman-with-freeze models; [`invert_p_to_q`] solves the same recursion
//! for the row `q(n: ...)` given the EPPF, processing the types of a row in
//! an order that makes the system triangular with positive pivots.

use std::collections::BTreeMap;

use num::{One, Signed, Zero};

use crate::combinatorics::{
    assignments, collision_count, collision_types, shape_multiplicity, CollisionType, Composition,
    IntegerPartition,
};
use crate::measures::{QArray, QRow};
use crate::rational::{rat_usize, Rat};
use crate::{Error, Result};

/// Exact EPPF values for every shape of every total size `1..=n`.
#[derive(Clone, Debug, PartialEq)]
pub struct EppfTable {
    n: usize,
    values: BTreeMap<IntegerPartition, Rat>,
}

impl EppfTable {
    /// Build a table from explicit values; every shape of every size up to
    /// `n` must be present.
    pub fn new(n: usize, values: BTreeMap<IntegerPartition, Rat>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidEppf("table needs n >= 1".into()));
        }
        for m in 1..=n {
            for shape in crate::combinatorics::integer_partitions(m) {
                if !values.contains_key(&shape) {
                    return Err(Error::InvalidEppf(format!("missing shape {shape}")));
                }
            }
        }
        Ok(EppfTable { n, values })
    }

    /// Largest total size covered.
    pub fn n(&self) -> usize {
        self.n
    }

    /// The EPPF at a shape, if the shape's total size is covered.
    pub fn get(&self, shape: &IntegerPartition) -> Option<&Rat> {
        self.values.get(shape)
    }

    /// The EPPF at a shape; errors when the size is not covered.
    pub fn prob(&self, shape: &IntegerPartition) -> Result<Rat> {
        self.get(shape).cloned().ok_or_else(|| {
            Error::InvalidEppf(format!("shape {shape} outside table (n = {})", self.n))
        })
    }

    /// Probability that the partition restricted to its total size has this
    /// shape: `multiplicity * p(shape)`.
    pub fn shape_probability(&self, shape: &IntegerPartition) -> Result<Rat> {
        Ok(Rat::from_integer(shape_multiplicity(shape)) * self.prob(shape)?)
    }

    /// All `(shape, value)` pairs, sizes ascending, shapes in order.
    pub fn iter(&self) -> impl Iterator<Item = (&IntegerPartition, &Rat)> {
        self.values.iter()
    }
}

/// The collision part of the recursion: for a shape and a collision type,
/// every `(reduced shape, prod_i d(n_i; h_i; .) / d(m; k; s))` pair over the
/// assignments of the type's merge-group sizes to the shape's parts.
fn collision_terms(shape: &IntegerPartition, t: &CollisionType) -> Vec<(IntegerPartition, Rat)> {
    let comp = Composition::from(shape);
    let asgs = match assignments(t.ks(), &comp) {
        Ok(a) => a,
        Err(_) => Vec::new(),
    };
    let d_total = Rat::from_integer(collision_count(t));
    let mut out = Vec::new();
    for a in asgs {
        let mut coeff = Rat::one();
        let mut reduced: Vec<usize> = Vec::with_capacity(comp.len());
        for (i, group) in a.groups().iter().enumerate() {
            let n_i = comp.parts()[i];
            if group.is_empty() {
                reduced.push(n_i);
                continue;
            }
            let merged: usize = group.iter().sum();
            let inner = CollisionType::new(group.clone(), n_i - merged)
                .expect("group sizes are >= 2");
            coeff *= Rat::from_integer(collision_count(&inner));
            reduced.push(n_i - merged + group.len());
        }
        out.push((
            IntegerPartition::new(reduced).expect("reduced parts are positive"),
            coeff / &d_total,
        ));
    }
    out
}

/// Evaluate the right-hand side of the recursion at `shape` (a shape of
/// total size `row.b()`), reading lower-size values from `lookup`.
fn recursion_rhs(
    row: &QRow,
    shape: &IntegerPartition,
    lookup: &dyn Fn(&IntegerPartition) -> Result<Rat>,
) -> Result<Rat> {
    let m = row.b();
    debug_assert_eq!(shape.n(), m);
    let mut total = Rat::zero();
    let ones = shape.multiplicity(1);
    if ones > 0 && !row.q_freeze().is_zero() {
        let mut parts = shape.parts().to_vec();
        let pos = parts.iter().rposition(|&p| p == 1).expect("has a one");
        parts.remove(pos);
        let reduced = IntegerPartition::new(parts)?;
        total += row.q_freeze() / rat_usize(m) * rat_usize(ones) * lookup(&reduced)?;
    }
    for (t, qv) in row.entries() {
        if qv.is_zero() {
            continue;
        }
        for (reduced, coeff) in collision_terms(shape, t) {
            total += qv * coeff * lookup(&reduced)?;
        }
    }
    Ok(total)
}

/// Solve the recursion bottom-up for every shape of every size `1..=q.n()`.
///
/// Requires `q(2:1) > 0` when `n >= 2`: with no freezing the absorbed
/// partition law is degenerate and not an EPPF of interest here.
pub fn solve_moehle(q: &QArray) -> Result<EppfTable> {
    let n = q.n();
    if n >= 2 && q.row(2)?.q_freeze().is_zero() {
        return Err(Error::NoFreezing);
    }
    let mut values: BTreeMap<IntegerPartition, Rat> = BTreeMap::new();
    values.insert(IntegerPartition::ones(1)?, Rat::one());
    for m in 2..=n {
        let row = q.row(m)?;
        for shape in crate::combinatorics::integer_partitions(m) {
            let val = recursion_rhs(row, &shape, &|s| {
                values
                    .get(s)
                    .cloned()
                    .ok_or_else(|| Error::InvalidEppf(format!("missing lower value {s}")))
            })?;
            values.insert(shape, val);
        }
    }
    EppfTable::new(n, values)
}

/// One step of the recursion applied to an existing table at size
/// `n = row.b()`: the image EPPF values for every shape of size `n`.
///
/// This is the exact law of a sequential-addition step: a stationary table
/// satisfies `image == table` at size `n`. Requires `table.n() >= n - 1`.
pub fn moehle_image(
    row: &QRow,
    table: &EppfTable,
) -> Result<BTreeMap<IntegerPartition, Rat>> {
    let n = row.b();
    if n >= 2 && table.n() < n - 1 {
        return Err(Error::InvalidEppf(format!(
            "table covers sizes up to {}, need {}",
            table.n(),
            n - 1
        )));
    }
    let mut out = BTreeMap::new();
    for shape in crate::combinatorics::integer_partitions(n) {
        let val = if n == 1 {
            Rat::one()
        } else {
            recursion_rhs(row, &shape, &|s| table.prob(s))?
        };
        out.insert(shape, val);
    }
    Ok(out)
}

/// Result of checking the addition rule and per-size normalization.
#[derive(Clone, Debug)]
pub struct AdditionReport {
    /// Number of identities checked.
    pub checked: usize,
    /// Largest absolute residual (exactly zero for a consistent table).
    pub max_abs_residual: Rat,
    /// Description of the identity attaining the worst residual, if nonzero.
    pub worst: Option<String>,
}

/// Check, for every shape of every size `m < n`, the addition rule
/// `p(shape) = p(shape + new part 1) + sum_j mult_j p(shape with one j -> j+1)`,
/// and for every size `m <= n` the normalization
/// `sum_shapes multiplicity * p = 1`.
pub fn check_addition_rule(table: &EppfTable) -> Result<AdditionReport> {
    let mut checked = 0;
    let mut max_abs = Rat::zero();
    let mut worst = None;
    let note = |residual: Rat, desc: String, max_abs: &mut Rat, worst: &mut Option<String>| {
        if residual > *max_abs {
            *max_abs = residual;
            *worst = Some(desc);
        }
    };
    for m in 1..=table.n() {
        let mut norm = Rat::zero();
        for shape in crate::combinatorics::integer_partitions(m) {
            norm += table.shape_probability(&shape)?;
            if m < table.n() {
                let mut rhs = Rat::zero();
                let mut with_one = shape.parts().to_vec();
                with_one.push(1);
                rhs += table.prob(&IntegerPartition::new(with_one)?)?;
                for (&j, &mult) in shape.multiplicities().iter() {
                    let mut parts = shape.parts().to_vec();
                    let pos = parts.iter().position(|&p| p == j).expect("present");
                    parts[pos] = j + 1;
                    rhs += rat_usize(mult) * table.prob(&IntegerPartition::new(parts)?)?;
                }
                let residual = (table.prob(&shape)? - rhs).abs();
                checked += 1;
                note(
                    residual,
                    format!("addition rule at {shape}"),
                    &mut max_abs,
                    &mut worst,
                );
            }
        }
        let residual = (norm - Rat::one()).abs();
        checked += 1;
        note(
            residual,
            format!("normalization at size {m}"),
            &mut max_abs,
            &mut worst,
        );
    }
    Ok(AdditionReport {
        checked,
        max_abs_residual: max_abs,
        worst,
    })
}

/// The Ewens EPPF with parameter `theta > 0`:
/// `p(n_1..n_l) = theta^l prod_i (n_i - 1)! / (theta (theta+1) ... (theta+n-1))`.
pub fn ewens_eppf(theta: &Rat, shape: &IntegerPartition) -> Result<Rat> {
    if !theta.is_positive() {
        return Err(Error::InvalidEppf("Ewens parameter must be > 0".into()));
    }
    let mut numer = Rat::one();
    for &p in shape.parts() {
        numer *= Rat::from_integer(crate::combinatorics::factorial(p - 1));
        numer *= theta;
    }
    let mut denom = Rat::one();
    for i in 0..shape.n() {
        denom *= theta + rat_usize(i);
    }
    Ok(numer / denom)
}

/// The full Ewens table for sizes `1..=n`.
pub fn ewens_table(theta: &Rat, n: usize) -> Result<EppfTable> {
    let mut values = BTreeMap::new();
    for m in 1..=n {
        for shape in crate::combinatorics::integer_partitions(m) {
            let v = ewens_eppf(theta, &shape)?;
            values.insert(shape, v);
        }
    }
    EppfTable::new(n, values)
}

/// Reconstruct the row `q(n: ...)` from an EPPF table covering sizes `<= n`.
///
/// `q(n:1) = p(1^n) / p(1^{n-1})`; each collision type is then solved from
/// the recursion evaluated at the composition `(k_1..k_r, 1^s)`, visiting
/// types by ascending merged mass and descending group count so that every
/// equal-mass contributor is already known (it must strictly refine the
/// target) and the pivot is `p(1^{r+s}) / d(n;k;s) > 0`.
///
/// Fails loudly when the table is not the EPPF of any coalescent with
/// freeze: `p(1^n) = 0` (no freezing), a negative solved entry, a zero
/// pivot, or a row that does not sum to one.
pub fn invert_p_to_q(table: &EppfTable, n: usize) -> Result<QRow> {
    if n == 0 || n > table.n() {
        return Err(Error::InvalidEppf(format!(
            "row size {n} outside table (n = {})",
            table.n()
        )));
    }
    if n == 1 {
        return Ok(QRow::certain_freeze());
    }
    let ones_n = table.prob(&IntegerPartition::ones(n)?)?;
    let ones_n1 = table.prob(&IntegerPartition::ones(n - 1)?)?;
    if ones_n.is_zero() {
        return Err(Error::NoFreezing);
    }
    if ones_n1.is_zero() {
        return Err(Error::InvalidEppf(format!(
            "p(1^{}) = 0 but p(1^{n}) > 0: not an EPPF of a coalescent",
            n - 1
        )));
    }
    let q_freeze = ones_n / &ones_n1;

    let mut order = collision_types(n);
    order.sort_by(|a, b| {
        (a.sum_ks(), std::cmp::Reverse(a.r()), a.ks().to_vec())
            .cmp(&(b.sum_ks(), std::cmp::Reverse(b.r()), b.ks().to_vec()))
    });
    let mut solved: Vec<(CollisionType, Rat)> = Vec::new();
    for t in order {
        // The recursion at the composition (k_1..k_r, 1^s).
        let mut parts = t.ks().to_vec();
        parts.extend(std::iter::repeat(1).take(t.s()));
        let target = IntegerPartition::new(parts)?;
        let mut rhs = table.prob(&target)?;
        // Freeze term.
        if t.s() >= 1 {
            let mut parts = t.ks().to_vec();
            parts.extend(std::iter::repeat(1).take(t.s() - 1));
            let reduced = IntegerPartition::new(parts)?;
            rhs -= &q_freeze / rat_usize(n) * rat_usize(t.s()) * table.prob(&reduced)?;
        }
        // Contributions of already-solved types.
        for (u, qu) in &solved {
            if qu.is_zero() {
                continue;
            }
            for (reduced, coeff) in collision_terms(&target, u) {
                rhs -= qu * coeff * table.prob(&reduced)?;
            }
        }
        // Pivot: the coefficient of q(n: t) itself.
        let mut pivot = Rat::zero();
        for (reduced, coeff) in collision_terms(&target, &t) {
            pivot += coeff * table.prob(&reduced)?;
        }
        if pivot.is_zero() {
            return Err(Error::InvalidEppf(format!("zero pivot solving for {t}")));
        }
        let qv = rhs / pivot;
        if qv.is_negative() {
            return Err(Error::InvalidEppf(format!(
                "negative probability {qv} solving for {t}"
            )));
        }
        solved.push((t, qv));
    }
    QRow::new(n, q_freeze, solved)
}
