//! Subcommand implementations.
//!
//! Every command loads a model file, computes its table with the exact core
//! routines, and emits records via [`crate::output`]. Exit codes: `0` on
//! success, `1` when `verify` finds a failing check, `2` on input or
//! operational errors (the clap convention for usage errors).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::ValueEnum;
use serde::Serialize;

use xifreeze_core::chains::{
    chi_square_vs_exact, exact_fm_absorption, sa_occupancy, sa_transition_matrix, sample_continuous,
    sample_fm, stationary_distribution, tv_distance_to_exact, EmpiricalEppf,
};
use xifreeze_core::combinatorics::{integer_partitions, CollisionType, SetPartition};
use xifreeze_core::eppf::{
    check_addition_rule, ewens_table, invert_p_to_q, moehle_image, solve_moehle, EppfTable,
};
use xifreeze_core::measures::{
    backward_q, check_rate_consistency, collision_rate, q_array, recover_rates, total_rates,
    QArray, QRow, XiModel,
};
use xifreeze_core::rational::{rat, rat_int, rat_to_f64, render_rat, Signed, Zero};
use xifreeze_core::Caps;

use crate::model::load_model;
use crate::output::{emit_records, Format};

/// Global output options shared by the subcommands.
pub struct Ctx {
    /// Table format.
    pub format: Format,
    /// Table destination (`None` = standard output).
    pub out: Option<PathBuf>,
}

impl Ctx {
    fn emit<T: Serialize>(&self, records: &[T]) -> anyhow::Result<()> {
        emit_records(records, self.format, self.out.as_deref())
    }
}

/// Which chain `simulate` runs.
#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// The freeze-merge jump chain, run to absorption.
    Fm,
    /// The continuous-time coalescent, run to absorption.
    Continuous,
    /// The single-row ball chain (`samples` = number of steps).
    Sa,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Fm => "fm",
            Mode::Continuous => "continuous",
            Mode::Sa => "sa",
        }
    }
}

/// Enumeration caps, overridable through `XIFREEZE_MAX_N`.
fn caps_from_env() -> anyhow::Result<Caps> {
    match std::env::var("XIFREEZE_MAX_N") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .with_context(|| format!("XIFREEZE_MAX_N must be a positive integer, got {v:?}"))?;
            if n == 0 {
                bail!("XIFREEZE_MAX_N must be >= 1");
            }
            Ok(Caps {
                bell_enumeration: n,
                sa_matrix: n,
                fm_oracle: n,
            })
        }
        Err(_) => Ok(Caps::default()),
    }
}

#[derive(Serialize)]
struct RateRecord {
    b: usize,
    #[serde(rename = "type")]
    kind: String,
    rate: String,
    weighted: String,
}

#[derive(Serialize)]
struct QRecord {
    b: usize,
    #[serde(rename = "type")]
    kind: String,
    q: String,
}

#[derive(Serialize)]
struct EppfRecord {
    shape: String,
    p_exact: String,
    p_decimal: f64,
}

#[derive(Serialize)]
struct SimulateRecord {
    shape: String,
    count: u64,
    frequency: f64,
    eppf_estimate: f64,
    std_error: f64,
    p_shape_exact: String,
}

#[derive(Serialize)]
struct CheckRecord {
    check: String,
    ok: bool,
    detail: String,
}

fn require_positive(name: &str, value: usize) -> anyhow::Result<()> {
    if value == 0 {
        bail!("--{name} must be >= 1");
    }
    Ok(())
}

/// `rates`: exact freeze and collision rates for `1..=n_max` blocks.
pub fn cmd_rates(ctx: &Ctx, model_path: &Path, n_max: usize) -> anyhow::Result<ExitCode> {
    require_positive("n-max", n_max)?;
    let model = load_model(model_path)?;
    let mut rows = Vec::new();
    for b in 1..=n_max {
        let totals = total_rates(&model, b);
        rows.push(RateRecord {
            b,
            kind: "freeze".into(),
            rate: render_rat(model.freeze_rate()),
            weighted: render_rat(&totals.freeze),
        });
        for (t, rate, weighted) in &totals.per_type {
            rows.push(RateRecord {
                b,
                kind: t.to_string(),
                rate: render_rat(rate),
                weighted: render_rat(weighted),
            });
        }
        rows.push(RateRecord {
            b,
            kind: "total".into(),
            rate: String::new(),
            weighted: render_rat(&totals.total),
        });
    }
    ctx.emit(&rows)?;
    Ok(ExitCode::SUCCESS)
}

fn q_row_records(row: &QRow) -> Vec<QRecord> {
    let mut rows = vec![QRecord {
        b: row.b(),
        kind: "freeze".into(),
        q: render_rat(row.q_freeze()),
    }];
    for (t, v) in row.entries() {
        rows.push(QRecord {
            b: row.b(),
            kind: t.to_string(),
            q: render_rat(v),
        });
    }
    rows
}

/// `qrows`: exact jump-chain transition rows for `1..=n_max` blocks.
pub fn cmd_qrows(ctx: &Ctx, model_path: &Path, n_max: usize) -> anyhow::Result<ExitCode> {
    require_positive("n-max", n_max)?;
    let model = load_model(model_path)?;
    let q = q_array(&model, n_max)?;
    let rows: Vec<QRecord> = q.rows().iter().flat_map(q_row_records).collect();
    ctx.emit(&rows)?;
    Ok(ExitCode::SUCCESS)
}

/// `eppf`: exact partition probabilities for every shape of every size up
/// to `n`.
pub fn cmd_eppf(ctx: &Ctx, model_path: &Path, n: usize) -> anyhow::Result<ExitCode> {
    require_positive("n", n)?;
    let model = load_model(model_path)?;
    let q = q_array(&model, n)?;
    let table = solve_moehle(&q)?;
    let mut rows = Vec::new();
    for m in 1..=n {
        for shape in integer_partitions(m) {
            let p = table.prob(&shape)?;
            rows.push(EppfRecord {
                shape: shape.to_string(),
                p_exact: render_rat(&p),
                p_decimal: rat_to_f64(&p),
            });
        }
    }
    ctx.emit(&rows)?;
    Ok(ExitCode::SUCCESS)
}

/// `invert`: recover the transition row at `n` from the exact partition
/// probabilities alone.
pub fn cmd_invert(ctx: &Ctx, model_path: &Path, n: usize) -> anyhow::Result<ExitCode> {
    if n < 2 {
        bail!("--n must be >= 2 (there is nothing to invert at n = 1)");
    }
    let model = load_model(model_path)?;
    let q = q_array(&model, n)?;
    let table = solve_moehle(&q)?;
    let row = invert_p_to_q(&table, n)?;
    if &row != q.row(n)? {
        bail!("internal error: inverted row differs from the model's own row");
    }
    ctx.emit(&q_row_records(&row))?;
    Ok(ExitCode::SUCCESS)
}

/// `simulate`: sample one of the chains and tabulate absorbed (or visited)
/// shapes against the exact law. The table goes to `--out`/stdout; a short
/// human report goes to stderr.
#[allow(clippy::too_many_arguments)]
pub fn cmd_simulate(
    ctx: &Ctx,
    model_path: &Path,
    n: usize,
    samples: u64,
    seed: u64,
    mode: Mode,
) -> anyhow::Result<ExitCode> {
    require_positive("n", n)?;
    if samples == 0 {
        bail!("--samples must be >= 1");
    }
    let model = load_model(model_path)?;
    let q = q_array(&model, n)?;
    let exact = solve_moehle(&q)?;
    let start = Instant::now();
    let (emp, extra_lines): (EmpiricalEppf, Vec<String>) = match mode {
        Mode::Fm => (sample_fm(n, &q, samples, seed)?, Vec::new()),
        Mode::Continuous => {
            let batch = sample_continuous(&model, n, samples, seed)?;
            let lines = vec![
                format!("mean absorption time: {:.6}", batch.mean_absorption_time()),
                format!("mean jumps per run: {:.4}", batch.mean_jumps()),
            ];
            (batch.shapes, lines)
        }
        Mode::Sa => (
            sa_occupancy(&SetPartition::singletons(n)?, q.row(n)?, samples, seed)?,
            Vec::new(),
        ),
    };
    let elapsed = start.elapsed().as_secs_f64();

    let mut rows = Vec::new();
    for shape in integer_partitions(n) {
        rows.push(SimulateRecord {
            shape: shape.to_string(),
            count: emp.count(&shape),
            frequency: emp.freq(&shape),
            eppf_estimate: emp.eppf_estimate(&shape),
            std_error: emp.std_error(&shape),
            p_shape_exact: render_rat(&exact.shape_probability(&shape)?),
        });
    }
    ctx.emit(&rows)?;

    eprintln!(
        "simulate {}: n = {n}, samples = {samples}, seed = {seed}, elapsed = {elapsed:.3}s",
        mode.name()
    );
    for line in extra_lines {
        eprintln!("{line}");
    }
    if mode == Mode::Sa {
        let tv = tv_distance_to_exact(&emp, &exact)?;
        eprintln!(
            "total-variation distance to the exact stationary shape law: {tv:.6} \
             (single-chain steps are correlated; no independence test applies)"
        );
    } else {
        let rep = chi_square_vs_exact(&emp, &exact)?;
        let verdict = if rep.p_value > 0.001 {
            "consistent"
        } else {
            "INCONSISTENT"
        };
        eprintln!(
            "chi-square vs exact law: statistic = {:.4}, df = {}, p = {:.6}: {verdict} at threshold 0.001",
            rep.statistic, rep.df, rep.p_value
        );
    }
    Ok(ExitCode::SUCCESS)
}

/// Move `1/1000` of probability from the freeze entry of row 2 to its
/// pair-merge entry: the row still normalizes, so only the structural
/// checks can notice.
fn inject_q_defect(q: &QArray) -> anyhow::Result<QArray> {
    let row2 = q.row(2).context("defect injection needs rows up to 2")?;
    let eps = rat(1, 1000);
    let q_freeze = row2.q_freeze() - &eps;
    if q_freeze.is_negative() {
        bail!("cannot inject defect: q(2:1) < 1/1000");
    }
    let pair = CollisionType::new(vec![2], 0)?;
    let q_pair = row2.get(&pair) + &eps;
    let corrupted = QRow::new(2, q_freeze, vec![(pair, q_pair)])?;
    let rows: Vec<QRow> = q
        .rows()
        .iter()
        .map(|r| if r.b() == 2 { corrupted.clone() } else { r.clone() })
        .collect();
    Ok(QArray::new(rows)?)
}

fn push_check(
    checks: &mut Vec<CheckRecord>,
    name: &str,
    result: anyhow::Result<(bool, String)>,
) {
    match result {
        Ok((ok, detail)) => checks.push(CheckRecord {
            check: name.into(),
            ok,
            detail,
        }),
        Err(e) => checks.push(CheckRecord {
            check: name.into(),
            ok: false,
            detail: format!("error: {e:#}"),
        }),
    }
}

fn is_pure_kingman(model: &XiModel) -> bool {
    model.atoms().is_empty()
        && model.beta().is_none()
        && model.kingman_mass().is_positive()
        && model.freeze_rate().is_positive()
}

/// `verify`: run the whole cross-validation suite on one model. Records one
/// check per row; exits `1` when any check fails.
pub fn cmd_verify(
    ctx: &Ctx,
    model_path: &Path,
    n_max: usize,
    inject: bool,
) -> anyhow::Result<ExitCode> {
    if n_max < 2 {
        bail!("--n-max must be >= 2");
    }
    let model = load_model(model_path)?;
    let caps = caps_from_env()?;
    let q = {
        let q = q_array(&model, n_max)?;
        if inject {
            inject_q_defect(&q)?
        } else {
            q
        }
    };
    let freezing = q.row(2)?.q_freeze().is_positive();
    let mut checks: Vec<CheckRecord> = Vec::new();

    push_check(&mut checks, "rate-consistency", {
        let rep = check_rate_consistency(&model, n_max);
        Ok((
            rep.max_abs_residual.is_zero(),
            format!(
                "{} identities checked, max residual {}",
                rep.checked,
                render_rat(&rep.max_abs_residual)
            ),
        ))
    });

    push_check(&mut checks, "q-normalization", {
        let mut ok = true;
        for row in q.rows() {
            let mut sum = row.q_freeze().clone();
            ok &= !row.q_freeze().is_negative();
            for (_, v) in row.entries() {
                ok &= !v.is_negative();
                sum += v;
            }
            ok &= sum == rat_int(1);
        }
        let detail = if ok {
            format!("rows 1..={n_max} sum to one, all entries non-negative")
        } else {
            "a row fails normalization or non-negativity".to_string()
        };
        Ok((ok, detail))
    });

    push_check(
        &mut checks,
        "rate-recovery",
        (|| {
            let recovered = recover_rates(&q, model.freeze_rate())?;
            let mut ok = recovered.freeze_rate == *model.freeze_rate();
            let mut compared = 0usize;
            for b in 2..=n_max {
                for (t, rate, _) in &total_rates(&model, b).per_type {
                    ok &= &recovered.rates.get(t) == rate
                        && collision_rate(&model, t) == *rate;
                    compared += 1;
                }
            }
            Ok((ok, format!("{compared} rates rebuilt from the q array")))
        })(),
    );

    push_check(
        &mut checks,
        "backward-round-trip",
        (|| {
            let rebuilt = backward_q(q.row(n_max)?)?;
            match (1..=n_max).find(|&b| rebuilt.row(b).unwrap() != q.row(b).unwrap()) {
                None => Ok((true, format!("rows 1..={n_max} rebuilt from row {n_max}"))),
                Some(b) => Ok((false, format!("reconstruction from row {n_max} differs at row {b}"))),
            }
        })(),
    );

    // The remaining checks need the absorbed-partition law, which only
    // exists with freezing.
    let table: Option<EppfTable> = if freezing {
        Some(solve_moehle(&q)?)
    } else {
        None
    };
    let skipped = || Ok((true, "skipped: model has no freezing".to_string()));

    push_check(
        &mut checks,
        "eppf-addition",
        table.as_ref().map_or_else(skipped, |p| {
            let rep = check_addition_rule(p)?;
            Ok((
                rep.max_abs_residual.is_zero(),
                format!(
                    "{} identities checked, max residual {}",
                    rep.checked,
                    render_rat(&rep.max_abs_residual)
                ),
            ))
        }),
    );

    push_check(
        &mut checks,
        "ewens-equivalence",
        table.as_ref().map_or_else(skipped, |p| {
            if !is_pure_kingman(&model) {
                return Ok((true, "skipped: model is not pure Kingman".to_string()));
            }
            let theta = rat_int(2) * model.freeze_rate() / model.kingman_mass();
            let ewens = ewens_table(&theta, n_max)?;
            let ok = p == &ewens;
            Ok((
                ok,
                format!(
                    "law {} the theta = {} closed form",
                    if ok { "matches" } else { "differs from" },
                    render_rat(&theta)
                ),
            ))
        }),
    );

    push_check(
        &mut checks,
        "inversion-round-trip",
        table.as_ref().map_or_else(skipped, |p| {
            for m in 2..=n_max {
                if &invert_p_to_q(p, m)? != q.row(m)? {
                    return Ok((false, format!("row {m} not recovered")));
                }
            }
            Ok((true, format!("rows 2..={n_max} recovered from probabilities")))
        }),
    );

    push_check(
        &mut checks,
        "stationary-image",
        table.as_ref().map_or_else(skipped, |p| {
            let image = moehle_image(q.row(n_max)?, p)?;
            for (shape, v) in image {
                if v != p.prob(&shape)? {
                    return Ok((false, format!("image moved p({shape})")));
                }
            }
            Ok((true, format!("one-step image fixed at size {n_max}")))
        }),
    );

    let n_sa = n_max.min(caps.sa_matrix);
    push_check(
        &mut checks,
        "sa-stationary",
        table.as_ref().map_or_else(skipped, |p| {
            let mat = sa_transition_matrix(q.row(n_sa)?, caps.sa_matrix)?;
            let pi = stationary_distribution(&mat)?;
            for (state, prob) in mat.states.iter().zip(&pi) {
                if prob != &p.prob(&state.shape())? {
                    return Ok((false, format!("pi({state}) differs from the exact law")));
                }
            }
            Ok((
                true,
                format!("{} states at n = {n_sa} match the exact law", mat.states.len()),
            ))
        }),
    );

    let n_fm = n_max.min(caps.fm_oracle);
    push_check(
        &mut checks,
        "fm-absorption",
        table.as_ref().map_or_else(skipped, |p| {
            let law = exact_fm_absorption(&q.truncate(n_fm)?, caps.fm_oracle)?;
            let states = law.len();
            for (part, prob) in law {
                if prob != p.prob(&part.shape())? {
                    return Ok((false, format!("absorption law differs at {part}")));
                }
            }
            Ok((
                true,
                format!("{states} absorbed states at n = {n_fm} match the exact law"),
            ))
        }),
    );

    let failed = checks.iter().filter(|c| !c.ok).count();
    ctx.emit(&checks)?;
    eprintln!(
        "verify: {} checks, {} failed{}",
        checks.len(),
        failed,
        if inject { " (defect injected)" } else { "" }
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
