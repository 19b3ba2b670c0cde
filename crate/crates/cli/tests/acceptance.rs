//! Acceptance gate: every deliverable property of the workspace, checked in
//! one place, printing exactly one PASS/FAIL line per criterion.
//!
//! Run with:
//!
//! ```text
//! cargo test -p xifreeze-cli --test acceptance -- --nocapture
//! ```
//!
//! Criteria with a time budget measure wall-clock time; exceeding the
//! budget fails the criterion even when the math checks out.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use xifreeze_core::chains::{
    chi_square_two_sample, chi_square_vs_exact, exact_fm_absorption, sa_transition_matrix,
    sample_continuous, sample_fm, stationary_distribution,
};
use xifreeze_core::eppf::{
    check_addition_rule, ewens_table, invert_p_to_q, moehle_image, solve_moehle,
};
use xifreeze_core::measures::{
    backward_q, check_rate_consistency, collision_rate, q_array, recover_rates, total_rates,
    BetaPart, SimplexPoint, XiModel,
};
use xifreeze_core::rational::{rat, rat_int, Rat, Zero};

/// Significance threshold for the Monte Carlo goodness-of-fit criteria.
const CHI_SQUARE_ALPHA: f64 = 0.001;

fn test_models() -> Vec<(&'static str, XiModel)> {
    let atom = SimplexPoint::new(vec![rat(1, 2), rat(1, 4)]).unwrap();
    let second = SimplexPoint::new(vec![rat(2, 3), rat(1, 5)]).unwrap();
    vec![
        ("kingman", XiModel::kingman(rat_int(1), rat(1, 2)).unwrap()),
        (
            "one-atom",
            XiModel::new(Rat::zero(), vec![(rat_int(1), atom.clone())], None, rat(1, 2)).unwrap(),
        ),
        (
            "two-atom",
            XiModel::new(
                rat(1, 4),
                vec![(rat(1, 2), atom), (rat(1, 3), second)],
                None,
                rat(1, 3),
            )
            .unwrap(),
        ),
        (
            "bolthausen-sznitman",
            XiModel::new(
                Rat::zero(),
                vec![],
                Some(BetaPart {
                    alpha: 1,
                    beta: 1,
                    mass: rat_int(1),
                }),
                rat_int(1),
            )
            .unwrap(),
        ),
    ]
}

fn c01_ewens_equivalence() {
    // Kingman mass a with freeze rate rho gives the Ewens law with
    // theta = 2 rho / a; check the whole table up to n = 10 for three
    // parameter choices.
    for (num, den) in [(1i64, 2i64), (1, 1), (5, 2)] {
        let rho = rat(num, den);
        let theta = rat_int(2) * &rho;
        let model = XiModel::kingman(rat_int(1), rho).unwrap();
        let p = solve_moehle(&q_array(&model, 10).unwrap()).unwrap();
        let ewens = ewens_table(&theta, 10).unwrap();
        assert_eq!(p, ewens, "theta = {theta}");
    }
}

fn c02_rate_consistency() {
    for (name, model) in test_models() {
        let rep = check_rate_consistency(&model, 8);
        assert!(rep.checked > 0, "{name}: nothing checked");
        assert!(
            rep.max_abs_residual.is_zero(),
            "{name}: residual {} at {:?}",
            rep.max_abs_residual,
            rep.worst
        );
    }
}

fn c03_backward_reconstruction() {
    for (name, model) in test_models() {
        let q = q_array(&model, 8).unwrap();
        let rebuilt = backward_q(q.row(8).unwrap()).unwrap();
        assert_eq!(rebuilt.rows(), q.rows(), "{name}");
    }
}

fn c04_rate_recovery() {
    for (name, model) in test_models() {
        let q = q_array(&model, 8).unwrap();
        let rec = recover_rates(&q, model.freeze_rate()).unwrap();
        assert_eq!(&rec.freeze_rate, model.freeze_rate(), "{name}: rho");
        for b in 2..=8 {
            let expected = total_rates(&model, b);
            assert_eq!(rec.totals[b - 1], expected.total, "{name}: Phi({b})");
            for (t, rate, _) in &expected.per_type {
                assert_eq!(&rec.rates.get(t), rate, "{name}: {t}");
                assert_eq!(&collision_rate(&model, t), rate, "{name}: direct {t}");
            }
        }
        // The q array pins rates only up to the overall time scale: tripling
        // Phi(1) triples every recovered rate.
        let scaled = recover_rates(&q, &(model.freeze_rate() * rat_int(3))).unwrap();
        for b in 2..=8 {
            for (t, rate, _) in &total_rates(&model, b).per_type {
                assert_eq!(scaled.rates.get(t), rate * rat_int(3), "{name}: scaled {t}");
            }
        }
    }
}

fn c05_addition_rule() {
    for (name, model) in test_models() {
        let table = solve_moehle(&q_array(&model, 8).unwrap()).unwrap();
        let rep = check_addition_rule(&table).unwrap();
        assert!(
            rep.max_abs_residual.is_zero(),
            "{name}: residual {} at {:?}",
            rep.max_abs_residual,
            rep.worst
        );
    }
}

fn c06_fm_absorption_oracle() {
    for (name, model) in test_models().into_iter().take(2) {
        let q = q_array(&model, 4).unwrap();
        let p = solve_moehle(&q).unwrap();
        let law = exact_fm_absorption(&q, 4).unwrap();
        assert_eq!(law.len(), 15, "{name}: all partitions of 4 reachable");
        for (part, prob) in law {
            assert_eq!(prob, p.prob(&part.shape()).unwrap(), "{name}: {part}");
        }
    }
}

fn c07_sa_stationary_law() {
    for (name, model) in test_models().into_iter().take(2) {
        let q = q_array(&model, 5).unwrap();
        let p = solve_moehle(&q).unwrap();
        let mat = sa_transition_matrix(q.row(5).unwrap(), 6).unwrap();
        let pi = stationary_distribution(&mat).unwrap();
        for (state, prob) in mat.states.iter().zip(&pi) {
            // Exchangeability and exactness in one statement: every state
            // carries exactly the law of its shape.
            assert_eq!(prob, &p.prob(&state.shape()).unwrap(), "{name}: {state}");
        }
        // The one-step law map fixes the exact law.
        let image = moehle_image(q.row(5).unwrap(), &p).unwrap();
        for (shape, v) in image {
            assert_eq!(v, p.prob(&shape).unwrap(), "{name}: image at {shape}");
        }
    }
}

fn c08_inversion_round_trip() {
    for (name, model) in test_models() {
        let q = q_array(&model, 8).unwrap();
        let table = solve_moehle(&q).unwrap();
        for m in 2..=8 {
            assert_eq!(
                &invert_p_to_q(&table, m).unwrap(),
                q.row(m).unwrap(),
                "{name}: row {m}"
            );
        }
    }
}

fn c09_monte_carlo_cross_validation() {
    // Exact versus Monte Carlo: 100k absorbed shapes of the jump chain per
    // model must fit the exact law.
    for (name, model) in test_models().into_iter().take(2) {
        let q = q_array(&model, 6).unwrap();
        let p = solve_moehle(&q).unwrap();
        let emp = sample_fm(6, &q, 100_000, 2025).unwrap();
        let rep = chi_square_vs_exact(&emp, &p).unwrap();
        assert!(
            rep.p_value > CHI_SQUARE_ALPHA,
            "{name}: p = {} (statistic {}, df {})",
            rep.p_value,
            rep.statistic,
            rep.df
        );
    }
    // Monte Carlo versus Monte Carlo: the continuous-time sampler and the
    // jump-chain sampler draw the same absorbed law.
    let model = test_models().remove(0).1;
    let q = q_array(&model, 6).unwrap();
    let fm = sample_fm(6, &q, 50_000, 7).unwrap();
    let cont = sample_continuous(&model, 6, 50_000, 8).unwrap();
    let rep = chi_square_two_sample(&fm, &cont.shapes).unwrap();
    assert!(
        rep.p_value > CHI_SQUARE_ALPHA,
        "two-sample: p = {} (statistic {}, df {})",
        rep.p_value,
        rep.statistic,
        rep.df
    );
}

fn c10_cli_determinism() {
    let exe = env!("CARGO_BIN_EXE_xifreeze");
    let model = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/models/two_atoms.json");
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (seed, file) in [("42", "a.csv"), ("42", "b.csv"), ("43", "c.csv")] {
        let out_path = dir.path().join(file);
        let status = Command::new(exe)
            .args([
                "simulate",
                "--model",
                model.to_str().unwrap(),
                "--n",
                "5",
                "--samples",
                "5000",
                "--seed",
                seed,
                "--out",
                out_path.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(fs::read(&out_path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "same seed must give identical bytes");
    assert_ne!(outputs[0], outputs[2], "different seed must move the tallies");
}

struct Criterion {
    label: &'static str,
    budget: Option<Duration>,
    run: fn(),
}

#[test]
fn acceptance() {
    let criteria = [
        Criterion {
            label: "01 Kingman-with-freeze law equals the Ewens closed form up to n = 10",
            budget: Some(Duration::from_secs(10)),
            run: c01_ewens_equivalence,
        },
        Criterion {
            label: "02 collision rates satisfy the consistency relation exactly (4 models, b <= 8)",
            budget: Some(Duration::from_secs(5)),
            run: c02_rate_consistency,
        },
        Criterion {
            label: "03 backward recursion rebuilds rows 1..=8 from row 8 exactly (4 models)",
            budget: Some(Duration::from_secs(5)),
            run: c03_backward_reconstruction,
        },
        Criterion {
            label: "04 rates are recovered from the q array exactly, up to the overall time scale",
            budget: None,
            run: c04_rate_recovery,
        },
        Criterion {
            label: "05 solved partition probabilities satisfy the addition rule exactly (n = 8)",
            budget: None,
            run: c05_addition_rule,
        },
        Criterion {
            label: "06 exact jump-chain absorption law equals the recursion solution (n = 4)",
            budget: None,
            run: c06_fm_absorption_oracle,
        },
        Criterion {
            label: "07 ball-chain stationary law is the exact partition law (n = 5, 2 models)",
            budget: None,
            run: c07_sa_stationary_law,
        },
        Criterion {
            label: "08 partition probabilities invert back to the transition rows (n <= 8)",
            budget: None,
            run: c08_inversion_round_trip,
        },
        Criterion {
            label: "09 Monte Carlo samplers fit the exact law (chi-square, alpha = 0.001)",
            budget: Some(Duration::from_secs(60)),
            run: c09_monte_carlo_cross_validation,
        },
        Criterion {
            label: "10 CLI simulate output is byte-identical for a fixed seed",
            budget: None,
            run: c10_cli_determinism,
        },
    ];

    // Keep the per-criterion lines readable: no panic backtraces.
    let default_hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failures = Vec::new();
    for c in &criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run));
        let elapsed = start.elapsed();
        let over_budget = c.budget.is_some_and(|b| elapsed > b);
        let status = match (&result, over_budget) {
            (Ok(()), false) => "PASS",
            _ => "FAIL",
        };
        println!("criterion {}: {status} ({elapsed:.2?})", c.label);
        if let Err(e) = result {
            let msg = e
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| e.downcast_ref::<&str>().copied())
                .unwrap_or("panic");
            failures.push(format!("criterion {}: {msg}", c.label));
        } else if over_budget {
            failures.push(format!(
                "criterion {}: exceeded budget {:?} (took {elapsed:.2?})",
                c.label,
                c.budget.unwrap()
            ));
        }
    }
    std::panic::set_hook(default_hook);
    assert!(
        failures.is_empty(),
        "{} criteria failed:\n{}",
        failures.len(),
        failures.join("\n")
    );
}
