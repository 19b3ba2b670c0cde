//! Model files: a JSON description of a coalescent-with-freeze model.
//!
//! ```json
//! {
//!   "freeze_rate": "1/2",
//!   "kingman_mass": 1,
//!   "atoms": [{ "weight": 1, "point": ["1/2", "1/4"] }],
//!   "lambda_atoms": [{ "weight": "1/2", "x": "1/2" }],
//!   "lambda_beta": { "alpha": 1, "beta": 1, "mass": 1 }
//! }
//! ```
//!
//! Every number may be a JSON integer or a `"p/q"` string; everything but
//! `freeze_rate` is optional, and at least one coalescence part must carry
//! positive mass. `lambda_atoms` are single-collision atoms: an entry at `x`
//! is embedded as the one-coordinate simplex point `(x)` with the same
//! weight. `lambda_beta` is a single-collision part with a Beta density.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

use xifreeze_core::measures::{BetaPart, SimplexPoint, XiModel};
use xifreeze_core::rational::{parse_rat, rat_int, Rat};
use xifreeze_core::Result as CoreResult;

/// A rational number in a model file: an integer or a `"p/q"` string.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum RatSpec {
    Int(i64),
    Text(String),
}

impl RatSpec {
    fn to_rat(&self) -> CoreResult<Rat> {
        match self {
            RatSpec::Int(n) => Ok(rat_int(*n)),
            RatSpec::Text(s) => parse_rat(s),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomSpec {
    weight: RatSpec,
    point: Vec<RatSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LambdaAtomSpec {
    weight: RatSpec,
    x: RatSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BetaSpec {
    alpha: u32,
    beta: u32,
    mass: RatSpec,
}

/// The on-disk model description.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSpec {
    freeze_rate: RatSpec,
    #[serde(default)]
    kingman_mass: Option<RatSpec>,
    #[serde(default)]
    atoms: Vec<AtomSpec>,
    #[serde(default)]
    lambda_atoms: Vec<LambdaAtomSpec>,
    #[serde(default)]
    lambda_beta: Option<BetaSpec>,
}

impl ModelSpec {
    fn build(&self) -> CoreResult<XiModel> {
        let mut atoms = Vec::with_capacity(self.atoms.len() + self.lambda_atoms.len());
        for a in &self.atoms {
            let coords = a
                .point
                .iter()
                .map(RatSpec::to_rat)
                .collect::<CoreResult<Vec<_>>>()?;
            atoms.push((a.weight.to_rat()?, SimplexPoint::new(coords)?));
        }
        for la in &self.lambda_atoms {
            atoms.push((
                la.weight.to_rat()?,
                SimplexPoint::new(vec![la.x.to_rat()?])?,
            ));
        }
        let beta = self
            .lambda_beta
            .as_ref()
            .map(|b| {
                Ok::<_, xifreeze_core::Error>(BetaPart {
                    alpha: b.alpha,
                    beta: b.beta,
                    mass: b.mass.to_rat()?,
                })
            })
            .transpose()?;
        let kingman = self
            .kingman_mass
            .as_ref()
            .map(RatSpec::to_rat)
            .transpose()?
            .unwrap_or_else(|| rat_int(0));
        XiModel::new(kingman, atoms, beta, self.freeze_rate.to_rat()?)
    }
}

/// Read and validate a model file.
pub fn load_model(path: &Path) -> anyhow::Result<XiModel> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading model file {}", path.display()))?;
    let spec: ModelSpec = serde_json::from_str(&text)
        .with_context(|| format!("parsing model file {}", path.display()))?;
    spec.build()
        .with_context(|| format!("invalid model in {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use xifreeze_core::rational::rat;

    fn parse(text: &str) -> anyhow::Result<XiModel> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        Ok(spec.build()?)
    }

    #[test]
    fn full_model_parses() {
        let m = parse(
            r#"{
                "freeze_rate": "1/3",
                "kingman_mass": "1/4",
                "atoms": [{ "weight": 1, "point": ["1/2", "1/4"] }],
                "lambda_atoms": [{ "weight": "1/2", "x": "2/3" }],
                "lambda_beta": { "alpha": 1, "beta": 2, "mass": 1 }
            }"#,
        )
        .unwrap();
        assert_eq!(m.freeze_rate(), &rat(1, 3));
        assert_eq!(m.kingman_mass(), &rat(1, 4));
        assert_eq!(m.atoms().len(), 2);
        assert_eq!(m.atoms()[1].1.coords(), &[rat(2, 3)]);
        assert_eq!(m.beta().unwrap().alpha, 1);
    }

    #[test]
    fn lambda_atoms_match_direct_embedding() {
        let via_spec = parse(r#"{ "freeze_rate": 1, "lambda_atoms": [{ "weight": 2, "x": "1/2" }] }"#)
            .unwrap();
        let direct = XiModel::embed_lambda(&[(rat_int(2), rat(1, 2))], rat_int(1)).unwrap();
        assert_eq!(via_spec, direct);
    }

    #[test]
    fn unknown_fields_and_bad_numbers_are_rejected() {
        assert!(parse(r#"{ "freeze_rate": 1, "typo": 3 }"#).is_err());
        assert!(parse(r#"{ "freeze_rate": "0.5", "kingman_mass": 1 }"#).is_err());
        assert!(parse(r#"{ "kingman_mass": 1 }"#).is_err());
        // No coalescence mass at all.
        assert!(parse(r#"{ "freeze_rate": 1 }"#).is_err());
        // Negative freeze rate.
        assert!(parse(r#"{ "freeze_rate": -1, "kingman_mass": 1 }"#).is_err());
    }
}
