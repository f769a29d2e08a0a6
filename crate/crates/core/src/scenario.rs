//! JSON scenario files.
//!
//! Time-varying entries are strings in the [`crate::timefunc`] grammar (plain
//! JSON numbers are accepted as constants). Unknown keys are rejected.

use std::fmt;
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::estimators::{GradientConfig, LsFfConfig};
use crate::gpebo::ObserverConfig;
use crate::observer::MonitorBounds;
use crate::plant::PlantSpec;
use crate::sim::{EstimatorChoice, MeasurementNoise, SimConfig};
use crate::timefunc::{parse_expr, TimeExpr};

/// The simulation study: second-order plant, six unknowns, `u = sin t`.
pub const PAPER_EXAMPLE_JSON: &str = include_str!("../scenarios/paper_example.json");

/// Zero input, zero initial state, no output feedback: nothing excites the
/// regressor.
pub const UNEXCITED_JSON: &str = include_str!("../scenarios/unexcited.json");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("invalid scenario field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// Expression field that also accepts a bare JSON number.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprField(pub TimeExpr);

impl Serialize for ExprField {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ExprField {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ExprVisitor;

        impl Visitor<'_> for ExprVisitor {
            type Value = ExprField;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an expression string such as \"1.8 + sin(0.5*t)\" or a number")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<ExprField, E> {
                parse_expr(v)
                    .map(ExprField)
                    .map_err(|e| E::custom(format!("in expression \"{v}\": {e}")))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<ExprField, E> {
                Ok(ExprField(TimeExpr::constant(v)))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<ExprField, E> {
                Ok(ExprField(TimeExpr::constant(v as f64)))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<ExprField, E> {
                Ok(ExprField(TimeExpr::constant(v as f64)))
            }
        }

        deserializer.deserialize_any(ExprVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub std: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub a: Vec<Vec<ExprField>>,
    pub c: Vec<ExprField>,
    pub k: Vec<f64>,
    pub b: Vec<f64>,
    pub x0: Vec<f64>,
    pub input: ExprField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement_noise: Option<NoiseSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSection {
    pub l: Vec<ExprField>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsFfSection {
    pub gamma: f64,
    pub beta: f64,
    pub f0: f64,
    pub m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientSection {
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EstimatorSection {
    Lsff(LsFfSection),
    Gradient(GradientSection),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub t_final: f64,
}

fn default_phi_bound() -> f64 {
    MonitorBounds::default().phi_bound
}

fn default_bibs_bound() -> f64 {
    MonitorBounds::default().bibs_bound
}

fn default_eval_every() -> usize {
    MonitorBounds::default().eval_every
}

fn default_tolerance() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSection {
    #[serde(default = "default_phi_bound")]
    pub phi_bound: f64,
    #[serde(default = "default_bibs_bound")]
    pub bibs_bound: f64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Relative band for time-to-tolerance.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl Default for MonitorSection {
    fn default() -> Self {
        Self {
            phi_bound: default_phi_bound(),
            bibs_bound: default_bibs_bound(),
            eval_every: default_eval_every(),
            tolerance: default_tolerance(),
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    /// Write every k-th grid sample to the CSV.
    #[serde(default = "one")]
    pub csv_every: usize,
    #[serde(default)]
    pub plots: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            csv: None,
            csv_every: 1,
            plots: false,
            report: None,
        }
    }
}

/// Scenario file as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub plant: PlantSection,
    pub observer: ObserverSection,
    pub estimator: EstimatorSection,
    pub sim: SimSection,
    #[serde(default)]
    pub monitors: MonitorSection,
    #[serde(default)]
    pub outputs: OutputSection,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    /// Validates shapes and positivity and builds the runtime scenario.
    pub fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        let p = self.plant;
        let n = p.x0.len();
        if n == 0 {
            return Err(invalid("plant.x0", "must have at least one entry"));
        }
        if p.a.len() != n {
            return Err(invalid("plant.a", format!("must have {n} rows, got {}", p.a.len())));
        }
        if let Some((i, row)) = p.a.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(invalid(
                format!("plant.a[{i}]"),
                format!("must have {n} entries, got {}", row.len()),
            ));
        }
        for (field, len) in [
            ("plant.c", p.c.len()),
            ("plant.k", p.k.len()),
            ("plant.b", p.b.len()),
            ("observer.l", self.observer.l.len()),
        ] {
            if len != n {
                return Err(invalid(field, format!("must have {n} entries, got {len}")));
            }
        }
        for (field, values) in [("plant.k", &p.k), ("plant.b", &p.b), ("plant.x0", &p.x0)] {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(invalid(field, "entries must be finite"));
            }
        }
        if !(self.sim.dt > 0.0 && self.sim.dt.is_finite()) {
            return Err(invalid("sim.dt", format!("must be > 0, got {}", self.sim.dt)));
        }
        if !(self.sim.t_final > 0.0 && self.sim.t_final.is_finite()) {
            return Err(invalid("sim.t_final", format!("must be > 0, got {}", self.sim.t_final)));
        }
        if self.sim.dt > self.sim.t_final {
            return Err(invalid("sim.dt", "must not exceed sim.t_final"));
        }
        let noise = match p.measurement_noise {
            Some(NoiseSection { std, .. }) if !(std >= 0.0 && std.is_finite()) => {
                return Err(invalid(
                    "plant.measurement_noise.std",
                    format!("must be >= 0, got {std}"),
                ))
            }
            Some(NoiseSection { std, seed }) => Some(MeasurementNoise { std, seed }),
            None => None,
        };
        let m = &self.monitors;
        for (field, v) in [
            ("monitors.phi_bound", m.phi_bound),
            ("monitors.bibs_bound", m.bibs_bound),
            ("monitors.tolerance", m.tolerance),
        ] {
            if !(v > 0.0) {
                return Err(invalid(field, format!("must be > 0, got {v}")));
            }
        }
        if m.eval_every == 0 {
            return Err(invalid("monitors.eval_every", "must be >= 1"));
        }
        if self.outputs.csv_every == 0 {
            return Err(invalid("outputs.csv_every", "must be >= 1"));
        }

        let r = 3 * n;
        let estimator = match self.estimator {
            EstimatorSection::Lsff(s) => {
                let cfg = LsFfConfig {
                    gamma: s.gamma,
                    beta: s.beta,
                    f0: s.f0,
                    m: s.m,
                    theta0: s.theta0,
                };
                cfg.validate(r).map_err(estimator_field)?;
                EstimatorChoice::LsFf(cfg)
            }
            EstimatorSection::Gradient(s) => {
                let cfg = GradientConfig {
                    gamma: s.gamma,
                    theta0: s.theta0,
                };
                cfg.validate(r).map_err(estimator_field)?;
                EstimatorChoice::Gradient(cfg)
            }
        };

        Ok(Scenario {
            name: self.name,
            plant: PlantSpec {
                a: p.a
                    .into_iter()
                    .map(|row| row.into_iter().map(|e| e.0).collect())
                    .collect(),
                c: p.c.into_iter().map(|e| e.0).collect(),
                k: p.k,
                b: p.b,
                x0: p.x0,
                input: p.input.0,
            },
            observer: ObserverConfig {
                l: self.observer.l.into_iter().map(|e| e.0).collect(),
            },
            estimator,
            sim: SimConfig {
                dt: self.sim.dt,
                t_final: self.sim.t_final,
                noise,
            },
            monitors: MonitorBounds {
                phi_bound: m.phi_bound,
                bibs_bound: m.bibs_bound,
                eval_every: m.eval_every,
            },
            tolerance: m.tolerance,
            outputs: self.outputs,
        })
    }
}

fn estimator_field(e: crate::estimators::EstimatorError) -> ScenarioError {
    match e {
        crate::estimators::EstimatorError::Config { field, message } => invalid(format!("estimator.{field}"), message),
        other => invalid("estimator", other.to_string()),
    }
}

/// A validated scenario ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub plant: PlantSpec,
    pub observer: ObserverConfig,
    pub estimator: EstimatorChoice,
    pub sim: SimConfig,
    pub monitors: MonitorBounds,
    pub tolerance: f64,
    pub outputs: OutputSection,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        ScenarioFile::from_json(text)?.into_scenario()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        ScenarioFile::load(path)?.into_scenario()
    }

    pub fn theta_true(&self) -> Vec<f64> {
        crate::gpebo::ThetaVector::truth(&self.plant).to_vec()
    }
}

pub fn paper_example() -> Scenario {
    Scenario::from_json(PAPER_EXAMPLE_JSON).expect("bundled paper_example scenario is valid")
}

pub fn unexcited() -> Scenario {
    Scenario::from_json(UNEXCITED_JSON).expect("bundled unexcited scenario is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_paper_example() {
        let sc = paper_example();
        assert_eq!(sc.name, "paper_example");
        assert_eq!(sc.plant.n(), 2);
        assert_eq!(sc.theta_true(), vec![-3.0, 2.0, -1.0, -3.0, 1.0, 2.0]);
        assert_eq!(sc.plant.a_at(0.0).as_slice(), &[1.8, -1.0, 6.2, -4.0]);
        assert_eq!(sc.observer.l_at(0.0), vec![0.8, 1.2]);
        assert_eq!(sc.plant.input_at(0.0), 0.0);
        assert_eq!(
            sc.estimator,
            EstimatorChoice::LsFf(LsFfConfig {
                gamma: 1000.0,
                beta: 1.0,
                f0: 0.1,
                m: 1e12,
                theta0: None
            })
        );
        assert_eq!((sc.sim.dt, sc.sim.t_final), (1e-3, 50.0));
        unexcited();
    }

    fn with(f: impl FnOnce(&mut serde_json::Value)) -> Result<Scenario, ScenarioError> {
        let mut v: serde_json::Value = serde_json::from_str(PAPER_EXAMPLE_JSON).unwrap();
        f(&mut v);
        Scenario::from_json(&v.to_string())
    }

    #[test]
    fn zero_horizon_names_field() {
        let err = with(|v| v["sim"]["t_final"] = 0.0.into()).unwrap_err();
        assert!(
            matches!(&err, ScenarioError::Invalid { field, .. } if field == "sim.t_final"),
            "{err}"
        );
    }

    #[test]
    fn misspelled_estimator_lists_allowed_kinds() {
        let err = with(|v| v["estimator"]["kind"] = "lsf".into()).unwrap_err().to_string();
        assert!(err.contains("lsff") && err.contains("gradient"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = with(|v| v["plant"]["bogus"] = 1.into()).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        let err = with(|v| v["estimator"]["alpha"] = 1.into()).unwrap_err().to_string();
        assert!(err.contains("alpha"), "{err}");
        let err = with(|v| v["extra"] = 1.into()).unwrap_err().to_string();
        assert!(err.contains("extra"), "{err}");
    }

    #[test]
    fn shape_and_value_checks() {
        let err = with(|v| v["plant"]["k"] = serde_json::json!([1.0])).unwrap_err();
        assert!(err.to_string().contains("plant.k"), "{err}");
        let err = with(|v| v["observer"]["l"] = serde_json::json!(["1"])).unwrap_err();
        assert!(err.to_string().contains("observer.l"), "{err}");
        let err = with(|v| v["estimator"]["f0"] = 0.0.into()).unwrap_err();
        assert!(err.to_string().contains("estimator.f0"), "{err}");
        let err = with(|v| v["plant"]["a"][1] = serde_json::json!(["1"])).unwrap_err();
        assert!(err.to_string().contains("plant.a[1]"), "{err}");
    }

    #[test]
    fn bad_expression_reports_position() {
        let err = with(|v| v["plant"]["a"][0][0] = "1,8 + sin(0.5*t)".into())
            .unwrap_err()
            .to_string();
        assert!(err.contains("byte 1"), "{err}");
    }

    #[test]
    fn numbers_accepted_as_constants() {
        let sc = with(|v| v["plant"]["c"] = serde_json::json!([1, 0.0])).unwrap();
        assert_eq!(sc.plant.c_at(3.0), vec![1.0, 0.0]);
    }

    #[test]
    fn file_round_trips_through_serde() {
        let file = ScenarioFile::from_json(PAPER_EXAMPLE_JSON).unwrap();
        let again = ScenarioFile::from_json(&serde_json::to_string(&file).unwrap()).unwrap();
        assert_eq!(file, again);
    }
}
