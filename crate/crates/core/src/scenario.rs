//! Scenario files and control actions.
//!
//! Scenarios are JSON documents with dense row-major matrices. Agent labels
//! in files (control targets, edges) are one-based; an edge `[j, k]` refers
//! to entry `a_jk`, i.e. agent `j` being infected by agent `k`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{IntegrationSettings, StateVector, SIMPLEX_TOL};
use crate::error::{Result, SiriError};
use crate::model::{DiGraph, NetworkModel, RateParams};
use crate::stochastic::GENERATOR;

fn default_t_end() -> f64 {
    500.0
}

fn default_dt() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticSettings {
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_generator")]
    pub generator: String,
    /// Spacing of the output time grid.
    #[serde(default = "default_t_step")]
    pub t_step: f64,
}

fn default_generator() -> String {
    GENERATOR.to_string()
}

fn default_t_step() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewEdge {
    pub edge: [usize; 2],
    #[serde(default = "one")]
    pub weight: f64,
    pub beta: f64,
    pub beta_hat: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ControlAction {
    SetRecovery {
        agent: usize,
        delta: f64,
    },
    SetReinfection {
        edge: [usize; 2],
        rate: f64,
    },
    SetInfection {
        edge: [usize; 2],
        rate: f64,
    },
    Rewire {
        #[serde(default)]
        remove: Vec<[usize; 2]>,
        #[serde(default)]
        add: Vec<NewEdge>,
    },
    Vaccinate {
        agents: Vec<usize>,
    },
}

/// On-disk layout; [`Scenario`] converts through it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    n: usize,
    adjacency: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    beta_hat: Vec<Vec<f64>>,
    delta: Vec<f64>,
    p_s0: Vec<f64>,
    p_i0: Vec<f64>,
    #[serde(default = "default_t_end")]
    t_end: f64,
    #[serde(default = "default_dt")]
    dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_stride: Option<usize>,
    #[serde(default)]
    controls: Vec<ControlAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stochastic: Option<StochasticSettings>,
    #[serde(default)]
    provenance: String,
}

/// A validated scenario: model, initial condition, integration settings,
/// pending controls, stochastic settings and provenance note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioFile", into = "ScenarioFile")]
pub struct Scenario {
    pub model: NetworkModel,
    pub initial: StateVector,
    pub t_end: f64,
    pub dt: f64,
    pub output_stride: Option<usize>,
    pub controls: Vec<ControlAction>,
    pub stochastic: Option<StochasticSettings>,
    pub provenance: String,
}

fn dense(name: &str, rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(SiriError::Scenario(format!(
            "field `{name}` must be a {n}x{n} array"
        )));
    }
    Ok(DMatrix::from_fn(n, n, |j, k| rows[j][k]))
}

fn vector(name: &str, v: &[f64], n: usize) -> Result<DVector<f64>> {
    if v.len() != n {
        return Err(SiriError::Scenario(format!(
            "field `{name}` must have {n} entries, got {}",
            v.len()
        )));
    }
    Ok(DVector::from_column_slice(v))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl TryFrom<ScenarioFile> for Scenario {
    type Error = SiriError;

    fn try_from(f: ScenarioFile) -> Result<Self> {
        let n = f.n;
        if n == 0 {
            return Err(SiriError::Scenario("`n` must be positive".into()));
        }
        let graph = DiGraph::new(dense("adjacency", &f.adjacency, n)?)?;
        let rates = RateParams {
            infection: dense("beta", &f.beta, n)?,
            reinfection: dense("beta_hat", &f.beta_hat, n)?,
            recovery: vector("delta", &f.delta, n)?,
        };
        let model = NetworkModel::new(graph, rates)?;
        model.ensure_valid()?;
        let initial = StateVector::new(vector("p_s0", &f.p_s0, n)?, vector("p_i0", &f.p_i0, n)?)?;
        if !(f.dt > 0.0 && f.t_end >= 0.0) {
            return Err(SiriError::Scenario(
                "`dt` must be positive and `t_end` nonnegative".into(),
            ));
        }
        if f.output_stride == Some(0) {
            return Err(SiriError::Scenario(
                "`output_stride` must be at least 1".into(),
            ));
        }
        if let Some(s) = &f.stochastic {
            if s.generator != GENERATOR {
                return Err(SiriError::Scenario(format!(
                    "unsupported generator `{}` (only `{GENERATOR}` is available)",
                    s.generator
                )));
            }
        }
        Ok(Scenario {
            model,
            initial,
            t_end: f.t_end,
            dt: f.dt,
            output_stride: f.output_stride,
            controls: f.controls,
            stochastic: f.stochastic,
            provenance: f.provenance,
        })
    }
}

impl From<Scenario> for ScenarioFile {
    fn from(s: Scenario) -> Self {
        ScenarioFile {
            n: s.model.n(),
            adjacency: rows(s.model.graph().adjacency()),
            beta: rows(s.model.infection()),
            beta_hat: rows(s.model.reinfection()),
            delta: s.model.recovery().iter().copied().collect(),
            p_s0: s.initial.p_s.iter().copied().collect(),
            p_i0: s.initial.p_i.iter().copied().collect(),
            t_end: s.t_end,
            dt: s.dt,
            output_stride: s.output_stride,
            controls: s.controls,
            stochastic: s.stochastic,
            provenance: s.provenance,
        }
    }
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<Self> {
        // parse the raw layout first so validation errors are not wrapped as
        // JSON errors
        let file: ScenarioFile = serde_json::from_str(text)?;
        Scenario::try_from(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::from_json_str(&text).map_err(|e| match e {
            SiriError::Json(j) => SiriError::Scenario(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string()? + "\n")?;
        Ok(())
    }

    pub fn integration_settings(&self) -> IntegrationSettings {
        let mut s = IntegrationSettings {
            t_end: self.t_end,
            dt: self.dt,
            ..Default::default()
        };
        if let Some(k) = self.output_stride {
            s.output_stride = k;
        }
        s
    }

    /// Returns a new scenario with `action` applied; `self` is unchanged.
    pub fn apply_control(&self, action: &ControlAction) -> Result<Scenario> {
        let n = self.model.n();
        let mut a = self.model.graph().adjacency().clone();
        let mut rates = self.model.rates().clone();
        let mut initial = self.initial.clone();

        let agent = |label: usize| -> Result<usize> {
            if label == 0 || label > n {
                Err(SiriError::Control(format!(
                    "agent {label} out of range 1..={n}"
                )))
            } else {
                Ok(label - 1)
            }
        };
        let edge = |e: [usize; 2]| -> Result<(usize, usize)> { Ok((agent(e[0])?, agent(e[1])?)) };
        let existing = |a: &DMatrix<f64>, (j, k): (usize, usize)| -> Result<()> {
            if a[(j, k)] > 0.0 {
                Ok(())
            } else {
                Err(SiriError::Control(format!(
                    "no edge ({}, {})",
                    j + 1,
                    k + 1
                )))
            }
        };

        match action {
            ControlAction::SetRecovery { agent: j, delta } => {
                rates.recovery[agent(*j)?] = *delta;
            }
            ControlAction::SetReinfection { edge: e, rate } => {
                let jk = edge(*e)?;
                existing(&a, jk)?;
                rates.reinfection[jk] = *rate;
            }
            ControlAction::SetInfection { edge: e, rate } => {
                let jk = edge(*e)?;
                existing(&a, jk)?;
                rates.infection[jk] = *rate;
            }
            ControlAction::Rewire { remove, add } => {
                for e in remove {
                    let jk = edge(*e)?;
                    existing(&a, jk)?;
                    a[jk] = 0.0;
                    rates.infection[jk] = 0.0;
                    rates.reinfection[jk] = 0.0;
                }
                for ne in add {
                    let jk = edge(ne.edge)?;
                    a[jk] = ne.weight;
                    rates.infection[jk] = ne.beta;
                    rates.reinfection[jk] = ne.beta_hat;
                }
            }
            ControlAction::Vaccinate { agents } => {
                for &label in agents {
                    initial.p_s[agent(label)?] = 0.0;
                }
            }
        }

        let model = NetworkModel::new(DiGraph::new(a)?, rates)?;
        let report = model.validate();
        if !report.is_ok() {
            let detail = report
                .violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            return Err(SiriError::Control(format!(
                "{action:?} yields an invalid model: {detail}"
            )));
        }
        initial = StateVector::new(initial.p_s, initial.p_i)
            .map_err(|e| SiriError::Control(format!("{action:?}: {e}")))?;
        debug_assert!(initial.p_r().iter().all(|&r| r >= -SIMPLEX_TOL));
        Ok(Scenario {
            model,
            initial,
            controls: self.controls.clone(),
            ..self.clone()
        })
    }

    /// Applies the scenario's own control list in order and clears it.
    pub fn with_controls_applied(&self) -> Result<Scenario> {
        let mut s = self.clone();
        for c in &self.controls {
            s = s.apply_control(c)?;
        }
        s.controls.clear();
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_AGENT: &str = r#"{
        "n": 2,
        "adjacency": [[0, 1], [1, 0]],
        "beta": [[0, 0.8], [1.3, 0]],
        "beta_hat": [[0, 1.3], [0.8, 0]],
        "delta": [1, 1],
        "p_s0": [0.9, 0.6],
        "p_i0": [0.1, 0.4]
    }"#;

    #[test]
    fn defaults_applied() {
        let s = Scenario::from_json_str(TWO_AGENT).unwrap();
        assert_eq!(s.t_end, 500.0);
        assert_eq!(s.dt, 0.01);
        assert!(s.controls.is_empty());
    }

    #[test]
    fn off_simplex_rejected() {
        let text = TWO_AGENT.replace("[0.9, 0.6]", "[0.95, 0.6]");
        let err = Scenario::from_json_str(&text).unwrap_err();
        assert!(err.to_string().contains("not on simplex"), "{err}");
    }

    #[test]
    fn negative_reinfection_rejected() {
        let text = TWO_AGENT.replace("[[0, 1.3], [0.8, 0]]", "[[0, -1.3], [0.8, 0]]");
        assert!(matches!(
            Scenario::from_json_str(&text),
            Err(SiriError::InvalidModel(_))
        ));
    }

    #[test]
    fn missing_field_named() {
        let text = TWO_AGENT.replace("\"delta\": [1, 1],", "");
        let err = Scenario::from_json_str(&text).unwrap_err();
        assert!(err.to_string().contains("delta"), "{err}");
    }

    #[test]
    fn control_json_shape() {
        let c: ControlAction =
            serde_json::from_str(r#"{"action": "set_reinfection", "edge": [4, 2], "rate": 0.3}"#)
                .unwrap();
        assert_eq!(
            c,
            ControlAction::SetReinfection {
                edge: [4, 2],
                rate: 0.3
            }
        );
        let v: ControlAction =
            serde_json::from_str(r#"{"action": "vaccinate", "agents": [2]}"#).unwrap();
        assert_eq!(v, ControlAction::Vaccinate { agents: vec![2] });
    }

    #[test]
    fn vaccination_moves_susceptibles_to_recovered() {
        let s = Scenario::from_json_str(TWO_AGENT).unwrap();
        let v = s
            .apply_control(&ControlAction::Vaccinate { agents: vec![2] })
            .unwrap();
        assert_eq!(v.initial.p_s[1], 0.0);
        assert_eq!(v.initial.p_i[1], 0.4);
        assert!((v.initial.p_r()[1] - 0.6).abs() < 1e-15);
        assert_eq!(s.initial.p_s[1], 0.6);
    }

    #[test]
    fn disconnecting_rewire_rejected() {
        let s = Scenario::from_json_str(TWO_AGENT).unwrap();
        let err = s
            .apply_control(&ControlAction::Rewire {
                remove: vec![[1, 2]],
                add: vec![],
            })
            .unwrap_err();
        assert!(matches!(err, SiriError::Control(_)));
    }

    #[test]
    fn out_of_range_agent() {
        let s = Scenario::from_json_str(TWO_AGENT).unwrap();
        assert!(s
            .apply_control(&ControlAction::SetRecovery {
                agent: 3,
                delta: 1.0
            })
            .is_err());
        assert!(s
            .apply_control(&ControlAction::SetRecovery {
                agent: 0,
                delta: 1.0
            })
            .is_err());
    }
}
