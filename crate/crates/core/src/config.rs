//! JSON configuration schema.
//!
//! ```json
//! {
//!   "system": {
//!     "H": {"rows": 2, "cols": 2, "data": [[1, 1], [0, 1]]},
//!     "C": {"rows": 2, "cols": 2, "data": [[1, 0], [0, 1]]},
//!     "W": {"rows": 2, "cols": 2, "data": [[10, 0], [0, 10]]},
//!     "x0_hat": [0, 0]
//!   },
//!   "privacy": {"epsilon": 1.0986, "delta": 0.001, "adjacency_B": 1.0},
//!   "simulation": {"horizon_T": 100, "trials": 2000, "seed": 42},
//!   "calibration": {"kind": "apriori", "B_l": 21.0, "B_u": 2000.0}
//! }
//! ```
//!
//! A network config replaces `system`/`privacy` with
//! `"agents": [{"id": ..., "system": {...}, "privacy": {...}}, ...]`.
//! Unknown keys are rejected everywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationKind, CalibrationTarget};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::network::{self, AgentSpec, NetworkModel};
use crate::privacy::PrivacyConfig;
use crate::simulation::{InitialState, SimulationConfig, DEFAULT_BURN_IN};
use crate::system::SystemModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub rows: usize,
    pub cols: usize,
    /// Row-major nested arrays.
    pub data: Vec<Vec<f64>>,
}

impl MatrixSpec {
    pub fn to_matrix(&self, name: &str) -> Result<Matrix> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config(format!("{name}: rows and cols must be positive")));
        }
        if self.data.len() != self.rows {
            return Err(Error::Config(format!(
                "{name}: declared {} rows but data has {}",
                self.rows,
                self.data.len()
            )));
        }
        if let Some((i, row)) = self.data.iter().enumerate().find(|(_, r)| r.len() != self.cols) {
            return Err(Error::Config(format!(
                "{name}: row {i} has {} entries, declared cols = {}",
                row.len(),
                self.cols
            )));
        }
        Ok(Matrix::from_fn(self.rows, self.cols, |i, j| self.data[i][j]))
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(rename = "H")]
    pub h: MatrixSpec,
    #[serde(rename = "C")]
    pub c: MatrixSpec,
    #[serde(rename = "W")]
    pub w: MatrixSpec,
    /// Defaults to the zero vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_hat: Option<Vec<f64>>,
}

impl SystemSpec {
    pub fn to_model(&self) -> Result<SystemModel> {
        let h = self.h.to_matrix("system.H")?;
        let c = self.c.to_matrix("system.C")?;
        let w = self.w.to_matrix("system.W")?;
        let x0 = match &self.x0_hat {
            Some(x) => Vector::from_column_slice(x),
            None => Vector::zeros(h.nrows()),
        };
        SystemModel::new(h, c, w, x0)
    }

    pub fn from_model(system: &SystemModel) -> Self {
        Self {
            h: MatrixSpec::from_matrix(system.h()),
            c: MatrixSpec::from_matrix(system.c()),
            w: MatrixSpec::from_matrix(system.w()),
            x0_hat: Some(system.x0_hat().iter().copied().collect()),
        }
    }
}

/// A single scale for every channel, or one per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Uniform(f64),
    PerChannel(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacySpec {
    pub epsilon: f64,
    pub delta: f64,
    #[serde(rename = "adjacency_B")]
    pub adjacency_b: f64,
    /// Overrides the minimal mechanism noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<SigmaSpec>,
}

impl PrivacySpec {
    /// Calibrates the mechanism for outputs `y = Cx`, then applies any override.
    pub fn to_privacy(&self, c: &Matrix) -> Result<PrivacyConfig> {
        let base = PrivacyConfig::calibrate(self.epsilon, self.delta, self.adjacency_b, c)?;
        match &self.sigma {
            None => Ok(base),
            Some(SigmaSpec::Uniform(s)) => base.with_sigma(vec![*s; c.nrows()]),
            Some(SigmaSpec::PerChannel(s)) => base.with_sigma(s.clone()),
        }
    }

    pub fn from_privacy(p: &PrivacyConfig) -> Self {
        Self {
            epsilon: p.epsilon,
            delta: p.delta,
            adjacency_b: p.adjacency_b,
            sigma: Some(SigmaSpec::PerChannel(p.sigma.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(rename = "horizon_T")]
    pub horizon_t: usize,
    pub trials: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    /// Covariance of the true initial state around `x0_hat`; absent means `x(0) = x0_hat`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_cov: Option<MatrixSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<CalibrationKind>,
    #[serde(rename = "B_l")]
    pub b_l: f64,
    #[serde(rename = "B_u")]
    pub b_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub id: String,
    pub system: SystemSpec,
    pub privacy: PrivacySpec,
}

impl AgentEntry {
    pub fn to_agent(&self) -> Result<AgentSpec> {
        let wrap = |e: Error| Error::Agent {
            id: self.id.clone(),
            source: Box::new(e),
        };
        let system = self.system.to_model().map_err(wrap)?;
        let privacy = self.privacy.to_privacy(system.c()).map_err(wrap)?;
        Ok(AgentSpec {
            id: self.id.clone(),
            system,
            privacy,
        })
    }

    pub fn from_agent(agent: &AgentSpec) -> Self {
        Self {
            id: agent.id.clone(),
            system: SystemSpec::from_model(&agent.system),
            privacy: PrivacySpec::from_privacy(&agent.privacy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<AgentEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub privacy: Option<PrivacySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationSpec>,
}

/// The system described by a config, with its noise.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Single { system: SystemModel, privacy: PrivacyConfig },
    Network(NetworkModel),
}

impl Model {
    pub fn system(&self) -> &SystemModel {
        match self {
            Model::Single { system, .. } => system,
            Model::Network(net) => &net.system,
        }
    }

    pub fn sigma(&self) -> Vec<f64> {
        match self {
            Model::Single { privacy, .. } => privacy.sigma.clone(),
            Model::Network(net) => net.sigma(),
        }
    }
}

impl ConfigFile {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_network(network: &NetworkModel) -> Self {
        Self {
            system: None,
            agents: Some(network.agents.iter().map(AgentEntry::from_agent).collect()),
            privacy: None,
            simulation: None,
            calibration: None,
        }
    }

    fn privacy_section(&self) -> Result<&PrivacySpec> {
        self.privacy
            .as_ref()
            .ok_or_else(|| Error::Config("missing `privacy` section".into()))
    }

    /// Resolves `system` + `privacy`, or `agents`.
    pub fn model(&self) -> Result<Model> {
        match (&self.system, &self.agents) {
            (Some(_), Some(_)) => Err(Error::Config("give either `system` or `agents`, not both".into())),
            (None, None) => Err(Error::Config("missing `system` (or `agents`) section".into())),
            (Some(spec), None) => {
                let system = spec.to_model()?;
                let privacy = self.privacy_section()?.to_privacy(system.c())?;
                Ok(Model::Single { system, privacy })
            }
            (None, Some(entries)) => {
                if self.privacy.is_some() {
                    return Err(Error::Config("network configs carry `privacy` per agent".into()));
                }
                let agents = entries.iter().map(AgentEntry::to_agent).collect::<Result<Vec<_>>>()?;
                Ok(Model::Network(network::compose(agents)?))
            }
        }
    }

    /// Resolves the network for `compose`; a plain `system` is not accepted here.
    pub fn network(&self) -> Result<NetworkModel> {
        if self.agents.is_none() {
            return Err(Error::Config("missing `agents` section".into()));
        }
        match self.model()? {
            Model::Network(net) => Ok(net),
            Model::Single { .. } => unreachable!("agents present"),
        }
    }

    /// Calibration target; `kind_override` wins over the config's `kind`.
    pub fn calibration_target(&self, kind_override: Option<CalibrationKind>) -> Result<CalibrationTarget> {
        let spec = self
            .calibration
            .as_ref()
            .ok_or_else(|| Error::Config("missing `calibration` section".into()))?;
        let privacy = self.privacy_section()?;
        let kind = kind_override
            .or(spec.kind)
            .ok_or_else(|| Error::Config("calibration kind not given (set `calibration.kind` or --kind)".into()))?;
        let target = CalibrationTarget {
            kind,
            b_l: spec.b_l,
            b_u: spec.b_u,
            delta: privacy.delta,
            adjacency_b: privacy.adjacency_b,
        };
        target.validate()?;
        Ok(target)
    }

    pub fn simulation_config(&self, model: &Model, seed_override: Option<u64>) -> Result<SimulationConfig> {
        let spec = self
            .simulation
            .as_ref()
            .ok_or_else(|| Error::Config("missing `simulation` section".into()))?;
        let system = model.system().clone();
        let initial_state = match &spec.x0_cov {
            Some(cov) => InitialState::Gaussian(cov.to_matrix("simulation.x0_cov")?),
            None => InitialState::AtMean,
        };
        Ok(SimulationConfig {
            system,
            sigma: model.sigma(),
            horizon: spec.horizon_t,
            trials: spec.trials,
            seed: seed_override.unwrap_or(spec.seed),
            initial_state,
            burn_in: spec.burn_in.unwrap_or(DEFAULT_BURN_IN),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CASE: &str = r#"{
        "system": {
            "H": {"rows": 2, "cols": 2, "data": [[1, 1], [0, 1]]},
            "C": {"rows": 2, "cols": 2, "data": [[1, 0], [0, 1]]},
            "W": {"rows": 2, "cols": 2, "data": [[10, 0], [0, 10]]},
            "x0_hat": [0, 0]
        },
        "privacy": {"epsilon": 1.0986122886681098, "delta": 0.001, "adjacency_B": 1.0},
        "simulation": {"horizon_T": 100, "trials": 10, "seed": 42},
        "calibration": {"kind": "apriori", "B_l": 21.0, "B_u": 2000.0}
    }"#;

    #[test]
    fn parses_case_study() {
        let cfg = ConfigFile::from_json_str(CASE).unwrap();
        let model = cfg.model().unwrap();
        assert_eq!(model.system().state_dim(), 2);
        let sigma = model.sigma();
        assert!((sigma[0] - 2.9663).abs() < 5e-3);
        let target = cfg.calibration_target(None).unwrap();
        assert_eq!(target.kind, CalibrationKind::Apriori);
        assert_eq!(cfg.calibration_target(Some(CalibrationKind::Aposteriori)).unwrap().kind, CalibrationKind::Aposteriori);
        let sim = cfg.simulation_config(&model, Some(7)).unwrap();
        assert_eq!((sim.horizon, sim.trials, sim.seed), (100, 10, 7));
    }

    #[test]
    fn sigma_override_forms() {
        let mut cfg = ConfigFile::from_json_str(CASE).unwrap();
        cfg.privacy.as_mut().unwrap().sigma = Some(SigmaSpec::Uniform(2.96));
        assert_eq!(cfg.model().unwrap().sigma(), vec![2.96, 2.96]);
        let text = CASE.replace(r#""adjacency_B": 1.0}"#, r#""adjacency_B": 1.0, "sigma": [1.0, 2.0]}"#);
        assert_eq!(ConfigFile::from_json_str(&text).unwrap().model().unwrap().sigma(), vec![1.0, 2.0]);
    }

    #[test]
    fn rejects_unknown_keys_and_shape_errors() {
        let text = CASE.replace(r#""seed": 42"#, r#""seed": 42, "color": "red""#);
        let err = ConfigFile::from_json_str(&text).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");

        let text = CASE.replace(r#""rows": 2, "cols": 2, "data": [[1, 1], [0, 1]]"#, r#""rows": 3, "cols": 2, "data": [[1, 1], [0, 1]]"#);
        let err = ConfigFile::from_json_str(&text).unwrap().model().unwrap_err();
        assert!(err.to_string().contains("system.H"), "{err}");

        let err = ConfigFile::from_json_str("{ \"system\": ").unwrap_err();
        assert!(err.to_string().contains("line 1 column"), "{err}");
    }

    #[test]
    fn missing_sections() {
        let cfg = ConfigFile::from_json_str(r#"{"simulation": {"horizon_T": 1, "trials": 1, "seed": 0}}"#).unwrap();
        assert!(cfg.model().is_err());
        assert!(cfg.calibration_target(None).is_err());
        assert!(cfg.network().is_err());
    }

    #[test]
    fn network_round_trip() {
        let text = r#"{"agents": [
            {"id": "a", "system": {"H": {"rows":1,"cols":1,"data":[[0.9]]}, "C": {"rows":1,"cols":1,"data":[[1]]},
                                   "W": {"rows":1,"cols":1,"data":[[1]]}}, "privacy": {"epsilon": 1, "delta": 0.01, "adjacency_B": 1}},
            {"id": "b", "system": {"H": {"rows":1,"cols":1,"data":[[0.5]]}, "C": {"rows":1,"cols":1,"data":[[2]]},
                                   "W": {"rows":1,"cols":1,"data":[[3]]}}, "privacy": {"epsilon": 0.5, "delta": 0.001, "adjacency_B": 2}}
        ]}"#;
        let net = ConfigFile::from_json_str(text).unwrap().network().unwrap();
        let again = ConfigFile::from_json_str(&ConfigFile::from_network(&net).to_json_string())
            .unwrap()
            .network()
            .unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn agent_errors_name_the_agent() {
        let text = r#"{"agents": [
            {"id": "broken", "system": {"H": {"rows":1,"cols":1,"data":[[0.9]]}, "C": {"rows":1,"cols":1,"data":[[1]]},
                                   "W": {"rows":1,"cols":1,"data":[[-1]]}}, "privacy": {"epsilon": 1, "delta": 0.01, "adjacency_B": 1}}
        ]}"#;
        let err = ConfigFile::from_json_str(text).unwrap().network().unwrap_err();
        assert!(err.to_string().contains("broken"), "{err}");
        let err = ConfigFile::from_json_str(r#"{"agents": []}"#).unwrap().network().unwrap_err();
        assert_eq!(err, Error::EmptyNetwork);
    }

    fn matrix_spec(n: usize) -> impl Strategy<Value = MatrixSpec> {
        prop::collection::vec(prop::collection::vec(-1e3..1e3f64, n), n).prop_map(move |data| MatrixSpec {
            rows: n,
            cols: n,
            data,
        })
    }

    proptest! {
        #[test]
        fn parse_serialize_parse_is_identity(
            h in matrix_spec(2),
            c in matrix_spec(2),
            w in matrix_spec(2),
            eps in 0.01..10.0f64,
            delta in 1e-5..0.4f64,
            seed in any::<u64>(),
            sigma in prop::option::of(0.1..10.0f64),
        ) {
            let cfg = ConfigFile {
                system: Some(SystemSpec { h, c, w, x0_hat: Some(vec![0.5, -1.5]) }),
                agents: None,
                privacy: Some(PrivacySpec { epsilon: eps, delta, adjacency_b: 1.0, sigma: sigma.map(SigmaSpec::Uniform) }),
                simulation: Some(SimulationSpec { horizon_t: 100, trials: 3, seed, burn_in: None, x0_cov: None }),
                calibration: Some(CalibrationSpec { kind: Some(CalibrationKind::Aposteriori), b_l: 1.0, b_u: 2.0 }),
            };
            let once = ConfigFile::from_json_str(&cfg.to_json_string()).unwrap();
            let twice = ConfigFile::from_json_str(&once.to_json_string()).unwrap();
            prop_assert_eq!(&once, &cfg);
            prop_assert_eq!(&twice, &once);
        }
    }
}
