//! Declarative experiment configuration: one JSON document per experiment,
//! every block defaulted, unknown keys rejected, and a content hash that
//! ignores key order and whether defaults were spelled out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{generate_bio_shifts, generate_cartpole_grid, simulate_from, Dataset, DatasetEntry, SamplingSpec, SimSpec};
use crate::evaluation::{axis, HeatmapSpec, Rect, SweepSpec, Window, ANGLE_MAX};
use crate::node::{TrainSpec, Warmup};
use crate::symreg::SrConfig;
use crate::systems::{bio_steady_state, BioParams, CartPoleParams, SystemSpec};
use crate::util::{derive_seed, sha256_hex};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    fn invalid(path: &str, message: impl ToString) -> Self {
        ConfigError::Invalid {
            path: path.to_string(),
            message: message.to_string(),
        }
    }

    /// Dotted path of the offending key.
    pub fn key_path(&self) -> Option<&str> {
        match self {
            ConfigError::Parse { path, .. } | ConfigError::Invalid { path, .. } => Some(path),
            ConfigError::Io { .. } => None,
        }
    }
}

/// Initial conditions of the ground-truth runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConditions {
    /// Every (angle, speed) combination except the excluded pairs.
    Grid {
        angles: Vec<f64>,
        speeds: Vec<f64>,
        #[serde(default)]
        exclude: Vec<[f64; 2]>,
    },
    /// Steady states of these pre-shift nutrient qualities, evolved under
    /// the system's `nu`.
    Shifts(Vec<f64>),
    /// Explicit initial states.
    States(Vec<Vec<f64>>),
}

impl InitialConditions {
    /// `(label, state)` per initial condition.
    pub fn states(&self, system: &SystemSpec) -> Result<Vec<(String, Vec<f64>)>, ConfigError> {
        match (self, system) {
            (InitialConditions::Grid { angles, speeds, exclude }, SystemSpec::Cartpole { .. }) => {
                let mut out = Vec::new();
                for &a in angles {
                    for &s in speeds {
                        if !exclude.iter().any(|e| (e[0] - a).abs() < 1e-9 && (e[1] - s).abs() < 1e-9) {
                            out.push((format!("theta={a}_omega={s}"), vec![a, s]));
                        }
                    }
                }
                Ok(out)
            }
            (InitialConditions::Shifts(nus), SystemSpec::Bio { params }) => nus
                .iter()
                .map(|&nu| {
                    let y = bio_steady_state(nu, params).map_err(|e| ConfigError::invalid("shifts", e))?;
                    Ok((format!("nu_i={nu}"), y.to_array().to_vec()))
                })
                .collect(),
            (InitialConditions::States(states), system) => {
                if let Some(bad) = states.iter().find(|s| s.len() != system.dim()) {
                    return Err(ConfigError::invalid(
                        "states",
                        format!("state of length {} for a {}-dimensional system", bad.len(), system.dim()),
                    ));
                }
                Ok(states
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (format!("state{i}"), s.clone()))
                    .collect())
            }
            (InitialConditions::Grid { .. }, _) => Err(ConfigError::invalid("grid", "an angle/speed grid needs the cartpole system")),
            (InitialConditions::Shifts(_), _) => Err(ConfigError::invalid("shifts", "nutrient shifts need the bio system")),
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            InitialConditions::Grid { angles, speeds, .. } => angles.is_empty() || speeds.is_empty(),
            InitialConditions::Shifts(v) => v.is_empty(),
            InitialConditions::States(v) => v.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationBlock {
    /// Defaults to 10 s for the cart-pole and 8 h for the bio model.
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub substeps: Option<usize>,
    /// Defaults to the 35-point cart-pole grid or the single 2.53 shift.
    pub initial: Option<InitialConditions>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseBlock {
    /// Relative half-width of the uniform multiplicative noise.
    pub magnitude: f64,
}

impl Default for NoiseBlock {
    fn default() -> Self {
        Self { magnitude: 0.05 }
    }
}

/// Trajectories compared against the clean ground truth over a long
/// horizon, with one error curve per initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvesSpec {
    pub initial: InitialConditions,
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub windows: Vec<Window>,
}

fn default_dt() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseFieldSpec {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationBlock {
    pub heatmap: Option<HeatmapSpec>,
    /// L-infinity distance under which a heatmap cell counts as lying on a
    /// training trajectory.
    pub proximity_tol: f64,
    pub curves: Option<CurvesSpec>,
    pub phase_field: Option<PhaseFieldSpec>,
    pub sweep: Option<SweepSpec>,
}

impl Default for EvaluationBlock {
    fn default() -> Self {
        Self {
            heatmap: None,
            proximity_tol: 0.2,
            curves: None,
            phase_field: None,
            sweep: None,
        }
    }
}

/// Where the regression data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SrSource {
    /// First trajectory of the observed dataset.
    #[default]
    Dataset,
    /// Rollout of the trained model from the steady state of `shift`.
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrBlock {
    pub search: SrConfig,
    pub source: SrSource,
    /// Pre-shift nutrient quality of the model rollout.
    pub shift: f64,
    pub t_end: f64,
    pub dt: f64,
    pub drop_head: usize,
    pub drop_tail: usize,
}

impl Default for SrBlock {
    fn default() -> Self {
        Self {
            search: SrConfig::default(),
            source: SrSource::Dataset,
            shift: 2.53,
            t_end: 8.0,
            dt: 0.01,
            drop_head: 10,
            drop_tail: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_system")]
    pub system: SystemSpec,
    #[serde(default)]
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub noise: NoiseBlock,
    /// Observation window and rate; absent means every simulated point.
    #[serde(default)]
    pub sampling: Option<SamplingSpec>,
    #[serde(default)]
    pub training: Option<TrainSpec>,
    #[serde(default)]
    pub evaluation: EvaluationBlock,
    #[serde(default)]
    pub sr: Option<SrBlock>,
}

fn default_system() -> SystemSpec {
    SystemSpec::Bio {
        params: BioParams::default(),
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            seed: 0,
            system: default_system(),
            simulation: SimulationBlock::default(),
            noise: NoiseBlock::default(),
            sampling: None,
            training: None,
            evaluation: EvaluationBlock::default(),
            sr: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates. Errors carry the dotted path of the offending key.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::Parse {
                path: if path == "." { "(root)".into() } else { path },
                message: e.into_inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Pretty JSON with every default spelled out.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// SHA-256 of the canonical form: defaults filled in, keys sorted.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        sha256_hex(value.to_string().as_bytes())
    }

    pub fn sim_spec(&self) -> SimSpec {
        let base = match self.system {
            SystemSpec::Cartpole { .. } => SimSpec::cartpole(),
            SystemSpec::Bio { .. } => SimSpec::bio(),
        };
        SimSpec {
            t_end: self.simulation.t_end.unwrap_or(base.t_end),
            dt: self.simulation.dt.unwrap_or(base.dt),
            substeps: self.simulation.substeps.unwrap_or(base.substeps),
        }
    }

    pub fn initial_conditions(&self) -> InitialConditions {
        self.simulation.initial.clone().unwrap_or_else(|| match self.system {
            SystemSpec::Cartpole { .. } => cartpole_grid_35(),
            SystemSpec::Bio { .. } => InitialConditions::Shifts(vec![2.53]),
        })
    }

    /// Training spec with its seed derived from the top-level seed.
    pub fn train_spec(&self) -> Option<TrainSpec> {
        self.training.as_ref().map(|t| TrainSpec {
            seed: derive_seed(self.seed, "train", t.seed),
            ..t.clone()
        })
    }

    /// Search settings with the seed derived from the top-level seed; one
    /// stream per regressed component.
    pub fn sr_config(&self, component: usize) -> Option<SrConfig> {
        self.sr.as_ref().map(|b| SrConfig {
            seed: derive_seed(self.seed, &format!("sr{component}"), b.search.seed),
            ..b.search.clone()
        })
    }

    pub fn noise_seed(&self) -> u64 {
        derive_seed(self.seed, "observe", 0)
    }

    pub fn sweep_seed(&self) -> u64 {
        derive_seed(self.seed, "sweep", 0)
    }

    /// Clean ground-truth trajectories for the configured initial conditions.
    pub fn ground_truth(&self) -> Result<Dataset, ConfigError> {
        let sim = self.sim_spec();
        let init = self.initial_conditions();
        let wrap = |e: crate::dataset::DatasetError| ConfigError::invalid("simulation", e);
        let mut ds = match (&init, &self.system) {
            (InitialConditions::Grid { angles, speeds, exclude }, SystemSpec::Cartpole { params }) => {
                let ex: Vec<(f64, f64)> = exclude.iter().map(|e| (e[0], e[1])).collect();
                generate_cartpole_grid(angles, speeds, &ex, &sim, params).map_err(wrap)?.0
            }
            (InitialConditions::Shifts(nus), SystemSpec::Bio { params }) => generate_bio_shifts(nus, params, &sim).map_err(wrap)?,
            _ => {
                let mut ds = Dataset::new(&self.system);
                for (label, y0) in init.states(&self.system).map_err(|e| prefix("simulation.initial", e))? {
                    let traj = simulate_from(&self.system, &y0, &sim).map_err(wrap)?;
                    ds.entries.push(DatasetEntry {
                        label,
                        initial: y0,
                        noise_seed: None,
                        traj,
                    });
                }
                ds
            }
        };
        ds.provenance.config_hash = self.hash();
        ds.provenance.seed = self.seed;
        Ok(ds)
    }

    /// Subsampled, noise-corrupted copy of `clean` plus sampling warnings.
    pub fn observe(&self, clean: &Dataset) -> Result<(Dataset, Vec<String>), ConfigError> {
        let sampling = self.sampling.unwrap_or_else(|| {
            let sim = self.sim_spec();
            SamplingSpec::new(0.0, sim.t_end, 1.0 / sim.dt)
        });
        clean
            .observe(&sampling, self.noise.magnitude, self.noise_seed())
            .map_err(|e| ConfigError::invalid("sampling", e))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.system.validate().map_err(|e| ConfigError::invalid("system", e))?;
        let sim = self.sim_spec();
        sim.validate().map_err(|e| ConfigError::invalid("simulation", e))?;
        let init = self.initial_conditions();
        if init.is_empty() {
            return Err(ConfigError::invalid("simulation.initial", "no initial conditions"));
        }
        let states = init.states(&self.system).map_err(|e| prefix("simulation.initial", e))?;
        if states.is_empty() {
            return Err(ConfigError::invalid("simulation.initial", "every initial condition is excluded"));
        }
        if !(0.0..1.0).contains(&self.noise.magnitude) {
            return Err(ConfigError::invalid("noise.magnitude", "must lie in [0, 1)"));
        }
        if let Some(s) = &self.sampling {
            s.validate().map_err(|e| ConfigError::invalid("sampling", e))?;
            if s.t_end > sim.t_end + 1e-9 {
                return Err(ConfigError::invalid("sampling.t_end", "beyond the simulated horizon"));
            }
        }
        if let Some(t) = &self.training {
            t.validate(states.len()).map_err(|e| ConfigError::invalid("training", e))?;
        }
        let ev = &self.evaluation;
        let planar = matches!(self.system, SystemSpec::Cartpole { .. });
        if let Some(h) = &ev.heatmap {
            if !planar {
                return Err(ConfigError::invalid("evaluation.heatmap", "heatmaps need the cartpole system"));
            }
            if h.angles.is_empty() || h.speeds.is_empty() || !(h.dt > 0.0) || h.window.t_end <= h.window.t_start {
                return Err(ConfigError::invalid("evaluation.heatmap", "empty grid or bad window"));
            }
        }
        if !(ev.proximity_tol >= 0.0) {
            return Err(ConfigError::invalid("evaluation.proximity_tol", "must be non-negative"));
        }
        if let Some(c) = &ev.curves {
            c.initial.states(&self.system).map_err(|e| prefix("evaluation.curves.initial", e))?;
            if c.initial.is_empty() || !(c.t_end > 0.0) || !(c.dt > 0.0) {
                return Err(ConfigError::invalid("evaluation.curves", "needs initial conditions and a positive horizon"));
            }
        }
        if let Some(p) = &ev.phase_field {
            if !planar || p.resolution == 0 {
                return Err(ConfigError::invalid("evaluation.phase_field", "needs the cartpole system and resolution > 0"));
            }
        }
        if let Some(s) = &ev.sweep {
            if planar {
                return Err(ConfigError::invalid("evaluation.sweep", "the sweep needs the bio system"));
            }
            s.validate().map_err(|e| ConfigError::invalid("evaluation.sweep", e))?;
        }
        if let Some(sr) = &self.sr {
            if planar {
                return Err(ConfigError::invalid("sr", "symbolic regression targets the bio system"));
            }
            sr.search.validate().map_err(|e| ConfigError::invalid("sr.search", e))?;
            let points = match sr.source {
                SrSource::Model => {
                    if self.training.is_none() {
                        return Err(ConfigError::invalid("sr.source", "model source needs a training block"));
                    }
                    if !(sr.dt > 0.0) || !(sr.t_end > 0.0) {
                        return Err(ConfigError::invalid("sr", "t_end and dt must be positive"));
                    }
                    (sr.t_end / sr.dt).round() as usize + 1
                }
                SrSource::Dataset => match &self.sampling {
                    Some(s) => s.times().len(),
                    None => (sim.t_end / sim.dt).round() as usize + 1,
                },
            };
            if points < sr.drop_head + sr.drop_tail + 3 {
                return Err(ConfigError::invalid("sr.drop_tail", "truncation leaves fewer than 3 rows"));
            }
        }
        Ok(())
    }
}

fn prefix(base: &str, e: ConfigError) -> ConfigError {
    match e {
        ConfigError::Invalid { path, message } => ConfigError::Invalid {
            path: format!("{base}.{path}"),
            message,
        },
        other => other,
    }
}

fn cartpole_grid_35() -> InitialConditions {
    InitialConditions::Grid {
        angles: vec![0.0, 0.6, 1.2, 1.8, 2.4, ANGLE_MAX],
        speeds: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
        exclude: vec![[0.0, 0.0]],
    }
}

/// Training rectangle of the smaller cart-pole model.
pub fn model_b_rect() -> Rect {
    Rect {
        x_min: 0.6,
        x_max: 1.4,
        y_min: 1.0,
        y_max: 2.5,
    }
}

/// Pre-shift nutrient qualities `0.36 + 0.62 k`, `k = 0..12`.
pub fn training_shifts() -> Vec<f64> {
    (0..12).map(|k| round6(0.36 + 0.62 * k as f64)).collect()
}

/// Evaluation shifts `0.98 + 0.31 k`, `k = 0..19`.
pub fn evaluation_shifts() -> Vec<f64> {
    (0..19).map(|k| round6(0.98 + 0.31 * k as f64)).collect()
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

pub const PRESET_NAMES: [&str; 8] = [
    "cartpole_modelA",
    "cartpole_modelB",
    "bio_model2A",
    "bio_freq_sweep",
    "bio_sr_groundtruth",
    "bio_sr_groundtruth_noisy",
    "bio_sr_node",
    "bio_sr_node_noisy",
];

fn bio_warmup() -> Warmup {
    Warmup {
        iterations: 500,
        data_fraction: 0.1,
        lr: 0.003,
    }
}

/// The shipped experiment presets.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let cartpole = SystemSpec::Cartpole {
        params: CartPoleParams::default(),
    };
    let first_second = SamplingSpec::new(0.0, 1.0, 25.0);
    let base = ExperimentConfig {
        name: name.to_string(),
        ..ExperimentConfig::default()
    };
    let cfg = match name {
        "cartpole_modelA" => ExperimentConfig {
            system: cartpole,
            simulation: SimulationBlock {
                initial: Some(cartpole_grid_35()),
                ..Default::default()
            },
            sampling: Some(first_second),
            training: Some(TrainSpec::new(100_000, 0.003, 16, 0)),
            evaluation: EvaluationBlock {
                curves: Some(CurvesSpec {
                    initial: InitialConditions::States(vec![vec![1.4, 5.0]]),
                    t_end: 5.0,
                    dt: 0.01,
                    windows: vec![Window::new(0.0, 1.0), Window::new(0.0, 5.0)],
                }),
                ..Default::default()
            },
            ..base
        },
        "cartpole_modelB" => {
            let rect = model_b_rect();
            ExperimentConfig {
                system: cartpole,
                simulation: SimulationBlock {
                    initial: Some(InitialConditions::Grid {
                        angles: axis(rect.x_min, rect.x_max, 0.2),
                        speeds: axis(rect.y_min, rect.y_max, 0.5),
                        exclude: Vec::new(),
                    }),
                    ..Default::default()
                },
                sampling: Some(first_second),
                training: Some(TrainSpec::new(100_000, 0.003, 20, 0)),
                evaluation: EvaluationBlock {
                    heatmap: Some(HeatmapSpec {
                        training_rect: Some(rect),
                        ..HeatmapSpec::default()
                    }),
                    phase_field: Some(PhaseFieldSpec {
                        x_range: [0.0, ANGLE_MAX],
                        y_range: [0.0, 10.0],
                        resolution: 41,
                    }),
                    ..Default::default()
                },
                ..base
            }
        }
        "bio_model2A" => ExperimentConfig {
            simulation: SimulationBlock {
                initial: Some(InitialConditions::Shifts(vec![2.22, 3.465])),
                ..Default::default()
            },
            sampling: Some(SamplingSpec::new(0.0, 4.0, 33.0)),
            training: Some(TrainSpec::new(100_000, 0.001, 1, 0).with_warmup(bio_warmup())),
            evaluation: EvaluationBlock {
                curves: Some(CurvesSpec {
                    initial: InitialConditions::Shifts(vec![5.95]),
                    t_end: 8.0,
                    dt: 0.01,
                    windows: vec![Window::new(0.0, 4.0), Window::new(0.0, 8.0)],
                }),
                ..Default::default()
            },
            ..base
        },
        "bio_freq_sweep" => ExperimentConfig {
            simulation: SimulationBlock {
                initial: Some(InitialConditions::Shifts(training_shifts())),
                ..Default::default()
            },
            evaluation: EvaluationBlock {
                sweep: Some(SweepSpec {
                    rates: vec![5.0, 10.0, 20.0, 33.0, 50.0, 100.0],
                    train_shifts: training_shifts(),
                    eval_shifts: evaluation_shifts(),
                    repeats: 10,
                    train: TrainSpec::new(100_000, 0.003, 10, 0).with_warmup(bio_warmup()),
                    train_hours: 1.0,
                    windows: vec![Window::new(0.0, 1.0), Window::new(0.0, 8.0)],
                    noise: 0.05,
                    params: BioParams::default(),
                    sim: SimSpec::bio(),
                    pin_train_seed: false,
                    pin_noise_seed: false,
                }),
                ..Default::default()
            },
            ..base
        },
        "bio_sr_groundtruth" | "bio_sr_groundtruth_noisy" => ExperimentConfig {
            simulation: SimulationBlock {
                initial: Some(InitialConditions::Shifts(vec![2.53])),
                ..Default::default()
            },
            noise: NoiseBlock {
                magnitude: if name.ends_with("_noisy") { 0.05 } else { 0.0 },
            },
            sr: Some(SrBlock::default()),
            ..base
        },
        "bio_sr_node" | "bio_sr_node_noisy" => ExperimentConfig {
            simulation: SimulationBlock {
                initial: Some(InitialConditions::Shifts(training_shifts())),
                ..Default::default()
            },
            noise: NoiseBlock {
                magnitude: if name.ends_with("_noisy") { 0.05 } else { 0.0 },
            },
            sampling: Some(SamplingSpec::new(0.0, 2.0, 10.0)),
            training: Some(TrainSpec::new(150_000, 0.003, 10, 0).with_warmup(bio_warmup())),
            sr: Some(SrBlock {
                source: SrSource::Model,
                ..SrBlock::default()
            }),
            ..base
        },
        _ => return None,
    };
    Some(cfg)
}
