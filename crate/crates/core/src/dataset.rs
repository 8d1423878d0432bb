//! Dataset generation, observation (subsampling + noise) and persistence.
//!
//! On disk a dataset is a directory holding `manifest.json` and one CSV per
//! trajectory (`t,<columns...>`, 17 significant digits).

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ode::{integrate_rk4_substeps, OdeError, Trajectory, TrajectoryMeta};
use crate::systems::{bio_steady_state, BioParams, CartPoleParams, SystemError, SystemSpec};
use crate::util::{derive_seed, fmt_f64, rng_from_seed, write_atomic};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error("invalid specification: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Simulation horizon and integration step, starting at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub t_end: f64,
    /// Output (observation grid) step.
    pub dt: f64,
    /// RK4 steps per output step.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_substeps() -> usize {
    10
}

impl SimSpec {
    pub fn new(t_end: f64, dt: f64) -> Self {
        Self {
            t_end,
            dt,
            substeps: default_substeps(),
        }
    }

    pub fn cartpole() -> Self {
        Self::new(10.0, 0.01)
    }

    pub fn bio() -> Self {
        Self::new(8.0, 0.01)
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = (self.t_end / self.dt).round() as usize;
        (0..=n).map(|i| i as f64 * self.dt).collect()
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(self.dt > 0.0 && self.t_end > 0.0 && self.t_end >= self.dt && self.substeps >= 1) {
            return Err(DatasetError::Invalid(format!(
                "simulation needs 0 < dt <= t_end, got dt = {}, t_end = {}",
                self.dt, self.t_end
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// `x -> x (1 + u)`, `u ~ U(-magnitude, magnitude)`.
    #[default]
    UniformRelative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub magnitude: f64,
    #[serde(default)]
    pub distribution: NoiseDistribution,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(0.0..1.0).contains(&self.magnitude) {
            return Err(DatasetError::Invalid(format!(
                "noise magnitude must be in [0, 1), got {}",
                self.magnitude
            )));
        }
        Ok(())
    }
}

/// Observation window and rate. With `count` set, exactly that many points
/// are spread over the window instead of using `rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    pub t_start: f64,
    pub t_end: f64,
    /// Samples per unit time.
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default = "yes")]
    pub include_t0: bool,
}

fn yes() -> bool {
    true
}

impl SamplingSpec {
    pub fn new(t_start: f64, t_end: f64, rate: f64) -> Self {
        Self {
            t_start,
            t_end,
            rate,
            count: None,
            include_t0: true,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(self.t_end > self.t_start) {
            return Err(DatasetError::Invalid("sampling window is empty".into()));
        }
        match self.count {
            Some(0) => Err(DatasetError::Invalid("sample count must be positive".into())),
            Some(_) => Ok(()),
            None if self.rate > 0.0 && self.rate.is_finite() => Ok(()),
            None => Err(DatasetError::Invalid(format!("sampling rate must be > 0, got {}", self.rate))),
        }
    }

    /// Requested observation times (before snapping to a grid).
    pub fn times(&self) -> Vec<f64> {
        let span = self.t_end - self.t_start;
        let first = usize::from(!self.include_t0);
        match self.count {
            Some(count) => {
                if self.include_t0 {
                    if count == 1 {
                        return vec![self.t_start];
                    }
                    let step = span / (count - 1) as f64;
                    (0..count).map(|k| self.t_start + k as f64 * step).collect()
                } else {
                    let step = span / count as f64;
                    (1..=count).map(|k| self.t_start + k as f64 * step).collect()
                }
            }
            None => {
                let n = (span * self.rate + 1e-9).floor() as usize;
                (first..=n).map(|k| self.t_start + k as f64 / self.rate).collect()
            }
        }
    }
}

/// One trajectory of a dataset with its clean initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub label: String,
    pub initial: Vec<f64>,
    pub noise_seed: Option<u64>,
    pub traj: Trajectory,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub system: String,
    pub columns: Vec<String>,
    pub entries: Vec<DatasetEntry>,
    pub sampling: Option<SamplingSpec>,
    pub noise_magnitude: Option<f64>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(system: &SystemSpec) -> Self {
        Self {
            system: system.name().to_string(),
            columns: system.columns(),
            entries: Vec::new(),
            sampling: None,
            noise_magnitude: None,
            provenance: Provenance::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn trajectories(&self) -> Vec<Trajectory> {
        self.entries.iter().map(|e| e.traj.clone()).collect()
    }

    /// Subsamples and then noise-corrupts every trajectory. Each trajectory
    /// gets its own noise stream derived from `base_seed` and its index.
    pub fn observe(
        &self,
        sampling: &SamplingSpec,
        noise_magnitude: f64,
        base_seed: u64,
    ) -> Result<(Dataset, Vec<String>), DatasetError> {
        sampling.validate()?;
        let mut warnings = Vec::new();
        let mut out = Dataset {
            entries: Vec::with_capacity(self.entries.len()),
            sampling: Some(*sampling),
            noise_magnitude: Some(noise_magnitude),
            ..self.clone()
        };
        out.entries.clear();
        for (i, e) in self.entries.iter().enumerate() {
            let (sub, warn) = subsample(&e.traj, sampling)?;
            if let Some(w) = warn {
                warnings.push(format!("{}: {w}", e.label));
            }
            let seed = derive_seed(base_seed, "noise", i as u64);
            let spec = NoiseSpec {
                magnitude: noise_magnitude,
                distribution: NoiseDistribution::UniformRelative,
                seed,
            };
            let noisy = add_noise(&sub, &spec)?;
            out.entries.push(DatasetEntry {
                label: e.label.clone(),
                initial: e.initial.clone(),
                noise_seed: Some(seed),
                traj: noisy,
            });
        }
        Ok((out, warnings))
    }
}

fn simulate(system: &SystemSpec, y0: &[f64], sim: &SimSpec, label: String) -> Result<Trajectory, DatasetError> {
    let field = system.field();
    let traj = integrate_rk4_substeps(field.as_ref(), y0, &sim.grid(), sim.substeps)?;
    Ok(traj.with_meta(TrajectoryMeta {
        system: system.name().to_string(),
        label,
        seed: None,
    }))
}

/// Clean ground-truth trajectory from an arbitrary initial state.
pub fn simulate_from(system: &SystemSpec, y0: &[f64], sim: &SimSpec) -> Result<Trajectory, DatasetError> {
    sim.validate()?;
    simulate(system, y0, sim, String::new())
}

fn same_pair(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9
}

/// One clean trajectory per (angle, speed) pair not listed in `exclude`.
/// The returned warnings flag an empty result.
pub fn generate_cartpole_grid(
    angles: &[f64],
    speeds: &[f64],
    exclude: &[(f64, f64)],
    sim: &SimSpec,
    params: &CartPoleParams,
) -> Result<(Dataset, Vec<String>), DatasetError> {
    if angles.is_empty() || speeds.is_empty() {
        return Err(DatasetError::Invalid("angle and speed lists must be non-empty".into()));
    }
    sim.validate()?;
    params.validate()?;
    let system = SystemSpec::Cartpole { params: *params };
    let mut ds = Dataset::new(&system);
    for &theta in angles {
        for &omega in speeds {
            if exclude.iter().any(|&ex| same_pair(ex, (theta, omega))) {
                continue;
            }
            let y0 = [theta, omega];
            let label = format!("theta={theta}_omega={omega}");
            let traj = simulate(&system, &y0, sim, label.clone())?;
            ds.entries.push(DatasetEntry {
                label,
                initial: y0.to_vec(),
                noise_seed: None,
                traj,
            });
        }
    }
    let mut warnings = Vec::new();
    if ds.is_empty() {
        warnings.push("every initial condition was excluded; dataset is empty".to_string());
    }
    Ok((ds, warnings))
}

/// Nutrient shifts: each trajectory starts at the steady state for `nu_i`
/// and evolves under `params.nu`.
pub fn generate_bio_shifts(nu_initials: &[f64], params: &BioParams, sim: &SimSpec) -> Result<Dataset, DatasetError> {
    sim.validate()?;
    params.validate()?;
    let system = SystemSpec::Bio { params: *params };
    let mut ds = Dataset::new(&system);
    for &nu_i in nu_initials {
        let y0 = bio_steady_state(nu_i, params)?.to_array();
        let label = format!("nu_i={nu_i}");
        let traj = simulate(&system, &y0, sim, label.clone())?;
        ds.entries.push(DatasetEntry {
            label,
            initial: y0.to_vec(),
            noise_seed: None,
            traj,
        });
    }
    Ok(ds)
}

/// Multiplies every state component by `1 + u`, `u` uniform on
/// `[-magnitude, magnitude]`, drawn i.i.d. per component and time.
pub fn add_noise(traj: &Trajectory, spec: &NoiseSpec) -> Result<Trajectory, DatasetError> {
    spec.validate()?;
    let mut out = traj.clone();
    out.meta.seed = Some(spec.seed);
    if spec.magnitude == 0.0 {
        return Ok(out);
    }
    let mut rng = rng_from_seed(spec.seed);
    let m = spec.magnitude;
    for x in out.states.iter_mut() {
        let u: f64 = rng.random_range(-m..=m);
        *x = apply_relative_noise(*x, u);
    }
    Ok(out)
}

pub fn apply_relative_noise(x: f64, u: f64) -> f64 {
    x * (1.0 + u)
}

/// Picks the trajectory points closest to the requested sampling times.
/// Returns a warning when a requested time is not on the grid or two
/// requests collapse onto one grid point.
pub fn subsample(traj: &Trajectory, spec: &SamplingSpec) -> Result<(Trajectory, Option<String>), DatasetError> {
    spec.validate()?;
    if traj.is_empty() {
        return Err(DatasetError::Invalid("cannot subsample an empty trajectory".into()));
    }
    let first = traj.times[0];
    let last = traj.times[traj.len() - 1];
    let tol = 1e-9 * last.abs().max(1.0);
    if spec.t_start < first - tol || spec.t_end > last + tol {
        return Err(DatasetError::Invalid(format!(
            "window ({}, {}) exceeds simulated span ({first}, {last})",
            spec.t_start, spec.t_end
        )));
    }
    let mut out = Trajectory::new(traj.dim).with_meta(traj.meta.clone());
    let mut off_grid = 0usize;
    let mut collapsed = 0usize;
    let mut prev: Option<usize> = None;
    for t in spec.times() {
        let idx = nearest_index(&traj.times, t);
        if (traj.times[idx] - t).abs() > tol {
            off_grid += 1;
        }
        if prev == Some(idx) {
            collapsed += 1;
            continue;
        }
        prev = Some(idx);
        out.push(traj.times[idx], traj.state(idx));
    }
    let warning = (off_grid > 0 || collapsed > 0).then(|| {
        format!(
            "sampling not commensurate with grid: {off_grid} times snapped to nearest point, {collapsed} duplicates dropped"
        )
    });
    Ok((out, warning))
}

fn nearest_index(times: &[f64], t: f64) -> usize {
    let i = times.partition_point(|&x| x < t);
    if i == 0 {
        0
    } else if i == times.len() {
        times.len() - 1
    } else if (times[i] - t).abs() < (t - times[i - 1]).abs() {
        i
    } else {
        i - 1
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    label: String,
    initial: Vec<f64>,
    noise_seed: Option<u64>,
    points: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    system: String,
    columns: Vec<String>,
    config_hash: String,
    seed: u64,
    sampling: Option<SamplingSpec>,
    noise_magnitude: Option<f64>,
    trajectories: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Trajectory as CSV text with a `t,<columns>` header.
pub fn trajectory_csv(traj: &Trajectory, columns: &[String]) -> String {
    let mut s = String::from("t");
    for c in columns {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    for i in 0..traj.len() {
        s.push_str(&fmt_f64(traj.times[i]));
        for x in traj.state(i) {
            s.push(',');
            s.push_str(&fmt_f64(*x));
        }
        s.push('\n');
    }
    s
}

pub fn read_trajectory_csv(path: &Path, dim: usize) -> Result<Trajectory, DatasetError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| DatasetError::Format(format!("{}: {e}", path.display())))?;
    let mut traj = Trajectory::new(dim);
    let mut row = vec![0.0; dim];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DatasetError::Format(format!("{}: {e}", path.display())))?;
        if rec.len() != dim + 1 {
            return Err(DatasetError::Format(format!(
                "{}: expected {} columns, got {}",
                path.display(),
                dim + 1,
                rec.len()
            )));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| DatasetError::Format(format!("{}: {e}", path.display())))
        };
        let t = parse(&rec[0])?;
        for k in 0..dim {
            row[k] = parse(&rec[k + 1])?;
        }
        traj.push(t, &row);
    }
    Ok(traj)
}

pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<(), DatasetError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(ds.len());
    for (i, e) in ds.entries.iter().enumerate() {
        let file = format!("traj_{i:03}.csv");
        let path = dir.join(&file);
        write_atomic(&path, trajectory_csv(&e.traj, &ds.columns).as_bytes()).map_err(io_err(&path))?;
        entries.push(ManifestEntry {
            file,
            label: e.label.clone(),
            initial: e.initial.clone(),
            noise_seed: e.noise_seed,
            points: e.traj.len(),
        });
    }
    let manifest = Manifest {
        system: ds.system.clone(),
        columns: ds.columns.clone(),
        config_hash: ds.provenance.config_hash.clone(),
        seed: ds.provenance.seed,
        sampling: ds.sampling,
        noise_magnitude: ds.noise_magnitude,
        trajectories: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&path, json.as_bytes()).map_err(io_err(&path))?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| DatasetError::Format(format!("{}: {e}", path.display())))?;
    let dim = manifest.columns.len();
    let mut entries = Vec::with_capacity(manifest.trajectories.len());
    for m in manifest.trajectories {
        let mut traj = read_trajectory_csv(&dir.join(&m.file), dim)?;
        if traj.len() != m.points {
            return Err(DatasetError::Format(format!(
                "{}: manifest lists {} points, file has {}",
                m.file,
                m.points,
                traj.len()
            )));
        }
        traj.meta = TrajectoryMeta {
            system: manifest.system.clone(),
            label: m.label.clone(),
            seed: m.noise_seed,
        };
        entries.push(DatasetEntry {
            label: m.label,
            initial: m.initial,
            noise_seed: m.noise_seed,
            traj,
        });
    }
    Ok(Dataset {
        system: manifest.system,
        columns: manifest.columns,
        entries,
        sampling: manifest.sampling,
        noise_magnitude: manifest.noise_magnitude,
        provenance: Provenance {
            config_hash: manifest.config_hash,
            seed: manifest.seed,
        },
    })
}

/// Config hash recorded in a dataset manifest, if the directory has one.
pub fn manifest_hash(dir: &Path) -> Option<String> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    v.get("config_hash")?.as_str().map(str::to_string)
}
