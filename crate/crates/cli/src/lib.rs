//! Stages of the `dyndisc` command line: simulate, train, evaluate,
//! discover and the chained pipeline. Every stage writes into its own
//! directory under the output root and records the producing config hash
//! and file digests in an `ARTIFACTS.json` next to the files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use dyndisc::config::{ConfigError, CurvesSpec, SrSource};
use dyndisc::dataset::{read_dataset, simulate_from, trajectory_csv, write_dataset, Dataset, SimSpec, MANIFEST_FILE};
use dyndisc::evaluation::{
    error_curve, error_curve_csv, frequency_sweep, heatmap, heatmap_svg, mse, phase_field, phase_field_csv, proximity_mask,
    split_medians, sweep_svg, HeatmapSpec, Window,
};
use dyndisc::neural::{Checkpoint, NeuralField};
use dyndisc::node::{rollout, train_with};
use dyndisc::symreg::{derivative_targets, recovered, reference_equations, search, ParetoFront, RegressionTarget};
use dyndisc::systems::{bio_steady_state, SystemSpec};
use dyndisc::util::{fmt_f64, sha256_hex, write_atomic};
use dyndisc::{ExperimentConfig, Trajectory};

pub const ARTIFACTS_FILE: &str = "ARTIFACTS.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("missing input {}: {what}", path.display())]
    MissingInput { what: String, path: PathBuf },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("artifacts out of date:\n  {}", .0.join("\n  "))]
    Drift(Vec<String>),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Drift(_) => 2,
            CliError::MissingInput { .. } => 3,
            CliError::Numerical(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn config_missing(path: &str, message: &str) -> CliError {
    CliError::Config(ConfigError::Invalid {
        path: path.into(),
        message: message.into(),
    })
}

/// Stage directories under the output root.
pub mod layout {
    pub const DATASET: &str = "dataset";
    pub const GROUND_TRUTH: &str = "ground_truth";
    pub const MODEL: &str = "model";
    pub const EVAL: &str = "eval";
    pub const SR: &str = "sr";
    pub const CHECKPOINT: &str = "checkpoint.bin";
    pub const VERDICT: &str = "verdict.csv";
}

#[derive(Debug, Serialize, Deserialize)]
struct ArtifactIndex {
    config_hash: String,
    files: BTreeMap<String, String>,
}

/// Digests every file in `dir` (sorted) and records them with the hash.
fn seal(dir: &Path, config_hash: &str) -> Result<(), CliError> {
    let index = ArtifactIndex {
        config_hash: config_hash.to_string(),
        files: digest_dir(dir)?,
    };
    let path = dir.join(ARTIFACTS_FILE);
    let json = serde_json::to_string_pretty(&index).expect("index serializes") + "\n";
    write_atomic(&path, json.as_bytes()).map_err(|source| CliError::Io { path, source })
}

fn digest_dir(dir: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let io = |source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let entry = entry.map_err(io)?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == ARTIFACTS_FILE || !entry.file_type().map_err(io)?.is_file() {
            continue;
        }
        let bytes = std::fs::read(entry.path()).map_err(io)?;
        out.insert(name, sha256_hex(&bytes));
    }
    Ok(out)
}

/// Problems with the sealed artifacts of one stage directory.
pub fn verify_dir(dir: &Path, config_hash: &str) -> Result<Vec<String>, CliError> {
    let path = dir.join(ARTIFACTS_FILE);
    let text = std::fs::read_to_string(&path).map_err(|_| CliError::MissingInput {
        what: "artifact index".into(),
        path: path.clone(),
    })?;
    let index: ArtifactIndex = serde_json::from_str(&text).map_err(|e| CliError::Io {
        path: path.clone(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })?;
    let mut problems = Vec::new();
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    if index.config_hash != config_hash {
        problems.push(format!("{name}: produced by config {} (current {config_hash})", index.config_hash));
    }
    let now = digest_dir(dir)?;
    for (file, digest) in &index.files {
        match now.get(file) {
            None => problems.push(format!("{name}/{file}: missing")),
            Some(d) if d != digest => problems.push(format!("{name}/{file}: content changed")),
            _ => {}
        }
    }
    for file in now.keys().filter(|f| !index.files.contains_key(*f)) {
        problems.push(format!("{name}/{file}: not produced by this stage"));
    }
    Ok(problems)
}

/// One invocation: a validated config, its hash and the output root.
#[derive(Debug, Clone)]
pub struct Run {
    pub cfg: ExperimentConfig,
    pub hash: String,
    pub out: PathBuf,
    pub svg: bool,
    pub quiet: bool,
}

impl Run {
    pub fn new(cfg: ExperimentConfig, out: impl Into<PathBuf>) -> Self {
        Self {
            hash: cfg.hash(),
            cfg,
            out: out.into(),
            svg: false,
            quiet: false,
        }
    }

    pub fn dir(&self, stage: &str) -> PathBuf {
        self.out.join(stage)
    }

    fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn write(&self, dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = dir.join(name);
        write_atomic(&path, bytes).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    fn write_config(&self) -> Result<(), CliError> {
        self.write(&self.out, "config.json", self.cfg.to_json().as_bytes())?;
        Ok(())
    }

    fn upstream_dataset(&self, stage: &str) -> Result<Dataset, CliError> {
        let dir = self.dir(stage);
        if !dir.join(MANIFEST_FILE).exists() {
            return Err(CliError::MissingInput {
                what: format!("{stage} (run `dyndisc simulate` first)"),
                path: dir,
            });
        }
        let ds = read_dataset(&dir).map_err(|e| CliError::MissingInput {
            what: e.to_string(),
            path: dir.clone(),
        })?;
        if ds.provenance.config_hash != self.hash {
            self.note(&format!("warning: {stage} was produced by a different config"));
        }
        Ok(ds)
    }

    fn upstream_model(&self) -> Result<NeuralField, CliError> {
        let path = self.dir(layout::MODEL).join(layout::CHECKPOINT);
        if !path.exists() {
            return Err(CliError::MissingInput {
                what: "model checkpoint (run `dyndisc train` first)".into(),
                path,
            });
        }
        let ck = Checkpoint::load(&path).map_err(|e| CliError::MissingInput {
            what: e.to_string(),
            path: path.clone(),
        })?;
        if ck.header.config_hash != self.hash {
            self.note("warning: model was produced by a different config");
        }
        Ok(ck.field())
    }

    /// Clean ground truth and the observed (subsampled, noisy) dataset.
    pub fn simulate(&self) -> Result<(), CliError> {
        self.write_config()?;
        let clean = self.cfg.ground_truth().map_err(|e| match e {
            ConfigError::Invalid { message, .. } => CliError::Numerical(message),
            other => other.into(),
        })?;
        let (mut observed, warnings) = self.cfg.observe(&clean)?;
        for w in &warnings {
            self.note(&format!("warning: {w}"));
        }
        observed.provenance = clean.provenance.clone();
        for (stage, ds) in [(layout::GROUND_TRUTH, &clean), (layout::DATASET, &observed)] {
            let dir = self.dir(stage);
            // Stale trajectory files from a larger earlier run would end up sealed.
            if dir.exists() {
                std::fs::remove_dir_all(&dir).map_err(|source| CliError::Io {
                    path: dir.clone(),
                    source,
                })?;
            }
            write_dataset(&dir, ds).map_err(|e| CliError::Io {
                path: dir.clone(),
                source: std::io::Error::other(e.to_string()),
            })?;
            seal(&dir, &self.hash)?;
        }
        self.note(&format!("simulate: {} trajectories", observed.len()));
        Ok(())
    }

    pub fn train(&self) -> Result<(), CliError> {
        let spec = self
            .cfg
            .train_spec()
            .ok_or_else(|| config_missing("training", "config has no training block"))?;
        let data = self.upstream_dataset(layout::DATASET)?;
        self.write_config()?;
        let total = spec.iterations;
        let mut progress = |_: &NeuralField, opt: &dyndisc::neural::OptimizerState| {
            if !self.quiet {
                eprintln!("train: step {} of {total}", opt.step);
            }
        };
        let model = train_with(&data, &spec, &mut progress).map_err(numerical)?;
        let dir = self.dir(layout::MODEL);
        self.write(&dir, layout::CHECKPOINT, &model.checkpoint(&self.hash).to_bytes())?;
        self.write(&dir, "training_log.csv", model.log_csv().as_bytes())?;
        let summary = format!(
            "final_loss,retries,iterations\n{},{},{}\n",
            fmt_f64(model.final_loss),
            model.retries,
            spec.iterations
        );
        self.write(&dir, "summary.csv", summary.as_bytes())?;
        seal(&dir, &self.hash)?;
        self.note(&format!("train: final loss {:.3e}", model.final_loss));
        Ok(())
    }

    /// Runs the configured evaluations; `only` restricts them by name
    /// (`heatmap`, `curves`, `phase_field`, `sweep`).
    pub fn evaluate(&self, only: &[&str]) -> Result<(), CliError> {
        let ev = &self.cfg.evaluation;
        let want = |name: &str, configured: bool| if only.is_empty() { configured } else { only.contains(&name) };
        let dir = self.dir(layout::EVAL);
        self.write_config()?;
        let mut done = 0;
        if want("heatmap", ev.heatmap.is_some()) {
            let spec = ev.heatmap.clone().unwrap_or_default();
            self.heatmap(&dir, &spec)?;
            done += 1;
        }
        if want("curves", ev.curves.is_some()) {
            let spec = ev
                .curves
                .as_ref()
                .ok_or_else(|| config_missing("evaluation.curves", "no curves block"))?;
            self.curves(&dir, spec)?;
            done += 1;
        }
        if want("phase_field", ev.phase_field.is_some()) {
            let spec = ev
                .phase_field
                .ok_or_else(|| config_missing("evaluation.phase_field", "no phase_field block"))?;
            let field = self.cfg.system.field();
            let samples = phase_field(
                field.as_ref(),
                (spec.x_range[0], spec.x_range[1]),
                (spec.y_range[0], spec.y_range[1]),
                spec.resolution,
            )
            .map_err(numerical)?;
            let cols = self.cfg.system.columns();
            self.write(&dir, "phase_field.csv", phase_field_csv(&samples, [&cols[0], &cols[1]]).as_bytes())?;
            done += 1;
        }
        if want("sweep", ev.sweep.is_some()) {
            let spec = ev
                .sweep
                .as_ref()
                .ok_or_else(|| config_missing("evaluation.sweep", "no sweep block"))?;
            self.note(&format!(
                "evaluate: sweep of {} models",
                spec.rates.len() * spec.repeats
            ));
            let result = frequency_sweep(spec, self.cfg.sweep_seed()).map_err(numerical)?;
            self.write(&dir, "sweep_runs.csv", result.runs_csv().as_bytes())?;
            self.write(&dir, "sweep_table.csv", result.table_csv().as_bytes())?;
            if self.svg {
                self.write(&dir, "sweep.svg", sweep_svg(&result).as_bytes())?;
            }
            done += 1;
        }
        if done > 0 {
            seal(&dir, &self.hash)?;
        }
        self.note(&format!("evaluate: {done} evaluation(s)"));
        Ok(())
    }

    fn heatmap(&self, dir: &Path, spec: &HeatmapSpec) -> Result<(), CliError> {
        let field = self.upstream_model()?;
        let grid = heatmap(&self.cfg.system, &field, spec).map_err(numerical)?;
        self.write(dir, "heatmap.csv", grid.to_csv().as_bytes())?;
        if self.svg {
            self.write(dir, "heatmap.svg", heatmap_svg(&grid).as_bytes())?;
        }
        let training = self.upstream_dataset(layout::GROUND_TRUTH)?;
        let window_sim = SimSpec::new(spec.window.t_end, spec.dt);
        let cut: Vec<Trajectory> = training
            .entries
            .iter()
            .map(|e| e.traj.truncated(window_sim.grid().len().min(e.traj.len())))
            .collect();
        let mask = proximity_mask(&self.cfg.system, spec, &cut, self.cfg.evaluation.proximity_tol).map_err(numerical)?;
        let values = grid.values();
        let (near, far) = split_medians(&values, &mask);
        let n_near = mask.iter().filter(|m| **m).count();
        let text = format!(
            "group,cells,median_mse\nnear,{n_near},{}\nfar,{},{}\n",
            fmt_f64(near),
            mask.len() - n_near,
            fmt_f64(far)
        );
        self.write(dir, "heatmap_proximity.csv", text.as_bytes())?;
        Ok(())
    }

    fn curves(&self, dir: &Path, spec: &CurvesSpec) -> Result<(), CliError> {
        let field = self.upstream_model()?;
        let states = spec.initial.states(&self.cfg.system)?;
        let sim = SimSpec {
            substeps: self.cfg.sim_spec().substeps,
            ..SimSpec::new(spec.t_end, spec.dt)
        };
        let cols = self.cfg.system.columns();
        let mut report = String::from("label,t_start,t_end,mse\n");
        for (i, (label, y0)) in states.iter().enumerate() {
            let truth = simulate_from(&self.cfg.system, y0, &sim).map_err(numerical)?;
            let pred = rollout(&field, y0, &truth.times).map_err(numerical)?;
            self.write(dir, &format!("rollout_{i:02}.csv"), trajectory_csv(&pred, &cols).as_bytes())?;
            self.write(dir, &format!("truth_{i:02}.csv"), trajectory_csv(&truth, &cols).as_bytes())?;
            let curve = error_curve(&pred, &truth).map_err(numerical)?;
            self.write(dir, &format!("error_{i:02}.csv"), error_curve_csv(&curve).as_bytes())?;
            let windows = if spec.windows.is_empty() {
                vec![Window::new(0.0, spec.t_end)]
            } else {
                spec.windows.clone()
            };
            for w in windows {
                let m = mse(&pred, &truth, w).map_err(numerical)?;
                report.push_str(&format!("{label},{},{},{}\n", w.t_start, w.t_end, fmt_f64(m)));
            }
        }
        self.write(dir, "curves_mse.csv", report.as_bytes())?;
        Ok(())
    }

    /// Regression data for the configured source.
    pub fn regression_data(&self) -> Result<(Trajectory, Vec<RegressionTarget>), CliError> {
        let sr = self.cfg.sr.as_ref().ok_or_else(|| config_missing("sr", "config has no sr block"))?;
        let SystemSpec::Bio { params } = self.cfg.system else {
            return Err(config_missing("system", "symbolic regression targets the bio system"));
        };
        let traj = match sr.source {
            SrSource::Dataset => {
                let ds = self.upstream_dataset(layout::DATASET)?;
                ds.entries
                    .into_iter()
                    .next()
                    .map(|e| e.traj)
                    .ok_or_else(|| CliError::MissingInput {
                        what: "dataset has no trajectories".into(),
                        path: self.dir(layout::DATASET),
                    })?
            }
            SrSource::Model => {
                let field = self.upstream_model()?;
                let y0 = bio_steady_state(sr.shift, &params).map_err(numerical)?.to_array();
                let grid = SimSpec::new(sr.t_end, sr.dt).grid();
                rollout(&field, &y0, &grid).map_err(numerical)?
            }
        };
        let use_lambda = sr.search.use_lambda;
        let targets = derivative_targets(&traj, sr.drop_head, sr.drop_tail, use_lambda, &params).map_err(numerical)?;
        Ok((traj, targets))
    }

    /// Pareto fronts for the three derivatives and the recovery verdict.
    pub fn discover(&self) -> Result<Vec<Verdict>, CliError> {
        let (traj, targets) = self.regression_data()?;
        let SystemSpec::Bio { params } = self.cfg.system else {
            unreachable!("checked by regression_data")
        };
        self.write_config()?;
        let dir = self.dir(layout::SR);
        let cols = self.cfg.system.columns();
        self.write(&dir, "source.csv", trajectory_csv(&traj, &cols).as_bytes())?;
        self.write(&dir, "regression.csv", regression_csv(&targets).as_bytes())?;
        let refs = reference_equations(&params);
        let mut verdicts = Vec::new();
        for (k, data) in targets.iter().enumerate() {
            let cfg = self.cfg.sr_config(k).expect("sr block present");
            let out = search(&cfg, data).map_err(numerical)?;
            let names = data.name_refs();
            self.write(&dir, &format!("front_{}.csv", cols[k]), out.front.to_csv(&names).as_bytes())?;
            let v = Verdict::new(&cols[k], &out.front, &refs[k], data.n_inputs(), &names);
            self.note(&format!(
                "discover: d{}/dt {}",
                cols[k],
                if v.recovered { "recovered" } else { "not recovered" }
            ));
            verdicts.push(v);
        }
        self.write(&dir, layout::VERDICT, verdict_csv(&verdicts).as_bytes())?;
        seal(&dir, &self.hash)?;
        Ok(verdicts)
    }

    /// Every stage the config describes, in order.
    pub fn pipeline(&self) -> Result<Option<Vec<Verdict>>, CliError> {
        self.simulate()?;
        if self.cfg.training.is_some() {
            self.train()?;
        }
        let ev = &self.cfg.evaluation;
        if ev.heatmap.is_some() || ev.curves.is_some() || ev.phase_field.is_some() || ev.sweep.is_some() {
            self.evaluate(&[])?;
        }
        if self.cfg.sr.is_none() {
            return Ok(None);
        }
        let verdicts = self.discover()?;
        self.write(&self.out, layout::VERDICT, verdict_csv(&verdicts).as_bytes())?;
        Ok(Some(verdicts))
    }

    /// Checks the sealed artifacts of `stages` against the current config.
    pub fn verify(&self, stages: &[&str]) -> Result<(), CliError> {
        let mut problems = Vec::new();
        for s in stages {
            problems.extend(verify_dir(&self.dir(s), &self.hash)?);
        }
        if problems.is_empty() {
            self.note(&format!("verify: {} stage(s) match config {}", stages.len(), self.hash));
            Ok(())
        } else {
            Err(CliError::Drift(problems))
        }
    }
}

/// Recovery verdict for one derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub target: String,
    pub recovered: bool,
    /// Matching front row, or the best-scored row when nothing matched.
    pub complexity: usize,
    pub loss: f64,
    pub equation: String,
    pub reference: String,
}

impl Verdict {
    fn new(target: &str, front: &ParetoFront, reference: &dyndisc::symreg::Expr, n_vars: usize, names: &[&str]) -> Self {
        let hit = recovered(front, reference, n_vars);
        let row = hit.map(|i| &front.rows[i]).or_else(|| front.best_scored());
        let (complexity, loss, equation) = row.map_or((0, f64::NAN, String::new()), |r| (r.complexity, r.loss, r.expr.to_infix(names)));
        Self {
            target: target.to_string(),
            recovered: hit.is_some(),
            complexity,
            loss,
            equation,
            reference: reference.to_infix(&dyndisc::symreg::VARIABLE_NAMES),
        }
    }
}

pub fn verdict_csv(verdicts: &[Verdict]) -> String {
    let mut out = String::from("target,recovered,complexity,loss,equation,reference\n");
    for v in verdicts {
        out.push_str(&format!(
            "d{}/dt,{},{},{},\"{}\",\"{}\"\n",
            v.target,
            v.recovered,
            v.complexity,
            fmt_f64(v.loss),
            v.equation,
            v.reference
        ));
    }
    out
}

fn regression_csv(targets: &[RegressionTarget]) -> String {
    let Some(first) = targets.first() else {
        return String::new();
    };
    let mut out = first.names.join(",");
    for t in targets {
        out.push_str(&format!(",d{}", first.names[t.component]));
    }
    out.push('\n');
    for i in 0..first.n_rows() {
        let row: Vec<String> = first
            .columns
            .iter()
            .map(|c| fmt_f64(c[i]))
            .chain(targets.iter().map(|t| fmt_f64(t.target[i])))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
