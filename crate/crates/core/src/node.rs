//! Neural ODE training loop: warmup, epoch-shuffled batching, periodic
//! checkpoints with learning-rate backoff on divergence, and rollout.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::neural::{
    adabelief_step, loss, loss_and_grad, Activation, AdaBeliefHyper, Checkpoint, MlpParams, NeuralError,
    NeuralField, Observed, OptimizerState, Scaling,
};
use crate::ode::{integrate_adaptive, AdaptiveOptions, OdeError, Trajectory};
use crate::util::{derive_seed, fmt_f64, rng_from_seed};

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("invalid training spec: {0}")]
    InvalidSpec(String),
    #[error("training diverged {retries} times; last failure at iteration {iteration}: {reason}")]
    Diverged { retries: u32, iteration: u64, reason: String },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("rollout failed: {0}")]
    Rollout(#[from] OdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Warmup {
    pub iterations: u64,
    pub data_fraction: f64,
    pub lr: f64,
}

impl Default for Warmup {
    fn default() -> Self {
        Self {
            iterations: 500,
            data_fraction: 0.10,
            lr: 0.003,
        }
    }
}

/// Where each predicted trajectory starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    FirstObservation,
    Clean,
}

fn default_substeps() -> usize {
    4
}
fn default_hidden() -> Vec<usize> {
    vec![20, 20]
}
fn default_checkpoint_every() -> u64 {
    10_000
}
fn default_history_every() -> u64 {
    100
}
fn default_max_retries() -> u32 {
    3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub iterations: u64,
    pub lr: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub warmup: Option<Warmup>,
    /// In experiment configs this is a stream index combined with the
    /// top-level seed.
    #[serde(default)]
    pub seed: u64,
    /// RK4 steps per observation interval.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub initial_state: InitialState,
    /// Standardize network inputs and outputs with statistics of the
    /// training data.
    #[serde(default)]
    pub standardize: bool,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
    #[serde(default = "default_history_every")]
    pub history_every: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

impl TrainSpec {
    pub fn new(iterations: u64, lr: f64, batch_size: usize, seed: u64) -> Self {
        Self {
            iterations,
            lr,
            batch_size,
            warmup: None,
            seed,
            substeps: default_substeps(),
            hidden: default_hidden(),
            activation: Activation::Tanh,
            initial_state: InitialState::FirstObservation,
            standardize: false,
            checkpoint_every: default_checkpoint_every(),
            history_every: default_history_every(),
            max_retries: default_max_retries(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn with_warmup(mut self, warmup: Warmup) -> Self {
        self.warmup = Some(warmup);
        self
    }

    fn hyper(&self, lr: f64) -> AdaBeliefHyper {
        AdaBeliefHyper {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self, dataset_len: usize) -> Result<(), NodeError> {
        let bad = |m: String| Err(NodeError::InvalidSpec(m));
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 || self.batch_size > dataset_len {
            return bad(format!(
                "batch_size {} must lie in 1..={dataset_len}",
                self.batch_size
            ));
        }
        if self.substeps == 0 || self.checkpoint_every == 0 || self.history_every == 0 {
            return bad("substeps, checkpoint_every and history_every must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps < 0.0 {
            return bad("optimizer hyperparameters out of range".into());
        }
        if let Some(w) = &self.warmup {
            if !(w.data_fraction > 0.0 && w.data_fraction <= 1.0) {
                return bad(format!("warmup data_fraction {} not in (0, 1]", w.data_fraction));
            }
            if !(w.lr > 0.0 && w.lr.is_finite()) {
                return bad("warmup lr must be positive".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: u64,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub field: NeuralField,
    pub spec: TrainSpec,
    /// Loss over the whole training set with the final parameters.
    pub final_loss: f64,
    pub history: Vec<HistoryEntry>,
    pub warmup_history: Vec<HistoryEntry>,
    pub optimizer: OptimizerState,
    pub retries: u32,
}

impl TrainedModel {
    /// Training log with one row per recorded iteration; warmup rows come first.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("phase,iteration,loss,lr\n");
        for (phase, rows) in [("warmup", &self.warmup_history), ("main", &self.history)] {
            for h in rows.iter() {
                out.push_str(&format!("{phase},{},{},{}\n", h.iteration, fmt_f64(h.loss), fmt_f64(h.lr)));
            }
        }
        out
    }

    pub fn checkpoint(&self, config_hash: &str) -> Checkpoint {
        Checkpoint::from_field(&self.field, &self.optimizer, config_hash, true)
    }
}

/// Indices of the batch used at `iteration`: each epoch is a fresh seeded
/// permutation cut into consecutive chunks, so any iteration's batch can
/// be recomputed after a restart.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, iteration: u64) -> Vec<usize> {
    let per_epoch = n.div_ceil(batch_size) as u64;
    let epoch = iteration / per_epoch;
    let slot = (iteration % per_epoch) as usize;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(derive_seed(seed, "epoch", epoch)));
    let start = slot * batch_size;
    perm[start..(start + batch_size).min(n)].to_vec()
}

/// Every trajectory cut to the leading fraction of its time points (at
/// least two points).
pub fn warmup_prefix(trajs: &[Trajectory], fraction: f64) -> Vec<Trajectory> {
    trajs
        .iter()
        .map(|t| {
            let n = ((t.len() as f64 * fraction).ceil() as usize).clamp(2.min(t.len()), t.len());
            t.truncated(n)
        })
        .collect()
}

struct Phase<'a> {
    label: &'a str,
    trajs: &'a [Trajectory],
    starts: &'a [Vec<f64>],
    iterations: u64,
    lr: f64,
}

struct Snapshot {
    iteration: u64,
    params: Vec<f64>,
    opt: OptimizerState,
    history_len: usize,
}

/// Runs one optimization phase in place on `field`.
fn run_phase(
    field: &mut NeuralField,
    spec: &TrainSpec,
    phase: &Phase,
    history: &mut Vec<HistoryEntry>,
    retries: &mut u32,
    on_checkpoint: &mut dyn FnMut(&NeuralField, &OptimizerState),
) -> Result<OptimizerState, NodeError> {
    let n = phase.trajs.len();
    let batch_size = spec.batch_size.min(n);
    let seed = derive_seed(spec.seed, phase.label, 0);
    let mut opt = OptimizerState::new(field.mlp.flat.len(), spec.hyper(phase.lr));
    let mut snap = Snapshot {
        iteration: 0,
        params: field.mlp.flat.clone(),
        opt: opt.clone(),
        history_len: history.len(),
    };
    let mut it = 0u64;
    while it < phase.iterations {
        let idx = batch_indices(n, batch_size, seed, it);
        let batch: Vec<Observed> = idx
            .iter()
            .map(|&i| Observed {
                y0: &phase.starts[i],
                traj: &phase.trajs[i],
            })
            .collect();
        let failure = match loss_and_grad(field, &batch, spec.substeps) {
            Ok((l, g)) if l.is_finite() && g.iter().all(|x| x.is_finite()) => {
                if it.is_multiple_of(spec.history_every) {
                    history.push(HistoryEntry {
                        iteration: it,
                        loss: l,
                        lr: opt.hyper.lr,
                    });
                }
                adabelief_step(&mut opt, &mut field.mlp.flat, &g);
                if field.mlp.flat.iter().all(|x| x.is_finite()) {
                    None
                } else {
                    Some("non-finite parameters after update".to_string())
                }
            }
            Ok(_) => Some("non-finite loss or gradient".to_string()),
            Err(NeuralError::Divergence { t }) => Some(format!("forward solve diverged at t = {t}")),
            Err(e) => return Err(e.into()),
        };
        if let Some(reason) = failure {
            *retries += 1;
            if *retries > spec.max_retries {
                return Err(NodeError::Diverged {
                    retries: *retries - 1,
                    iteration: it,
                    reason,
                });
            }
            let lr = opt.hyper.lr / 2.0;
            field.mlp.flat.clone_from(&snap.params);
            opt = snap.opt.clone();
            opt.hyper.lr = lr;
            history.truncate(snap.history_len);
            it = snap.iteration;
            continue;
        }
        it += 1;
        if it.is_multiple_of(spec.checkpoint_every) || it == phase.iterations {
            snap = Snapshot {
                iteration: it,
                params: field.mlp.flat.clone(),
                opt: opt.clone(),
                history_len: history.len(),
            };
            on_checkpoint(field, &opt);
        }
    }
    Ok(opt)
}

/// Trains a fresh network on every trajectory of `data`.
pub fn train(data: &Dataset, spec: &TrainSpec) -> Result<TrainedModel, NodeError> {
    train_with(data, spec, &mut |_, _| {})
}

/// Like [`train`], calling `on_checkpoint` at every periodic checkpoint and
/// at the end of each phase.
pub fn train_with(
    data: &Dataset,
    spec: &TrainSpec,
    on_checkpoint: &mut dyn FnMut(&NeuralField, &OptimizerState),
) -> Result<TrainedModel, NodeError> {
    spec.validate(data.len())?;
    let dim = data.dim();
    if data.entries.iter().any(|e| e.traj.dim != dim || e.traj.len() < 2) {
        return Err(NodeError::InvalidSpec(
            "every trajectory needs the dataset dimension and at least 2 points".into(),
        ));
    }
    let trajs = data.trajectories();
    let starts: Vec<Vec<f64>> = data
        .entries
        .iter()
        .map(|e| match spec.initial_state {
            InitialState::FirstObservation => e.traj.state(0).to_vec(),
            InitialState::Clean => e.initial.clone(),
        })
        .collect();

    let mut dims = vec![dim];
    dims.extend(&spec.hidden);
    dims.push(dim);
    let mlp = MlpParams::glorot(dims, spec.activation, derive_seed(spec.seed, "init", 0));
    let refs: Vec<&Trajectory> = trajs.iter().collect();
    let scaling = spec.standardize.then(|| Scaling::from_data(&refs));
    let mut field = NeuralField::new(mlp).with_scaling(scaling);

    let mut retries = 0;
    let mut warmup_history = Vec::new();
    if let Some(w) = &spec.warmup {
        let short = warmup_prefix(&trajs, w.data_fraction);
        run_phase(
            &mut field,
            spec,
            &Phase {
                label: "warmup",
                trajs: &short,
                starts: &starts,
                iterations: w.iterations,
                lr: w.lr,
            },
            &mut warmup_history,
            &mut retries,
            on_checkpoint,
        )?;
    }
    let mut history = Vec::new();
    let optimizer = run_phase(
        &mut field,
        spec,
        &Phase {
            label: "main",
            trajs: &trajs,
            starts: &starts,
            iterations: spec.iterations,
            lr: spec.lr,
        },
        &mut history,
        &mut retries,
        on_checkpoint,
    )?;

    let all: Vec<Observed> = trajs
        .iter()
        .zip(&starts)
        .map(|(t, s)| Observed { y0: s, traj: t })
        .collect();
    let final_loss = loss(&field, &all, spec.substeps).unwrap_or(f64::INFINITY);
    if !final_loss.is_finite() {
        return Err(NodeError::Diverged {
            retries,
            iteration: spec.iterations,
            reason: "final loss is not finite".into(),
        });
    }
    Ok(TrainedModel {
        field,
        spec: spec.clone(),
        final_loss,
        history,
        warmup_history,
        optimizer,
        retries,
    })
}

/// Tolerances used when sampling a learned field.
pub fn rollout_options() -> AdaptiveOptions {
    AdaptiveOptions::new(1e-8, 1e-10)
}

/// Adaptive integration of the learned field, sampled at `t_grid`.
pub fn rollout(field: &NeuralField, y0: &[f64], t_grid: &[f64]) -> Result<Trajectory, NodeError> {
    if y0.len() != field.mlp.input_dim() {
        return Err(NeuralError::DimMismatch {
            expected: field.mlp.input_dim(),
            got: y0.len(),
        }
        .into());
    }
    let (Some(&t0), Some(&t1)) = (t_grid.first(), t_grid.last()) else {
        return Err(NodeError::Rollout(OdeError::InvalidGrid("empty time grid".into())));
    };
    if t_grid.len() == 1 {
        return Ok(Trajectory::from_parts(y0.len(), vec![t0], y0.to_vec()));
    }
    Ok(integrate_adaptive(field, y0, (t0, t1), t_grid, &rollout_options())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetEntry;
    use crate::systems::{BioParams, SystemSpec};

    fn toy_dataset(n: usize) -> Dataset {
        let mut ds = Dataset::new(&SystemSpec::Bio {
            params: BioParams::default(),
        });
        ds.columns = vec!["x".into()];
        for i in 0..n {
            let a = 1.0 + i as f64 * 0.25;
            let times: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
            let states = times.iter().map(|t| a * (-t).exp()).collect();
            ds.entries.push(DatasetEntry {
                label: format!("t{i}"),
                initial: vec![a],
                noise_seed: None,
                traj: Trajectory::from_parts(1, times, states),
            });
        }
        ds
    }

    fn small_spec(iterations: u64, batch: usize) -> TrainSpec {
        TrainSpec {
            hidden: vec![8],
            history_every: 1,
            ..TrainSpec::new(iterations, 0.01, batch, 4)
        }
    }

    #[test]
    fn one_iteration_gives_one_history_row() {
        let ds = toy_dataset(3);
        let m = train(&ds, &small_spec(1, 3)).unwrap();
        assert_eq!(m.history.len(), 1);
        assert_eq!(m.optimizer.step, 1);
        assert!(m.final_loss.is_finite());
    }

    #[test]
    fn batches_cover_each_epoch_without_replacement() {
        let mut seen: Vec<usize> = (0..4).flat_map(|it| batch_indices(10, 3, 7, it)).collect();
        assert_eq!(seen.len(), 10);
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(batch_indices(10, 3, 7, 5), batch_indices(10, 3, 7, 5));
    }

    #[test]
    fn warmup_keeps_leading_tenth() {
        let ds = toy_dataset(1);
        let t = &ds.trajectories()[0];
        let short = warmup_prefix(std::slice::from_ref(t), 0.1);
        assert_eq!(short[0].len(), 2);
        assert_eq!(short[0].times, t.times[..2].to_vec());
        let long = Trajectory::from_parts(1, (0..133).map(|i| i as f64).collect(), vec![0.0; 133]);
        assert_eq!(warmup_prefix(&[long], 0.1)[0].len(), 14);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let ds = toy_dataset(4);
        let spec = small_spec(300, 2).with_warmup(Warmup {
            iterations: 20,
            data_fraction: 0.5,
            lr: 0.01,
        });
        let a = train(&ds, &spec).unwrap();
        let b = train(&ds, &spec).unwrap();
        assert_eq!(a.field.mlp.flat, b.field.mlp.flat);
        assert_eq!(a.warmup_history.len(), 20);
        assert!(a.history.last().unwrap().loss < a.history[0].loss);
    }

    #[test]
    fn divergence_halves_lr_then_fails() {
        let ds = toy_dataset(2);
        let mut spec = small_spec(50, 2);
        spec.activation = Activation::Softplus;
        spec.lr = 1e7;
        spec.max_retries = 2;
        spec.checkpoint_every = 5;
        match train(&ds, &spec) {
            Err(NodeError::Diverged { retries, .. }) => assert_eq!(retries, 2),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn bad_specs_are_rejected() {
        let ds = toy_dataset(2);
        assert!(train(&ds, &small_spec(0, 1)).is_err());
        assert!(train(&ds, &small_spec(1, 3)).is_err());
    }

    #[test]
    fn rollout_edge_cases() {
        let field = NeuralField::new(MlpParams::zeros(vec![2, 4, 2], Activation::Tanh));
        let one = rollout(&field, &[1.0, 2.0], &[0.5]).unwrap();
        assert_eq!(one.states, vec![1.0, 2.0]);
        let flat = rollout(&field, &[1.0, 2.0], &[0.0, 1.0, 2.0]).unwrap();
        assert!(flat.states.iter().zip([1.0, 2.0].iter().cycle()).all(|(a, b)| a == b));
    }
}
