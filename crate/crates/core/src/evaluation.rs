//! MSE metrics, initial-condition heatmaps, the sampling-frequency sweep
//! and phase-field export.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{generate_bio_shifts, simulate_from, DatasetError, SamplingSpec, SimSpec};
use crate::neural::NeuralField;
use crate::node::{rollout, train, NodeError, TrainSpec};
use crate::ode::{Trajectory, VectorField};
use crate::systems::{BioParams, SystemSpec};
use crate::util::{derive_seed, fmt_f64, mean_std};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no time points inside window [{0}, {1}]")]
    EmptyWindow(f64, f64),
    #[error("time grids are not aligned at index {index}")]
    Misaligned { index: usize },
    #[error("invalid evaluation spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Node(#[from] NodeError),
}

/// Closed time interval used to select points for a metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub t_start: f64,
    pub t_end: f64,
}

impl Window {
    pub fn new(t_start: f64, t_end: f64) -> Self {
        Self { t_start, t_end }
    }

    fn contains(&self, t: f64) -> bool {
        let slack = 1e-9 * (1.0 + self.t_end.abs());
        t >= self.t_start - slack && t <= self.t_end + slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    #[default]
    Clean,
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub label: String,
    pub window: Window,
    pub reference: Reference,
    pub mse: f64,
}

/// Mean squared difference over the points of `window` and all components.
/// Trajectories must share their time stamps up to the common length.
pub fn mse(model: &Trajectory, reference: &Trajectory, window: Window) -> Result<f64, EvalError> {
    if model.dim != reference.dim {
        return Err(EvalError::Invalid(format!(
            "dimension {} vs {}",
            model.dim, reference.dim
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, (ta, tb)) in model.times.iter().zip(&reference.times).enumerate() {
        if (ta - tb).abs() > 1e-9 * (1.0 + ta.abs()) {
            return Err(EvalError::Misaligned { index: i });
        }
        if !window.contains(*ta) {
            continue;
        }
        for (a, b) in model.state(i).iter().zip(reference.state(i)) {
            sum += (a - b) * (a - b);
        }
        count += model.dim;
    }
    if count == 0 {
        return Err(EvalError::EmptyWindow(window.t_start, window.t_end));
    }
    Ok(sum / count as f64)
}

/// Per-time squared error (averaged over components), for extrapolation curves.
pub fn error_curve(model: &Trajectory, reference: &Trajectory) -> Result<Vec<(f64, f64)>, EvalError> {
    let n = model.len().min(reference.len());
    (0..n)
        .map(|i| {
            let t = model.times[i];
            if (t - reference.times[i]).abs() > 1e-9 * (1.0 + t.abs()) {
                return Err(EvalError::Misaligned { index: i });
            }
            let se: f64 = model
                .state(i)
                .iter()
                .zip(reference.state(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            Ok((t, se / model.dim as f64))
        })
        .collect()
}

pub fn error_curve_csv(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("t,squared_error\n");
    for (t, e) in curve {
        out.push_str(&format!("{},{}\n", fmt_f64(*t), fmt_f64(*e)));
    }
    out
}

/// Rectangle in the (angle, speed) plane, drawn on heatmaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

/// Largest tabulated cart-pole angle. Two decimals, not pi.
#[allow(clippy::approx_constant)]
pub const ANGLE_MAX: f64 = 3.14;

/// Evenly spaced axis `start, start+step, ...` up to `end` (inclusive within
/// rounding).
pub fn axis(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    // Rounded so 3 * 0.2 prints as 0.6 in configs and CSVs.
    (0..=n).map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatmapSpec {
    pub angles: Vec<f64>,
    pub speeds: Vec<f64>,
    pub window: Window,
    pub dt: f64,
    pub training_rect: Option<Rect>,
}

impl Default for HeatmapSpec {
    fn default() -> Self {
        Self {
            angles: axis(0.0, ANGLE_MAX, 0.2),
            speeds: axis(0.0, 10.0, 0.5),
            window: Window::new(0.0, 1.0),
            dt: 0.01,
            training_rect: None,
        }
    }
}

impl HeatmapSpec {
    fn sim(&self) -> SimSpec {
        SimSpec::new(self.window.t_end, self.dt)
    }

    fn cells(&self) -> Vec<(f64, f64)> {
        self.angles
            .iter()
            .flat_map(|&a| self.speeds.iter().map(move |&s| (a, s)))
            .collect()
    }
}

/// Row `i` holds angle `angles[i]`, column `j` speed `speeds[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub angles: Vec<f64>,
    pub speeds: Vec<f64>,
    pub mse: Vec<Vec<f64>>,
    pub training_rect: Option<Rect>,
}

impl HeatmapGrid {
    pub fn values(&self) -> Vec<f64> {
        self.mse.iter().flatten().copied().collect()
    }

    /// Long-format CSV: one row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("angle,speed,mse\n");
        for (i, a) in self.angles.iter().enumerate() {
            for (j, s) in self.speeds.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", fmt_f64(*a), fmt_f64(*s), fmt_f64(self.mse[i][j])));
            }
        }
        out
    }
}

fn cell_mse<F: VectorField + ?Sized>(system: &SystemSpec, field: &F, y0: &[f64], spec: &HeatmapSpec) -> f64 {
    let Ok(truth) = simulate_from(system, y0, &spec.sim()) else {
        return f64::INFINITY;
    };
    let model = match crate::ode::integrate_adaptive(
        field,
        y0,
        (truth.times[0], *truth.times.last().expect("non-empty grid")),
        &truth.times,
        &crate::node::rollout_options(),
    ) {
        Ok(m) => m,
        Err(_) => return f64::INFINITY,
    };
    match mse(&model, &truth, spec.window) {
        Ok(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    }
}

/// MSE between a model rollout and the clean ground truth for every
/// (angle, speed) initial condition. Diverging cells are `+inf`.
pub fn heatmap<F: VectorField + Sync + ?Sized>(
    system: &SystemSpec,
    model: &F,
    spec: &HeatmapSpec,
) -> Result<HeatmapGrid, EvalError> {
    if spec.angles.is_empty() || spec.speeds.is_empty() {
        return Err(EvalError::Invalid("heatmap grid is empty".into()));
    }
    if system.dim() != 2 || model.dim() != 2 {
        return Err(EvalError::Invalid("heatmaps need a two-dimensional system".into()));
    }
    spec.sim().validate()?;
    let cells = spec.cells();
    let flat: Vec<f64> = cells
        .par_iter()
        .map(|&(a, s)| cell_mse(system, model, &[a, s], spec))
        .collect();
    Ok(HeatmapGrid {
        angles: spec.angles.clone(),
        speeds: spec.speeds.clone(),
        mse: flat.chunks(spec.speeds.len()).map(|c| c.to_vec()).collect(),
        training_rect: spec.training_rect,
    })
}

/// Smallest L-infinity distance between any point of `a` and any point of `b`.
pub fn min_linf_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..a.len() {
        let p = a.state(i);
        for j in 0..b.len() {
            let d = p
                .iter()
                .zip(b.state(j))
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            best = best.min(d);
        }
    }
    best
}

/// For each heatmap cell (row-major), whether its clean trajectory over the
/// evaluation window comes within `tol` (L-infinity) of any training trajectory.
pub fn proximity_mask(
    system: &SystemSpec,
    spec: &HeatmapSpec,
    training: &[Trajectory],
    tol: f64,
) -> Result<Vec<bool>, EvalError> {
    let sim = spec.sim();
    spec.cells()
        .par_iter()
        .map(|&(a, s)| {
            let truth = simulate_from(system, &[a, s], &sim)?;
            Ok(training.iter().any(|t| min_linf_distance(&truth, t) <= tol))
        })
        .collect()
}

/// Medians of the cells inside and outside `mask`.
pub fn split_medians(values: &[f64], mask: &[bool]) -> (f64, f64) {
    let near: Vec<f64> = values.iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| *v).collect();
    let far: Vec<f64> = values.iter().zip(mask).filter(|(_, m)| !**m).map(|(v, _)| *v).collect();
    (crate::util::median(&near), crate::util::median(&far))
}

/// One sample of a planar vector field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSample {
    pub x: f64,
    pub y: f64,
    pub dx: f64,
    pub dy: f64,
    pub magnitude: f64,
}

/// Samples a two-dimensional field on an `n x n` lattice spanning the given ranges.
pub fn phase_field<F: VectorField + ?Sized>(
    field: &F,
    x_range: (f64, f64),
    y_range: (f64, f64),
    n: usize,
) -> Result<Vec<PhaseSample>, EvalError> {
    if n == 0 || field.dim() != 2 {
        return Err(EvalError::Invalid("phase field needs n > 0 and a planar field".into()));
    }
    let coord = |(lo, hi): (f64, f64), k: usize| {
        if n == 1 {
            lo
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(n * n);
    let mut d = [0.0; 2];
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (coord(x_range, i), coord(y_range, j));
            field.eval(0.0, &[x, y], &mut d);
            out.push(PhaseSample {
                x,
                y,
                dx: d[0],
                dy: d[1],
                magnitude: d[0].hypot(d[1]),
            });
        }
    }
    Ok(out)
}

pub fn phase_field_csv(samples: &[PhaseSample], names: [&str; 2]) -> String {
    let mut out = format!("{0},{1},d_{0},d_{1},magnitude\n", names[0], names[1]);
    for s in samples {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(s.x),
            fmt_f64(s.y),
            fmt_f64(s.dx),
            fmt_f64(s.dy),
            fmt_f64(s.magnitude)
        ));
    }
    out
}

fn default_train_hours() -> f64 {
    1.0
}
fn default_windows() -> Vec<Window> {
    vec![Window::new(0.0, 1.0), Window::new(0.0, 8.0)]
}
fn default_noise() -> f64 {
    0.05
}

/// Trains one model per (rate, repeat) on the leading `train_hours` of the
/// training shifts and scores each on the evaluation shifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub rates: Vec<f64>,
    pub train_shifts: Vec<f64>,
    pub eval_shifts: Vec<f64>,
    pub repeats: usize,
    pub train: TrainSpec,
    #[serde(default = "default_train_hours")]
    pub train_hours: f64,
    #[serde(default = "default_windows")]
    pub windows: Vec<Window>,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub params: BioParams,
    #[serde(default = "SimSpec::bio")]
    pub sim: SimSpec,
    /// Keep the training seed fixed across repeats.
    #[serde(default)]
    pub pin_train_seed: bool,
    /// Keep the noise draw fixed across repeats.
    #[serde(default)]
    pub pin_noise_seed: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.rates.is_empty() || self.repeats == 0 || self.train_shifts.is_empty() || self.eval_shifts.is_empty() {
            return Err(EvalError::Invalid(
                "rates, shifts and repeats must be non-empty".into(),
            ));
        }
        if self.rates.iter().any(|r| !(*r > 0.0)) || self.windows.is_empty() {
            return Err(EvalError::Invalid("rates must be positive and windows non-empty".into()));
        }
        self.sim.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub rate: f64,
    pub repeat: usize,
    pub train_seed: u64,
    pub noise_seed: u64,
    /// `None` when training failed.
    pub error: Option<String>,
    /// `mse[shift][window]`; infinite when a rollout diverged.
    pub mse: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rate: f64,
    pub window: Window,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub eval_shifts: Vec<f64>,
    pub windows: Vec<Window>,
    pub runs: Vec<SweepRun>,
    pub table: Vec<SweepRow>,
}

impl SweepResult {
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("rate,repeat,train_seed,noise_seed,status,eval_nu,window_start,window_end,mse\n");
        for r in &self.runs {
            let status = if r.error.is_some() { "failed" } else { "ok" };
            for (s, nu) in self.eval_shifts.iter().enumerate() {
                for (w, win) in self.windows.iter().enumerate() {
                    let v = r.mse.get(s).and_then(|row| row.get(w)).copied().unwrap_or(f64::NAN);
                    out.push_str(&format!(
                        "{},{},{},{},{status},{},{},{},{}\n",
                        fmt_f64(r.rate),
                        r.repeat,
                        r.train_seed,
                        r.noise_seed,
                        fmt_f64(*nu),
                        fmt_f64(win.t_start),
                        fmt_f64(win.t_end),
                        fmt_f64(v)
                    ));
                }
            }
        }
        out
    }

    pub fn table_csv(&self) -> String {
        let mut out = String::from("rate,window_start,window_end,mean,std,count\n");
        for row in &self.table {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_f64(row.rate),
                fmt_f64(row.window.t_start),
                fmt_f64(row.window.t_end),
                fmt_f64(row.mean),
                fmt_f64(row.std),
                row.count
            ));
        }
        out
    }

    pub fn row(&self, rate: f64, window: Window) -> Option<&SweepRow> {
        self.table
            .iter()
            .find(|r| (r.rate - rate).abs() < 1e-12 && r.window == window)
    }
}

/// Mean and sample std per (rate, window) over every successful run and
/// evaluation shift, in run order.
pub fn summarize_sweep(rates: &[f64], windows: &[Window], runs: &[SweepRun]) -> Vec<SweepRow> {
    let mut table = Vec::new();
    for &rate in rates {
        for (w, &window) in windows.iter().enumerate() {
            let vals: Vec<f64> = runs
                .iter()
                .filter(|r| r.rate == rate && r.error.is_none())
                .flat_map(|r| r.mse.iter().map(move |row| row[w]))
                .collect();
            let (mean, std) = mean_std(&vals);
            table.push(SweepRow {
                rate,
                window,
                mean,
                std,
                count: vals.len(),
            });
        }
    }
    table
}

/// Scores a learned field on clean evaluation trajectories.
pub fn score_on_shifts(field: &NeuralField, truths: &[(Vec<f64>, Trajectory)], windows: &[Window]) -> Vec<Vec<f64>> {
    truths
        .iter()
        .map(|(y0, truth)| match rollout(field, y0, &truth.times) {
            Ok(pred) => windows
                .iter()
                .map(|w| mse(&pred, truth, *w).unwrap_or(f64::INFINITY))
                .collect(),
            Err(_) => vec![f64::INFINITY; windows.len()],
        })
        .collect()
}

pub fn frequency_sweep(spec: &SweepSpec, base_seed: u64) -> Result<SweepResult, EvalError> {
    spec.validate()?;
    let clean_train = generate_bio_shifts(&spec.train_shifts, &spec.params, &spec.sim)?;
    let clean_eval = generate_bio_shifts(&spec.eval_shifts, &spec.params, &spec.sim)?;
    let truths: Vec<(Vec<f64>, Trajectory)> = clean_eval
        .entries
        .iter()
        .map(|e| (e.initial.clone(), e.traj.clone()))
        .collect();
    let jobs: Vec<(usize, f64, usize)> = spec
        .rates
        .iter()
        .enumerate()
        .flat_map(|(ri, &rate)| (0..spec.repeats).map(move |rep| (ri, rate, rep)))
        .collect();
    let runs: Vec<Result<SweepRun, EvalError>> = jobs
        .par_iter()
        .map(|&(ri, rate, repeat)| {
            let run_id = (ri * spec.repeats + repeat) as u64;
            let noise_seed = derive_seed(base_seed, "sweep-noise", if spec.pin_noise_seed { 0 } else { repeat as u64 });
            let train_seed = derive_seed(base_seed, "sweep-train", if spec.pin_train_seed { 0 } else { run_id });
            let sampling = SamplingSpec::new(0.0, spec.train_hours, rate);
            let (observed, _) = clean_train.observe(&sampling, spec.noise, noise_seed)?;
            let train_spec = TrainSpec {
                seed: train_seed,
                ..spec.train.clone()
            };
            Ok(match train(&observed, &train_spec) {
                Ok(model) => SweepRun {
                    rate,
                    repeat,
                    train_seed,
                    noise_seed,
                    error: None,
                    mse: score_on_shifts(&model.field, &truths, &spec.windows),
                },
                Err(e @ NodeError::Diverged { .. }) => SweepRun {
                    rate,
                    repeat,
                    train_seed,
                    noise_seed,
                    error: Some(e.to_string()),
                    mse: Vec::new(),
                },
                Err(e) => return Err(e.into()),
            })
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let table = summarize_sweep(&spec.rates, &spec.windows, &runs);
    Ok(SweepResult {
        eval_shifts: spec.eval_shifts.clone(),
        windows: spec.windows.clone(),
        runs,
        table,
    })
}

fn color(t: f64) -> String {
    // Dark blue (low) to yellow (high).
    let t = t.clamp(0.0, 1.0);
    let r = (68.0 + t * (253.0 - 68.0)) as u8;
    let g = (1.0 + t * (231.0 - 1.0)) as u8;
    let b = (84.0 + t * (37.0 - 84.0)) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Static SVG of a heatmap on a log10 color scale; infinite cells are grey.
pub fn heatmap_svg(grid: &HeatmapGrid) -> String {
    let (cw, ch, pad) = (24.0, 18.0, 50.0);
    let nx = grid.angles.len();
    let ny = grid.speeds.len();
    let logs: Vec<f64> = grid.values().iter().filter(|v| v.is_finite() && **v > 0.0).map(|v| v.log10()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let width = pad * 2.0 + cw * nx as f64;
    let height = pad * 2.0 + ch * ny as f64;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"10\">\n"
    );
    for i in 0..nx {
        for j in 0..ny {
            let v = grid.mse[i][j];
            let fill = if v.is_finite() && v > 0.0 {
                color((v.log10() - lo) / span)
            } else if v == 0.0 {
                color(0.0)
            } else {
                "#999999".to_string()
            };
            let x = pad + cw * i as f64;
            let y = pad + ch * (ny - 1 - j) as f64;
            s.push_str(&format!("<rect x=\"{x}\" y=\"{y}\" width=\"{cw}\" height=\"{ch}\" fill=\"{fill}\"/>\n"));
        }
    }
    if let (Some(r), true) = (grid.training_rect, nx > 1 && ny > 1) {
        let dx = grid.angles[1] - grid.angles[0];
        let dy = grid.speeds[1] - grid.speeds[0];
        let x0 = pad + cw * ((r.x_min - grid.angles[0]) / dx);
        let x1 = pad + cw * ((r.x_max - grid.angles[0]) / dx + 1.0);
        let y_top = pad + ch * (ny as f64 - 1.0 - (r.y_max - grid.speeds[0]) / dy);
        let y_bot = pad + ch * (ny as f64 - (r.y_min - grid.speeds[0]) / dy);
        s.push_str(&format!(
            "<rect x=\"{x0}\" y=\"{y_top}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"red\" stroke-width=\"2\"/>\n",
            x1 - x0,
            y_bot - y_top
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">initial angle</text>\n",
        width / 2.0,
        height - 15.0
    ));
    s.push_str(&format!(
        "<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" text-anchor=\"middle\">initial speed</text>\n",
        height / 2.0,
        height / 2.0
    ));
    s.push_str(&format!(
        "<text x=\"{pad}\" y=\"20\">log10 MSE from {lo:.2} to {hi:.2}</text>\n</svg>\n"
    ));
    s
}

/// Static SVG of sweep means (log scale) with one-std error bars per window.
pub fn sweep_svg(result: &SweepResult) -> String {
    let (w, h, pad) = (480.0, 320.0, 50.0);
    let rates: Vec<f64> = {
        let mut r: Vec<f64> = result.table.iter().map(|r| r.rate).collect();
        r.dedup();
        r
    };
    let finite: Vec<f64> = result
        .table
        .iter()
        .flat_map(|r| [r.mean - r.std, r.mean + r.std, r.mean])
        .filter(|v| v.is_finite() && *v > 0.0)
        .map(f64::log10)
        .collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let ypos = |v: f64| {
        let l = if v > 0.0 { v.log10() } else { lo };
        h - pad - (l - lo) / span * (h - 2.0 * pad)
    };
    let xpos = |k: usize| pad + (k as f64 + 0.5) / rates.len().max(1) as f64 * (w - 2.0 * pad);
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"10\">\n"
    );
    for (wi, win) in result.windows.iter().enumerate() {
        let c = palette[wi % palette.len()];
        let pts: Vec<String> = rates
            .iter()
            .enumerate()
            .filter_map(|(k, &rate)| result.row(rate, *win).map(|r| format!("{},{}", xpos(k), ypos(r.mean))))
            .collect();
        s.push_str(&format!("<polyline points=\"{}\" fill=\"none\" stroke=\"{c}\"/>\n", pts.join(" ")));
        for (k, &rate) in rates.iter().enumerate() {
            if let Some(r) = result.row(rate, *win) {
                let x = xpos(k);
                s.push_str(&format!(
                    "<line x1=\"{x}\" x2=\"{x}\" y1=\"{}\" y2=\"{}\" stroke=\"{c}\"/>\n<circle cx=\"{x}\" cy=\"{}\" r=\"3\" fill=\"{c}\"/>\n",
                    ypos(r.mean - r.std),
                    ypos(r.mean + r.std),
                    ypos(r.mean)
                ));
            }
        }
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{c}\">MSE {}-{} h</text>\n",
            w - pad - 60.0,
            pad + 12.0 * wi as f64,
            win.t_start,
            win.t_end
        ));
    }
    for (k, rate) in rates.iter().enumerate() {
        s.push_str(&format!("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{rate}</text>\n", xpos(k), h - pad + 15.0));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">points per hour</text>\n</svg>\n",
        w / 2.0,
        h - 10.0
    ));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{cartpole_rhs, CartPole, CartPoleParams};

    fn traj(states: Vec<f64>) -> Trajectory {
        let n = states.len() / 2;
        Trajectory::from_parts(2, (0..n).map(|i| i as f64 * 0.1).collect(), states)
    }

    #[test]
    fn mse_basics() {
        let a = traj(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let w = Window::new(0.0, 1.0);
        assert_eq!(mse(&a, &a, w).unwrap(), 0.0);
        let mut b = a.clone();
        for i in 0..3 {
            b.state_mut(i)[0] += 0.3;
        }
        assert!((mse(&a, &b, w).unwrap() - 0.09 / 2.0).abs() < 1e-15);
        assert_eq!(mse(&a, &b, w).unwrap(), mse(&b, &a, w).unwrap());
        let single = mse(&a, &b, Window::new(0.15, 0.25)).unwrap();
        assert!((single - 0.09 / 2.0).abs() < 1e-15);
        assert!(matches!(mse(&a, &b, Window::new(5.0, 6.0)), Err(EvalError::EmptyWindow(..))));
    }

    #[test]
    fn mse_rejects_misaligned_grids() {
        let a = traj(vec![0.0; 4]);
        let mut b = a.clone();
        b.times[1] = 0.5;
        assert!(matches!(mse(&a, &b, Window::new(0.0, 1.0)), Err(EvalError::Misaligned { index: 1 })));
    }

    #[test]
    fn axes_match_default_grid() {
        let spec = HeatmapSpec::default();
        assert_eq!(spec.angles.len(), 16);
        assert!((spec.angles[15] - 3.0).abs() < 1e-12);
        assert_eq!(spec.speeds.len(), 21);
    }

    #[test]
    fn exact_model_gives_zero_heatmap() {
        let system = SystemSpec::Cartpole {
            params: CartPoleParams::default(),
        };
        let spec = HeatmapSpec {
            angles: vec![0.4, 2.0],
            speeds: vec![0.0, 3.0],
            ..HeatmapSpec::default()
        };
        let grid = heatmap(&system, &CartPole(CartPoleParams::default()), &spec).unwrap();
        assert!(grid.values().iter().all(|v| *v < 1e-8), "{:?}", grid.mse);

        // Single cell equals the direct computation.
        let one = HeatmapSpec {
            angles: vec![1.0],
            speeds: vec![2.0],
            ..HeatmapSpec::default()
        };
        let zero = crate::ode::FnField::new(2, |_t, _y: &[f64], d: &mut [f64]| d.fill(0.0));
        let g = heatmap(&system, &zero, &one).unwrap();
        let truth = simulate_from(&system, &[1.0, 2.0], &one.sim()).unwrap();
        let flat = Trajectory::from_parts(2, truth.times.clone(), truth.times.iter().flat_map(|_| [1.0, 2.0]).collect());
        assert!((g.mse[0][0] - mse(&flat, &truth, one.window).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn phase_field_equilibria() {
        let p = CartPoleParams::default();
        let f = CartPole(p);
        let s = phase_field(&f, (0.0, std::f64::consts::PI), (0.0, 0.0), 3).unwrap();
        assert!(s[0].magnitude.abs() < 1e-12);
        assert!(s[6].magnitude.abs() < 1e-12);
        let mid = s[3];
        let expect = cartpole_rhs(0.0, &[std::f64::consts::FRAC_PI_2, 0.0], &p);
        assert!((mid.magnitude - expect[1].abs()).abs() < 1e-12);
        assert!((mid.magnitude - 73.5).abs() < 1e-9);
        assert!(phase_field(&f, (0.0, 1.0), (0.0, 1.0), 0).is_err());
    }

    #[test]
    fn linf_distance() {
        let a = traj(vec![0.0, 0.0, 1.0, 1.0]);
        let b = traj(vec![1.1, 0.95, 5.0, 5.0]);
        assert!((min_linf_distance(&a, &b) - 0.1).abs() < 1e-12);
        let (near, far) = split_medians(&[1.0, 2.0, 3.0, 10.0], &[true, true, false, false]);
        assert_eq!((near, far), (1.5, 6.5));
    }

    #[test]
    fn summary_is_recomputable_from_runs_csv() {
        let runs = vec![
            SweepRun {
                rate: 5.0,
                repeat: 0,
                train_seed: 1,
                noise_seed: 2,
                error: None,
                mse: vec![vec![0.1, 0.2], vec![0.3, 0.4]],
            },
            SweepRun {
                rate: 5.0,
                repeat: 1,
                train_seed: 3,
                noise_seed: 4,
                error: None,
                mse: vec![vec![1.0 / 3.0, 0.25], vec![0.7, 0.9]],
            },
        ];
        let windows = default_windows();
        let result = SweepResult {
            eval_shifts: vec![1.0, 2.0],
            windows: windows.clone(),
            table: summarize_sweep(&[5.0], &windows, &runs),
            runs,
        };
        let csv = result.runs_csv();
        let parsed: Vec<f64> = csv
            .lines()
            .skip(1)
            .filter(|l| l.contains(&format!(",{},", fmt_f64(8.0))))
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        let (m, s) = mean_std(&parsed);
        let row = result.row(5.0, windows[1]).unwrap();
        assert_eq!((m, s), (row.mean, row.std));
        assert_eq!(row.count, 4);
        assert!(heatmap_svg(&HeatmapGrid {
            angles: vec![0.0, 1.0],
            speeds: vec![0.0, 1.0],
            mse: vec![vec![0.1, f64::INFINITY], vec![1.0, 0.0]],
            training_rect: Some(Rect { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 0.0 }),
        })
        .starts_with("<svg"));
        assert!(sweep_svg(&result).contains("polyline"));
    }
}
