//! Fixed-step and adaptive ODE integration.
//!
//! Both integrators work on any [`VectorField`] and return a [`Trajectory`]
//! sampled on the requested times. States whose magnitude exceeds
//! [`DIVERGENCE_LIMIT`] (or become non-finite) abort the solve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Any state component beyond this magnitude is treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("solution diverged at t = {t}")]
    Divergence { t: f64 },
    #[error("step size underflow at t = {t} (h = {h:e}); problem looks stiff")]
    Stiffness { t: f64, h: f64 },
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: field has {field}, state has {state}")]
    DimMismatch { field: usize, state: usize },
    #[error("invalid tolerance: rtol = {rtol}, atol = {atol}")]
    InvalidTolerance { rtol: f64, atol: f64 },
}

/// Right-hand side `dy/dt = f(t, y)` of an ODE system.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]);
}

impl<F: VectorField + ?Sized> VectorField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        (**self).eval(t, y, dydt)
    }
}

/// Adapts a closure into a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        (self.f)(t, y, dydt)
    }
}

/// Provenance carried alongside a trajectory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub system: String,
    pub label: String,
    pub seed: Option<u64>,
}

/// Time-stamped states for one initial condition. States are stored
/// row-major: `states[i * dim .. (i + 1) * dim]` is the state at `times[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            times: Vec::new(),
            states: Vec::new(),
            meta: TrajectoryMeta::default(),
        }
    }

    pub fn from_parts(dim: usize, times: Vec<f64>, states: Vec<f64>) -> Self {
        assert_eq!(times.len() * dim, states.len(), "trajectory shape mismatch");
        Self {
            dim,
            times,
            states,
            meta: TrajectoryMeta::default(),
        }
    }

    pub fn with_meta(mut self, meta: TrajectoryMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn state_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, t: f64, y: &[f64]) {
        debug_assert_eq!(y.len(), self.dim);
        self.times.push(t);
        self.states.extend_from_slice(y);
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        (!self.is_empty()).then(|| self.state(self.len() - 1))
    }

    /// One component over time.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.states.iter().skip(k).step_by(self.dim).copied().collect()
    }

    /// Keeps the first `n` points.
    pub fn truncated(&self, n: usize) -> Trajectory {
        let n = n.min(self.len());
        Trajectory {
            dim: self.dim,
            times: self.times[..n].to_vec(),
            states: self.states[..n * self.dim].to_vec(),
            meta: self.meta.clone(),
        }
    }

    /// True when times are strictly increasing and every state is finite.
    pub fn is_valid(&self) -> bool {
        self.times.len() * self.dim == self.states.len()
            && self.times.windows(2).all(|w| w[1] > w[0])
            && self.states.iter().all(|x| x.is_finite())
    }
}

fn check_state(t: f64, y: &[f64]) -> Result<(), OdeError> {
    if y.iter().all(|x| x.is_finite() && x.abs() <= DIVERGENCE_LIMIT) {
        Ok(())
    } else {
        Err(OdeError::Divergence { t })
    }
}

fn check_grid(t_grid: &[f64], min_len: usize) -> Result<(), OdeError> {
    if t_grid.len() < min_len {
        return Err(OdeError::InvalidGrid(format!(
            "need at least {min_len} time points, got {}",
            t_grid.len()
        )));
    }
    if t_grid.iter().any(|t| !t.is_finite()) {
        return Err(OdeError::InvalidGrid("non-finite time".into()));
    }
    if let Some(w) = t_grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(OdeError::InvalidGrid(format!(
            "times not strictly increasing: {} then {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Scratch buffers for the classical RK4 step.
struct Rk4Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Work {
    fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    fn step<F: VectorField + ?Sized>(&mut self, f: &F, t: f64, h: f64, y: &mut [f64]) {
        let n = y.len();
        f.eval(t, y, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        f.eval(t + 0.5 * h, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        f.eval(t + 0.5 * h, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        f.eval(t + h, &self.tmp, &mut self.k4);
        for i in 0..n {
            y[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Classical RK4, one step per grid interval.
pub fn integrate_rk4<F: VectorField + ?Sized>(
    f: &F,
    y0: &[f64],
    t_grid: &[f64],
) -> Result<Trajectory, OdeError> {
    integrate_rk4_substeps(f, y0, t_grid, 1)
}

/// Classical RK4 with `substeps` equal steps inside every grid interval.
pub fn integrate_rk4_substeps<F: VectorField + ?Sized>(
    f: &F,
    y0: &[f64],
    t_grid: &[f64],
    substeps: usize,
) -> Result<Trajectory, OdeError> {
    let dim = f.dim();
    if y0.len() != dim {
        return Err(OdeError::DimMismatch {
            field: dim,
            state: y0.len(),
        });
    }
    check_grid(t_grid, 2)?;
    let substeps = substeps.max(1);
    check_state(t_grid[0], y0)?;

    let mut traj = Trajectory::new(dim);
    traj.times.reserve(t_grid.len());
    traj.states.reserve(t_grid.len() * dim);
    traj.push(t_grid[0], y0);

    let mut work = Rk4Work::new(dim);
    let mut y = y0.to_vec();
    for w in t_grid.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        for s in 0..substeps {
            let t = w[0] + s as f64 * h;
            work.step(f, t, h, &mut y);
            check_state(t + h, &y)?;
        }
        traj.push(w[1], &y);
    }
    Ok(traj)
}

/// Tolerances and step-control knobs for [`integrate_adaptive`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h_init: Option<f64>,
}

impl AdaptiveOptions {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            max_steps: 1_000_000,
            h_init: None,
        }
    }
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self::new(1e-8, 1e-10)
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Error coefficients: 5th-order weights minus embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// PI controller constants (Hairer & Wanner defaults for DOPRI5).
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

fn error_norm(y: &[f64], y_new: &[f64], err: &[f64], rtol: f64, atol: f64) -> f64 {
    let n = y.len() as f64;
    let sum: f64 = y
        .iter()
        .zip(y_new)
        .zip(err)
        .map(|((a, b), e)| {
            let sc = atol + rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step<F: VectorField + ?Sized>(
    f: &F,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    span: f64,
    rtol: f64,
    atol: f64,
) -> f64 {
    let dim = y0.len();
    let scale: Vec<f64> = y0.iter().map(|y| atol + rtol * y.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter().zip(&scale).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / dim as f64).sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, d)| y + h0 * d).collect();
    let mut f1 = vec![0.0; dim];
    f.eval(t0 + h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(span)
}

// Continuous extension of the 5(4) pair: y(t + theta h) = y + h sum_i k_i
// (P[i][0] theta + P[i][1] theta^2 + P[i][2] theta^3 + P[i][3] theta^4).
// Stage 2 has zero weight.
const DENSE: [[f64; 4]; 7] = [
    [
        1.0,
        -8048581381.0 / 2820520608.0,
        8663915743.0 / 2820520608.0,
        -12715105075.0 / 11282082432.0,
    ],
    [0.0; 4],
    [
        0.0,
        131558114200.0 / 32700410799.0,
        -68118460800.0 / 10900136933.0,
        87487479700.0 / 32700410799.0,
    ],
    [
        0.0,
        -1754552775.0 / 470086768.0,
        14199869525.0 / 1410260304.0,
        -10690763975.0 / 1880347072.0,
    ],
    [
        0.0,
        127303824393.0 / 49829197408.0,
        -318862633887.0 / 49829197408.0,
        701980252875.0 / 199316789632.0,
    ],
    [
        0.0,
        -282668133.0 / 205662961.0,
        2019193451.0 / 616988883.0,
        -1453857185.0 / 822651844.0,
    ],
    [
        0.0,
        40617522.0 / 29380423.0,
        -110615467.0 / 29380423.0,
        69997945.0 / 29380423.0,
    ],
];

/// Fourth-order dense output inside an accepted step.
fn dense_output(theta: f64, h: f64, y0: &[f64], ks: [&[f64]; 7], out: &mut [f64]) {
    let powers = [theta, theta * theta, theta.powi(3), theta.powi(4)];
    let weights: [f64; 7] = std::array::from_fn(|s| DENSE[s].iter().zip(&powers).map(|(p, t)| p * t).sum());
    for i in 0..out.len() {
        let incr: f64 = ks.iter().zip(&weights).map(|(k, w)| w * k[i]).sum();
        out[i] = y0[i] + h * incr;
    }
}

/// Dormand–Prince 5(4) with PI step-size control. Values at `sample_times`
/// come from the pair's fourth-order dense output between accepted steps.
pub fn integrate_adaptive<F: VectorField + ?Sized>(
    f: &F,
    y0: &[f64],
    t_span: (f64, f64),
    sample_times: &[f64],
    opts: &AdaptiveOptions,
) -> Result<Trajectory, OdeError> {
    let dim = f.dim();
    if y0.len() != dim {
        return Err(OdeError::DimMismatch {
            field: dim,
            state: y0.len(),
        });
    }
    let (rtol, atol) = (opts.rtol, opts.atol);
    if !(rtol > 0.0 && atol > 0.0) {
        return Err(OdeError::InvalidTolerance { rtol, atol });
    }
    let (t0, t1) = t_span;
    if !(t1 >= t0) {
        return Err(OdeError::InvalidGrid(format!("empty span ({t0}, {t1})")));
    }
    let mut traj = Trajectory::new(dim);
    if sample_times.is_empty() {
        return Ok(traj);
    }
    check_grid(sample_times, 1)?;
    let eps = 1e-12 * t1.abs().max(t0.abs()).max(1.0);
    if sample_times[0] < t0 - eps || sample_times[sample_times.len() - 1] > t1 + eps {
        return Err(OdeError::InvalidGrid("sample times outside the span".into()));
    }
    check_state(t0, y0)?;

    let mut next = 0;
    while next < sample_times.len() && sample_times[next] <= t0 + eps {
        traj.push(sample_times[next], y0);
        next += 1;
    }
    let t_end = sample_times[sample_times.len() - 1].min(t1);
    if next == sample_times.len() || t_end <= t0 {
        return Ok(traj);
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut k5 = vec![0.0; dim];
    let mut k6 = vec![0.0; dim];
    let mut k7 = vec![0.0; dim];
    let mut ytmp = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let mut dense = vec![0.0; dim];

    f.eval(t, &y, &mut k1);
    let span = t_end - t0;
    let mut h = opts
        .h_init
        .unwrap_or_else(|| initial_step(f, t0, &y, &k1, span, rtol, atol))
        .min(span);
    let mut err_old: f64 = 1e-4;
    let mut rejected_last = false;
    let expo = 1.0 / 5.0 - 0.75 * BETA;

    for _ in 0..opts.max_steps {
        if t_end - t < eps {
            break;
        }
        let last = t + h >= t_end - eps;
        if last {
            h = t_end - t;
        }
        let h_min = 1e-14 * t.abs().max(1.0);
        if h < h_min {
            return Err(OdeError::Stiffness { t, h });
        }

        for i in 0..dim {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        f.eval(t + C2 * h, &ytmp, &mut k2);
        for i in 0..dim {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f.eval(t + C3 * h, &ytmp, &mut k3);
        for i in 0..dim {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f.eval(t + C4 * h, &ytmp, &mut k4);
        for i in 0..dim {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f.eval(t + C5 * h, &ytmp, &mut k5);
        for i in 0..dim {
            ytmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f.eval(t + h, &ytmp, &mut k6);
        for i in 0..dim {
            y_new[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f.eval(t + h, &y_new, &mut k7);
        for i in 0..dim {
            err[i] = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }

        let en = error_norm(&y, &y_new, &err, rtol, atol);
        if !en.is_finite() {
            // Non-finite stages: shrink hard and retry; divergence shows up
            // through h underflow or the state check on acceptance.
            if y_new.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) && h <= h_min * 1e3 {
                return Err(OdeError::Divergence { t: t + h });
            }
            h *= FAC_MIN;
            rejected_last = true;
            continue;
        }

        if en <= 1.0 {
            check_state(t + h, &y_new)?;
            let t_new = if last { t_end } else { t + h };
            while next < sample_times.len() && sample_times[next] <= t_new + eps {
                let ts = sample_times[next].min(t_new);
                let theta = ((ts - t) / h).clamp(0.0, 1.0);
                dense_output(theta, h, &y, [&k1, &k2, &k3, &k4, &k5, &k6, &k7], &mut dense);
                traj.push(sample_times[next], &dense);
                next += 1;
            }
            let mut fac = en.powf(expo) / err_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if rejected_last {
                h_new = h_new.min(h);
            }
            err_old = en.max(1e-4);
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            rejected_last = false;
            if next == sample_times.len() {
                return Ok(traj);
            }
            h = h_new;
        } else {
            let fac = (en.powf(expo) / SAFETY).min(1.0 / FAC_MIN);
            h /= fac;
            rejected_last = true;
        }
    }
    if next == sample_times.len() {
        Ok(traj)
    } else {
        Err(OdeError::Stiffness { t, h })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn growth() -> FnField<impl Fn(f64, &[f64], &mut [f64])> {
        FnField::new(1, |_t, y, d| d[0] = y[0])
    }

    fn decay() -> FnField<impl Fn(f64, &[f64], &mut [f64])> {
        FnField::new(1, |_t, y, d| d[0] = -y[0])
    }

    #[test]
    fn single_rk4_step_matches_hand_computation() {
        // k1 = 1, k2 = 1.05, k3 = 1.0525, k4 = 1.10525
        let expected = 1.0 + 0.1 / 6.0 * (1.0 + 2.0 * 1.05 + 2.0 * 1.0525 + 1.10525);
        let traj = integrate_rk4(&growth(), &[1.0], &[0.0, 0.1]).unwrap();
        assert!((traj.state(1)[0] - expected).abs() < 1e-15);
        assert!((traj.state(1)[0] - 1.105_170_833).abs() < 1e-9);
    }

    #[test]
    fn constant_field_keeps_state() {
        let f = FnField::new(1, |_t, _y, d: &mut [f64]| d[0] = 0.0);
        let grid: Vec<f64> = (0..20).map(|i| i as f64 * 0.37).collect();
        let traj = integrate_rk4(&f, &[2.5], &grid).unwrap();
        assert!(traj.states.iter().all(|&x| x == 2.5));
    }

    #[test]
    fn rk4_substeps_reach_e() {
        let traj = integrate_rk4_substeps(&growth(), &[1.0], &[0.0, 1.0], 1000).unwrap();
        assert!((traj.state(1)[0] - std::f64::consts::E).abs() < 1e-9);
    }

    #[test]
    fn rk4_rejects_bad_grids() {
        assert!(matches!(
            integrate_rk4(&growth(), &[1.0], &[0.0]),
            Err(OdeError::InvalidGrid(_))
        ));
        assert!(matches!(
            integrate_rk4(&growth(), &[1.0], &[0.0, 0.5, 0.5]),
            Err(OdeError::InvalidGrid(_))
        ));
        assert!(matches!(
            integrate_rk4(&growth(), &[1.0, 2.0], &[0.0, 1.0]),
            Err(OdeError::DimMismatch { .. })
        ));
    }

    #[test]
    fn rk4_reports_divergence_time() {
        // y' = y^2 from y0 = 1 blows up at t = 1.
        let f = FnField::new(1, |_t, y: &[f64], d: &mut [f64]| d[0] = y[0] * y[0]);
        let grid: Vec<f64> = (0..=200).map(|i| i as f64 * 0.01).collect();
        match integrate_rk4(&f, &[1.0], &grid) {
            Err(OdeError::Divergence { t }) => assert!(t > 0.9 && t < 1.2, "t = {t}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rk4_error_is_fourth_order() {
        let err = |h: f64| {
            let n = (1.0 / h).round() as usize;
            let grid: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
            let traj = integrate_rk4(&growth(), &[1.0], &grid).unwrap();
            (traj.last_state().unwrap()[0] - std::f64::consts::E).abs()
        };
        let e: Vec<f64> = [0.1, 0.05, 0.025, 0.0125].iter().map(|&h| err(h)).collect();
        for w in e.windows(2) {
            assert!(w[0] / w[1] >= 14.0, "ratio {}", w[0] / w[1]);
        }
    }

    #[test]
    fn adaptive_decay_to_one() {
        let opts = AdaptiveOptions::new(1e-8, 1e-10);
        let traj = integrate_adaptive(&decay(), &[1.0], (0.0, 1.0), &[0.0, 0.5, 1.0], &opts).unwrap();
        assert_eq!(traj.len(), 3);
        assert_eq!(traj.state(0)[0], 1.0);
        assert!((traj.state(2)[0] - (-1.0f64).exp()).abs() < 1e-7);
        // dense output between steps
        assert!((traj.state(1)[0] - (-0.5f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn adaptive_empty_samples() {
        let traj =
            integrate_adaptive(&decay(), &[1.0], (0.0, 1.0), &[], &AdaptiveOptions::default()).unwrap();
        assert!(traj.is_empty());
    }

    #[test]
    fn adaptive_is_deterministic() {
        let times: Vec<f64> = (0..=50).map(|i| i as f64 * 0.02).collect();
        let opts = AdaptiveOptions::new(1e-6, 1e-9);
        let a = integrate_adaptive(&growth(), &[1.0], (0.0, 1.0), &times, &opts).unwrap();
        let b = integrate_adaptive(&growth(), &[1.0], (0.0, 1.0), &times, &opts).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn adaptive_rejects_bad_tolerance_and_samples() {
        assert!(matches!(
            integrate_adaptive(&decay(), &[1.0], (0.0, 1.0), &[0.5], &AdaptiveOptions::new(0.0, 1e-9)),
            Err(OdeError::InvalidTolerance { .. })
        ));
        assert!(matches!(
            integrate_adaptive(&decay(), &[1.0], (0.0, 1.0), &[2.0], &AdaptiveOptions::default()),
            Err(OdeError::InvalidGrid(_))
        ));
    }

    #[test]
    fn adaptive_detects_blowup() {
        let f = FnField::new(1, |_t, y: &[f64], d: &mut [f64]| d[0] = y[0] * y[0]);
        let res = integrate_adaptive(&f, &[1.0], (0.0, 2.0), &[2.0], &AdaptiveOptions::new(1e-6, 1e-9));
        assert!(matches!(
            res,
            Err(OdeError::Divergence { .. }) | Err(OdeError::Stiffness { .. })
        ));
    }
}
