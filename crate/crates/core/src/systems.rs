//! Cart-pole angle dynamics and the bacterial growth-transition model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ode::VectorField;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("state outside model domain: {0}")]
    Domain(String),
    #[error("no physical steady state for nu = {nu}")]
    NoSteadyState { nu: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

/// Parameters of the unforced (or constantly forced) cart-pole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CartPoleParams {
    /// Force on the cart (N).
    pub force: f64,
    /// Half of the pole length (m).
    pub half_length: f64,
    pub pole_mass: f64,
    pub cart_mass: f64,
    /// Friction coefficient in the pole/cart joint.
    pub pole_friction: f64,
    pub gravity: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            force: 0.0,
            half_length: 0.1,
            pole_mass: 0.1,
            cart_mass: 1.0,
            pole_friction: 0.0008,
            gravity: 9.8,
        }
    }
}

impl CartPoleParams {
    pub fn validate(&self) -> Result<(), SystemError> {
        let positive = [
            ("half_length", self.half_length),
            ("pole_mass", self.pole_mass),
            ("cart_mass", self.cart_mass),
            ("gravity", self.gravity),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SystemError::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.pole_friction >= 0.0) || !self.force.is_finite() {
            return Err(SystemError::InvalidParams("pole_friction must be >= 0".into()));
        }
        Ok(())
    }

    /// Effective-inertia denominator `l (4/3 - m_p cos^2 / (m_c + m_p))`.
    pub fn denominator(&self, theta: f64) -> f64 {
        let total = self.cart_mass + self.pole_mass;
        let c = theta.cos();
        self.half_length * (4.0 / 3.0 - self.pole_mass * c * c / total)
    }

    /// Pole energy conserved by the angle dynamics when `F = 0` and
    /// `mu_p = 0` (cart momentum eliminated at zero total momentum).
    pub fn energy(&self, theta: f64, omega: f64) -> f64 {
        let total = self.cart_mass + self.pole_mass;
        let c = theta.cos();
        let l = self.half_length;
        0.5 * self.pole_mass * l * l * (4.0 / 3.0 - self.pole_mass * c * c / total) * omega * omega
            + self.pole_mass * self.gravity * l * c
    }
}

/// Angular acceleration of the pole.
pub fn cartpole_accel(theta: f64, omega: f64, p: &CartPoleParams) -> f64 {
    let total = p.cart_mass + p.pole_mass;
    let (s, c) = theta.sin_cos();
    let num = p.gravity * s
        + c * ((-p.force - p.pole_mass * p.half_length * omega * omega * s) / total)
        - p.pole_friction * omega / (p.pole_mass * p.half_length);
    num / p.denominator(theta)
}

/// `[theta, omega] -> [omega, theta_ddot]`.
pub fn cartpole_rhs(_t: f64, y: &[f64; 2], p: &CartPoleParams) -> [f64; 2] {
    [y[1], cartpole_accel(y[0], y[1], p)]
}

#[derive(Debug, Clone, Copy)]
pub struct CartPole(pub CartPoleParams);

impl VectorField for CartPole {
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        dydt[0] = y[1];
        dydt[1] = cartpole_accel(y[0], y[1], &self.0);
    }
}

/// Constants of the growth-transition model. `nu` is the post-shift
/// nutrient quality that drives the amino-acid balance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BioParams {
    pub phi_r_max: f64,
    /// Maximum elongation rate (1/h).
    pub eps_max: f64,
    pub k_a: f64,
    pub c: f64,
    /// Reference (p)ppGpp concentration (uM).
    pub g_ref: f64,
    /// Allocation constant (uM).
    pub k_g: f64,
    /// Regulatory timescale (h).
    pub tau_chi: f64,
    /// Nutrient quality after the shift (1/h).
    pub nu: f64,
}

impl Default for BioParams {
    fn default() -> Self {
        Self {
            phi_r_max: 0.55,
            eps_max: 10.04,
            k_a: 0.005,
            c: 4.6,
            g_ref: 101.46,
            k_g: 14.5,
            tau_chi: 1.0 / 6.0,
            nu: 3.78,
        }
    }
}

impl BioParams {
    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        let all = [
            ("phi_r_max", self.phi_r_max),
            ("eps_max", self.eps_max),
            ("k_a", self.k_a),
            ("c", self.c),
            ("g_ref", self.g_ref),
            ("k_g", self.k_g),
            ("tau_chi", self.tau_chi),
            ("nu", self.nu),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SystemError::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Shorthand `A = K_G`.
    pub fn a(&self) -> f64 {
        self.k_g
    }

    /// Shorthand `A2 = C G_ref k_a`.
    pub fn a2(&self) -> f64 {
        self.c * self.g_ref * self.k_a
    }
}

/// Growth-transition state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BioState {
    pub psi_a: f64,
    pub phi_r: f64,
    pub chi_r: f64,
}

impl BioState {
    pub fn to_array(self) -> [f64; 3] {
        [self.psi_a, self.phi_r, self.chi_r]
    }

    pub fn from_slice(y: &[f64]) -> Self {
        Self {
            psi_a: y[0],
            phi_r: y[1],
            chi_r: y[2],
        }
    }
}

/// Translation rate `eps_max psi_A / (psi_A + k_a)`.
pub fn translation_rate(psi_a: f64, p: &BioParams) -> f64 {
    p.eps_max * psi_a / (psi_a + p.k_a)
}

/// Growth rate `lambda = eps phi_R`.
pub fn growth_rate(psi_a: f64, phi_r: f64, p: &BioParams) -> f64 {
    translation_rate(psi_a, p) * phi_r
}

/// RNA polymerase allocation on ribosomal genes, `K_G / (K_G + [G])` with
/// `[G] = C G_ref ((psi_A + k_a)/psi_A - 1)`.
pub fn omega_r(psi_a: f64, p: &BioParams) -> Result<f64, SystemError> {
    if !(psi_a > 0.0) {
        return Err(SystemError::Domain(format!("omega_R needs psi_A > 0, got {psi_a}")));
    }
    let g = p.c * p.g_ref * ((psi_a + p.k_a) / psi_a - 1.0);
    Ok(p.k_g / (p.k_g + g))
}

/// The same allocation written as `psi_A A / (psi_A A + A2)`; finite for
/// every `psi_A > -A2/A`.
pub fn omega_r_shorthand(psi_a: f64, p: &BioParams) -> f64 {
    let pa = psi_a * p.a();
    pa / (pa + p.a2())
}

/// Right-hand side in the expanded form (state variables and constants only).
pub fn bio_rhs_expanded(y: &[f64], p: &BioParams) -> [f64; 3] {
    let (psi, phi, chi) = (y[0], y[1], y[2]);
    let sat = psi / (psi + p.k_a);
    [
        (p.phi_r_max - phi) * p.nu - phi * p.eps_max * (psi * (psi + 1.0)) / (psi + p.k_a),
        phi * (chi - phi) * p.eps_max * sat,
        (omega_r_shorthand(psi, p) - chi) / p.tau_chi,
    ]
}

/// Right-hand side written through `lambda` and `omega_R`.
pub fn bio_rhs_simplified(y: &[f64], p: &BioParams) -> Result<[f64; 3], SystemError> {
    let (psi, phi, chi) = (y[0], y[1], y[2]);
    let lambda = growth_rate(psi, phi, p);
    let omega = omega_r(psi, p)?;
    Ok([
        (p.phi_r_max - phi) * p.nu - lambda * (1.0 + psi),
        lambda * (chi - phi),
        (omega - chi) / p.tau_chi,
    ])
}

/// Checked right-hand side of the growth-transition model.
pub fn bio_rhs(_t: f64, y: &BioState, p: &BioParams) -> Result<[f64; 3], SystemError> {
    if !(y.psi_a > -p.k_a) {
        return Err(SystemError::Domain(format!(
            "psi_A = {} must exceed -k_a = {}",
            y.psi_a, -p.k_a
        )));
    }
    Ok(bio_rhs_expanded(&y.to_array(), p))
}

#[derive(Debug, Clone, Copy)]
pub struct BioModel(pub BioParams);

impl VectorField for BioModel {
    fn dim(&self) -> usize {
        3
    }
    fn eval(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        if y[0] > -self.0.k_a {
            dydt.copy_from_slice(&bio_rhs_expanded(y, &self.0));
        } else {
            dydt.fill(f64::NAN);
        }
    }
}

/// Bracket searched for the steady-state amino-acid ratio.
pub const STEADY_STATE_BRACKET: (f64, f64) = (1e-6, 10.0);

fn steady_residual(psi: f64, nu: f64, p: &BioParams) -> f64 {
    let omega = omega_r_shorthand(psi, p);
    (p.phi_r_max - omega) * nu - p.eps_max * omega * psi / (psi + p.k_a) * (1.0 + psi)
}

/// Unique steady state with positive `psi_A` for nutrient quality `nu`.
///
/// With `chi_R = phi_R = omega_R(psi_A)` the remaining balance is a scalar
/// equation in `psi_A`, solved by bisection and polished with Newton steps.
pub fn bio_steady_state(nu: f64, p: &BioParams) -> Result<BioState, SystemError> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(SystemError::NoSteadyState { nu });
    }
    let (mut lo, mut hi) = STEADY_STATE_BRACKET;
    let mut f_lo = steady_residual(lo, nu, p);
    let f_hi = steady_residual(hi, nu, p);
    if !(f_lo.signum() * f_hi.signum() < 0.0) {
        return Err(SystemError::NoSteadyState { nu });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = steady_residual(mid, nu, p);
        if f_mid == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let mut psi = 0.5 * (lo + hi);
    for _ in 0..5 {
        let f = steady_residual(psi, nu, p);
        let dpsi = 1e-7 * psi;
        let df = (steady_residual(psi + dpsi, nu, p) - steady_residual(psi - dpsi, nu, p)) / (2.0 * dpsi);
        if df == 0.0 || !df.is_finite() {
            break;
        }
        let cand = psi - f / df;
        if cand > lo.min(hi) * 0.5 && cand < hi * 2.0 && steady_residual(cand, nu, p).abs() <= f.abs() {
            psi = cand;
        } else {
            break;
        }
    }
    let phi = omega_r_shorthand(psi, p);
    Ok(BioState {
        psi_a: psi,
        phi_r: phi,
        chi_r: phi,
    })
}

/// Which ground-truth system a run simulates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Cartpole {
        #[serde(default)]
        params: CartPoleParams,
    },
    Bio {
        #[serde(default)]
        params: BioParams,
    },
}

impl SystemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SystemSpec::Cartpole { .. } => "cartpole",
            SystemSpec::Bio { .. } => "bio",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SystemSpec::Cartpole { .. } => 2,
            SystemSpec::Bio { .. } => 3,
        }
    }

    pub fn columns(&self) -> Vec<String> {
        let names: &[&str] = match self {
            SystemSpec::Cartpole { .. } => &["theta", "omega"],
            SystemSpec::Bio { .. } => &["psi_A", "phi_R", "chi_R"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        match self {
            SystemSpec::Cartpole { params } => params.validate(),
            SystemSpec::Bio { params } => params.validate(),
        }
    }

    pub fn field(&self) -> Box<dyn VectorField + Send + Sync> {
        match *self {
            SystemSpec::Cartpole { params } => Box::new(CartPole(params)),
            SystemSpec::Bio { params } => Box::new(BioModel(params)),
        }
    }
}
