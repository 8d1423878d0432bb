//! Symbolic regression of state derivatives: expression trees, derivative
//! targets, constant fitting, genetic-programming search, Pareto fronts and
//! structural comparison against reference equations.

pub mod expr;
pub mod fit;
pub mod pareto;
pub mod search;
pub mod structure;
pub mod target;

use thiserror::Error;

pub use expr::{parse_expr, BinOp, Expr, UnOp, VARIABLE_NAMES};
pub use fit::{fit_constants, mse_loss, nelder_mead};
pub use pareto::{score, FrontRow, ParetoFront};
pub use search::{search, MutationWeights, SearchOutcome, SrConfig};
pub use structure::{structure_match, RationalForm};
pub use target::{derivative_targets, gradient, RegressionTarget, Truncation};

#[derive(Debug, Error)]
pub enum SrError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("series has {points} points; need at least {needed}")]
    TooShort { points: usize, needed: usize },
    #[error("invalid symbolic-regression input: {0}")]
    Invalid(String),
}

/// Relative constant tolerance used when deciding that an equation was
/// recovered.
pub const RECOVERY_TOLERANCE: f64 = 0.05;

/// Reference right-hand sides of the bio model in the regression grammar,
/// with constants taken from the given parameters.
pub fn reference_equations(p: &crate::systems::BioParams) -> [Expr; 3] {
    let n = &VARIABLE_NAMES;
    let eq_psi = format!(
        "{:?} - {:?} * phi_R - lambda - lambda * psi_A",
        p.phi_r_max * p.nu,
        p.nu
    );
    let eq_phi = "lambda * (chi_R - phi_R)".to_string();
    let eq_chi = format!(
        "{:?} * (psi_A / (psi_A + {:?}) - chi_R)",
        1.0 / p.tau_chi,
        p.a2() / p.a()
    );
    [eq_psi, eq_phi, eq_chi].map(|s| parse_expr(&s, n).expect("reference equations parse"))
}

/// Whether any front row matches `reference` structurally.
pub fn recovered(front: &ParetoFront, reference: &Expr, n_vars: usize) -> Option<usize> {
    front
        .rows
        .iter()
        .position(|r| structure_match(&r.expr, reference, n_vars, RECOVERY_TOLERANCE))
}
