//! Finite-difference derivative targets for regression.

use serde::{Deserialize, Serialize};

use super::expr::VARIABLE_NAMES;
use super::SrError;
use crate::ode::Trajectory;
use crate::systems::{growth_rate, BioParams};

/// Second-order differences in the interior (non-uniform spacing allowed)
/// and first-order one-sided differences at both ends.
pub fn gradient(values: &[f64], times: &[f64]) -> Result<Vec<f64>, SrError> {
    let n = values.len();
    if n < 2 || times.len() != n {
        return Err(SrError::TooShort { points: n, needed: 2 });
    }
    let mut d = vec![0.0; n];
    d[0] = (values[1] - values[0]) / (times[1] - times[0]);
    d[n - 1] = (values[n - 1] - values[n - 2]) / (times[n - 1] - times[n - 2]);
    for i in 1..n - 1 {
        let hs = times[i] - times[i - 1];
        let hd = times[i + 1] - times[i];
        d[i] = (hs * hs * values[i + 1] + (hd * hd - hs * hs) * values[i] - hd * hd * values[i - 1])
            / (hs * hd * (hd + hs));
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub original_len: usize,
    pub drop_head: usize,
    pub drop_tail: usize,
}

/// Inputs (column-major) and the derivative of one state component.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTarget {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub target: Vec<f64>,
    /// Which state component was differentiated.
    pub component: usize,
    pub truncation: Truncation,
}

impl RegressionTarget {
    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.columns.len()
    }

    pub fn name_refs(&self) -> Vec<&str> {
        self.names.iter().map(String::as_str).collect()
    }

    /// Stacks several targets of the same component and inputs row-wise.
    pub fn concat(parts: &[RegressionTarget]) -> Result<RegressionTarget, SrError> {
        let first = parts.first().ok_or(SrError::TooShort { points: 0, needed: 1 })?;
        let mut out = first.clone();
        for p in &parts[1..] {
            if p.names != first.names || p.component != first.component {
                return Err(SrError::Invalid("cannot stack targets with different inputs".into()));
            }
            for (c, pc) in out.columns.iter_mut().zip(&p.columns) {
                c.extend_from_slice(pc);
            }
            out.target.extend_from_slice(&p.target);
            out.truncation.original_len += p.truncation.original_len;
        }
        Ok(out)
    }
}

/// Derivatives of the three bio-model states, differentiated on the full
/// series and then cut by `drop_head` leading and `drop_tail` trailing
/// rows. With `include_lambda` the growth rate computed from the
/// (possibly noisy) states is appended as a fourth input.
pub fn derivative_targets(
    traj: &Trajectory,
    drop_head: usize,
    drop_tail: usize,
    include_lambda: bool,
    params: &BioParams,
) -> Result<Vec<RegressionTarget>, SrError> {
    if traj.dim != 3 {
        return Err(SrError::Invalid(format!("expected 3 state columns, got {}", traj.dim)));
    }
    let n = traj.len();
    if n < drop_head + drop_tail + 3 {
        return Err(SrError::TooShort {
            points: n,
            needed: drop_head + drop_tail + 3,
        });
    }
    let keep = drop_head..n - drop_tail;
    let states: Vec<Vec<f64>> = (0..3).map(|k| traj.component(k)).collect();
    let mut columns: Vec<Vec<f64>> = states.iter().map(|c| c[keep.clone()].to_vec()).collect();
    let mut names: Vec<String> = VARIABLE_NAMES[..3].iter().map(|s| s.to_string()).collect();
    if include_lambda {
        columns.push(
            keep.clone()
                .map(|i| growth_rate(states[0][i], states[1][i], params))
                .collect(),
        );
        names.push(VARIABLE_NAMES[3].to_string());
    }
    let truncation = Truncation {
        original_len: n,
        drop_head,
        drop_tail,
    };
    (0..3)
        .map(|k| {
            let d = gradient(&states[k], &traj.times)?;
            let target = d[keep.clone()].to_vec();
            if target.iter().chain(columns.iter().flatten()).any(|v| !v.is_finite()) {
                return Err(SrError::Invalid("non-finite value in regression data".into()));
            }
            Ok(RegressionTarget {
                names: names.clone(),
                columns: columns.clone(),
                target,
                component: k,
                truncation,
            })
        })
        .collect()
}
