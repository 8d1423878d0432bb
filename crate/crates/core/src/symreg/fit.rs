//! Loss evaluation and Nelder–Mead refinement of expression constants.

use super::expr::Expr;
use super::target::RegressionTarget;

/// Mean squared error of `e` on the target; `+inf` if any prediction is
/// non-finite (including guarded divisions).
pub fn mse_loss(e: &Expr, data: &RegressionTarget) -> f64 {
    let n = data.n_rows();
    let pred = e.eval(&data.columns, n);
    let mut sum = 0.0;
    for (p, y) in pred.iter().zip(&data.target) {
        if !p.is_finite() {
            return f64::INFINITY;
        }
        sum += (p - y) * (p - y);
    }
    let mse = sum / n as f64;
    if mse.is_finite() {
        mse
    } else {
        f64::INFINITY
    }
}

/// Minimizes `f` from `x0` with the standard reflection/expansion/
/// contraction/shrink coefficients. Returns the best point and value.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], max_iter: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    if n == 0 {
        return (Vec::new(), f(x0));
    }
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] = if v[i] != 0.0 { v[i] * 1.05 } else { 0.00025 };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| sanitize(f(x))).collect();
    let mut order: Vec<usize> = (0..=n).collect();

    for _ in 0..max_iter {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (best, worst, second) = (order[0], order[n], order[n - 1]);
        let spread = values[worst] - values[best];
        if spread.abs() <= 1e-14 * values[best].abs().max(1e-300) && values[best].is_finite() {
            break;
        }
        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&simplex[i]) {
                *c += x / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = along(-1.0);
        let fr = sanitize(f(&xr));
        if fr < values[best] {
            let xe = along(-2.0);
            let fe = sanitize(f(&xe));
            if fe < fr {
                simplex[worst] = xe;
                values[worst] = fe;
            } else {
                simplex[worst] = xr;
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second] {
            simplex[worst] = xr;
            values[worst] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[worst] {
            let x = along(-0.5);
            let v = sanitize(f(&x));
            (x, v)
        } else {
            let x = along(0.5);
            let v = sanitize(f(&x));
            (x, v)
        };
        if fc < values[worst].min(fr) {
            simplex[worst] = xc;
            values[worst] = fc;
            continue;
        }
        let xb = simplex[best].clone();
        for &i in &order[1..] {
            for (x, b) in simplex[i].iter_mut().zip(&xb) {
                *x = b + 0.5 * (*x - b);
            }
            values[i] = sanitize(f(&simplex[i]));
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).expect("non-empty simplex");
    (simplex[best].clone(), values[best])
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Refines the constants of `e` by Nelder–Mead on the MSE. The result is
/// never worse than the input; expressions without constants come back
/// unchanged.
pub fn fit_constants(e: &Expr, data: &RegressionTarget, max_iter: usize) -> (Expr, f64) {
    let start_loss = mse_loss(e, data);
    let c0 = e.constants();
    if c0.is_empty() {
        return (e.clone(), start_loss);
    }
    let mut work = e.clone();
    let (best, loss) = nelder_mead(
        |c| {
            work.set_constants(c);
            mse_loss(&work, data)
        },
        &c0,
        max_iter,
    );
    if loss < start_loss {
        let mut out = e.clone();
        out.set_constants(&best);
        (out, loss)
    } else {
        (e.clone(), start_loss)
    }
}
