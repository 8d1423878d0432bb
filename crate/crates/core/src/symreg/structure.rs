//! Algebraic comparison of expressions through a rational normal form:
//! each expression is expanded into a ratio of multivariate polynomials,
//! common monomial factors are cancelled and the ratio is scaled so the
//! leading denominator coefficient is one.

use std::collections::BTreeMap;

use super::expr::{BinOp, Expr, UnOp};

/// Expansion is abandoned beyond this many terms per polynomial.
const MAX_TERMS: usize = 400;

type Monomial = Vec<u32>;

#[derive(Debug, Clone, PartialEq)]
struct Poly {
    terms: BTreeMap<Monomial, f64>,
}

impl Poly {
    fn constant(c: f64, n: usize) -> Poly {
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert(vec![0; n], c);
        }
        Poly { terms }
    }

    fn var(i: usize, n: usize) -> Poly {
        let mut m = vec![0; n];
        m[i] = 1;
        Poly {
            terms: BTreeMap::from([(m, 1.0)]),
        }
    }

    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn add(&self, other: &Poly, sign: f64) -> Poly {
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            let e = terms.entry(m.clone()).or_insert(0.0);
            *e += sign * c;
            if *e == 0.0 {
                terms.remove(m);
            }
        }
        Poly { terms }
    }

    fn mul(&self, other: &Poly) -> Option<Poly> {
        if self.terms.len() * other.terms.len() > MAX_TERMS * 8 {
            return None;
        }
        let mut terms: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let m: Monomial = ma.iter().zip(mb).map(|(a, b)| a + b).collect();
                *terms.entry(m).or_insert(0.0) += ca * cb;
            }
        }
        terms.retain(|_, c| *c != 0.0);
        (terms.len() <= MAX_TERMS).then_some(Poly { terms })
    }

    fn scale(&mut self, k: f64) {
        self.terms.values_mut().for_each(|c| *c *= k);
    }

    fn max_abs(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }
}

/// `num / den` in lowest monomial terms, scaled so the largest denominator
/// monomial has coefficient one.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalForm {
    num: Poly,
    den: Poly,
}

impl RationalForm {
    pub fn from_expr(e: &Expr, n_vars: usize) -> Option<RationalForm> {
        let (num, den) = expand(&e.fold_constants(), n_vars)?;
        if den.is_zero() {
            return None;
        }
        let mut r = RationalForm { num, den };
        r.normalize();
        Some(r)
    }

    fn normalize(&mut self) {
        // Round-off from expansion can leave near-cancelled terms.
        let scale = self.num.max_abs().max(self.den.max_abs());
        for p in [&mut self.num, &mut self.den] {
            p.terms.retain(|_, c| c.abs() > 1e-12 * scale);
        }
        let n = self.den.terms.keys().next().map_or(0, |m| m.len());
        let mut common = vec![u32::MAX; n];
        for m in self.num.terms.keys().chain(self.den.terms.keys()) {
            for (c, e) in common.iter_mut().zip(m) {
                *c = (*c).min(*e);
            }
        }
        if common.iter().any(|&c| c > 0 && c != u32::MAX) {
            for p in [&mut self.num, &mut self.den] {
                p.terms = std::mem::take(&mut p.terms)
                    .into_iter()
                    .map(|(m, c)| (m.iter().zip(&common).map(|(e, k)| e - k).collect(), c))
                    .collect();
            }
        }
        if let Some((_, &lead)) = self.den.terms.iter().next_back() {
            let k = 1.0 / lead;
            self.num.scale(k);
            self.den.scale(k);
        }
    }

    pub fn numerator(&self) -> Vec<(Vec<u32>, f64)> {
        self.num.terms.iter().map(|(m, c)| (m.clone(), *c)).collect()
    }

    pub fn denominator(&self) -> Vec<(Vec<u32>, f64)> {
        self.den.terms.iter().map(|(m, c)| (m.clone(), *c)).collect()
    }

    /// `(exponents, coefficient)` per monomial when the form is a
    /// polynomial, i.e. the denominator is the constant one.
    pub fn polynomial_terms(&self) -> Option<Vec<(Vec<u32>, f64)>> {
        let mut den = self.den.terms.iter();
        match (den.next(), den.next()) {
            (Some((m, _)), None) if m.iter().all(|&e| e == 0) => {
                Some(self.numerator())
            }
            _ => None,
        }
    }

    /// Same monomials on both sides and every coefficient within `rel_tol`
    /// of the reference's.
    pub fn matches(&self, reference: &RationalForm, rel_tol: f64) -> bool {
        let same = |a: &Poly, b: &Poly| {
            a.terms.len() == b.terms.len()
                && a.terms.iter().zip(&b.terms).all(|((ma, ca), (mb, cb))| {
                    ma == mb && (ca - cb).abs() <= rel_tol * cb.abs()
                })
        };
        same(&self.num, &reference.num) && same(&self.den, &reference.den)
    }
}

fn expand(e: &Expr, n: usize) -> Option<(Poly, Poly)> {
    Some(match e {
        Expr::Const(c) => (Poly::constant(*c, n), Poly::constant(1.0, n)),
        Expr::Var(i) => {
            if *i >= n {
                return None;
            }
            (Poly::var(*i, n), Poly::constant(1.0, n))
        }
        Expr::Unary(UnOp::Inv, a) => {
            let (p, q) = expand(a, n)?;
            if p.is_zero() {
                return None;
            }
            (q, p)
        }
        Expr::Binary(op, a, b) => {
            let (pa, qa) = expand(a, n)?;
            let (pb, qb) = expand(b, n)?;
            match op {
                BinOp::Add | BinOp::Sub => {
                    let sign = if *op == BinOp::Add { 1.0 } else { -1.0 };
                    if qa == qb {
                        (pa.add(&pb, sign), qa)
                    } else {
                        let left = pa.mul(&qb)?;
                        let right = pb.mul(&qa)?;
                        (left.add(&right, sign), qa.mul(&qb)?)
                    }
                }
                BinOp::Mul => (pa.mul(&pb)?, qa.mul(&qb)?),
                BinOp::Div => {
                    if pb.is_zero() {
                        return None;
                    }
                    (pa.mul(&qb)?, qa.mul(&pb)?)
                }
            }
        }
    })
}

/// True when `candidate` and `reference` are the same rational function
/// of the inputs up to constants within `rel_tol` (relative).
pub fn structure_match(candidate: &Expr, reference: &Expr, n_vars: usize, rel_tol: f64) -> bool {
    match (
        RationalForm::from_expr(candidate, n_vars),
        RationalForm::from_expr(reference, n_vars),
    ) {
        (Some(a), Some(b)) => a.matches(&b, rel_tol),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::super::expr::{parse_expr, VARIABLE_NAMES};
    use super::*;

    fn p(s: &str) -> Expr {
        parse_expr(s, &VARIABLE_NAMES).unwrap()
    }

    fn m(a: &str, b: &str) -> bool {
        structure_match(&p(a), &p(b), 4, 0.05)
    }

    #[test]
    fn reported_candidates() {
        let growth = "2.079 - 3.78*phi_R - lambda - lambda*psi_A";
        assert!(m("2.076 - 3.77*phi_R - lambda - lambda*psi_A", growth));
        assert!(!m("1.410 - lambda", growth));
        assert!(m(growth, growth));
        assert!(!m("2.024 - 3.54*phi_R - lambda - psi_A", growth));
        assert!(!m("2.006 - 3.67*phi_R - lambda", growth));
    }

    #[test]
    fn rearrangements_match() {
        assert!(m("(chi_R - phi_R) * lambda", "lambda*(chi_R - phi_R)"));
        assert!(m("lambda*chi_R - phi_R*lambda", "lambda*(chi_R - phi_R)"));
        assert!(m(
            "((psi_A / (psi_A + 0.16037777)) - chi_R) * 5.927795",
            "6 * (psi_A / (psi_A + 0.16094) - chi_R)"
        ));
        assert!(m("5.9 * psi_A * inv(psi_A + 0.161) - 6.02 * chi_R", "6 * (psi_A / (psi_A + 0.16094) - chi_R)"));
        assert!(m("(3.78 * (0.55 - phi_R)) - lambda*(psi_A + 1)", "2.079 - 3.78*phi_R - lambda - lambda*psi_A"));
        assert!(m("psi_A / (2 * psi_A)", "0.5"));
    }

    #[test]
    fn mismatches() {
        assert!(!m("6 * (psi_A / (psi_A + 0.2) - chi_R)", "6 * (psi_A / (psi_A + 0.16094) - chi_R)"));
        assert!(!m("lambda*chi_R", "lambda*(chi_R - phi_R)"));
        assert!(!m("lambda*(chi_R - phi_R) + 1e-3", "lambda*(chi_R - phi_R)"));
        assert!(!m("inv(psi_A - psi_A)", "psi_A"));
    }

    #[test]
    fn polynomial_terms_of_the_fallback() {
        let f = RationalForm::from_expr(&p("1.41 - lambda"), 4).unwrap();
        let terms = f.polynomial_terms().unwrap();
        assert_eq!(terms, vec![(vec![0, 0, 0, 0], 1.41), (vec![0, 0, 0, 1], -1.0)]);
        let r = RationalForm::from_expr(&p("psi_A / (psi_A + 0.16)"), 4).unwrap();
        assert!(r.polynomial_terms().is_none());
        let halved = RationalForm::from_expr(&p("(phi_R + 2) / 2"), 4).unwrap();
        assert_eq!(halved.polynomial_terms().unwrap().len(), 2);
    }
}
