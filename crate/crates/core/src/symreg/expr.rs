//! Expression trees: evaluation, complexity, constant folding, subtree
//! addressing and the infix text grammar.

use std::fmt;

use super::SrError;

/// Guard for `/` and `inv`: smaller denominators poison the candidate.
pub const DENOMINATOR_GUARD: f64 = 1e-12;

/// Input variable names in column order.
pub const VARIABLE_NAMES: [&str; 4] = ["psi_A", "phi_R", "chi_R", "lambda"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub const ALL: [BinOp; 4] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div];

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    #[inline]
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => {
                if b.abs() < DENOMINATOR_GUARD {
                    f64::NAN
                } else {
                    a / b
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Inv,
}

impl UnOp {
    #[inline]
    fn apply(self, a: f64) -> f64 {
        match self {
            UnOp::Inv => {
                if a.abs() < DENOMINATOR_GUARD {
                    f64::NAN
                } else {
                    1.0 / a
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn inv(a: Expr) -> Expr {
        Expr::Unary(UnOp::Inv, Box::new(a))
    }

    /// Operators and variables count 1, constants `constant_complexity`.
    pub fn complexity(&self, constant_complexity: usize) -> usize {
        match self {
            Expr::Const(_) => constant_complexity,
            Expr::Var(_) => 1,
            Expr::Unary(_, a) => 1 + a.complexity(constant_complexity),
            Expr::Binary(_, a, b) => 1 + a.complexity(constant_complexity) + b.complexity(constant_complexity),
        }
    }

    /// Number of nodes (preorder positions).
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) => 1 + a.size(),
            Expr::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) => 1 + a.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Unary(_, a) => a.max_var(),
            Expr::Binary(_, a, b) => a.max_var().max(b.max_var()),
        }
    }

    pub fn has_vars(&self) -> bool {
        self.max_var().is_some()
    }

    /// Pointwise value on one row of inputs; guarded divisions give NaN.
    pub fn eval_point(&self, row: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => row[*i],
            Expr::Unary(op, a) => op.apply(a.eval_point(row)),
            Expr::Binary(op, a, b) => op.apply(a.eval_point(row), b.eval_point(row)),
        }
    }

    /// Column-wise evaluation; `columns[i]` is variable `i`. Guarded
    /// divisions show up as NaN entries.
    pub fn eval(&self, columns: &[Vec<f64>], n: usize) -> Vec<f64> {
        match self {
            Expr::Const(c) => vec![*c; n],
            Expr::Var(i) => columns[*i].clone(),
            Expr::Unary(op, a) => {
                let mut v = a.eval(columns, n);
                v.iter_mut().for_each(|x| *x = op.apply(*x));
                v
            }
            Expr::Binary(op, a, b) => {
                let mut va = match (a.as_ref(), b.as_ref()) {
                    (Expr::Const(c), _) => {
                        let vb = b.eval(columns, n);
                        return vb.into_iter().map(|y| op.apply(*c, y)).collect();
                    }
                    _ => a.eval(columns, n),
                };
                match b.as_ref() {
                    Expr::Const(c) => va.iter_mut().for_each(|x| *x = op.apply(*x, *c)),
                    Expr::Var(i) => va
                        .iter_mut()
                        .zip(&columns[*i])
                        .for_each(|(x, y)| *x = op.apply(*x, *y)),
                    _ => {
                        let vb = b.eval(columns, n);
                        va.iter_mut().zip(&vb).for_each(|(x, y)| *x = op.apply(*x, *y));
                    }
                }
                va
            }
        }
    }

    /// Constants in preorder.
    pub fn constants(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_constants(&mut |c| out.push(*c));
        out
    }

    fn visit_constants(&self, f: &mut dyn FnMut(&f64)) {
        match self {
            Expr::Const(c) => f(c),
            Expr::Var(_) => {}
            Expr::Unary(_, a) => a.visit_constants(f),
            Expr::Binary(_, a, b) => {
                a.visit_constants(f);
                b.visit_constants(f);
            }
        }
    }

    fn visit_constants_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        match self {
            Expr::Const(c) => f(c),
            Expr::Var(_) => {}
            Expr::Unary(_, a) => a.visit_constants_mut(f),
            Expr::Binary(_, a, b) => {
                a.visit_constants_mut(f);
                b.visit_constants_mut(f);
            }
        }
    }

    /// Overwrites constants in preorder.
    pub fn set_constants(&mut self, values: &[f64]) {
        let mut it = values.iter();
        self.visit_constants_mut(&mut |c| {
            if let Some(v) = it.next() {
                *c = *v;
            }
        });
    }

    pub fn n_constants(&self) -> usize {
        let mut n = 0;
        self.visit_constants(&mut |_| n += 1);
        n
    }

    /// Replaces every variable-free subtree by its value (when finite).
    pub fn fold_constants(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Unary(op, a) => {
                let a = a.fold_constants();
                if let Expr::Const(c) = a {
                    let v = op.apply(c);
                    if v.is_finite() {
                        return Expr::Const(v);
                    }
                }
                Expr::Unary(*op, Box::new(a))
            }
            Expr::Binary(op, a, b) => {
                let a = a.fold_constants();
                let b = b.fold_constants();
                if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
                    let v = op.apply(*x, *y);
                    if v.is_finite() {
                        return Expr::Const(v);
                    }
                }
                Expr::bin(*op, a, b)
            }
        }
    }

    /// Subtree at preorder position `idx`.
    pub fn subtree(&self, idx: usize) -> Option<&Expr> {
        if idx == 0 {
            return Some(self);
        }
        match self {
            Expr::Const(_) | Expr::Var(_) => None,
            Expr::Unary(_, a) => a.subtree(idx - 1),
            Expr::Binary(_, a, b) => {
                let sa = a.size();
                if idx - 1 < sa {
                    a.subtree(idx - 1)
                } else {
                    b.subtree(idx - 1 - sa)
                }
            }
        }
    }

    pub fn subtree_mut(&mut self, idx: usize) -> Option<&mut Expr> {
        if idx == 0 {
            return Some(self);
        }
        match self {
            Expr::Const(_) | Expr::Var(_) => None,
            Expr::Unary(_, a) => a.subtree_mut(idx - 1),
            Expr::Binary(_, a, b) => {
                let sa = a.size();
                if idx - 1 < sa {
                    a.subtree_mut(idx - 1)
                } else {
                    b.subtree_mut(idx - 1 - sa)
                }
            }
        }
    }

    /// Infix text using the given variable names.
    pub fn to_infix(&self, names: &[&str]) -> String {
        let mut s = String::new();
        self.write_infix(&mut s, names, true);
        s
    }

    fn write_infix(&self, s: &mut String, names: &[&str], top: bool) {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 && !top {
                    s.push_str(&format!("({c:?})"));
                } else {
                    s.push_str(&format!("{c:?}"));
                }
            }
            Expr::Var(i) => match names.get(*i) {
                Some(n) => s.push_str(n),
                None => s.push_str(&format!("x{i}")),
            },
            Expr::Unary(UnOp::Inv, a) => {
                s.push_str("inv(");
                a.write_infix(s, names, true);
                s.push(')');
            }
            Expr::Binary(op, a, b) => {
                if !top {
                    s.push('(');
                }
                a.write_infix(s, names, false);
                s.push(' ');
                s.push(op.symbol());
                s.push(' ');
                b.write_infix(s, names, false);
                if !top {
                    s.push(')');
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_infix(&VARIABLE_NAMES))
    }
}

/// Parses the infix grammar: `+ - * /` with the usual precedence, left
/// associative, parentheses, unary minus, `inv(...)`, numeric literals and
/// the given variable names.
pub fn parse_expr(text: &str, names: &[&str]) -> Result<Expr, SrError> {
    let mut p = Parser {
        s: text.as_bytes(),
        pos: 0,
        names,
    };
    let e = p.sum()?;
    p.skip_ws();
    if p.pos != p.s.len() {
        return Err(p.error("trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    names: &'a [&'a str],
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> SrError {
        SrError::Parse(format!("{msg} at byte {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn sum(&mut self) -> Result<Expr, SrError> {
        let mut lhs = self.product()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::bin(if c == b'+' { BinOp::Add } else { BinOp::Sub }, lhs, rhs);
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, SrError> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::bin(if c == b'*' { BinOp::Mul } else { BinOp::Div }, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SrError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(match self.unary()? {
                Expr::Const(c) => Expr::Const(-c),
                e => Expr::bin(BinOp::Mul, Expr::Const(-1.0), e),
            });
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, SrError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.sum()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.s.len() {
                    let c = self.s[self.pos];
                    let exp_sign = (c == b'-' || c == b'+') && matches!(self.s[self.pos - 1], b'e' | b'E');
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let lit = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii digits");
                lit.parse::<f64>()
                    .map(Expr::Const)
                    .map_err(|_| self.error(&format!("bad number '{lit}'")))
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.s.len() && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_') {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii identifier");
                if ident == "inv" {
                    if self.peek() != Some(b'(') {
                        return Err(self.error("expected '(' after inv"));
                    }
                    self.pos += 1;
                    let e = self.sum()?;
                    if self.peek() != Some(b')') {
                        return Err(self.error("expected ')'"));
                    }
                    self.pos += 1;
                    return Ok(Expr::inv(e));
                }
                self.names
                    .iter()
                    .position(|n| *n == ident)
                    .map(Expr::Var)
                    .ok_or_else(|| self.error(&format!("unknown variable '{ident}'")))
            }
            _ => Err(self.error("expected expression")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse_expr(s, &VARIABLE_NAMES).unwrap()
    }

    #[test]
    fn complexity_examples() {
        assert_eq!(p("psi_A").complexity(2), 1);
        assert_eq!(p("(chi_R - phi_R) * lambda").complexity(2), 5);
        assert_eq!(p("-0.0053729056").complexity(2), 2);
        assert_eq!(p("2.079 - 3.78*phi_R - lambda - lambda*psi_A").complexity(2), 13);
        assert_eq!(p("6 * (psi_A / (psi_A + 0.1609) - chi_R)").complexity(2), 11);
    }

    #[test]
    fn parse_format_round_trip() {
        for s in [
            "2.079 - 3.78*phi_R - lambda - lambda*psi_A",
            "inv(psi_A + 1e-3) * -2.5",
            "((psi_A / (psi_A + 0.16037777)) - chi_R) * 5.927795",
            "0.1 + 0.2",
        ] {
            let e = p(s);
            let back = p(&e.to_string());
            assert_eq!(e, back, "{s}");
        }
        assert!(parse_expr("psi_A +", &VARIABLE_NAMES).is_err());
        assert!(parse_expr("x9", &VARIABLE_NAMES).is_err());
        assert!(parse_expr("(psi_A", &VARIABLE_NAMES).is_err());
    }

    #[test]
    fn evaluation_and_guards() {
        let cols = vec![vec![2.0, 2.0], vec![1.0, 0.0]];
        assert_eq!(p("inv(psi_A)").eval(&cols, 2), vec![0.5, 0.5]);
        assert_eq!(p("psi_A").eval(&cols, 2), cols[0]);
        let guarded = p("psi_A / phi_R").eval(&cols, 2);
        assert_eq!(guarded[0], 2.0);
        assert!(guarded[1].is_nan());
        let e = p("1 - psi_A * (phi_R + 3) / 2");
        let v = e.eval(&cols, 2);
        for i in 0..2 {
            assert_eq!(v[i], e.eval_point(&[cols[0][i], cols[1][i]]));
        }
    }

    #[test]
    fn folding_and_constants() {
        let e = p("(1 + 2) * psi_A + inv(4)");
        let f = e.fold_constants();
        assert_eq!(f, p("3 * psi_A + 0.25"));
        let mut g = f.clone();
        assert_eq!(g.constants(), vec![3.0, 0.25]);
        g.set_constants(&[5.0, -1.0]);
        assert_eq!(g.to_string(), "(5.0 * psi_A) + (-1.0)");
        assert_eq!(p("inv(0)").fold_constants(), p("inv(0)"));
    }

    #[test]
    fn subtree_addressing() {
        let mut e = p("(psi_A + 2) * inv(chi_R)");
        assert_eq!(e.size(), 6);
        assert_eq!(e.subtree(1), Some(&p("psi_A + 2")));
        assert_eq!(e.subtree(4), Some(&p("inv(chi_R)")));
        assert_eq!(e.subtree(5), Some(&p("chi_R")));
        assert_eq!(e.subtree(6), None);
        *e.subtree_mut(2).unwrap() = p("lambda");
        assert_eq!(e, p("(lambda + 2) * inv(chi_R)"));
    }
}
