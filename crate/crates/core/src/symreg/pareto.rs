//! Complexity/loss Pareto fronts and their score column.

use super::expr::{parse_expr, Expr};
use super::SrError;
use crate::util::fmt_f64;

/// `score_i = max(0, ln(loss_{i-1} / loss_i) / (c_i - c_{i-1}))`, first row 0.
pub fn score(rows: &[(usize, f64)]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len());
    for (i, &(c, l)) in rows.iter().enumerate() {
        if i == 0 {
            out.push(0.0);
            continue;
        }
        let (pc, pl) = rows[i - 1];
        let dc = c as f64 - pc as f64;
        let s = if dc > 0.0 && l > 0.0 && pl > 0.0 {
            (pl / l).ln() / dc
        } else {
            0.0
        };
        out.push(if s.is_finite() { s.max(0.0) } else { 0.0 });
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontRow {
    pub complexity: usize,
    pub loss: f64,
    pub score: f64,
    pub expr: Expr,
}

/// Rows with strictly increasing complexity and strictly decreasing loss.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParetoFront {
    pub rows: Vec<FrontRow>,
}

impl ParetoFront {
    /// Keeps the best candidate per complexity, then drops every row whose
    /// loss is not below all simpler rows.
    pub fn from_candidates(candidates: impl IntoIterator<Item = (Expr, usize, f64)>) -> Self {
        let mut best: std::collections::BTreeMap<usize, (Expr, f64)> = Default::default();
        for (e, c, l) in candidates {
            if !l.is_finite() {
                continue;
            }
            match best.get(&c) {
                Some((_, bl)) if *bl <= l => {}
                _ => {
                    best.insert(c, (e, l));
                }
            }
        }
        let mut rows: Vec<FrontRow> = Vec::new();
        for (c, (e, l)) in best {
            if rows.last().is_none_or(|r| l < r.loss) {
                rows.push(FrontRow {
                    complexity: c,
                    loss: l,
                    score: 0.0,
                    expr: e,
                });
            }
        }
        let scores = score(&rows.iter().map(|r| (r.complexity, r.loss)).collect::<Vec<_>>());
        for (r, s) in rows.iter_mut().zip(scores) {
            r.score = s;
        }
        Self { rows }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row with the highest score (ties go to the simpler row).
    pub fn best_scored(&self) -> Option<&FrontRow> {
        self.rows
            .iter()
            .fold(None, |acc: Option<&FrontRow>, r| match acc {
                Some(a) if a.score >= r.score => Some(a),
                _ => Some(r),
            })
    }

    /// `complexity,loss,score,equation` with full-precision numbers.
    pub fn to_csv(&self, names: &[&str]) -> String {
        let mut out = String::from("complexity,loss,score,equation\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},\"{}\"\n",
                r.complexity,
                fmt_f64(r.loss),
                fmt_f64(r.score),
                r.expr.to_infix(names)
            ));
        }
        out
    }

    pub fn from_csv(text: &str, names: &[&str]) -> Result<Self, SrError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| SrError::Parse(e.to_string()))?;
            let field = |i: usize| rec.get(i).ok_or_else(|| SrError::Parse(format!("missing column {i}")));
            let num = |i: usize| -> Result<f64, SrError> {
                field(i)?.parse::<f64>().map_err(|e| SrError::Parse(e.to_string()))
            };
            rows.push(FrontRow {
                complexity: field(0)?.parse().map_err(|_| SrError::Parse("bad complexity".into()))?,
                loss: num(1)?,
                score: num(2)?,
                expr: parse_expr(field(3)?, names)?,
            });
        }
        Ok(Self { rows })
    }
}
