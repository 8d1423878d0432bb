//! Regularized-evolution genetic programming over expression trees.
//!
//! Each iteration runs `cycles_per_iteration` events on every population
//! in turn. An event picks parents by tournament and produces children by
//! subtree crossover or by one mutation; children replace the oldest
//! members. After the events the fittest fraction gets its constants
//! refined and hall-of-fame members migrate back into the population.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::expr::{BinOp, Expr, UnOp};
use super::fit::{fit_constants, mse_loss};
use super::pareto::ParetoFront;
use super::target::RegressionTarget;
use super::SrError;
use crate::util::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationWeights {
    pub point_op: f64,
    pub point_var: f64,
    pub constant_perturb: f64,
    pub subtree_replace: f64,
    pub simplify_fold: f64,
}

impl Default for MutationWeights {
    fn default() -> Self {
        Self {
            point_op: 0.3,
            point_var: 0.2,
            constant_perturb: 0.3,
            subtree_replace: 0.15,
            simplify_fold: 0.05,
        }
    }
}

fn d_iterations() -> usize {
    800
}
fn d_population() -> usize {
    50
}
fn d_max_size() -> usize {
    25
}
fn d_constant_complexity() -> usize {
    2
}
fn d_true() -> bool {
    true
}
fn d_populations() -> usize {
    8
}
fn d_cycles() -> usize {
    100
}
fn d_tournament() -> usize {
    5
}
fn d_crossover() -> f64 {
    0.6
}
fn d_fit_fraction() -> f64 {
    0.1
}
fn d_fit_probability() -> f64 {
    0.5
}
fn d_nm_iterations() -> usize {
    60
}
fn d_parsimony() -> f64 {
    0.01
}
fn d_migration() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrConfig {
    #[serde(default = "d_iterations")]
    pub iterations: usize,
    #[serde(default = "d_population")]
    pub population: usize,
    #[serde(default = "d_max_size")]
    pub max_size: usize,
    #[serde(default = "d_constant_complexity")]
    pub constant_complexity: usize,
    /// Offer the growth rate as an input column.
    #[serde(default = "d_true")]
    pub use_lambda: bool,
    #[serde(default)]
    pub seed: u64,
    /// Independent populations; they exchange members only through the
    /// shared hall of fame.
    #[serde(default = "d_populations")]
    pub populations: usize,
    #[serde(default = "d_cycles")]
    pub cycles_per_iteration: usize,
    #[serde(default = "d_tournament")]
    pub tournament_size: usize,
    #[serde(default = "d_crossover")]
    pub crossover_probability: f64,
    #[serde(default)]
    pub mutation: MutationWeights,
    /// Fraction of the population whose constants are refined each iteration.
    #[serde(default = "d_fit_fraction")]
    pub fit_fraction: f64,
    /// Chance that a freshly made child has its constants refined at once.
    #[serde(default = "d_fit_probability")]
    pub fit_probability: f64,
    #[serde(default = "d_nm_iterations")]
    pub nm_iterations: usize,
    /// Fitness is `ln(mse / var(target)) + parsimony * complexity`.
    #[serde(default = "d_parsimony")]
    pub parsimony: f64,
    /// Fraction of the population replaced by hall-of-fame copies per iteration.
    #[serde(default = "d_migration")]
    pub hof_migration: f64,
}

impl Default for SrConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl SrConfig {
    pub fn validate(&self) -> Result<(), SrError> {
        let bad = |m: &str| Err(SrError::Invalid(m.to_string()));
        if self.iterations == 0 || self.populations == 0 || self.population < 2 || self.max_size == 0 || self.cycles_per_iteration == 0 {
            return bad("iterations, populations, population, max_size and cycles_per_iteration must be positive");
        }
        if self.tournament_size == 0 || self.tournament_size > self.population {
            return bad("tournament_size must lie in 1..=population");
        }
        for (name, p) in [
            ("crossover_probability", self.crossover_probability),
            ("fit_fraction", self.fit_fraction),
            ("fit_probability", self.fit_probability),
            ("hof_migration", self.hof_migration),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SrError::Invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        let w = &self.mutation;
        let ws = [w.point_op, w.point_var, w.constant_perturb, w.subtree_replace, w.simplify_fold];
        if ws.iter().any(|x| *x < 0.0 || !x.is_finite()) || ws.iter().sum::<f64>() <= 0.0 {
            return bad("mutation weights must be non-negative with a positive sum");
        }
        if self.parsimony < 0.0 {
            return bad("parsimony must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Member {
    expr: Expr,
    complexity: usize,
    loss: f64,
    fitness: f64,
    birth: u64,
    fitted: bool,
}

struct Engine<'a> {
    cfg: &'a SrConfig,
    data: &'a RegressionTarget,
    log_var: f64,
    n_vars: usize,
    rng: ChaCha8Rng,
    clock: u64,
    hof: Vec<Option<(Expr, f64)>>,
    evaluations: u64,
}

/// Everything a search run produced.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub front: ParetoFront,
    pub evaluations: u64,
}

impl<'a> Engine<'a> {
    fn fitness(&self, loss: f64, complexity: usize) -> f64 {
        if !loss.is_finite() {
            return f64::INFINITY;
        }
        loss.max(1e-300).ln() - self.log_var + self.cfg.parsimony * complexity as f64
    }

    fn record(&mut self, expr: &Expr, complexity: usize, loss: f64) {
        if !loss.is_finite() || complexity > self.cfg.max_size {
            return;
        }
        let slot = &mut self.hof[complexity];
        if slot.as_ref().is_none_or(|(_, l)| loss < *l) {
            *slot = Some((expr.clone(), loss));
        }
    }

    fn member(&mut self, expr: Expr, fit: bool) -> Member {
        let complexity = expr.complexity(self.cfg.constant_complexity);
        let (expr, loss, fitted) = if fit && expr.n_constants() > 0 {
            self.evaluations += self.cfg.nm_iterations as u64;
            let (e, l) = fit_constants(&expr, self.data, self.cfg.nm_iterations);
            (e, l, true)
        } else {
            self.evaluations += 1;
            let l = mse_loss(&expr, self.data);
            let fitted = expr.n_constants() == 0;
            (expr, l, fitted)
        };
        self.record(&expr, complexity, loss);
        self.clock += 1;
        Member {
            fitness: self.fitness(loss, complexity),
            expr,
            complexity,
            loss,
            birth: self.clock,
            fitted,
        }
    }

    /// Variables, their inverses and every `var op var`.
    fn smallest_expressions(&self) -> Vec<Expr> {
        let vars = || (0..self.n_vars).map(Expr::Var);
        let mut out: Vec<Expr> = vars().collect();
        out.extend(vars().map(Expr::inv));
        for op in BinOp::ALL {
            for a in vars() {
                for b in vars() {
                    out.push(Expr::bin(op, a.clone(), b));
                }
            }
        }
        out.retain(|e| e.complexity(self.cfg.constant_complexity) <= self.cfg.max_size);
        out
    }

    fn random_leaf(&mut self) -> Expr {
        if self.rng.random::<f64>() < 0.25 {
            Expr::Const(self.random_constant())
        } else {
            Expr::Var(self.rng.random_range(0..self.n_vars))
        }
    }

    fn random_constant(&mut self) -> f64 {
        let mag = 10f64.powf(self.rng.random_range(-1.0..1.0));
        if self.rng.random::<bool>() {
            mag
        } else {
            -mag
        }
    }

    fn random_binop(&mut self) -> BinOp {
        BinOp::ALL[self.rng.random_range(0..4)]
    }

    /// Random tree with roughly `nodes` operator slots.
    fn random_tree(&mut self, nodes: usize) -> Expr {
        if nodes == 0 {
            return self.random_leaf();
        }
        if self.rng.random::<f64>() < 0.1 {
            let inner = self.random_tree(nodes - 1);
            return Expr::inv(inner);
        }
        let left = self.rng.random_range(0..nodes);
        let a = self.random_tree(left);
        let b = self.random_tree(nodes - 1 - left);
        Expr::bin(self.random_binop(), a, b)
    }

    fn tournament(&mut self, pop: &[Member]) -> usize {
        let mut best = self.rng.random_range(0..pop.len());
        for _ in 1..self.cfg.tournament_size {
            let i = self.rng.random_range(0..pop.len());
            if pop[i].fitness < pop[best].fitness {
                best = i;
            }
        }
        best
    }

    fn replace_oldest(pop: &mut [Member], m: Member) {
        let oldest = (0..pop.len()).min_by_key(|&i| pop[i].birth).expect("non-empty population");
        pop[oldest] = m;
    }

    fn crossover(&mut self, a: &Expr, b: &Expr) -> (Expr, Expr) {
        let ia = self.rng.random_range(0..a.size());
        let ib = self.rng.random_range(0..b.size());
        let sa = a.subtree(ia).expect("index within size").clone();
        let sb = b.subtree(ib).expect("index within size").clone();
        let mut ca = a.clone();
        let mut cb = b.clone();
        *ca.subtree_mut(ia).expect("index within size") = sb;
        *cb.subtree_mut(ib).expect("index within size") = sa;
        (ca, cb)
    }

    fn mutate(&mut self, parent: &Expr) -> Expr {
        let w = self.cfg.mutation;
        let weights = [w.point_op, w.point_var, w.constant_perturb, w.subtree_replace, w.simplify_fold];
        let total: f64 = weights.iter().sum();
        let mut pick = self.rng.random::<f64>() * total;
        let mut kind = weights.len() - 1;
        for (k, wk) in weights.iter().enumerate() {
            if pick < *wk {
                kind = k;
                break;
            }
            pick -= wk;
        }
        let mut e = parent.clone();
        match kind {
            0 => self.point_op(&mut e),
            1 => self.point_var(&mut e),
            2 => self.perturb_constant(&mut e),
            3 => self.replace_subtree(&mut e),
            _ => e = e.fold_constants(),
        }
        e
    }

    fn operator_positions(e: &Expr) -> Vec<usize> {
        (0..e.size())
            .filter(|&i| matches!(e.subtree(i), Some(Expr::Unary(..) | Expr::Binary(..))))
            .collect()
    }

    fn leaf_positions(e: &Expr) -> Vec<usize> {
        (0..e.size())
            .filter(|&i| matches!(e.subtree(i), Some(Expr::Const(_) | Expr::Var(_))))
            .collect()
    }

    fn point_op(&mut self, e: &mut Expr) {
        let ops = Self::operator_positions(e);
        if ops.is_empty() {
            return self.point_var(e);
        }
        let idx = ops[self.rng.random_range(0..ops.len())];
        let node = e.subtree_mut(idx).expect("operator position");
        match node {
            Expr::Binary(op, _, _) => {
                let others: Vec<BinOp> = BinOp::ALL.into_iter().filter(|o| o != op).collect();
                *op = others[self.rng.random_range(0..others.len())];
            }
            Expr::Unary(UnOp::Inv, a) => {
                // The only unary operator: swap it for a binary one.
                let inner = std::mem::replace(a.as_mut(), Expr::Const(0.0));
                let leaf = Expr::Var(self.rng.random_range(0..self.n_vars));
                let op = self.random_binop();
                *node = Expr::bin(op, inner, leaf);
            }
            _ => unreachable!("operator positions hold operators"),
        }
    }

    fn point_var(&mut self, e: &mut Expr) {
        let leaves = Self::leaf_positions(e);
        let idx = leaves[self.rng.random_range(0..leaves.len())];
        let new = if self.rng.random::<f64>() < 0.2 {
            Expr::Const(self.random_constant())
        } else {
            Expr::Var(self.rng.random_range(0..self.n_vars))
        };
        *e.subtree_mut(idx).expect("leaf position") = new;
    }

    fn perturb_constant(&mut self, e: &mut Expr) {
        let n = e.n_constants();
        if n == 0 {
            return self.point_var(e);
        }
        let k = self.rng.random_range(0..n);
        let mut cs = e.constants();
        let u: f64 = self.rng.random_range(-1.0..1.0);
        cs[k] *= (u * 0.7).exp();
        if self.rng.random::<f64>() < 0.1 {
            cs[k] = -cs[k];
        }
        e.set_constants(&cs);
    }

    /// Swaps a random subtree for a fresh one, wraps a node in a new
    /// operator, or collapses an operator onto one of its operands.
    fn replace_subtree(&mut self, e: &mut Expr) {
        let idx = self.rng.random_range(0..e.size());
        let choice = self.rng.random_range(0..3);
        let node = e.subtree_mut(idx).expect("index within size");
        match choice {
            0 => {
                let size = self.rng.random_range(0..3);
                *node = self.random_tree(size);
            }
            1 => {
                let inner = std::mem::replace(node, Expr::Const(0.0));
                *node = if self.rng.random::<f64>() < 0.1 {
                    Expr::inv(inner)
                } else {
                    let leaf = self.random_leaf();
                    let op = self.random_binop();
                    if self.rng.random::<bool>() {
                        Expr::bin(op, inner, leaf)
                    } else {
                        Expr::bin(op, leaf, inner)
                    }
                };
            }
            _ => {
                let keep = match node {
                    Expr::Unary(_, a) => Some(a.as_ref().clone()),
                    Expr::Binary(_, a, b) => Some(if self.rng.random::<bool>() {
                        a.as_ref().clone()
                    } else {
                        b.as_ref().clone()
                    }),
                    _ => None,
                };
                match keep {
                    Some(k) => *node = k,
                    None => *node = self.random_leaf(),
                }
            }
        }
    }

    /// One iteration of events on a population, then refit and migration.
    fn evolve(&mut self, pop: &mut [Member]) {
        for _ in 0..self.cfg.cycles_per_iteration {
            if self.rng.random::<f64>() < self.cfg.crossover_probability {
                let a = self.tournament(pop);
                let b = self.tournament(pop);
                let (ca, cb) = self.crossover(&pop[a].expr.clone(), &pop[b].expr.clone());
                self.insert_child(pop, ca);
                self.insert_child(pop, cb);
            } else {
                let p = self.tournament(pop);
                let child = self.mutate(&pop[p].expr.clone());
                self.insert_child(pop, child);
            }
        }
        self.refine_top(pop);
        self.migrate(pop);
    }

    fn insert_child(&mut self, pop: &mut [Member], child: Expr) {
        if child.complexity(self.cfg.constant_complexity) > self.cfg.max_size || pop.iter().any(|m| m.expr == child) {
            return;
        }
        let fit = self.rng.random::<f64>() < self.cfg.fit_probability;
        let m = self.member(child, fit);
        if !m.loss.is_finite() {
            return;
        }
        Self::replace_oldest(pop, m);
    }

    fn refine_top(&mut self, pop: &mut [Member]) {
        let k = ((pop.len() as f64 * self.cfg.fit_fraction).ceil() as usize).min(pop.len());
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| pop[a].fitness.total_cmp(&pop[b].fitness).then(a.cmp(&b)));
        let chosen: Vec<usize> = order.into_iter().filter(|&i| !pop[i].fitted).take(k).collect();
        let data = self.data;
        let iters = self.cfg.nm_iterations;
        let fits: Vec<(Expr, f64)> = chosen
            .par_iter()
            .map(|&i| fit_constants(&pop[i].expr, data, iters))
            .collect();
        for (&i, (e, l)) in chosen.iter().zip(fits) {
            self.evaluations += iters as u64;
            let c = pop[i].complexity;
            self.record(&e, c, l);
            pop[i].fitness = self.fitness(l, c);
            pop[i].expr = e;
            pop[i].loss = l;
            pop[i].fitted = true;
        }
    }

    fn migrate(&mut self, pop: &mut [Member]) {
        let entries: Vec<(Expr, f64)> = self.hof.iter().flatten().cloned().collect();
        if entries.is_empty() {
            return;
        }
        let n = (pop.len() as f64 * self.cfg.hof_migration).round() as usize;
        for _ in 0..n {
            let (e, l) = entries[self.rng.random_range(0..entries.len())].clone();
            if pop.iter().any(|m| m.expr == e) {
                continue;
            }
            let c = e.complexity(self.cfg.constant_complexity);
            self.clock += 1;
            let m = Member {
                fitness: self.fitness(l, c),
                expr: e,
                complexity: c,
                loss: l,
                birth: self.clock,
                fitted: true,
            };
            Self::replace_oldest(pop, m);
        }
    }
}

/// Runs the search and returns the final Pareto front. A target without
/// variance short-circuits to a single constant row.
pub fn search(cfg: &SrConfig, data: &RegressionTarget) -> Result<SearchOutcome, SrError> {
    cfg.validate()?;
    let n = data.n_rows();
    if n == 0 || data.columns.is_empty() || data.columns.iter().any(|c| c.len() != n) {
        return Err(SrError::Invalid("regression data has inconsistent shape".into()));
    }
    let mean = data.target.iter().sum::<f64>() / n as f64;
    let var = data.target.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
    let scale = data.target.iter().fold(0.0f64, |a, y| a.max(y.abs()));
    if var.sqrt() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        let e = Expr::Const(mean);
        let l = mse_loss(&e, data);
        return Ok(SearchOutcome {
            front: ParetoFront::from_candidates([(e, cfg.constant_complexity, l)]),
            evaluations: 1,
        });
    }

    let mut eng = Engine {
        cfg,
        data,
        log_var: var.ln(),
        n_vars: data.n_inputs(),
        rng: rng_from_seed(cfg.seed),
        clock: 0,
        hof: vec![None; cfg.max_size + 1],
        evaluations: 0,
    };
    // The best lone constant is always a candidate.
    eng.record(&Expr::Const(mean), cfg.constant_complexity, mse_loss(&Expr::Const(mean), data));

    // Every expression of one or two operands is cheap to score; the best of
    // them fill half the initial population, random trees the rest.
    let mut small: Vec<Member> = eng.smallest_expressions().into_iter().map(|e| eng.member(e, false)).collect();
    small.retain(|m| m.loss.is_finite());
    small.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
    let mut islands: Vec<Vec<Member>> = Vec::with_capacity(cfg.populations);
    for _ in 0..cfg.populations {
        let mut pop: Vec<Member> = small.iter().take(cfg.population / 2).cloned().collect();
        while pop.len() < cfg.population {
            let size = eng.rng.random_range(0..4);
            let e = eng.random_tree(size);
            if e.complexity(cfg.constant_complexity) > cfg.max_size {
                continue;
            }
            if pop.iter().any(|m| m.expr == e) {
                continue;
            }
            let m = eng.member(e, true);
            pop.push(m);
        }
        islands.push(pop);
    }

    for _ in 0..cfg.iterations {
        for pop in &mut islands {
            eng.evolve(pop);
        }
    }

    // Final polish of every hall-of-fame entry.
    let entries: Vec<(usize, Expr)> = eng
        .hof
        .iter()
        .enumerate()
        .filter_map(|(c, s)| s.as_ref().map(|(e, _)| (c, e.clone())))
        .collect();
    let polished: Vec<(Expr, f64)> = entries
        .par_iter()
        .map(|(_, e)| fit_constants(e, data, cfg.nm_iterations))
        .collect();
    eng.evaluations += (entries.len() * cfg.nm_iterations) as u64;
    let front = ParetoFront::from_candidates(
        entries
            .into_iter()
            .zip(polished)
            .map(|((c, _), (e, l))| (e, c, l)),
    );
    Ok(SearchOutcome {
        front,
        evaluations: eng.evaluations,
    })
}
