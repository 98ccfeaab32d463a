//! Belief Propagation: message updates, fixed-point iteration, the
//! per-variable residual, both Bethe free-energy forms, belief extraction
//! and the local free-energy increments used by the cavity accounting.
//!
//! Messages live on distinct (variable, constraint) incidences. Sums over a
//! constraint's neighborhood run over distinct neighbors, with repeated
//! tuple slots bound to the same spin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::MarginalTable;
use crate::graph::{ConId, FactorGraph, VarId};
use crate::scalar::{real, Real};

/// One distribution on `Ω` per direction per incidence.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSet<S = f64> {
    var_to_con: Vec<Vec<S>>,
    con_to_var: Vec<Vec<S>>,
}

impl<S: Real> MessageSet<S> {
    /// All-uniform messages for a graph.
    pub fn uniform(g: &FactorGraph<S>) -> Self {
        let q = g.q();
        let u = vec![S::one() / real(q as f64); q];
        let count = g.incidences().len();
        Self {
            var_to_con: vec![u.clone(); count],
            con_to_var: vec![u; count],
        }
    }

    pub fn len(&self) -> usize {
        self.var_to_con.len()
    }

    pub fn is_empty(&self) -> bool {
        self.var_to_con.is_empty()
    }

    pub fn var_to_con(&self, incidence: usize) -> &[S] {
        &self.var_to_con[incidence]
    }

    pub fn con_to_var(&self, incidence: usize) -> &[S] {
        &self.con_to_var[incidence]
    }

    pub fn set_var_to_con(&mut self, incidence: usize, dist: Vec<S>) {
        self.var_to_con[incidence] = dist;
    }

    pub fn set_con_to_var(&mut self, incidence: usize, dist: Vec<S>) {
        self.con_to_var[incidence] = dist;
    }

    /// Checks shape, strict positivity and normalization against a graph.
    pub fn validate(&self, g: &FactorGraph<S>) -> Result<()> {
        if self.len() != g.incidences().len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: g.incidences().len(),
            });
        }
        let tol = real(1e-12);
        for dists in [&self.var_to_con, &self.con_to_var] {
            for d in dists.iter() {
                if d.len() != g.q() {
                    return Err(Error::LengthMismatch {
                        left: d.len(),
                        right: g.q(),
                    });
                }
                let sum: S = d.iter().copied().sum();
                if (sum - S::one()).abs() > tol || d.iter().any(|&p| !(p > S::zero())) {
                    return Err(Error::InvalidParameter(
                        "message not a strictly positive normalized distribution".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Iteration settings for the synchronous fixed-point loop.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BpOptions {
    /// Convex damping weight on the old message, in `[0, 1)`.
    pub damping: f64,
    /// Convergence threshold on the max per-message TV change of a sweep.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BpOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-10,
            max_iter: 1000,
        }
    }
}

impl BpOptions {
    /// Damping 0 on acyclic graphs, 0.5 otherwise.
    pub fn for_graph<S: Real>(g: &FactorGraph<S>) -> Self {
        Self {
            damping: if g.is_acyclic() { 0.0 } else { 0.5 },
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    /// Max over directed messages of the TV change in the last sweep.
    pub final_delta: f64,
    pub converged: bool,
}

fn normalized<S: Real>(mut v: Vec<S>) -> Vec<S> {
    let total: S = v.iter().copied().sum();
    for p in &mut v {
        *p = *p / total;
    }
    v
}

/// Unnormalized variable-to-constraint update: `∏_{b ∈ ∂x \ a} μ_{b→x}`.
fn var_update_raw<S: Real>(g: &FactorGraph<S>, m: &MessageSet<S>, incidence: usize) -> Vec<S> {
    let inc = g.incidences()[incidence];
    let q = g.q();
    let mut out = vec![S::one(); q];
    for &other in g.incidences_of_var(inc.var) {
        if other == incidence {
            continue;
        }
        let income = m.con_to_var(other);
        for s in 0..q {
            out[s] = out[s] * income[s];
        }
    }
    out
}

/// Unnormalized constraint-to-variable update:
/// `Σ_{τ: τ(x) = σ} ψ_a(τ) ∏_{y ∈ ∂a \ x} μ_{y→a}(τ(y))`,
/// with `τ` ranging over assignments of `a`'s distinct neighbors.
fn con_update_raw<S: Real>(g: &FactorGraph<S>, m: &MessageSet<S>, incidence: usize) -> Vec<S> {
    let inc = g.incidences()[incidence];
    let q = g.q();
    let a = inc.con;
    let distinct = g.distinct_neighbors(a);
    let slots = &g.constraint(a).neighbors;
    let table = g.weight_of(a).table();
    let inc_ids = g.incidences_of_con(a);

    // position of each slot variable within the distinct list
    let slot_pos: Vec<usize> = slots
        .iter()
        .map(|v| distinct.iter().position(|d| d == v).unwrap())
        .collect();
    let x_pos = distinct.iter().position(|&d| d == inc.var).unwrap();

    let mut out = vec![S::zero(); q];
    let u = distinct.len();
    let mut tau = vec![0usize; u];
    loop {
        let mut cell = 0usize;
        for &p in &slot_pos {
            cell = cell * q + tau[p];
        }
        let mut term = table[cell];
        for (pos, &other_inc) in inc_ids.iter().enumerate() {
            if pos == x_pos {
                continue;
            }
            term = term * m.var_to_con(other_inc)[tau[pos]];
        }
        out[tau[x_pos]] = out[tau[x_pos]] + term;

        let mut pos = u;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            tau[pos] += 1;
            if tau[pos] < q {
                break;
            }
            tau[pos] = 0;
        }
    }
}

/// One synchronous sweep with convex damping; all updates read the old set.
pub fn bp_step<S: Real>(g: &FactorGraph<S>, m: &MessageSet<S>, damping: f64) -> MessageSet<S> {
    let lam = real(damping);
    let one_minus = S::one() - lam;
    let mut next = m.clone();
    for incidence in 0..g.incidences().len() {
        let fresh_v = normalized(var_update_raw(g, m, incidence));
        let fresh_c = normalized(con_update_raw(g, m, incidence));
        let damp = |fresh: Vec<S>, old: &[S]| {
            normalized(
                fresh
                    .into_iter()
                    .zip(old)
                    .map(|(f, &o)| one_minus * f + lam * o)
                    .collect(),
            )
        };
        next.set_var_to_con(incidence, damp(fresh_v, m.var_to_con(incidence)));
        next.set_con_to_var(incidence, damp(fresh_c, m.con_to_var(incidence)));
    }
    next
}

fn tv_change<S: Real>(a: &[S], b: &[S]) -> S {
    let two = real(2.0);
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum::<S>() / two
}

/// Iterates [`bp_step`] until the max per-message TV change drops to `tol`
/// or `max_iter` sweeps have run. Non-convergence is reported, not an error.
pub fn bp_fixed_point<S: Real>(
    g: &FactorGraph<S>,
    init: MessageSet<S>,
    opts: BpOptions,
) -> (MessageSet<S>, ConvergenceReport) {
    let mut current = init;
    if current.is_empty() {
        return (
            current,
            ConvergenceReport {
                iterations: 0,
                final_delta: 0.0,
                converged: true,
            },
        );
    }
    let tol = real(opts.tol);
    let mut report = ConvergenceReport {
        iterations: 0,
        final_delta: f64::INFINITY,
        converged: false,
    };
    for iter in 1..=opts.max_iter {
        let next = bp_step(g, &current, opts.damping);
        let mut delta = S::zero();
        for i in 0..current.len() {
            delta = delta.max(tv_change(current.var_to_con(i), next.var_to_con(i)));
            delta = delta.max(tv_change(current.con_to_var(i), next.con_to_var(i)));
        }
        current = next;
        report.iterations = iter;
        report.final_delta = delta.to_f64_lossy();
        if delta <= tol {
            report.converged = true;
            break;
        }
    }
    (current, report)
}

/// Average per-variable violation of the update equations:
/// `(1/n) Σ_{x, a ∈ ∂x, σ} |μ_{x→a}(σ) - var update| + |μ_{a→x}(σ) - con update|`.
///
/// The division by `n` makes the value directly comparable across sizes:
/// a family of messages with residual `ε` violates the equations by `ε n`
/// in total.
pub fn bp_residual<S: Real>(g: &FactorGraph<S>, m: &MessageSet<S>) -> S {
    let mut total = S::zero();
    for incidence in 0..g.incidences().len() {
        let var_new = normalized(var_update_raw(g, m, incidence));
        let con_new = normalized(con_update_raw(g, m, incidence));
        for s in 0..g.q() {
            total = total + (m.var_to_con(incidence)[s] - var_new[s]).abs();
            total = total + (m.con_to_var(incidence)[s] - con_new[s]).abs();
        }
    }
    total / real(g.num_vars().max(1) as f64)
}

/// Log normalizer of a constraint at the current variable-to-constraint
/// messages: `ln Σ_τ ψ_a(τ) ∏_{y ∈ ∂a} μ_{y→a}(τ(y))`.
pub fn constraint_log_norm<S: Real>(g: &FactorGraph<S>, m: &MessageSet<S>, a: ConId) -> S {
    let q = g.q();
    let distinct = g.distinct_neighbors(a);
    let slots = &g.constraint(a).neighbors;
    let table = g.weight_of(a).table();
    let inc_ids = g.incidences_of_con(a);
    let slot_pos: Vec<usize> = slots
        .iter()
        .map(|v| distinct.iter().position(|d| d == v).unwrap())
        .collect();

    let u = distinct.len();
    let mut tau = vec![0usize; u];
    let mut sum = S::zero();
    loop {
        let mut cell = 0usize;
        for &p in &slot_pos {
            cell = cell * q + tau[p];
        }
        let mut term = table[cell];
        for (pos, &inc) in inc_ids.iter().enumerate() {
            term = term * m.var_to_con(inc)[tau[pos]];
        }
        sum = sum + term;
        let mut pos = u;
        loop {
            if pos == 0 {
                return sum.ln();
            }
            pos -= 1;
            tau[pos] += 1;
            if tau[pos] < q {
                break;
            }
            tau[pos] = 0;
        }
    }
}

/// Log normalizer of a variable at the incoming messages:
/// `ln Σ_σ ∏_{a ∈ ∂x} μ_{a→x}(σ)`. Equals `ln q` for an isolated variable.
pub fn variable_log_norm<S: Real>(g: &FactorGraph<S>, m: &MessageSet<S>, x: VarId) -> S {
    let q = g.q();
    let mut sum = S::zero();
    for s in 0..q {
        let mut prod = S::one();
        for &inc in g.incidences_of_var(x) {
            prod = prod * m.con_to_var(inc)[s];
        }
        sum = sum + prod;
    }
    sum.ln()
}

/// Log overlap of the two directed messages on one incidence:
/// `ln Σ_σ μ_{a→x}(σ) μ_{x→a}(σ)`.
pub fn edge_log_norm<S: Real>(m: &MessageSet<S>, incidence: usize) -> S {
    m.var_to_con(incidence)
        .iter()
        .zip(m.con_to_var(incidence))
        .map(|(&v, &c)| v * c)
        .sum::<S>()
        .ln()
}

/// Bethe free energy in message form: variable terms plus constraint terms
/// minus one edge term per incidence. Equals `ln Z` on acyclic graphs at the
/// exact messages.
pub fn bethe_free_energy<S: Real>(g: &FactorGraph<S>, m: &MessageSet<S>) -> S {
    let mut total = S::zero();
    for x in g.var_ids() {
        total = total + variable_log_norm(g, m, x);
    }
    for a in g.con_ids() {
        total = total + constraint_log_norm(g, m, a);
    }
    for incidence in 0..g.incidences().len() {
        total = total - edge_log_norm(m, incidence);
    }
    total
}

/// Bethe free energy in marginal form:
/// `Σ_x (d(x) - 1) Σ_σ μ_x ln μ_x + Σ_a Σ_σ μ_a(σ)(ln ψ_a(σ) - ln μ_a(σ))`.
///
/// Cells with zero probability contribute nothing (`p ln p → 0`); those
/// arise only from repeated tuple slots.
pub fn bethe_marginal_form<S: Real>(
    g: &FactorGraph<S>,
    var_marginals: &[MarginalTable<S>],
    con_marginals: &[MarginalTable<S>],
) -> S {
    let mut total = S::zero();
    for x in g.var_ids() {
        let d: S = real(g.var_degree(x) as f64);
        let entropy_sum: S = var_marginals[x.0]
            .probs()
            .iter()
            .filter(|&&p| p > S::zero())
            .map(|&p| p * p.ln())
            .sum();
        total = total + (d - S::one()) * entropy_sum;
    }
    for a in g.con_ids() {
        let table = g.weight_of(a).table();
        for (cell, &p) in con_marginals[a.0].probs().iter().enumerate() {
            if p > S::zero() {
                total = total + p * (table[cell].ln() - p.ln());
            }
        }
    }
    total
}

/// Variable and constraint beliefs extracted from a message set.
///
/// Variable beliefs are the normalized product of incoming messages
/// `∏_{a ∈ ∂x} μ_{a→x}`; constraint beliefs put
/// `ψ_a(σ) ∏_{x ∈ ∂a} μ_{x→a}(σ(x))` on each slot tuple (zero on tuples a
/// repeated slot rules out). The incoming-product form of the variable
/// belief is the one that reproduces oracle marginals on acyclic graphs;
/// see [`outgoing_belief_gap`] for a diagnostic comparing it against the
/// outgoing-product form.
pub fn beliefs<S: Real>(
    g: &FactorGraph<S>,
    m: &MessageSet<S>,
) -> (Vec<MarginalTable<S>>, Vec<MarginalTable<S>>) {
    let q = g.q();
    let var_beliefs = g
        .var_ids()
        .map(|x| {
            let mut prod = vec![S::one(); q];
            for &inc in g.incidences_of_var(x) {
                for s in 0..q {
                    prod[s] = prod[s] * m.con_to_var(inc)[s];
                }
            }
            MarginalTable::new(vec![x], q, normalized(prod)).expect("q^1 table")
        })
        .collect();

    let con_beliefs = g
        .con_ids()
        .map(|a| {
            let distinct = g.distinct_neighbors(a);
            let slots = &g.constraint(a).neighbors;
            let table = g.weight_of(a).table();
            let inc_ids = g.incidences_of_con(a);
            let slot_pos: Vec<usize> = slots
                .iter()
                .map(|v| distinct.iter().position(|d| d == v).unwrap())
                .collect();
            let mut probs = vec![S::zero(); q.pow(slots.len() as u32)];
            let u = distinct.len();
            let mut tau = vec![0usize; u];
            'outer: loop {
                let mut cell = 0usize;
                for &p in &slot_pos {
                    cell = cell * q + tau[p];
                }
                let mut term = table[cell];
                for (pos, &inc) in inc_ids.iter().enumerate() {
                    term = term * m.var_to_con(inc)[tau[pos]];
                }
                probs[cell] = term;
                let mut pos = u;
                loop {
                    if pos == 0 {
                        break 'outer;
                    }
                    pos -= 1;
                    tau[pos] += 1;
                    if tau[pos] < q {
                        break;
                    }
                    tau[pos] = 0;
                }
            }
            MarginalTable::new(slots.clone(), q, normalized(probs)).expect("q^d table")
        })
        .collect();

    (var_beliefs, con_beliefs)
}

/// Max TV gap between the incoming-product variable belief and the
/// normalized product of *outgoing* messages `∏_{a ∈ ∂x} μ_{x→a}`.
///
/// The two generally differ; the incoming form is the marginal on trees.
/// Kept as a diagnostic so the difference is measurable rather than folklore.
pub fn outgoing_belief_gap<S: Real>(g: &FactorGraph<S>, m: &MessageSet<S>) -> S {
    let q = g.q();
    let (var_beliefs, _) = beliefs(g, m);
    let mut worst = S::zero();
    for x in g.var_ids() {
        let mut prod = vec![S::one(); q];
        for &inc in g.incidences_of_var(x) {
            for s in 0..q {
                prod[s] = prod[s] * m.var_to_con(inc)[s];
            }
        }
        let outgoing = normalized(prod);
        worst = worst.max(tv_change(var_beliefs[x.0].probs(), &outgoing));
    }
    worst
}

/// Local free-energy increment of one variable: the variable log norm, the
/// log norms of its incident constraints, and minus its edge overlaps.
/// The three terms sum to the change `ln(Z_G / Z_{G - x - ∂x})` on acyclic
/// graphs at exact messages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteIncrement<S = f64> {
    /// `ln Σ_σ ∏_{a ∈ ∂x} μ_{a→x}(σ)`
    pub variable_term: S,
    /// `Σ_{a ∈ ∂x} ln Σ_τ ψ_a(τ) ∏_{y ∈ ∂a} μ_{y→a}(τ(y))`
    pub constraint_term: S,
    /// `-Σ_{a ∈ ∂x} ln Σ_σ μ_{x→a}(σ) μ_{a→x}(σ)`
    pub edge_term: S,
}

impl<S: Real> SiteIncrement<S> {
    pub fn total(&self) -> S {
        self.variable_term + self.constraint_term + self.edge_term
    }
}

/// The three local terms of a variable at the given messages.
pub fn site_increment<S: Real>(
    g: &FactorGraph<S>,
    m: &MessageSet<S>,
    x: VarId,
) -> SiteIncrement<S> {
    let variable_term = variable_log_norm(g, m, x);
    let mut constraint_term = S::zero();
    let mut edge_term = S::zero();
    for &inc in g.incidences_of_var(x) {
        let a = g.incidences()[inc].con;
        constraint_term = constraint_term + constraint_log_norm(g, m, a);
        edge_term = edge_term - edge_log_norm(m, inc);
    }
    SiteIncrement {
        variable_term,
        constraint_term,
        edge_term,
    }
}

/// Local increment of one constraint: its log norm at the
/// variable-to-constraint messages.
/// On acyclic graphs at exact messages this is `ln(Z_G / Z_{G - a})`.
pub fn constraint_increment<S: Real>(g: &FactorGraph<S>, m: &MessageSet<S>, a: ConId) -> S {
    constraint_log_norm(g, m, a)
}
