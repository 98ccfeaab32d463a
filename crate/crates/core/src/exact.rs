//! Brute-force Gibbs oracle.
//!
//! Everything here enumerates `Ω^n`, so it is only usable at desk scale;
//! an explicit operation-count budget makes that boundary testable instead
//! of implicit. Partition sums are accumulated with log-sum-exp (either a
//! streaming accumulator or a global max shift), never as naive products.

use rand::Rng;

use crate::bp::MessageSet;
use crate::error::{Error, Result};
use crate::graph::{Assignment, ConId, FactorGraph, VarId};
use crate::scalar::{real, LogSumExp, Real};

/// Operation-count cap for enumeration.
///
/// The cost of enumerating a graph is `q^n * (work per assignment)`; an op
/// is one constraint-table visit or one accumulator update. The default
/// admits `q = 2, n = 20` and `q = 3, n = 12` at moderate constraint counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumBudget(pub u128);

impl Default for EnumBudget {
    fn default() -> Self {
        EnumBudget(200_000_000)
    }
}

impl EnumBudget {
    pub fn check(self, needed: u128) -> Result<()> {
        if needed > self.0 {
            Err(Error::BudgetExceeded {
                needed,
                budget: self.0,
            })
        } else {
            Ok(())
        }
    }
}

/// `q^n` saturated into `u128` so oversize requests fail the budget check
/// instead of overflowing.
pub fn state_count(q: usize, n: usize) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..n {
        acc = acc.saturating_mul(q as u128);
    }
    acc
}

fn enumeration_cost<S: Real>(g: &FactorGraph<S>, per_state_work: usize) -> u128 {
    state_count(g.q(), g.num_vars()).saturating_mul(per_state_work.max(1) as u128)
}

/// Probability table of an ordered variable tuple, row-major over `Ω^l`
/// with the last coordinate fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable<S = f64> {
    vars: Vec<VarId>,
    q: usize,
    probs: Vec<S>,
}

impl<S: Real> MarginalTable<S> {
    pub fn new(vars: Vec<VarId>, q: usize, probs: Vec<S>) -> Result<Self> {
        let expect = q.checked_pow(vars.len() as u32).unwrap_or(0);
        if probs.len() != expect {
            return Err(Error::LengthMismatch {
                left: probs.len(),
                right: expect,
            });
        }
        Ok(Self { vars, q, probs })
    }

    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    pub fn prob(&self, spins: &[usize]) -> S {
        debug_assert_eq!(spins.len(), self.vars.len());
        let mut idx = 0;
        for &s in spins {
            idx = idx * self.q + s;
        }
        self.probs[idx]
    }

    pub fn sum(&self) -> S {
        self.probs.iter().copied().sum()
    }

    /// Sums out the coordinate at `pos`, producing the marginal of the
    /// remaining tuple.
    pub fn marginalize_out(&self, pos: usize) -> MarginalTable<S> {
        let l = self.vars.len();
        assert!(pos < l);
        let mut vars = self.vars.clone();
        vars.remove(pos);
        let out_len = self.q.pow((l - 1) as u32);
        let mut probs = vec![S::zero(); out_len];
        let stride: usize = self.q.pow((l - 1 - pos) as u32);
        for (idx, &p) in self.probs.iter().enumerate() {
            let high = idx / (stride * self.q);
            let low = idx % stride;
            probs[high * stride + low] = probs[high * stride + low] + p;
        }
        MarginalTable {
            vars,
            q: self.q,
            probs,
        }
    }

    /// Total variation distance to another table on the same shape.
    pub fn tv(&self, other: &MarginalTable<S>) -> Result<S> {
        crate::diagnostics::tv_distance(&self.probs, &other.probs)
    }
}

/// Natural-log Gibbs weight `Σ_a ln ψ_a(σ(∂a))`; `0` for an empty product.
pub fn log_gibbs_weight<S: Real>(g: &FactorGraph<S>, sigma: &Assignment) -> S {
    let mut total = S::zero();
    for a in g.con_ids() {
        total = total + g.constraint_value(a, sigma).ln();
    }
    total
}

/// Enumerates every assignment in odometer order (variable `n-1` fastest)
/// and feeds `(state_index, spins, log_weight)` to the visitor.
fn for_each_assignment<S: Real>(g: &FactorGraph<S>, mut visit: impl FnMut(usize, &[u8], S)) {
    let n = g.num_vars();
    let q = g.q();
    let states = state_count(q, n) as usize;
    let mut spins = vec![0u8; n];
    for idx in 0..states {
        let mut lw = S::zero();
        for a in g.con_ids() {
            lw = lw + g.constraint_value_spins(a, &spins).ln();
        }
        visit(idx, &spins, lw);
        // odometer increment
        for pos in (0..n).rev() {
            spins[pos] += 1;
            if (spins[pos] as usize) < q {
                break;
            }
            spins[pos] = 0;
        }
    }
}

/// `ln Z_G` by exhaustive enumeration with a streaming log-sum-exp.
pub fn log_partition<S: Real>(g: &FactorGraph<S>, budget: EnumBudget) -> Result<S> {
    budget.check(enumeration_cost(g, g.num_constraints().max(1)))?;
    let mut acc = LogSumExp::new();
    for_each_assignment(g, |_, _, lw| acc.add(lw));
    Ok(acc.value())
}

/// Exact Gibbs law of an ordered variable tuple (repeats allowed).
pub fn joint_marginal<S: Real>(
    g: &FactorGraph<S>,
    vars: &[VarId],
    budget: EnumBudget,
) -> Result<MarginalTable<S>> {
    if vars.is_empty() {
        return Err(Error::EmptyVariableSet);
    }
    for &v in vars {
        if v.0 >= g.num_vars() {
            return Err(Error::InvalidParameter(format!(
                "variable {} out of range",
                v.0
            )));
        }
    }
    budget.check(enumeration_cost(g, g.num_constraints() + vars.len()))?;
    let q = g.q();
    let cells = q.pow(vars.len() as u32);
    let mut acc: Vec<LogSumExp<S>> = vec![LogSumExp::new(); cells];
    for_each_assignment(g, |_, spins, lw| {
        let mut cell = 0usize;
        for &v in vars {
            cell = cell * q + spins[v.0] as usize;
        }
        acc[cell].add(lw);
    });
    normalize_log_cells(vars.to_vec(), q, &acc)
}

fn normalize_log_cells<S: Real>(
    vars: Vec<VarId>,
    q: usize,
    acc: &[LogSumExp<S>],
) -> Result<MarginalTable<S>> {
    let mut total = LogSumExp::new();
    for cell in acc {
        total.add(cell.value());
    }
    let log_z = total.value();
    let probs = acc
        .iter()
        .map(|cell| {
            let v = cell.value();
            if v == S::neg_infinity() {
                S::zero()
            } else {
                (v - log_z).exp()
            }
        })
        .collect();
    MarginalTable::new(vars, q, probs)
}

/// Gibbs marginal of `x` conditioned on every variable farther than `ell`
/// from `x` being clamped to `sigma`'s value. The conditioning event always
/// has positive mass because all weights are strictly positive.
pub fn conditional_marginal<S: Real>(
    g: &FactorGraph<S>,
    x: VarId,
    ell: usize,
    sigma: &Assignment,
    budget: EnumBudget,
) -> Result<MarginalTable<S>> {
    let far = g.far_set(x, ell);
    conditional_marginal_given(g, x, &far, sigma, budget)
}

/// Same as [`conditional_marginal`] with an explicit clamped set.
pub fn conditional_marginal_given<S: Real>(
    g: &FactorGraph<S>,
    x: VarId,
    clamped: &[VarId],
    sigma: &Assignment,
    budget: EnumBudget,
) -> Result<MarginalTable<S>> {
    let n = g.num_vars();
    let q = g.q();
    let mut is_clamped = vec![false; n];
    for &v in clamped {
        is_clamped[v.0] = true;
    }
    if is_clamped[x.0] {
        return Err(Error::InvalidParameter(
            "target variable cannot be clamped".into(),
        ));
    }
    let free: Vec<usize> = (0..n).filter(|&v| !is_clamped[v]).collect();
    let free_states = state_count(q, free.len());
    budget.check(free_states.saturating_mul(g.num_constraints().max(1) as u128))?;

    let mut spins: Vec<u8> = (0..n)
        .map(|v| if is_clamped[v] { sigma.0[v] } else { 0 })
        .collect();
    let mut acc: Vec<LogSumExp<S>> = vec![LogSumExp::new(); q];
    let mut digits = vec![0usize; free.len()];
    loop {
        let mut lw = S::zero();
        for a in g.con_ids() {
            lw = lw + g.constraint_value_spins(a, &spins).ln();
        }
        acc[spins[x.0] as usize].add(lw);
        // increment free-variable odometer
        let mut pos = free.len();
        loop {
            if pos == 0 {
                return normalize_log_cells(vec![x], q, &acc);
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < q {
                spins[free[pos]] = digits[pos] as u8;
                break;
            }
            digits[pos] = 0;
            spins[free[pos]] = 0;
        }
    }
}

/// Iid samples from the exact Gibbs law: enumerate, build an alias table,
/// then draw. Deterministic given the rng state.
pub fn gibbs_sample<S: Real>(
    g: &FactorGraph<S>,
    rng: &mut impl Rng,
    count: usize,
    budget: EnumBudget,
) -> Result<Vec<Assignment>> {
    budget.check(enumeration_cost(g, g.num_constraints().max(1)).saturating_add(count as u128))?;
    let measure = ExplicitMeasure::from_graph(g, budget)?;
    let alias = AliasTable::new(&measure.probs_f64());
    let n = g.num_vars();
    let q = g.q();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let idx = alias.sample(rng);
        out.push(decode_assignment(idx, n, q));
    }
    Ok(out)
}

/// Decodes a state index (variable 0 most significant) into an assignment.
pub fn decode_assignment(mut idx: usize, n: usize, q: usize) -> Assignment {
    let mut spins = vec![0u8; n];
    for pos in (0..n).rev() {
        spins[pos] = (idx % q) as u8;
        idx /= q;
    }
    Assignment(spins)
}

/// Walker alias table over a normalized probability vector.
struct AliasTable {
    accept: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    fn new(probs: &[f64]) -> Self {
        let n = probs.len();
        let mut accept = vec![0.0; n];
        let mut alias = vec![0usize; n];
        let mut scaled: Vec<f64> = probs.iter().map(|&p| p * n as f64).collect();
        let mut small: Vec<usize> = Vec::new();
        let mut large: Vec<usize> = Vec::new();
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            accept[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        for &i in small.iter().chain(large.iter()) {
            accept[i] = 1.0;
            alias[i] = i;
        }
        Self { accept, alias }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let i = rng.random_range(0..self.accept.len());
        let f: f64 = rng.random();
        if f < self.accept[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

/// Exact cavity messages: for each incidence `(x, a)`, the variable-to-
/// constraint message is the marginal of `x` in `G - a` and the constraint-
/// to-variable message is the marginal of `x` in the graph keeping `a` and
/// everything not incident to `x`.
///
/// Computed in a single sweep: for an assignment with log weight `L`,
/// the `G - a` weight is `L - ln ψ_a` and the cavity weight is
/// `L - Σ_{b ∈ ∂x \ a} ln ψ_b`, so every message only needs a reweighted
/// accumulation of the same enumeration.
pub fn exact_messages<S: Real>(g: &FactorGraph<S>, budget: EnumBudget) -> Result<MessageSet<S>> {
    Ok(exact_bundle(g, budget)?.messages)
}

/// Everything the oracle can extract from one enumeration sweep.
#[derive(Debug, Clone)]
pub struct ExactBundle<S = f64> {
    pub log_z: S,
    /// One single-variable marginal per variable.
    pub var_marginals: Vec<MarginalTable<S>>,
    /// Joint law of each constraint's slot tuple (zeros where repeated
    /// slots force disagreement).
    pub con_marginals: Vec<MarginalTable<S>>,
    pub messages: MessageSet<S>,
}

pub fn exact_bundle<S: Real>(g: &FactorGraph<S>, budget: EnumBudget) -> Result<ExactBundle<S>> {
    let n = g.num_vars();
    let q = g.q();
    let m = g.num_constraints();
    let num_inc = g.incidences().len();
    budget.check(enumeration_cost(g, m + n + 2 * num_inc + 1))?;

    // Pass 1: global shift so pass 2 can accumulate exp(L - shift) linearly.
    let mut shift = S::neg_infinity();
    for_each_assignment(g, |_, _, lw| {
        if lw > shift {
            shift = lw;
        }
    });
    if shift == S::neg_infinity() {
        shift = S::zero(); // n = 0: single empty assignment, weight 0
    }

    let mut z_sum = S::zero();
    let mut var_sums = vec![vec![S::zero(); q]; n];
    let mut con_sums: Vec<Vec<S>> = g
        .con_ids()
        .map(|a| vec![S::zero(); q.pow(g.constraint(a).degree() as u32)])
        .collect();
    let mut v2c_sums = vec![vec![S::zero(); q]; num_inc];
    let mut c2v_sums = vec![vec![S::zero(); q]; num_inc];

    let mut con_value = vec![S::one(); m];
    let mut con_cell = vec![0usize; m];
    let mut var_prod = vec![S::one(); n];

    let n_states = state_count(q, n) as usize;
    let mut spins = vec![0u8; n];
    for _ in 0..n_states {
        // per-constraint table values and slot cells
        let mut log_w = S::zero();
        for a in 0..m {
            let c = g.constraint(ConId(a));
            let mut cell = 0usize;
            for &v in &c.neighbors {
                cell = cell * q + spins[v.0] as usize;
            }
            let val = g.weight_of(ConId(a)).table()[cell];
            con_value[a] = val;
            con_cell[a] = cell;
            log_w = log_w + val.ln();
        }
        let w = (log_w - shift).exp();
        z_sum = z_sum + w;

        for x in 0..n {
            var_sums[x][spins[x] as usize] = var_sums[x][spins[x] as usize] + w;
            var_prod[x] = S::one();
        }
        for x in 0..n {
            for &inc in g.incidences_of_var(VarId(x)) {
                let a = g.incidences()[inc].con.0;
                var_prod[x] = var_prod[x] * con_value[a];
            }
        }
        for a in 0..m {
            con_sums[a][con_cell[a]] = con_sums[a][con_cell[a]] + w;
        }
        for (inc_id, inc) in g.incidences().iter().enumerate() {
            let s = spins[inc.var.0] as usize;
            let fa = con_value[inc.con.0];
            // G - a: divide out ψ_a
            v2c_sums[inc_id][s] = v2c_sums[inc_id][s] + w / fa;
            // cavity graph: divide out all of ∂x except a
            c2v_sums[inc_id][s] = c2v_sums[inc_id][s] + w * fa / var_prod[inc.var.0];
        }

        for pos in (0..n).rev() {
            spins[pos] += 1;
            if (spins[pos] as usize) < q {
                break;
            }
            spins[pos] = 0;
        }
    }

    let log_z = shift + z_sum.ln();
    let var_marginals = var_sums
        .into_iter()
        .enumerate()
        .map(|(x, sums)| normalize_linear(vec![VarId(x)], q, sums))
        .collect::<Result<Vec<_>>>()?;
    let con_marginals = con_sums
        .into_iter()
        .enumerate()
        .map(|(a, sums)| normalize_linear(g.constraint(ConId(a)).neighbors.clone(), q, sums))
        .collect::<Result<Vec<_>>>()?;

    let mut messages = MessageSet::uniform(g);
    for inc_id in 0..num_inc {
        messages.set_var_to_con(inc_id, normalize_vec(&v2c_sums[inc_id]));
        messages.set_con_to_var(inc_id, normalize_vec(&c2v_sums[inc_id]));
    }

    Ok(ExactBundle {
        log_z,
        var_marginals,
        con_marginals,
        messages,
    })
}

fn normalize_linear<S: Real>(vars: Vec<VarId>, q: usize, sums: Vec<S>) -> Result<MarginalTable<S>> {
    let total: S = sums.iter().copied().sum();
    MarginalTable::new(vars, q, sums.into_iter().map(|v| v / total).collect())
}

fn normalize_vec<S: Real>(v: &[S]) -> Vec<S> {
    let total: S = v.iter().copied().sum();
    v.iter().map(|&x| x / total).collect()
}

/// Dense explicit measure on `Ω^n`, indexed like the enumeration order
/// (variable 0 most significant).
#[derive(Debug, Clone)]
pub struct ExplicitMeasure<S = f64> {
    n: usize,
    q: usize,
    probs: Vec<S>,
}

impl<S: Real> ExplicitMeasure<S> {
    pub fn new(n: usize, q: usize, probs: Vec<S>) -> Result<Self> {
        if probs.len() as u128 != state_count(q, n) {
            return Err(Error::LengthMismatch {
                left: probs.len(),
                right: state_count(q, n) as usize,
            });
        }
        Ok(Self { n, q, probs })
    }

    /// Exact Gibbs measure of a graph.
    pub fn from_graph(g: &FactorGraph<S>, budget: EnumBudget) -> Result<Self> {
        budget.check(enumeration_cost(g, g.num_constraints().max(1)))?;
        let mut shift = S::neg_infinity();
        for_each_assignment(g, |_, _, lw| {
            if lw > shift {
                shift = lw;
            }
        });
        let states = state_count(g.q(), g.num_vars()) as usize;
        let mut probs = vec![S::zero(); states];
        let mut total = S::zero();
        for_each_assignment(g, |idx, _, lw| {
            let w = (lw - shift).exp();
            probs[idx] = w;
            total = total + w;
        });
        for p in &mut probs {
            *p = *p / total;
        }
        Ok(Self {
            n: g.num_vars(),
            q: g.q(),
            probs,
        })
    }

    /// Uniform measure on an explicit support set.
    pub fn uniform_on(n: usize, q: usize, support: &[Assignment]) -> Result<Self> {
        let states = state_count(q, n) as usize;
        let mut probs = vec![S::zero(); states];
        let w = S::one() / real(support.len() as f64);
        for a in support {
            probs[encode_assignment(a, q)] = probs[encode_assignment(a, q)] + w;
        }
        Self::new(n, q, probs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    pub fn probs_f64(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.to_f64_lossy()).collect()
    }

    pub fn prob(&self, idx: usize) -> S {
        self.probs[idx]
    }

    /// Spin of variable `v` in the state with index `idx`.
    pub fn spin_at(&self, idx: usize, v: VarId) -> usize {
        let shift = self.n - 1 - v.0;
        (idx / self.q.pow(shift as u32)) % self.q
    }

    pub fn assignment(&self, idx: usize) -> Assignment {
        decode_assignment(idx, self.n, self.q)
    }

    /// Conditional measure on an index subset; errors on zero mass.
    pub fn condition_on(&self, indices: &[usize]) -> Result<Self> {
        let mut probs = vec![S::zero(); self.probs.len()];
        let mut mass = S::zero();
        for &i in indices {
            probs[i] = self.probs[i];
            mass = mass + self.probs[i];
        }
        if !(mass > S::zero()) {
            return Err(Error::ZeroMassEvent);
        }
        for p in &mut probs {
            *p = *p / mass;
        }
        Self::new(self.n, self.q, probs)
    }
}

/// Inverse of [`decode_assignment`].
pub fn encode_assignment(a: &Assignment, q: usize) -> usize {
    let mut idx = 0usize;
    for &s in &a.0 {
        idx = idx * q + s as usize;
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Constraint, SpinAlphabet, WeightFunction};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn potts_edge(beta: f64) -> FactorGraph<f64> {
        let e = beta.exp();
        FactorGraph::new(
            2,
            SpinAlphabet::numeric(2),
            vec![WeightFunction::new(2, vec![e, 1.0, 1.0, e]).unwrap()],
            vec![Constraint::new(vec![VarId(0), VarId(1)], 0)],
        )
        .unwrap()
    }

    fn ksat_clause(beta: f64) -> FactorGraph<f64> {
        // k = 3, forbidden assignment (+,+,+) = index 0
        let mut table = vec![1.0; 8];
        table[0] = (-beta).exp();
        FactorGraph::new(
            3,
            SpinAlphabet::boolean(),
            vec![WeightFunction::new(3, table).unwrap()],
            vec![Constraint::new(vec![VarId(0), VarId(1), VarId(2)], 0)],
        )
        .unwrap()
    }

    #[test]
    fn empty_graph_log_weight_is_zero() {
        let g: FactorGraph<f64> =
            FactorGraph::new(3, SpinAlphabet::numeric(2), vec![], vec![]).unwrap();
        let sigma = Assignment::constant(3, 0);
        assert_eq!(log_gibbs_weight(&g, &sigma), 0.0);
    }

    #[test]
    fn potts_edge_log_weight() {
        let g = potts_edge(1.0);
        assert!((log_gibbs_weight(&g, &Assignment(vec![0, 0])) - 1.0).abs() < 1e-15);
        assert!((log_gibbs_weight(&g, &Assignment(vec![0, 1]))).abs() < 1e-15);
    }

    #[test]
    fn log_gibbs_weight_matches_table_products() {
        // Oracle: recompute as a direct product of table lookups.
        let g = ksat_clause(0.7);
        let sigma = Assignment(vec![0, 1, 0]);
        let direct: f64 = g.con_ids().map(|a| g.constraint_value(a, &sigma)).product();
        assert!((log_gibbs_weight(&g, &sigma) - direct.ln()).abs() < 1e-14);
    }

    #[test]
    fn empty_graph_partition_is_n_ln_q() {
        let g: FactorGraph<f64> =
            FactorGraph::new(3, SpinAlphabet::numeric(2), vec![], vec![]).unwrap();
        let lz = log_partition(&g, EnumBudget::default()).unwrap();
        assert!((lz - 3.0 * 2.0_f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn potts_edge_partition() {
        // Independent four-term enumeration: Z = 2e + 2 at beta = 1.
        let g = potts_edge(1.0);
        let lz = log_partition(&g, EnumBudget::default()).unwrap();
        assert!((lz - (2.0 * 1.0_f64.exp() + 2.0).ln()).abs() < 1e-13);
    }

    #[test]
    fn ksat_clause_partition() {
        // Z = 7 + e^{-beta}; at beta = ln 2 this is 7.5.
        let g = ksat_clause(2.0_f64.ln());
        let lz = log_partition(&g, EnumBudget::default()).unwrap();
        assert!((lz - 7.5_f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn budget_exceeded_is_reported() {
        let g = potts_edge(1.0);
        assert!(matches!(
            log_partition(&g, EnumBudget(1)),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn single_var_marginal_uniform_on_empty_graph() {
        let g: FactorGraph<f64> =
            FactorGraph::new(2, SpinAlphabet::numeric(3), vec![], vec![]).unwrap();
        let t = joint_marginal(&g, &[VarId(0)], EnumBudget::default()).unwrap();
        for &p in t.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn potts_pair_marginal() {
        let g = potts_edge(0.8);
        let t = joint_marginal(&g, &[VarId(0), VarId(1)], EnumBudget::default()).unwrap();
        let e = 0.8_f64.exp();
        let z = 2.0 * e + 2.0;
        let expect = [e / z, 1.0 / z, 1.0 / z, e / z];
        for (p, ex) in t.probs().iter().zip(expect) {
            assert!((p - ex).abs() < 1e-14);
        }
        assert!((t.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_tuple_gives_diagonal_table() {
        let g = potts_edge(0.8);
        let t = joint_marginal(&g, &[VarId(0), VarId(0)], EnumBudget::default()).unwrap();
        assert!((t.prob(&[0, 0]) - 0.5).abs() < 1e-13);
        assert_eq!(t.prob(&[0, 1]), 0.0);
        assert_eq!(t.prob(&[1, 0]), 0.0);
        assert!((t.prob(&[1, 1]) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn marginalize_out_projects_consistently() {
        let g = potts_edge(1.3);
        let pair = joint_marginal(&g, &[VarId(0), VarId(1)], EnumBudget::default()).unwrap();
        let single = joint_marginal(&g, &[VarId(0)], EnumBudget::default()).unwrap();
        let projected = pair.marginalize_out(1);
        for (a, b) in projected.probs().iter().zip(single.probs()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn conditional_with_empty_far_set_is_plain_marginal() {
        let g = potts_edge(1.0);
        // ell = 2 covers the whole component: dist(x0, x1) = 2.
        let cond = conditional_marginal(
            &g,
            VarId(0),
            2,
            &Assignment(vec![0, 0]),
            EnumBudget::default(),
        )
        .unwrap();
        let plain = joint_marginal(&g, &[VarId(0)], EnumBudget::default()).unwrap();
        for (a, b) in cond.probs().iter().zip(plain.probs()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn conditional_on_potts_edge_boundary() {
        // ell = 0: y is clamped to t; marginal of x should be ∝ e^{β 1{s=t}}.
        let beta = 0.9;
        let g = potts_edge(beta);
        let cond = conditional_marginal(
            &g,
            VarId(0),
            0,
            &Assignment(vec![0, 1]),
            EnumBudget::default(),
        )
        .unwrap();
        let e = beta.exp();
        let expect = [1.0 / (1.0 + e), e / (1.0 + e)];
        for (p, ex) in cond.probs().iter().zip(expect) {
            assert!((p - ex).abs() < 1e-14);
        }
    }

    #[test]
    fn conditional_on_empty_graph_is_uniform() {
        let g: FactorGraph<f64> =
            FactorGraph::new(4, SpinAlphabet::numeric(2), vec![], vec![]).unwrap();
        let cond = conditional_marginal(
            &g,
            VarId(2),
            0,
            &Assignment(vec![1, 1, 0, 1]),
            EnumBudget::default(),
        )
        .unwrap();
        for &p in cond.probs() {
            assert!((p - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn gibbs_sampling_is_deterministic_given_seed() {
        let g = potts_edge(1.0);
        let mut rng1 = ChaCha12Rng::seed_from_u64(7);
        let mut rng2 = ChaCha12Rng::seed_from_u64(7);
        let s1 = gibbs_sample(&g, &mut rng1, 50, EnumBudget::default()).unwrap();
        let s2 = gibbs_sample(&g, &mut rng2, 50, EnumBudget::default()).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn gibbs_sampling_empirical_frequencies_track_uniform() {
        let g: FactorGraph<f64> =
            FactorGraph::new(3, SpinAlphabet::numeric(2), vec![], vec![]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let samples = gibbs_sample(&g, &mut rng, 10_000, EnumBudget::default()).unwrap();
        // Single-site frequencies within 4 sigma of 1/2.
        let sigma4 = 4.0 * (0.25_f64 / 10_000.0).sqrt();
        for x in 0..3 {
            let freq = samples.iter().filter(|s| s.0[x] == 0).count() as f64 / 10_000.0;
            assert!((freq - 0.5).abs() < sigma4, "site {x} freq {freq}");
        }
    }

    #[test]
    fn gibbs_sampling_concentrates_at_large_beta() {
        let g = potts_edge(6.0);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let samples = gibbs_sample(&g, &mut rng, 2000, EnumBudget::default()).unwrap();
        let agree = samples.iter().filter(|s| s.0[0] == s.0[1]).count() as f64 / 2000.0;
        // Exact pair marginal: P(agree) = 2e^6 / (2e^6 + 2).
        let p = 1.0_f64.exp().powi(6) / (1.0_f64.exp().powi(6) + 1.0);
        assert!((agree - p).abs() < 0.02, "agree {agree} expected {p}");
    }

    #[test]
    fn exact_messages_on_leaf_are_uniform() {
        let g = potts_edge(1.4);
        let msgs = exact_messages(&g, EnumBudget::default()).unwrap();
        // d(x) = 1 for both endpoints: the G - a marginal is uniform.
        for inc_id in 0..g.incidences().len() {
            for &p in msgs.var_to_con(inc_id) {
                assert!((p - 0.5).abs() < 1e-13);
            }
            // Potts row averages are constant, so incoming messages are uniform too.
            for &p in msgs.con_to_var(inc_id) {
                assert!((p - 0.5).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn exact_messages_match_per_incidence_surgery() {
        // Independent route: build G - a and the cavity graph explicitly and
        // take oracle marginals there.
        let mut table = vec![1.0_f64; 8];
        table[3] = 0.4;
        table[6] = 2.1;
        let g = FactorGraph::new(
            4,
            SpinAlphabet::numeric(2),
            vec![
                WeightFunction::new(3, table).unwrap(),
                WeightFunction::new(2, vec![1.5, 0.7, 0.7, 1.5]).unwrap(),
            ],
            vec![
                Constraint::new(vec![VarId(0), VarId(1), VarId(2)], 0),
                Constraint::new(vec![VarId(1), VarId(3)], 1),
                Constraint::new(vec![VarId(2), VarId(3)], 1),
            ],
        )
        .unwrap();
        let msgs = exact_messages(&g, EnumBudget::default()).unwrap();
        for (inc_id, inc) in g.incidences().iter().enumerate() {
            let (minus_a, _) = g.remove_constraint(inc.con).unwrap();
            let expect_v2c = joint_marginal(&minus_a, &[inc.var], EnumBudget::default()).unwrap();
            for (p, ex) in msgs.var_to_con(inc_id).iter().zip(expect_v2c.probs()) {
                assert!((p - ex).abs() < 1e-12);
            }
            let (cavity, _) = g.cavity_restrict(inc.var, inc.con).unwrap();
            let expect_c2v = joint_marginal(&cavity, &[inc.var], EnumBudget::default()).unwrap();
            for (p, ex) in msgs.con_to_var(inc_id).iter().zip(expect_c2v.probs()) {
                assert!((p - ex).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn explicit_measure_round_trips_indices() {
        let g = potts_edge(0.5);
        let mu = ExplicitMeasure::from_graph(&g, EnumBudget::default()).unwrap();
        assert_eq!(mu.spin_at(0b01, VarId(1)), 1);
        assert_eq!(mu.spin_at(0b10, VarId(0)), 1);
        let total: f64 = mu.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let a = mu.assignment(2);
        assert_eq!(encode_assignment(&a, 2), 2);
    }
}
