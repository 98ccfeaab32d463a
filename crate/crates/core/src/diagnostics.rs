//! Measurement toolkit for replica-symmetry style diagnostics: total
//! variation distance, empirical spin statistics, pairwise and l-wise
//! symmetry scores, state scores, regularity and homogeneity verification,
//! and the non-reconstruction score.
//!
//! Scores average over ordered tuples of *distinct* variables. The diagonal
//! terms are excluded deliberately: they are Θ(1) regardless of the model
//! and would swamp the signal at desk scale, while they vanish like O(1/n)
//! in the size limit the scores are probing.

use rand::Rng;

use crate::error::{Error, Result};
use crate::exact::{
    conditional_marginal_given, gibbs_sample, log_gibbs_weight, state_count, EnumBudget,
    ExplicitMeasure,
};
use crate::graph::{Assignment, FactorGraph, VarId};
use crate::scalar::{real, Real};

/// Total variation distance `(1/2) Σ |p_i - q_i|` between two distributions
/// on the same support.
pub fn tv_distance<S: Real>(p: &[S], q: &[S]) -> Result<S> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let half = real(0.5);
    Ok(p.iter().zip(q).map(|(&a, &b)| (a - b).abs()).sum::<S>() * half)
}

/// Empirical spin frequency vector of `σ` restricted to the variable set `U`.
pub fn empirical_spin_dist<S: Real>(
    sigma: &Assignment,
    vars: &[VarId],
    q: usize,
) -> Result<Vec<S>> {
    if vars.is_empty() {
        return Err(Error::EmptyVariableSet);
    }
    let mut counts = vec![S::zero(); q];
    for &v in vars {
        counts[sigma.spin(v)] = counts[sigma.spin(v)] + S::one();
    }
    let total = real(vars.len() as f64);
    Ok(counts.into_iter().map(|c| c / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    Exact,
    Sampled,
}

/// Result of a symmetry-style score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryReport<S = f64> {
    /// Mean TV deviation from product form, in `[0, 1]`.
    pub score: S,
    /// Number of ordered distinct tuples the mean ran over.
    pub pair_count: u64,
    pub mode: ScoreMode,
    /// Standard error of the mean; zero in exact mode.
    pub stderr: S,
}

/// Single-variable marginals and all unordered pair marginals from one
/// enumeration sweep (global-max shift, linear accumulation).
struct PairSweep<S> {
    q: usize,
    singles: Vec<Vec<S>>,
    /// indexed by unordered pair rank, tables over `q^2` with i < j,
    /// cell = spin_i * q + spin_j
    pairs: Vec<Vec<S>>,
}

impl<S: Real> PairSweep<S> {
    fn pair_rank(n: usize, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        i * n - i * (i + 1) / 2 + (j - i - 1)
    }

    fn compute(g: &FactorGraph<S>, budget: EnumBudget) -> Result<Self> {
        let n = g.num_vars();
        let q = g.q();
        let m = g.num_constraints();
        let pair_total = n * (n.saturating_sub(1)) / 2;
        let cost = state_count(q, n).saturating_mul((m + n + pair_total).max(1) as u128);
        budget.check(cost)?;

        let mut shift = S::neg_infinity();
        let walk = |mut visit: Box<dyn FnMut(&[u8], S) + '_>| {
            let states = state_count(q, n) as usize;
            let mut spins = vec![0u8; n];
            for _ in 0..states {
                let mut lw = S::zero();
                for a in g.con_ids() {
                    lw = lw + g.constraint_value_spins(a, &spins).ln();
                }
                visit(&spins, lw);
                for pos in (0..n).rev() {
                    spins[pos] += 1;
                    if (spins[pos] as usize) < q {
                        break;
                    }
                    spins[pos] = 0;
                }
            }
        };
        walk(Box::new(|_, lw| {
            if lw > shift {
                shift = lw;
            }
        }));
        if shift == S::neg_infinity() {
            shift = S::zero();
        }

        let mut singles = vec![vec![S::zero(); q]; n];
        let mut pairs = vec![vec![S::zero(); q * q]; pair_total];
        let mut total = S::zero();
        walk(Box::new(|spins, lw| {
            let w = (lw - shift).exp();
            total = total + w;
            for (x, &s) in spins.iter().enumerate() {
                singles[x][s as usize] = singles[x][s as usize] + w;
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    let cell = spins[i] as usize * q + spins[j] as usize;
                    let r = Self::pair_rank(n, i, j);
                    pairs[r][cell] = pairs[r][cell] + w;
                }
            }
        }));
        for dist in singles.iter_mut() {
            for p in dist.iter_mut() {
                *p = *p / total;
            }
        }
        for table in pairs.iter_mut() {
            for p in table.iter_mut() {
                *p = *p / total;
            }
        }
        Ok(Self { q, singles, pairs })
    }

    fn pair_tv(&self, n: usize, i: usize, j: usize) -> S {
        let q = self.q;
        let table = &self.pairs[Self::pair_rank(n, i, j)];
        let mut tv = S::zero();
        for si in 0..q {
            for sj in 0..q {
                let prod = self.singles[i][si] * self.singles[j][sj];
                tv = tv + (table[si * q + sj] - prod).abs();
            }
        }
        tv * real(0.5)
    }
}

/// Mean TV distance between pair marginals and the product of the single
/// marginals, over ordered pairs of distinct variables.
pub fn pair_symmetry_score<S: Real>(
    g: &FactorGraph<S>,
    budget: EnumBudget,
) -> Result<SymmetryReport<S>> {
    pair_symmetry_score_filtered(g, budget, |_, _| true)
}

/// [`pair_symmetry_score`] restricted to pairs at bipartite distance
/// strictly greater than `min_dist` (unreachable pairs qualify). Zero with
/// an empty pair set.
pub fn pair_symmetry_score_beyond<S: Real>(
    g: &FactorGraph<S>,
    min_dist: usize,
    budget: EnumBudget,
) -> Result<SymmetryReport<S>> {
    let n = g.num_vars();
    let mut far = vec![vec![false; n]; n];
    for i in 0..n {
        let (dist_var, _) = g.distances_from(VarId(i));
        for j in 0..n {
            far[i][j] = dist_var[j] > min_dist;
        }
    }
    pair_symmetry_score_filtered(g, budget, |i, j| far[i][j])
}

fn pair_symmetry_score_filtered<S: Real>(
    g: &FactorGraph<S>,
    budget: EnumBudget,
    include: impl Fn(usize, usize) -> bool,
) -> Result<SymmetryReport<S>> {
    let n = g.num_vars();
    if n < 2 {
        return Ok(SymmetryReport {
            score: S::zero(),
            pair_count: 0,
            mode: ScoreMode::Exact,
            stderr: S::zero(),
        });
    }
    let sweep = PairSweep::compute(g, budget)?;
    let mut sum = S::zero();
    let mut count = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            let tv = sweep.pair_tv(n, i, j);
            // TV is symmetric, so each unordered pair stands for both orders.
            if include(i, j) {
                sum = sum + tv;
                count += 1;
            }
            if include(j, i) {
                sum = sum + tv;
                count += 1;
            }
        }
    }
    let score = if count == 0 {
        S::zero()
    } else {
        sum / real(count as f64)
    };
    Ok(SymmetryReport {
        score,
        pair_count: count,
        mode: ScoreMode::Exact,
        stderr: S::zero(),
    })
}

/// Mean TV distance between l-tuple marginals and the product of single
/// marginals, over ordered tuples of distinct variables. Runs exactly when
/// the budget admits every tuple, otherwise Monte Carlo over uniformly
/// sampled tuples with a reported standard error.
pub fn l_symmetry_score<S: Real>(
    g: &FactorGraph<S>,
    l: usize,
    budget: EnumBudget,
    rng: &mut impl Rng,
) -> Result<SymmetryReport<S>> {
    if l < 2 {
        return Err(Error::InvalidParameter("tuple length must be >= 2".into()));
    }
    if l == 2 {
        return pair_symmetry_score(g, budget);
    }
    let n = g.num_vars();
    if n < l {
        return Ok(SymmetryReport {
            score: S::zero(),
            pair_count: 0,
            mode: ScoreMode::Exact,
            stderr: S::zero(),
        });
    }
    let mu = ExplicitMeasure::from_graph(g, budget)?;
    let mut tuple_count: u64 = 1;
    for i in 0..l {
        tuple_count *= (n - i) as u64;
    }
    let per_tuple = state_count(g.q(), n).saturating_mul(l as u128);
    let exact_cost = per_tuple.saturating_mul(tuple_count as u128);
    if exact_cost <= budget.0 {
        let mut sum = S::zero();
        let mut tuple = vec![0usize; l];
        let mut count = 0u64;
        for_each_distinct_tuple(n, l, &mut tuple, 0, &mut |t| {
            sum = sum + tuple_tv(&mu, t);
            count += 1;
        });
        debug_assert_eq!(count, tuple_count);
        Ok(SymmetryReport {
            score: sum / real(count as f64),
            pair_count: count,
            mode: ScoreMode::Exact,
            stderr: S::zero(),
        })
    } else {
        let samples = ((budget.0 / per_tuple.max(1)) as u64).clamp(0, 400);
        if samples < 2 {
            return Err(Error::BudgetExceeded {
                needed: 2 * per_tuple,
                budget: budget.0,
            });
        }
        let mut values = Vec::with_capacity(samples as usize);
        let mut pool: Vec<usize> = (0..n).collect();
        for _ in 0..samples {
            // ordered sample without replacement
            for i in 0..l {
                let j = rng.random_range(i..n);
                pool.swap(i, j);
            }
            let tuple: Vec<usize> = pool[..l].to_vec();
            values.push(tuple_tv(&mu, &tuple));
        }
        let count = values.len() as f64;
        let mean = values.iter().copied().sum::<S>() / real(count);
        let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / real(count - 1.0);
        Ok(SymmetryReport {
            score: mean,
            pair_count: values.len() as u64,
            mode: ScoreMode::Sampled,
            stderr: (var / real(count)).sqrt(),
        })
    }
}

fn for_each_distinct_tuple(
    n: usize,
    l: usize,
    tuple: &mut Vec<usize>,
    depth: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if depth == l {
        visit(tuple);
        return;
    }
    for v in 0..n {
        if tuple[..depth].contains(&v) {
            continue;
        }
        tuple[depth] = v;
        for_each_distinct_tuple(n, l, tuple, depth + 1, visit);
    }
}

/// TV between the joint law of `tuple` under `mu` and the product of the
/// corresponding single-variable marginals.
fn tuple_tv<S: Real>(mu: &ExplicitMeasure<S>, tuple: &[usize]) -> S {
    let q = mu.q();
    let l = tuple.len();
    let cells = q.pow(l as u32);
    let mut joint = vec![S::zero(); cells];
    let mut singles = vec![vec![S::zero(); q]; l];
    for idx in 0..mu.probs().len() {
        let p = mu.prob(idx);
        if !(p > S::zero()) {
            continue;
        }
        let mut cell = 0usize;
        for (pos, &v) in tuple.iter().enumerate() {
            let s = mu.spin_at(idx, VarId(v));
            cell = cell * q + s;
            singles[pos][s] = singles[pos][s] + p;
        }
        joint[cell] = joint[cell] + p;
    }
    let mut tv = S::zero();
    for cell in 0..cells {
        let mut prod = S::one();
        let mut c = cell;
        for pos in (0..l).rev() {
            prod = prod * singles[pos][c % q];
            c /= q;
        }
        tv = tv + (joint[cell] - prod).abs();
    }
    tv * real(0.5)
}

/// Mean TV deviation from product form over ordered distinct l-tuples,
/// computed under the conditional measure `μ[·|S]` for an explicit state
/// set `S`. With `S = Ω^n` this equals the exact [`l_symmetry_score`].
pub fn state_score<S: Real>(
    g: &FactorGraph<S>,
    state: &[Assignment],
    l: usize,
    budget: EnumBudget,
) -> Result<S> {
    if state.is_empty() {
        return Err(Error::ZeroMassEvent);
    }
    if l < 2 {
        return Err(Error::InvalidParameter("tuple length must be >= 2".into()));
    }
    let n = g.num_vars();
    if n < l {
        return Ok(S::zero());
    }
    let q = g.q();
    let mut tuple_count: u128 = 1;
    for i in 0..l {
        tuple_count *= (n - i) as u128;
    }
    budget.check(
        (state.len() as u128)
            .saturating_mul(tuple_count)
            .saturating_mul(l as u128),
    )?;

    // conditional measure on the members
    let mut shift = S::neg_infinity();
    let log_weights: Vec<S> = state.iter().map(|s| log_gibbs_weight(g, s)).collect();
    for &lw in &log_weights {
        if lw > shift {
            shift = lw;
        }
    }
    let weights: Vec<S> = log_weights.iter().map(|&lw| (lw - shift).exp()).collect();
    let total: S = weights.iter().copied().sum();

    let mut sum = S::zero();
    let mut count = 0u64;
    let mut tuple = vec![0usize; l];
    for_each_distinct_tuple(n, l, &mut tuple, 0, &mut |t| {
        let cells = q.pow(l as u32);
        let mut joint = vec![S::zero(); cells];
        let mut singles = vec![vec![S::zero(); q]; l];
        for (sigma, &w) in state.iter().zip(&weights) {
            let mut cell = 0usize;
            for (pos, &v) in t.iter().enumerate() {
                let s = sigma.spin(VarId(v));
                cell = cell * q + s;
                singles[pos][s] = singles[pos][s] + w;
            }
            joint[cell] = joint[cell] + w;
        }
        let mut tv = S::zero();
        for cell in 0..cells {
            let mut prod = S::one();
            let mut c = cell;
            for pos in (0..l).rev() {
                prod = prod * singles[pos][c % q] / total;
                c /= q;
            }
            tv = tv + (joint[cell] / total - prod).abs();
        }
        sum = sum + tv * real(0.5);
        count += 1;
    });
    Ok(sum / real(count as f64))
}

/// Outcome of a regularity search over variable subsets.
#[derive(Debug, Clone)]
pub struct RegularityReport<S = f64> {
    /// Subset with the largest deviation found.
    pub worst_subset: Vec<VarId>,
    /// `⟨ TV(σ[·|S] - σ[·|U]) ⟩_μ` of that subset.
    pub deviation: S,
    /// True when every admissible subset was enumerated.
    pub certified: bool,
    pub epsilon: f64,
}

impl<S: Real> RegularityReport<S> {
    /// `Some(true)` only with an exhaustive certificate; a found violation
    /// is conclusive either way; otherwise `None` ("not falsified").
    pub fn is_regular(&self) -> Option<bool> {
        if self.deviation.to_f64_lossy() >= self.epsilon {
            Some(false)
        } else if self.certified {
            Some(true)
        } else {
            None
        }
    }
}

/// Searches for a subset `S ⊆ U`, `|S| ≥ ε|U|`, maximizing the mean
/// empirical-distribution deviation `⟨TV(σ[·|S], σ[·|U])⟩_μ`.
///
/// Exhaustive (certified) when `|U| ≤ 15` and the budget admits it;
/// otherwise random restarts plus greedy single-swap hill climbing.
pub fn regularity_violation_search<S: Real>(
    mu: &ExplicitMeasure<S>,
    set: &[VarId],
    epsilon: f64,
    budget: EnumBudget,
    rng: &mut impl Rng,
) -> Result<RegularityReport<S>> {
    if set.is_empty() {
        return Err(Error::EmptyVariableSet);
    }
    let u = set.len();
    let s_min = ((epsilon * u as f64) - 1e-9).ceil().max(1.0) as usize;

    // spins and masses of the support
    let support: Vec<usize> = (0..mu.probs().len())
        .filter(|&i| mu.prob(i) > S::zero())
        .collect();
    let q = mu.q();
    let spins: Vec<Vec<usize>> = support
        .iter()
        .map(|&idx| set.iter().map(|&v| mu.spin_at(idx, v)).collect())
        .collect();
    let masses: Vec<S> = support.iter().map(|&idx| mu.prob(idx)).collect();

    let full_dist: Vec<Vec<S>> = spins
        .iter()
        .map(|row| {
            let mut d = vec![S::zero(); q];
            for &s in row {
                d[s] = d[s] + S::one();
            }
            let tot = real(u as f64);
            d.into_iter().map(|c| c / tot).collect()
        })
        .collect();

    let deviation_of = |mask: u64| -> S {
        let size = mask.count_ones() as usize;
        let size_s = real(size as f64);
        let half = real(0.5);
        let mut dev = S::zero();
        for (row, (&mass, full)) in spins.iter().zip(masses.iter().zip(&full_dist)) {
            let mut counts = vec![S::zero(); q];
            for (pos, &s) in row.iter().enumerate() {
                if mask >> pos & 1 == 1 {
                    counts[s] = counts[s] + S::one();
                }
            }
            let mut tv = S::zero();
            for s in 0..q {
                tv = tv + (counts[s] / size_s - full[s]).abs();
            }
            dev = dev + mass * tv * half;
        }
        dev
    };

    let exhaustive_cost = (1u128 << u.min(127))
        .saturating_mul(support.len() as u128)
        .saturating_mul(u as u128);
    let mut best_mask: u64 = (1u64 << u) - 1;
    let mut best_dev = S::zero();
    let certified;
    if u <= 15 && exhaustive_cost <= budget.0 {
        for mask in 1..(1u64 << u) {
            if (mask.count_ones() as usize) < s_min {
                continue;
            }
            let dev = deviation_of(mask);
            if dev > best_dev {
                best_dev = dev;
                best_mask = mask;
            }
        }
        certified = true;
    } else {
        // random restarts + greedy swaps, bounded by the budget
        let per_eval = (support.len() * u).max(1) as u128;
        let mut evals_left = (budget.0 / per_eval).min(5000) as i64;
        if evals_left < 1 {
            return Err(Error::BudgetExceeded {
                needed: per_eval,
                budget: budget.0,
            });
        }
        while evals_left > 0 {
            let size = rng.random_range(s_min..=u);
            let mut pool: Vec<usize> = (0..u).collect();
            for i in 0..size {
                let j = rng.random_range(i..u);
                pool.swap(i, j);
            }
            let mut mask = 0u64;
            for &p in &pool[..size] {
                mask |= 1 << p;
            }
            let mut dev = deviation_of(mask);
            evals_left -= 1;
            // single-bit toggles that keep |S| >= s_min
            let mut improved = true;
            while improved && evals_left > 0 {
                improved = false;
                for bit in 0..u {
                    let flipped = mask ^ (1 << bit);
                    if (flipped.count_ones() as usize) < s_min || flipped == 0 {
                        continue;
                    }
                    let d = deviation_of(flipped);
                    evals_left -= 1;
                    if d > dev {
                        dev = d;
                        mask = flipped;
                        improved = true;
                    }
                    if evals_left <= 0 {
                        break;
                    }
                }
            }
            if dev > best_dev {
                best_dev = dev;
                best_mask = mask;
            }
        }
        certified = false;
    }

    let worst_subset = (0..u)
        .filter(|&pos| best_mask >> pos & 1 == 1)
        .map(|pos| set[pos])
        .collect();
    Ok(RegularityReport {
        worst_subset,
        deviation: best_dev,
        certified,
        epsilon,
    })
}

/// Checks `ε`-regularity of `μ` with respect to a variable partition:
/// a set of cells covering at least `(1-ε)n` variables must each be
/// `ε`-regular. Returns per-cell verdicts plus the overall outcome.
fn regular_wrt_partition<S: Real>(
    mu: &ExplicitMeasure<S>,
    cells: &[Vec<VarId>],
    epsilon: f64,
    budget: EnumBudget,
    rng: &mut impl Rng,
) -> Result<(ConditionOutcome, Vec<Option<bool>>)> {
    let n = mu.n();
    let mut verdicts = Vec::with_capacity(cells.len());
    for cell in cells {
        let report = regularity_violation_search(mu, cell, epsilon, budget, rng)?;
        verdicts.push(report.is_regular());
    }
    let certified_cover: usize = cells
        .iter()
        .zip(&verdicts)
        .filter(|(_, v)| **v == Some(true))
        .map(|(c, _)| c.len())
        .sum();
    let optimistic_cover: usize = cells
        .iter()
        .zip(&verdicts)
        .filter(|(_, v)| **v != Some(false))
        .map(|(c, _)| c.len())
        .sum();
    let need = (1.0 - epsilon) * n as f64;
    let outcome = if certified_cover as f64 >= need {
        ConditionOutcome::Pass
    } else if (optimistic_cover as f64) < need {
        ConditionOutcome::Fail
    } else {
        ConditionOutcome::Inconclusive
    };
    Ok((outcome, verdicts))
}

/// Variable partition of `[n]` plus state partition of `Ω^n`, with state
/// cells given as explicit assignment lists.
#[derive(Debug, Clone)]
pub struct PartitionPair {
    pub var_partition: Vec<Vec<VarId>>,
    pub state_partition: Vec<Vec<Assignment>>,
}

impl PartitionPair {
    pub fn num_var_cells(&self) -> usize {
        self.var_partition.len()
    }

    pub fn num_state_cells(&self) -> usize {
        self.state_partition.len()
    }

    fn validate(&self, n: usize, q: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for cell in &self.var_partition {
            for &v in cell {
                if v.0 >= n || seen[v.0] {
                    return Err(Error::MalformedPartition(format!(
                        "variable cell entry {} out of range or duplicated",
                        v.0
                    )));
                }
                seen[v.0] = true;
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::MalformedPartition(
                "variable cells do not cover [n]".into(),
            ));
        }
        let states = state_count(q, n);
        if states > (1 << 26) {
            return Err(Error::MalformedPartition(
                "state partition too large to validate explicitly".into(),
            ));
        }
        let mut seen_state = vec![false; states as usize];
        let mut covered = 0u128;
        for cell in &self.state_partition {
            for a in cell {
                if a.len() != n {
                    return Err(Error::MalformedPartition(
                        "assignment of wrong length in state cell".into(),
                    ));
                }
                let idx = crate::exact::encode_assignment(a, q);
                if seen_state[idx] {
                    return Err(Error::MalformedPartition(
                        "state cells are not disjoint".into(),
                    ));
                }
                seen_state[idx] = true;
                covered += 1;
            }
        }
        if covered != states {
            return Err(Error::MalformedPartition(format!(
                "state cells cover {covered} of {states} assignments"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConditionOutcome {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub outcome: ConditionOutcome,
    pub detail: String,
}

/// Per-condition verdicts of the four homogeneity requirements.
#[derive(Debug, Clone)]
pub struct HomogeneityReport {
    /// Positive-mass, certified-regular state cells carry mass `≥ 1-ε`.
    pub mass_coverage: ConditionReport,
    /// All members of each state cell have near-identical empirical spin
    /// statistics on every variable cell.
    pub within_cell_agreement: ConditionReport,
    /// Conditionals on the selected state cells are regular w.r.t. the
    /// variable partition.
    pub conditional_regularity: ConditionReport,
    /// The measure itself is regular w.r.t. the variable partition.
    pub overall_regularity: ConditionReport,
}

impl HomogeneityReport {
    pub fn all_pass(&self) -> bool {
        [
            &self.mass_coverage,
            &self.within_cell_agreement,
            &self.conditional_regularity,
            &self.overall_regularity,
        ]
        .iter()
        .all(|c| c.outcome == ConditionOutcome::Pass)
    }
}

/// Evaluates the four homogeneity conditions of `μ` with respect to a
/// variable/state partition pair at tolerance `ε`.
pub fn homogeneity_check<S: Real>(
    mu: &ExplicitMeasure<S>,
    partition: &PartitionPair,
    epsilon: f64,
    budget: EnumBudget,
    rng: &mut impl Rng,
) -> Result<HomogeneityReport> {
    partition.validate(mu.n(), mu.q())?;
    let q = mu.q();

    // per-cell masses
    let cell_mass: Vec<S> = partition
        .state_partition
        .iter()
        .map(|cell| {
            cell.iter()
                .map(|a| mu.prob(crate::exact::encode_assignment(a, q)))
                .sum()
        })
        .collect();

    // within-cell empirical agreement, all cells, all variable cells
    let mut worst_pair: Option<(usize, usize, f64)> = None;
    for (ci, cell) in partition.state_partition.iter().enumerate() {
        for (vi, vcell) in partition.var_partition.iter().enumerate() {
            if vcell.is_empty() {
                continue;
            }
            let dists: Vec<Vec<S>> = cell
                .iter()
                .map(|a| empirical_spin_dist(a, vcell, q))
                .collect::<Result<_>>()?;
            for i in 0..dists.len() {
                for j in (i + 1)..dists.len() {
                    let tv = tv_distance(&dists[i], &dists[j])?.to_f64_lossy();
                    if worst_pair.map_or(true, |(_, _, w)| tv > w) {
                        worst_pair = Some((ci, vi, tv));
                    }
                }
            }
        }
    }
    let within_cell_agreement = match worst_pair {
        None => ConditionReport {
            outcome: ConditionOutcome::Pass,
            detail: "no comparable pairs (vacuous)".into(),
        },
        Some((ci, vi, tv)) => ConditionReport {
            outcome: if tv < epsilon {
                ConditionOutcome::Pass
            } else {
                ConditionOutcome::Fail
            },
            detail: format!("worst pair TV {tv:.6} in state cell {ci}, variable cell {vi}"),
        },
    };

    // conditionals of positive-mass cells must be regular w.r.t. the
    // variable partition
    let mut selected_mass = S::zero();
    let mut optimistic_mass = S::zero();
    let mut any_inconclusive = false;
    let mut cell_details = Vec::new();
    for (ci, cell) in partition.state_partition.iter().enumerate() {
        if !(cell_mass[ci] > S::zero()) {
            continue;
        }
        let indices: Vec<usize> = cell
            .iter()
            .map(|a| crate::exact::encode_assignment(a, q))
            .collect();
        let conditional = mu.condition_on(&indices)?;
        let (outcome, _) =
            regular_wrt_partition(&conditional, &partition.var_partition, epsilon, budget, rng)?;
        match outcome {
            ConditionOutcome::Pass => {
                selected_mass = selected_mass + cell_mass[ci];
                optimistic_mass = optimistic_mass + cell_mass[ci];
            }
            ConditionOutcome::Inconclusive => {
                optimistic_mass = optimistic_mass + cell_mass[ci];
                any_inconclusive = true;
            }
            ConditionOutcome::Fail => {
                cell_details.push(format!("cell {ci} conditional not regular"));
            }
        }
    }
    let threshold = 1.0 - epsilon;
    let mass_coverage = {
        let got = selected_mass.to_f64_lossy();
        let optimistic = optimistic_mass.to_f64_lossy();
        let (outcome, detail) = if got >= threshold {
            (
                ConditionOutcome::Pass,
                format!("certified-regular cells carry mass {got:.6}"),
            )
        } else if optimistic < threshold {
            (
                ConditionOutcome::Fail,
                format!("even optimistically only mass {optimistic:.6} available"),
            )
        } else {
            (
                ConditionOutcome::Inconclusive,
                format!("certified mass {got:.6}, optimistic {optimistic:.6}"),
            )
        };
        ConditionReport { outcome, detail }
    };
    let conditional_regularity = ConditionReport {
        outcome: if cell_details.is_empty() {
            if any_inconclusive {
                ConditionOutcome::Inconclusive
            } else {
                ConditionOutcome::Pass
            }
        } else {
            ConditionOutcome::Fail
        },
        detail: if cell_details.is_empty() {
            "selected cells regular".into()
        } else {
            cell_details.join("; ")
        },
    };

    // the measure itself must be regular w.r.t. the variable partition
    let (overall_outcome, _) =
        regular_wrt_partition(mu, &partition.var_partition, epsilon, budget, rng)?;
    let overall_regularity = ConditionReport {
        outcome: overall_outcome,
        detail: String::new(),
    };

    Ok(HomogeneityReport {
        mass_coverage,
        within_cell_agreement,
        conditional_regularity,
        overall_regularity,
    })
}

/// Result of the non-reconstruction measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonReconstructionReport<S = f64> {
    /// `(1/n) Σ_i E_{σ~μ} TV(μ_{x_i}, μ_{x_i}[·| far boundary of σ])`.
    pub score: S,
    pub mode: ScoreMode,
    /// Standard error over sampled boundaries; zero in exact mode.
    pub stderr: S,
    pub evaluations: u64,
}

/// Measures how much clamping a typical boundary beyond radius `ell`
/// moves each variable's marginal. Exact by enumerating boundary
/// configurations when affordable, otherwise Monte Carlo over Gibbs samples.
pub fn nonreconstruction_score<S: Real>(
    g: &FactorGraph<S>,
    ell: usize,
    budget: EnumBudget,
    rng: &mut impl Rng,
) -> Result<NonReconstructionReport<S>> {
    let n = g.num_vars();
    let q = g.q();
    let m = g.num_constraints().max(1);
    if n == 0 {
        return Ok(NonReconstructionReport {
            score: S::zero(),
            mode: ScoreMode::Exact,
            stderr: S::zero(),
            evaluations: 0,
        });
    }
    let far_sets: Vec<Vec<VarId>> = g.var_ids().map(|x| g.far_set(x, ell)).collect();

    let mu = ExplicitMeasure::from_graph(g, budget)?;
    let exact_cost = state_count(q, n)
        .saturating_mul(m as u128)
        .saturating_mul(n as u128);
    if exact_cost <= budget.0 {
        // Exact: for each variable, group states by boundary configuration.
        let mut total = S::zero();
        for x in g.var_ids() {
            let far = &far_sets[x.0];
            if far.is_empty() {
                continue;
            }
            // joint accumulation: boundary cell -> (mass, per-spin mass of x);
            // ordered map so the float sums are reproducible bit for bit
            use std::collections::BTreeMap;
            let mut cells: BTreeMap<u64, (S, Vec<S>)> = BTreeMap::new();
            for idx in 0..mu.probs().len() {
                let p = mu.prob(idx);
                let mut key: u64 = 0;
                for &y in far {
                    key = key * q as u64 + mu.spin_at(idx, y) as u64;
                }
                let entry = cells
                    .entry(key)
                    .or_insert_with(|| (S::zero(), vec![S::zero(); q]));
                entry.0 = entry.0 + p;
                entry.1[mu.spin_at(idx, x)] = entry.1[mu.spin_at(idx, x)] + p;
            }
            let marginal: Vec<S> = (0..q)
                .map(|s| cells.values().map(|(_, per_spin)| per_spin[s]).sum::<S>())
                .collect();
            let half = real(0.5);
            for (mass, per_spin) in cells.values() {
                let mut tv = S::zero();
                for s in 0..q {
                    tv = tv + (per_spin[s] / *mass - marginal[s]).abs();
                }
                total = total + *mass * tv * half;
            }
        }
        Ok(NonReconstructionReport {
            score: total / real(n as f64),
            mode: ScoreMode::Exact,
            stderr: S::zero(),
            evaluations: n as u64,
        })
    } else {
        // Monte Carlo over Gibbs-sampled boundary conditions.
        let per_sample: u128 = far_sets
            .iter()
            .map(|far| state_count(q, n - far.len()).saturating_mul(m as u128))
            .sum();
        let samples = (budget.0 / per_sample.max(1)).min(200) as usize;
        if samples < 2 {
            return Err(Error::BudgetExceeded {
                needed: 2 * per_sample,
                budget: budget.0,
            });
        }
        let sigmas = gibbs_sample(g, rng, samples, budget)?;
        let mut values: Vec<S> = Vec::with_capacity(samples);
        let singles: Vec<Vec<S>> = g
            .var_ids()
            .map(|x| {
                let mut d = vec![S::zero(); q];
                for idx in 0..mu.probs().len() {
                    d[mu.spin_at(idx, x)] = d[mu.spin_at(idx, x)] + mu.prob(idx);
                }
                d
            })
            .collect();
        for sigma in &sigmas {
            let mut per_var_sum = S::zero();
            for x in g.var_ids() {
                let far = &far_sets[x.0];
                if far.is_empty() {
                    continue;
                }
                let cond = conditional_marginal_given(g, x, far, sigma, budget)?;
                per_var_sum = per_var_sum + tv_distance(cond.probs(), &singles[x.0])?;
            }
            values.push(per_var_sum / real(n as f64));
        }
        let count = values.len() as f64;
        let mean = values.iter().copied().sum::<S>() / real(count);
        let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / real(count - 1.0);
        Ok(NonReconstructionReport {
            score: mean,
            mode: ScoreMode::Sampled,
            stderr: (var / real(count)).sqrt(),
            evaluations: values.len() as u64,
        })
    }
}
