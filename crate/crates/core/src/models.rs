//! Model specifications and random factor-graph generators.
//!
//! Three samplers: the Poisson model (random constraint count, iid uniform
//! neighbor tuples), the regular model (clone matching with per-variable
//! degree cap `d`), and the percolated regular model (coordinates of each
//! constraint dropped independently, weights averaged over the dropped
//! coordinates, attachment via the configuration model with whole-draw
//! restarts on clone overflow).
//!
//! All samplers are pure functions of `(spec, params)`: the `seed` field
//! drives a ChaCha stream, with per-constraint randomness on independent
//! sub-streams keyed by constraint index so that single constraints can be
//! replayed in insertion/removal experiments.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Constraint, FactorGraph, SpinAlphabet, VarId, WeightFunction};
use crate::scalar::{real, Real};

/// Parameters shared by every random model: alphabet, constraint arity,
/// weight family and the selection distribution over the family.
#[derive(Debug, Clone)]
pub struct ModelSpec<S = f64> {
    pub spins: SpinAlphabet,
    pub k: usize,
    pub weight_family: Vec<WeightFunction<S>>,
    pub rho: Vec<f64>,
}

impl<S: Real> ModelSpec<S> {
    pub fn new(
        spins: SpinAlphabet,
        k: usize,
        weight_family: Vec<WeightFunction<S>>,
        rho: Vec<f64>,
    ) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("k must be >= 2, got {k}")));
        }
        if weight_family.is_empty() {
            return Err(Error::InvalidParameter("empty weight family".into()));
        }
        if rho.len() != weight_family.len() {
            return Err(Error::LengthMismatch {
                left: rho.len(),
                right: weight_family.len(),
            });
        }
        let total: f64 = rho.iter().sum();
        if (total - 1.0).abs() > 1e-9 || rho.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidParameter(
                "rho must be a probability vector".into(),
            ));
        }
        for (i, w) in weight_family.iter().enumerate() {
            if w.arity() != k {
                return Err(Error::InvalidParameter(format!(
                    "family member {i} has arity {}, expected k = {k}",
                    w.arity()
                )));
            }
            if w.table().len() != spins.size().pow(k as u32) {
                return Err(Error::InvalidParameter(format!(
                    "family member {i} table size does not match q^k"
                )));
            }
        }
        Ok(Self {
            spins,
            k,
            weight_family,
            rho,
        })
    }

    pub fn q(&self) -> usize {
        self.spins.size()
    }

    /// Soft k-SAT: one weight per sign pattern, uniform selection.
    pub fn ksat(k: usize, beta: f64) -> Result<Self> {
        let patterns = 1usize << k;
        let family = (0..patterns)
            .map(|mask| {
                let signs: Vec<bool> = (0..k).map(|j| mask >> (k - 1 - j) & 1 == 0).collect();
                ksat_weight(&signs, real(beta))
            })
            .collect::<Result<Vec<_>>>()?;
        let rho = vec![1.0 / patterns as f64; patterns];
        Self::new(SpinAlphabet::boolean(), k, family, rho)
    }

    /// Potts model: pairwise same-spin coupling at inverse temperature `beta`.
    pub fn potts(q: usize, beta: f64) -> Result<Self> {
        Self::new(
            SpinAlphabet::numeric(q),
            2,
            vec![potts_weight(q, real(beta))?],
            vec![1.0],
        )
    }

    /// Ising model: the Potts coupling on two spins labelled `+`/`-`.
    pub fn ising(beta: f64) -> Result<Self> {
        Self::new(
            SpinAlphabet::boolean(),
            2,
            vec![potts_weight(2, real(beta))?],
            vec![1.0],
        )
    }
}

/// Sampler parameters. `d` is the Poisson density or the (integer) variable
/// degree for the regular models; `eps` is the percolation drop probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub n: usize,
    pub d: f64,
    pub eps: f64,
    pub seed: u64,
}

impl GeneratorParams {
    pub fn new(n: usize, d: f64, eps: f64, seed: u64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParameter("n must be >= 1".into()));
        }
        if !(d >= 0.0) || !d.is_finite() {
            return Err(Error::InvalidParameter("d must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::InvalidParameter("eps must lie in [0, 1)".into()));
        }
        Ok(Self { n, d, eps, seed })
    }
}

/// Soft k-SAT clause: weight `e^{-beta}` on the single forbidden assignment
/// where every literal matches its sign, `1` elsewhere. `signs[j] = true`
/// means the forbidden spin of slot `j` is `+` (index 0).
pub fn ksat_weight<S: Real>(signs: &[bool], beta: S) -> Result<WeightFunction<S>> {
    let k = signs.len();
    let mut table = vec![S::one(); 1 << k];
    let mut forbidden = 0usize;
    for &sign in signs {
        forbidden = forbidden * 2 + usize::from(!sign);
    }
    table[forbidden] = (-beta).exp();
    WeightFunction::new(k, table)
}

/// Pairwise Potts coupling: `e^{beta}` on the diagonal, `1` off it.
pub fn potts_weight<S: Real>(q: usize, beta: S) -> Result<WeightFunction<S>> {
    let mut table = vec![S::one(); q * q];
    for s in 0..q {
        table[s * q + s] = beta.exp();
    }
    WeightFunction::new(2, table)
}

/// Averages a weight function over the coordinates outside `kept`,
/// rescaled by `q^{|kept| - arity}` so the table mean is preserved.
/// `kept` must be strictly increasing coordinate indices.
pub fn marginalize_weight<S: Real>(
    w: &WeightFunction<S>,
    kept: &[usize],
    q: usize,
) -> Result<WeightFunction<S>> {
    let k = w.arity();
    for (pos, &j) in kept.iter().enumerate() {
        if j >= k {
            return Err(Error::CoordinateOutOfRange { index: j, arity: k });
        }
        if pos > 0 && kept[pos - 1] >= j {
            return Err(Error::InvalidParameter(
                "kept coordinates must be strictly increasing".into(),
            ));
        }
    }
    if kept.len() == k {
        return Ok(w.clone());
    }
    let r = kept.len();
    let prefactor = real((q as f64).powi(r as i32 - k as i32));
    let mut table = vec![S::zero(); q.pow(r as u32)];
    let mut digits = vec![0usize; k];
    for (cell, &value) in w.table().iter().enumerate() {
        let mut c = cell;
        for pos in (0..k).rev() {
            digits[pos] = c % q;
            c /= q;
        }
        let mut out_cell = 0usize;
        for &j in kept {
            out_cell = out_cell * q + digits[j];
        }
        table[out_cell] = table[out_cell] + value;
    }
    for v in &mut table {
        *v = *v * prefactor;
    }
    WeightFunction::new(r, table)
}

fn substream(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Poisson draw by CDF inversion; fine for the desk-scale means used here.
fn poisson_inverse(lambda: f64, rng: &mut impl Rng) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let u: f64 = rng.random();
    let mut p = (-lambda).exp();
    let mut cdf = p;
    let mut k = 0usize;
    let cap = (lambda + 60.0 * lambda.sqrt() + 100.0) as usize;
    while u >= cdf && k < cap {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k
}

fn choose_weight(rho: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in rho.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    rho.len() - 1
}

/// Poisson model: `m ~ Po(dn/k)` constraints, each with an iid weight from
/// `rho` and a uniformly random neighbor k-tuple (repeats allowed).
pub fn sample_poisson<S: Real>(
    spec: &ModelSpec<S>,
    params: &GeneratorParams,
) -> Result<FactorGraph<S>> {
    let n = params.n;
    let m = poisson_inverse(
        params.d * n as f64 / spec.k as f64,
        &mut substream(params.seed, 0),
    );
    let mut constraints = Vec::with_capacity(m);
    for i in 0..m {
        let mut rng = substream(params.seed, i as u64 + 1);
        let weight = choose_weight(&spec.rho, &mut rng);
        let neighbors = (0..spec.k).map(|_| VarId(rng.random_range(0..n))).collect();
        constraints.push(Constraint::new(neighbors, weight));
    }
    FactorGraph::new(
        n,
        spec.spins.clone(),
        spec.weight_family.clone(),
        constraints,
    )
}

/// Regular model via clone matching: `d` clones per variable, `k` clones
/// per constraint, a uniformly random injective matching of constraint
/// clones into variable clones, collapsed into neighbor tuples. Every
/// variable ends with at most `d` slot-incidences, exactly `d` when
/// `k | dn`.
pub fn sample_regular<S: Real>(
    spec: &ModelSpec<S>,
    params: &GeneratorParams,
) -> Result<FactorGraph<S>> {
    let n = params.n;
    let d = params.d;
    if d.fract() != 0.0 || d < 1.0 {
        return Err(Error::InvalidParameter(
            "regular model needs an integer degree d >= 1".into(),
        ));
    }
    let d = d as usize;
    let m = d * n / spec.k;
    let slots = spec.k * m;
    debug_assert!(slots <= d * n);

    let mut rng = substream(params.seed, 0);
    let mut clones: Vec<VarId> = (0..n)
        .flat_map(|v| std::iter::repeat_n(VarId(v), d))
        .collect();
    for i in 0..slots {
        let j = rng.random_range(i..clones.len());
        clones.swap(i, j);
    }
    let mut constraints = Vec::with_capacity(m);
    for i in 0..m {
        let mut wrng = substream(params.seed, i as u64 + 1);
        let weight = choose_weight(&spec.rho, &mut wrng);
        let neighbors = clones[i * spec.k..(i + 1) * spec.k].to_vec();
        constraints.push(Constraint::new(neighbors, weight));
    }
    FactorGraph::new(
        n,
        spec.spins.clone(),
        spec.weight_family.clone(),
        constraints,
    )
}

/// Result of a percolated-regular draw, with the restart accounting the
/// generator statistics tests need.
#[derive(Debug, Clone)]
pub struct PercolatedSample<S = f64> {
    pub graph: FactorGraph<S>,
    /// Draws discarded because the active slots exceeded `dn`.
    pub restarts: usize,
    /// `Σ_i |J_i|` of the accepted draw.
    pub active_slots: usize,
}

pub const DEFAULT_RESTART_CAP: usize = 1000;

/// Percolated regular model: Poisson constraint count, each constraint
/// keeps every coordinate independently with probability `1 - eps` and
/// carries the weight averaged over the dropped coordinates; the whole
/// draw restarts when the active slots exceed `dn`; attachment via the
/// configuration model. Constraints with no kept coordinate stay in the
/// graph as arity-0 constant factors.
pub fn sample_percolated_regular<S: Real>(
    spec: &ModelSpec<S>,
    params: &GeneratorParams,
    restart_cap: usize,
) -> Result<PercolatedSample<S>> {
    let n = params.n;
    let d = params.d;
    if d.fract() != 0.0 || d < 1.0 {
        return Err(Error::InvalidParameter(
            "percolated model needs an integer degree d >= 1".into(),
        ));
    }
    let d = d as usize;
    let q = spec.q();
    let dn = d * n;

    for attempt in 0..restart_cap {
        let base = (attempt as u64) << 32;
        let m = poisson_inverse(
            params.d * n as f64 / spec.k as f64,
            &mut substream(params.seed, base),
        );
        let mut kept_sets: Vec<Vec<usize>> = Vec::with_capacity(m);
        let mut family_choice: Vec<usize> = Vec::with_capacity(m);
        let mut active = 0usize;
        for i in 0..m {
            let mut rng = substream(params.seed, base | (i as u64 + 1));
            let kept: Vec<usize> = (0..spec.k)
                .filter(|_| rng.random::<f64>() < 1.0 - params.eps)
                .collect();
            active += kept.len();
            family_choice.push(choose_weight(&spec.rho, &mut rng));
            kept_sets.push(kept);
        }
        if active > dn {
            continue;
        }

        // weight pool: one marginalized table per (family member, kept mask)
        let mut pool: Vec<WeightFunction<S>> = Vec::new();
        let mut pool_index: HashMap<(usize, u32), usize> = HashMap::new();
        let mut weight_ids = Vec::with_capacity(m);
        for (kept, &fam) in kept_sets.iter().zip(&family_choice) {
            let mask: u32 = kept.iter().fold(0, |acc, &j| acc | 1 << j);
            let id = match pool_index.get(&(fam, mask)) {
                Some(&id) => id,
                None => {
                    let table = marginalize_weight(&spec.weight_family[fam], kept, q)?;
                    pool.push(table);
                    pool_index.insert((fam, mask), pool.len() - 1);
                    pool.len() - 1
                }
            };
            weight_ids.push(id);
        }

        // configuration model: d clones per variable, |J_i| clones per constraint
        let mut match_rng = substream(params.seed, base | 0x8000_0000);
        let mut clones: Vec<VarId> = (0..n)
            .flat_map(|v| std::iter::repeat_n(VarId(v), d))
            .collect();
        for i in 0..active {
            let j = match_rng.random_range(i..clones.len());
            clones.swap(i, j);
        }
        let mut constraints = Vec::with_capacity(m);
        let mut cursor = 0usize;
        for (i, kept) in kept_sets.iter().enumerate() {
            let neighbors = clones[cursor..cursor + kept.len()].to_vec();
            cursor += kept.len();
            constraints.push(Constraint::new(neighbors, weight_ids[i]));
        }
        let graph = FactorGraph::new(n, spec.spins.clone(), pool, constraints)?;
        return Ok(PercolatedSample {
            graph,
            restarts: attempt,
            active_slots: active,
        });
    }
    Err(Error::RestartCapExceeded(restart_cap))
}

/// Parameters for the acyclic test-instance generator.
#[derive(Debug, Clone, Copy)]
pub struct ForestParams {
    pub n: usize,
    pub q: usize,
    /// Fraction of the maximal `n - 1` component merges to aim for.
    pub fill: f64,
    /// Coupling scale; per-constraint couplings are drawn in `[-beta, beta]`
    /// (clause weights in `[0, beta]`).
    pub beta: f64,
    pub seed: u64,
}

/// Random acyclic factor graph mixing pairwise couplings and (for `q = 2`)
/// soft clauses. Each constraint joins variables from distinct components,
/// so the result is a forest by construction.
pub fn sample_forest<S: Real>(params: &ForestParams) -> Result<FactorGraph<S>> {
    let n = params.n;
    let q = params.q;
    let mut rng = substream(params.seed, 0);
    let mut comp: Vec<usize> = (0..n).collect();
    fn find(comp: &mut [usize], mut i: usize) -> usize {
        while comp[i] != i {
            comp[i] = comp[comp[i]];
            i = comp[i];
        }
        i
    }
    let target = ((n.saturating_sub(1)) as f64 * params.fill).round() as usize;
    let mut pool: Vec<WeightFunction<S>> = Vec::new();
    let mut constraints = Vec::new();
    let mut merges = 0usize;
    while merges < target {
        let use_clause = q == 2 && rng.random::<f64>() < 0.5;
        let arity = if use_clause { 3 } else { 2 };
        // collect representatives of distinct components
        let mut reps: Vec<usize> = (0..n).filter(|&v| find(&mut comp, v) == v).collect();
        if reps.len() < arity {
            break;
        }
        for i in 0..arity {
            let j = rng.random_range(i..reps.len());
            reps.swap(i, j);
        }
        let chosen = &reps[..arity];
        let neighbors: Vec<VarId> = chosen
            .iter()
            .map(|&c| {
                // uniform member of the component
                let members: Vec<usize> = (0..n).filter(|&v| find(&mut comp, v) == c).collect();
                VarId(members[rng.random_range(0..members.len())])
            })
            .collect();
        let weight = if use_clause {
            let signs: Vec<bool> = (0..3).map(|_| rng.random()).collect();
            ksat_weight(&signs, real(rng.random::<f64>() * params.beta))?
        } else {
            let coupling = (rng.random::<f64>() * 2.0 - 1.0) * params.beta;
            potts_weight(q, real(coupling))?
        };
        pool.push(weight);
        constraints.push(Constraint::new(neighbors, pool.len() - 1));
        for &c in &chosen[1..] {
            let root = find(&mut comp, chosen[0]);
            let other = find(&mut comp, c);
            comp[other] = root;
        }
        merges += arity - 1;
    }
    let spins = if q == 2 {
        SpinAlphabet::boolean()
    } else {
        SpinAlphabet::numeric(q)
    };
    FactorGraph::new(n, spins, pool, constraints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{log_partition, EnumBudget};

    #[test]
    fn ksat_table_marks_single_forbidden_entry() {
        let beta = 0.9_f64;
        let w: WeightFunction<f64> = ksat_weight(&[true, true, true], beta).unwrap();
        assert_eq!(w.arity(), 3);
        assert!((w.table()[0] - (-beta).exp()).abs() < 1e-15);
        for &v in &w.table()[1..] {
            assert_eq!(v, 1.0);
        }
        // signs (+,-,+): forbidden tuple (0,1,0) = index 2
        let w2: WeightFunction<f64> = ksat_weight(&[true, false, true], beta).unwrap();
        assert!((w2.table()[0b010] - (-beta).exp()).abs() < 1e-15);
        assert_eq!(w2.table()[0], 1.0);
    }

    #[test]
    fn potts_zero_beta_is_flat() {
        let w: WeightFunction<f64> = potts_weight(2, 0.0).unwrap();
        assert_eq!(w.table(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn potts_three_state_table() {
        let w: WeightFunction<f64> = potts_weight(3, 1.0).unwrap();
        let e = 1.0_f64.exp();
        for s in 0..3 {
            for t in 0..3 {
                let expect = if s == t { e } else { 1.0 };
                assert!((w.table()[s * 3 + t] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn marginalize_full_set_is_identity() {
        let w: WeightFunction<f64> = potts_weight(2, 0.7).unwrap();
        let out = marginalize_weight(&w, &[0, 1], 2).unwrap();
        assert_eq!(out.table(), w.table());
    }

    #[test]
    fn marginalize_to_empty_is_table_mean() {
        let w = WeightFunction::<f64>::new(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = marginalize_weight(&w, &[], 2).unwrap();
        assert_eq!(out.arity(), 0);
        assert!((out.table()[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn marginalize_potts_single_coordinate_is_constant() {
        let beta = 1.3;
        let w: WeightFunction<f64> = potts_weight(2, beta).unwrap();
        let out = marginalize_weight(&w, &[0], 2).unwrap();
        let expect = (beta.exp() + 1.0) / 2.0;
        for &v in out.table() {
            assert!((v - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn marginalize_preserves_mean_and_positivity() {
        let w = WeightFunction::<f64>::new(3, (1..=8).map(|v| v as f64 * 0.37).collect()).unwrap();
        for kept in [
            vec![],
            vec![0],
            vec![2],
            vec![0, 2],
            vec![1, 2],
            vec![0, 1, 2],
        ] {
            let out = marginalize_weight(&w, &kept, 2).unwrap();
            assert!((out.mean() - w.mean()).abs() < 1e-12);
            assert!(out.table().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn marginalize_nesting_is_consistent() {
        let w =
            WeightFunction::<f64>::new(3, vec![0.3, 1.9, 2.2, 0.4, 1.1, 0.9, 3.0, 0.6]).unwrap();
        let kept = vec![0, 2];
        let sub = vec![2]; // subset of kept, in original coordinates
        let via_nested = {
            let first = marginalize_weight(&w, &kept, 2).unwrap();
            // position of original coordinate 2 within kept = 1
            marginalize_weight(&first, &[1], 2).unwrap()
        };
        let direct = marginalize_weight(&w, &sub, 2).unwrap();
        for (a, b) in via_nested.table().iter().zip(direct.table()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn marginalize_rejects_bad_coordinates() {
        let w: WeightFunction<f64> = potts_weight(2, 0.5).unwrap();
        assert!(matches!(
            marginalize_weight(&w, &[0, 5], 2),
            Err(Error::CoordinateOutOfRange { index: 5, .. })
        ));
        assert!(marginalize_weight(&w, &[1, 0], 2).is_err());
    }

    #[test]
    fn poisson_zero_density_gives_empty_graph() {
        let spec: ModelSpec<f64> = ModelSpec::ksat(3, 0.5).unwrap();
        for seed in 0..20 {
            let params = GeneratorParams::new(10, 0.0, 0.0, seed).unwrap();
            let g = sample_poisson(&spec, &params).unwrap();
            assert_eq!(g.num_constraints(), 0);
        }
    }

    #[test]
    fn poisson_constraint_count_tracks_mean() {
        let spec: ModelSpec<f64> = ModelSpec::ksat(3, 0.5).unwrap();
        let trials = 10_000;
        let lambda = 2.0 * 12.0 / 3.0; // d * n / k = 8
        let mut total = 0usize;
        for seed in 0..trials {
            let params = GeneratorParams::new(12, 2.0, 0.0, seed).unwrap();
            total += sample_poisson(&spec, &params).unwrap().num_constraints();
        }
        let mean = total as f64 / trials as f64;
        let four_sigma = 4.0 * (lambda / trials as f64).sqrt();
        assert!((mean - lambda).abs() < four_sigma, "mean {mean}");
    }

    #[test]
    fn poisson_weight_frequencies_follow_rho() {
        let spec: ModelSpec<f64> = ModelSpec::ksat(2, 0.5).unwrap(); // 4 members, rho uniform
        let mut counts = [0usize; 4];
        let mut total = 0usize;
        for seed in 0..4000 {
            let params = GeneratorParams::new(10, 2.0, 0.0, seed).unwrap();
            let g = sample_poisson(&spec, &params).unwrap();
            for c in g.constraints() {
                counts[c.weight] += 1;
                total += 1;
            }
        }
        for &c in &counts {
            let freq = c as f64 / total as f64;
            let sigma = (0.25 * 0.75 / total as f64).sqrt();
            assert!((freq - 0.25).abs() < 4.0 * sigma, "freq {freq}");
        }
    }

    #[test]
    fn poisson_is_deterministic() {
        let spec: ModelSpec<f64> = ModelSpec::ksat(3, 0.5).unwrap();
        let params = GeneratorParams::new(15, 1.5, 0.0, 99).unwrap();
        let a = sample_poisson(&spec, &params).unwrap();
        let b = sample_poisson(&spec, &params).unwrap();
        assert_eq!(a.constraints(), b.constraints());
    }

    #[test]
    fn regular_degrees_are_exact_when_k_divides_dn() {
        let spec: ModelSpec<f64> = ModelSpec::ksat(3, 0.5).unwrap();
        let params = GeneratorParams::new(9, 2.0, 0.0, 5).unwrap();
        let g = sample_regular(&spec, &params).unwrap();
        assert_eq!(g.num_constraints(), 6); // dn/k = 18/3
        for x in g.var_ids() {
            assert_eq!(g.var_slot_count(x), 2);
        }
    }

    #[test]
    fn regular_slot_conservation() {
        let spec: ModelSpec<f64> = ModelSpec::ksat(3, 0.5).unwrap();
        for seed in 0..30 {
            let params = GeneratorParams::new(10, 2.0, 0.0, seed).unwrap();
            let g = sample_regular(&spec, &params).unwrap();
            let slots: usize = g.constraints().iter().map(|c| c.degree()).sum();
            assert_eq!(slots, 3 * g.num_constraints());
            for x in g.var_ids() {
                assert!(g.var_slot_count(x) <= 2);
            }
        }
    }

    #[test]
    fn regular_pairs_when_degree_one() {
        let spec: ModelSpec<f64> = ModelSpec::ising(0.5).unwrap();
        let params = GeneratorParams::new(4, 1.0, 0.0, 3).unwrap();
        let g = sample_regular(&spec, &params).unwrap();
        assert_eq!(g.num_constraints(), 2);
        // perfect matching: every variable in exactly one pair
        for x in g.var_ids() {
            assert_eq!(g.var_slot_count(x), 1);
        }
    }

    #[test]
    fn percolated_keeps_everything_at_eps_zero() {
        let spec: ModelSpec<f64> = ModelSpec::ksat(3, 0.5).unwrap();
        let params = GeneratorParams::new(9, 3.0, 0.0, 11).unwrap();
        let s = sample_percolated_regular(&spec, &params, DEFAULT_RESTART_CAP).unwrap();
        for c in s.graph.constraints() {
            assert_eq!(c.degree(), 3);
        }
        assert_eq!(s.active_slots, 3 * s.graph.num_constraints());
        // tables are the unmarginalized family members
        for c in s.graph.constraints() {
            let table = &s.graph.weight_pool()[c.weight];
            assert!(spec
                .weight_family
                .iter()
                .any(|fam| fam.table() == table.table()));
        }
    }

    #[test]
    fn percolated_mean_active_slots_matches_prediction() {
        // Parameters with negligible restart truncation: P(restart) ~ 5e-5.
        let spec: ModelSpec<f64> = ModelSpec::ksat(3, 0.5).unwrap();
        let eps = 0.5;
        let n = 30;
        let d = 2.0;
        let trials = 300;
        let mut slots = 0usize;
        for seed in 0..trials {
            let params = GeneratorParams::new(n, d, eps, seed).unwrap();
            let s = sample_percolated_regular(&spec, &params, DEFAULT_RESTART_CAP).unwrap();
            slots += s.active_slots;
        }
        let mean = slots as f64 / trials as f64;
        let expect = (1.0 - eps) * d * n as f64; // 30
                                                 // compound-Poisson sd per draw ~ 7.75
        let four_sigma = 4.0 * 7.75 / (trials as f64).sqrt();
        assert!(
            (mean - expect).abs() < four_sigma,
            "mean {mean} expect {expect}"
        );
    }

    #[test]
    fn percolated_retains_empty_constraints_as_constants() {
        let spec: ModelSpec<f64> = ModelSpec::potts(2, 1.0).unwrap();
        // high eps drops most coordinates
        let mut found_empty = false;
        for seed in 0..50 {
            let params = GeneratorParams::new(6, 2.0, 0.9, seed).unwrap();
            let s = sample_percolated_regular(&spec, &params, DEFAULT_RESTART_CAP).unwrap();
            for c in s.graph.constraints() {
                if c.degree() == 0 {
                    found_empty = true;
                    // its constant factor shifts ln Z by ln(mean table)
                    let with = log_partition(&s.graph, EnumBudget::default()).unwrap();
                    let (without, _) = s
                        .graph
                        .remove_constraint(crate::graph::ConId(
                            s.graph
                                .constraints()
                                .iter()
                                .position(|cc| cc.degree() == 0)
                                .unwrap(),
                        ))
                        .unwrap();
                    let base = log_partition(&without, EnumBudget::default()).unwrap();
                    let scalar = s.graph.weight_pool()[c.weight].table()[0];
                    assert!((with - base - scalar.ln()).abs() < 1e-10);
                    break;
                }
            }
            if found_empty {
                break;
            }
        }
        assert!(found_empty, "no arity-0 constraint over 50 seeds");
    }

    #[test]
    fn percolated_degree_cap_holds() {
        let spec: ModelSpec<f64> = ModelSpec::ksat(3, 0.5).unwrap();
        for seed in 0..30 {
            let params = GeneratorParams::new(12, 3.0, 0.2, seed).unwrap();
            let s = sample_percolated_regular(&spec, &params, DEFAULT_RESTART_CAP).unwrap();
            for x in s.graph.var_ids() {
                assert!(s.graph.var_slot_count(x) <= 3);
            }
        }
    }

    #[test]
    fn percolated_is_deterministic() {
        let spec: ModelSpec<f64> = ModelSpec::ksat(3, 0.5).unwrap();
        let params = GeneratorParams::new(12, 3.0, 0.2, 1234).unwrap();
        let a = sample_percolated_regular(&spec, &params, DEFAULT_RESTART_CAP).unwrap();
        let b = sample_percolated_regular(&spec, &params, DEFAULT_RESTART_CAP).unwrap();
        assert_eq!(a.graph.constraints(), b.graph.constraints());
        assert_eq!(a.restarts, b.restarts);
    }

    #[test]
    fn forest_sampler_yields_acyclic_graphs() {
        for seed in 0..40 {
            let params = ForestParams {
                n: 12,
                q: if seed % 2 == 0 { 2 } else { 3 },
                fill: 0.8,
                beta: 1.0,
                seed,
            };
            let g: FactorGraph<f64> = sample_forest(&params).unwrap();
            assert!(g.is_acyclic());
            assert!(g.validate().is_ok());
        }
    }
}
