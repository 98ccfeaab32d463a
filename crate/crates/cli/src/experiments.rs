//! The experiment harness: residual trends, Bethe-vs-exact comparisons,
//! the coupled cavity-increment decomposition, and phase scans.
//!
//! Every trial is a pure function of `(config, master seed)`; trials may run
//! on worker threads, but rows are keyed and sorted canonically so the CSV
//! artifact never depends on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use fglab_core::bp::{bp_fixed_point, bp_residual, MessageSet};
use fglab_core::diagnostics::{
    nonreconstruction_score, pair_symmetry_score, pair_symmetry_score_beyond,
};
use fglab_core::exact::{exact_bundle, log_partition};
use fglab_core::graph::{ConId, FactorGraph, VarId};
use fglab_core::models::{
    sample_percolated_regular, sample_poisson, sample_regular, ModelSpec, DEFAULT_RESTART_CAP,
};
use fglab_core::{bethe_free_energy, bethe_marginal_form, constraint_increment, site_increment};
use fglab_core::{Error, Result};

use crate::config::{aux_seed, trial_seed, ModelKind, ResolvedConfig};
use crate::csvout::{fmt_bool, fmt_f64, fmt_usize, Column, CsvTable};

fn col(name: &'static str, description: &'static str) -> Column {
    Column { name, description }
}

fn is_budget_error(e: &Error) -> bool {
    matches!(
        e,
        Error::BudgetExceeded { .. } | Error::RestartCapExceeded(_)
    )
}

fn sample_by_kind(
    spec: &ModelSpec<f64>,
    kind: ModelKind,
    n: usize,
    d: f64,
    eps: f64,
    seed: u64,
) -> Result<FactorGraph<f64>> {
    let params = fglab_core::models::GeneratorParams::new(n, d, eps, seed)?;
    match kind {
        ModelKind::Poisson => sample_poisson(spec, &params),
        ModelKind::Regular => sample_regular(spec, &params),
        ModelKind::Percolated => {
            sample_percolated_regular(spec, &params, DEFAULT_RESTART_CAP).map(|s| s.graph)
        }
    }
}

fn degree_histogram(g: &FactorGraph<f64>) -> String {
    let mut counts = std::collections::BTreeMap::new();
    for x in g.var_ids() {
        *counts.entry(g.var_degree(x)).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .map(|(d, c)| format!("{d}:{c}"))
        .collect::<Vec<_>>()
        .join("|")
}

/// Everything measured on one sampled graph.
#[derive(Debug, Clone, Default)]
pub struct TrialRow {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub skipped: bool,
    pub m: Option<usize>,
    pub degree_histogram: Option<String>,
    pub acyclic: Option<bool>,
    pub log_z: Option<f64>,
    pub bethe_messages: Option<f64>,
    pub bethe_marginals: Option<f64>,
    pub residual: Option<f64>,
    pub bp_iterations: Option<usize>,
    pub bp_final_delta: Option<f64>,
    pub bp_converged: Option<bool>,
    pub pair_score: Option<f64>,
    pub nonreconstruction: Option<f64>,
}

fn trial_columns() -> Vec<Column> {
    vec![
        col("n", "variable count of the sampled graph"),
        col("trial", "trial index within the grid point"),
        col("seed", "derived generator seed for this trial"),
        col(
            "status",
            "ok, or skipped when the enumeration budget was exceeded",
        ),
        col("m", "constraint count"),
        col(
            "degree_histogram",
            "variable-degree counts as degree:count pairs",
        ),
        col("acyclic", "whether the bipartite graph is a forest"),
        col("log_z", "exact log partition function"),
        col(
            "bethe_messages",
            "Bethe free energy at the exact cavity messages",
        ),
        col(
            "bethe_marginals",
            "marginal-form Bethe free energy at exact marginals",
        ),
        col(
            "residual",
            "per-variable violation of the update equations at exact messages",
        ),
        col(
            "bp_iterations",
            "sweeps used by the fixed-point iteration from uniform",
        ),
        col(
            "bp_final_delta",
            "max per-message TV change in the last sweep",
        ),
        col("bp_converged", "whether the iteration met its tolerance"),
        col(
            "pair_score",
            "mean TV deviation of variable pairs from product form",
        ),
        col(
            "nonreconstruction",
            "boundary-influence score at the configured radius",
        ),
    ]
}

fn trial_cells(r: &TrialRow) -> Vec<String> {
    vec![
        r.n.to_string(),
        r.trial.to_string(),
        r.seed.to_string(),
        if r.skipped { "skipped" } else { "ok" }.to_string(),
        fmt_usize(r.m),
        r.degree_histogram.clone().unwrap_or_default(),
        fmt_bool(r.acyclic),
        fmt_f64(r.log_z),
        fmt_f64(r.bethe_messages),
        fmt_f64(r.bethe_marginals),
        fmt_f64(r.residual),
        fmt_usize(r.bp_iterations),
        fmt_f64(r.bp_final_delta),
        fmt_bool(r.bp_converged),
        fmt_f64(r.pair_score),
        fmt_f64(r.nonreconstruction),
    ]
}

fn run_standard_trial(
    rc: &ResolvedConfig,
    spec: &ModelSpec<f64>,
    n: usize,
    trial: usize,
) -> TrialRow {
    let cfg = &rc.config;
    let seed = trial_seed(cfg.master_seed, n, trial);
    let mut row = TrialRow {
        n,
        trial,
        seed,
        skipped: true,
        ..TrialRow::default()
    };

    let mut graph = None;
    for attempt in 0..100u64 {
        let s = if attempt == 0 {
            seed
        } else {
            aux_seed(seed, attempt)
        };
        match sample_by_kind(spec, cfg.model_kind, n, cfg.d, cfg.eps, s) {
            Ok(g) => {
                if !cfg.acyclic_only || g.is_acyclic() {
                    graph = Some(g);
                    break;
                }
            }
            Err(e) if is_budget_error(&e) => return row,
            Err(_) => return row,
        }
    }
    let Some(g) = graph else { return row };

    row.m = Some(g.num_constraints());
    row.degree_histogram = Some(degree_histogram(&g));
    let acyclic = g.is_acyclic();
    row.acyclic = Some(acyclic);

    let bundle = match exact_bundle(&g, rc.budget) {
        Ok(b) => b,
        Err(e) if is_budget_error(&e) => return row,
        Err(e) => panic!("oracle failure: {e}"),
    };
    row.log_z = Some(bundle.log_z);
    row.bethe_messages = Some(bethe_free_energy(&g, &bundle.messages));
    row.bethe_marginals = Some(bethe_marginal_form(
        &g,
        &bundle.var_marginals,
        &bundle.con_marginals,
    ));
    row.residual = Some(bp_residual(&g, &bundle.messages));

    let (_, report) = bp_fixed_point(&g, MessageSet::uniform(&g), rc.bp_options(acyclic));
    row.bp_iterations = Some(report.iterations);
    row.bp_final_delta = Some(report.final_delta);
    row.bp_converged = Some(report.converged);

    match pair_symmetry_score(&g, rc.budget) {
        Ok(rep) => row.pair_score = Some(rep.score),
        Err(e) if is_budget_error(&e) => return row,
        Err(e) => panic!("pair score failure: {e}"),
    }
    let mut rng = ChaCha12Rng::seed_from_u64(aux_seed(seed, 1001));
    match nonreconstruction_score(&g, cfg.ell, rc.budget, &mut rng) {
        Ok(rep) => row.nonreconstruction = Some(rep.score),
        Err(e) if is_budget_error(&e) => return row,
        Err(e) => panic!("non-reconstruction failure: {e}"),
    }

    row.skipped = false;
    row
}

fn run_trials<R: Send>(
    rc: &ResolvedConfig,
    descriptors: Vec<(usize, usize)>,
    f: impl Fn(usize, usize) -> R + Sync,
) -> Vec<R> {
    if rc.jobs() > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(rc.jobs())
            .build()
            .expect("thread pool");
        pool.install(|| {
            descriptors
                .par_iter()
                .map(|&(n, t)| f(n, t))
                .collect::<Vec<_>>()
        })
    } else {
        descriptors.into_iter().map(|(n, t)| f(n, t)).collect()
    }
}

/// Per-grid-point aggregates of a trend experiment.
#[derive(Debug, Clone)]
pub struct TrendPoint {
    pub n: usize,
    pub recorded: usize,
    pub skipped: usize,
    pub mean_residual: f64,
    pub residual_q25: f64,
    pub residual_q50: f64,
    pub residual_q75: f64,
    pub mean_pair_score: f64,
}

#[derive(Debug)]
pub struct TrendOutput {
    pub trials: CsvTable,
    pub summary: CsvTable,
    pub points: Vec<TrendPoint>,
    pub attempted: usize,
    pub recorded: usize,
    pub skipped: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[rank]
}

/// Sample graphs across the n-grid, measure the update-equation residual of
/// the exact messages together with the symmetry diagnostics, and aggregate
/// per grid point.
pub fn residual_trend(rc: &ResolvedConfig) -> Result<TrendOutput> {
    let cfg = &rc.config;
    let descriptors: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.trials_per_n).map(move |t| (n, t)))
        .collect();
    let attempted = descriptors.len();
    let rows = run_trials(rc, descriptors, |n, t| {
        run_standard_trial(rc, &rc.spec, n, t)
    });

    let mut trials = CsvTable::new(trial_columns());
    for r in &rows {
        trials.push(vec![r.n as u64, r.trial as u64], trial_cells(r));
    }

    let mut points = Vec::new();
    let mut summary = CsvTable::new(vec![
        col("n", "grid point"),
        col("recorded", "trials with full measurements"),
        col("skipped", "trials dropped by the budget, still accounted"),
        col(
            "mean_residual",
            "mean per-variable residual of exact messages",
        ),
        col("residual_q25", "lower quartile of the residual"),
        col("residual_q50", "median residual"),
        col("residual_q75", "upper quartile of the residual"),
        col("mean_pair_score", "mean pairwise symmetry score"),
    ]);
    for &n in &cfg.n_grid {
        let here: Vec<&TrialRow> = rows.iter().filter(|r| r.n == n).collect();
        let recorded: Vec<&&TrialRow> = here.iter().filter(|r| !r.skipped).collect();
        let skipped = here.len() - recorded.len();
        let mut residuals: Vec<f64> = recorded.iter().filter_map(|r| r.residual).collect();
        residuals.sort_by(f64::total_cmp);
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
        let pairs: Vec<f64> = recorded.iter().filter_map(|r| r.pair_score).collect();
        let point = TrendPoint {
            n,
            recorded: recorded.len(),
            skipped,
            mean_residual: mean(&residuals),
            residual_q25: quantile(&residuals, 0.25),
            residual_q50: quantile(&residuals, 0.5),
            residual_q75: quantile(&residuals, 0.75),
            mean_pair_score: mean(&pairs),
        };
        summary.push(
            vec![n as u64],
            vec![
                n.to_string(),
                point.recorded.to_string(),
                point.skipped.to_string(),
                fmt_f64(Some(point.mean_residual)),
                fmt_f64(Some(point.residual_q25)),
                fmt_f64(Some(point.residual_q50)),
                fmt_f64(Some(point.residual_q75)),
                fmt_f64(Some(point.mean_pair_score)),
            ],
        );
        points.push(point);
    }
    let recorded = rows.iter().filter(|r| !r.skipped).count();
    let skipped = rows.len() - recorded;
    assert_eq!(
        attempted,
        recorded + skipped,
        "trial accounting must balance"
    );
    Ok(TrendOutput {
        trials,
        summary,
        points,
        attempted,
        recorded,
        skipped,
    })
}

/// Per-grid-point aggregates of the free-energy comparison.
#[derive(Debug, Clone)]
pub struct BethePoint {
    pub n: usize,
    pub recorded: usize,
    pub skipped: usize,
    pub mean_log_z_density: f64,
    /// mean of `|B - ln Z| / n` at exact messages
    pub mean_message_gap: f64,
    /// mean of `|B' - ln Z| / n` at exact marginals
    pub mean_marginal_gap: f64,
}

#[derive(Debug)]
pub struct BetheOutput {
    pub trials: CsvTable,
    pub summary: CsvTable,
    pub points: Vec<BethePoint>,
    pub attempted: usize,
    pub recorded: usize,
    pub skipped: usize,
}

/// Records per-variable free-energy densities of both Bethe forms against
/// the exact value.
pub fn bethe_comparison(rc: &ResolvedConfig) -> Result<BetheOutput> {
    let cfg = &rc.config;
    let descriptors: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.trials_per_n).map(move |t| (n, t)))
        .collect();
    let attempted = descriptors.len();
    let rows = run_trials(rc, descriptors, |n, t| {
        run_standard_trial(rc, &rc.spec, n, t)
    });

    let mut trials = CsvTable::new(trial_columns());
    for r in &rows {
        trials.push(vec![r.n as u64, r.trial as u64], trial_cells(r));
    }

    let mut points = Vec::new();
    let mut summary = CsvTable::new(vec![
        col("n", "grid point"),
        col("recorded", "trials with full measurements"),
        col("skipped", "trials dropped by the budget, still accounted"),
        col("mean_log_z_density", "mean of ln Z / n"),
        col(
            "mean_message_gap",
            "mean of |B - ln Z| / n at exact messages",
        ),
        col(
            "mean_marginal_gap",
            "mean of |B' - ln Z| / n at exact marginals",
        ),
    ]);
    for &n in &cfg.n_grid {
        let recorded: Vec<&TrialRow> = rows.iter().filter(|r| r.n == n && !r.skipped).collect();
        let skipped = rows.iter().filter(|r| r.n == n && r.skipped).count();
        let nf = n as f64;
        let mean = |xs: Vec<f64>| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
        let point = BethePoint {
            n,
            recorded: recorded.len(),
            skipped,
            mean_log_z_density: mean(
                recorded
                    .iter()
                    .filter_map(|r| r.log_z)
                    .map(|z| z / nf)
                    .collect(),
            ),
            mean_message_gap: mean(
                recorded
                    .iter()
                    .filter_map(|r| Some((r.bethe_messages? - r.log_z?).abs() / nf))
                    .collect(),
            ),
            mean_marginal_gap: mean(
                recorded
                    .iter()
                    .filter_map(|r| Some((r.bethe_marginals? - r.log_z?).abs() / nf))
                    .collect(),
            ),
        };
        summary.push(
            vec![n as u64],
            vec![
                n.to_string(),
                point.recorded.to_string(),
                point.skipped.to_string(),
                fmt_f64(Some(point.mean_log_z_density)),
                fmt_f64(Some(point.mean_message_gap)),
                fmt_f64(Some(point.mean_marginal_gap)),
            ],
        );
        points.push(point);
    }
    let recorded = rows.iter().filter(|r| !r.skipped).count();
    let skipped = rows.len() - recorded;
    assert_eq!(attempted, recorded + skipped);
    Ok(BetheOutput {
        trials,
        summary,
        points,
        attempted,
        recorded,
        skipped,
    })
}

/// One trial of the coupled decomposition experiment.
#[derive(Debug, Clone)]
pub struct CavityRow {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub skipped: bool,
    pub m_hat: Option<usize>,
    pub acyclic: Option<bool>,
    pub deleted: Option<usize>,
    /// `ln(Z / Z')` for the constraint-deleted graph
    pub constraint_ratio: Option<f64>,
    /// sum of constraint increments over the removed set
    pub constraint_prediction: Option<f64>,
    /// `ln(Z / Z'')` for the variable-deleted graph
    pub site_ratio: Option<f64>,
    /// variable + constraint + edge term prediction
    pub site_prediction: Option<f64>,
}

impl CavityRow {
    pub fn constraint_gap(&self) -> Option<f64> {
        Some((self.constraint_ratio? - self.constraint_prediction?).abs())
    }

    pub fn site_gap(&self) -> Option<f64> {
        Some((self.site_ratio? - self.site_prediction?).abs())
    }
}

#[derive(Debug, Clone)]
pub struct CavityPoint {
    pub n: usize,
    pub recorded: usize,
    pub skipped: usize,
    pub mean_constraint_gap: f64,
    pub mean_site_gap: f64,
    pub acyclic_trials: usize,
    pub worst_acyclic_constraint_gap: f64,
    pub worst_acyclic_site_gap: f64,
}

#[derive(Debug)]
pub struct CavityOutput {
    pub trials: CsvTable,
    pub summary: CsvTable,
    pub rows: Vec<CavityRow>,
    pub points: Vec<CavityPoint>,
    pub attempted: usize,
    pub recorded: usize,
    pub skipped: usize,
}

fn run_cavity_trial(rc: &ResolvedConfig, n: usize, trial: usize) -> CavityRow {
    let cfg = &rc.config;
    let seed = trial_seed(cfg.master_seed, n, trial);
    let mut row = CavityRow {
        n,
        trial,
        seed,
        skipped: true,
        m_hat: None,
        acyclic: None,
        deleted: None,
        constraint_ratio: None,
        constraint_prediction: None,
        site_ratio: None,
        site_prediction: None,
    };
    let k = rc.spec.k as i32;
    // supergraph density chosen so that thinning by p reproduces the model
    let d_hat = cfg.d * (n as f64 / (n as f64 - 1.0)).powi(k - 1);
    let p_keep = ((n as f64 - 1.0) / n as f64).powi(k - 1);

    let params = match fglab_core::models::GeneratorParams::new(n, d_hat, 0.0, seed) {
        Ok(p) => p,
        Err(_) => return row,
    };
    let g_hat = match sample_poisson(&rc.spec, &params) {
        Ok(g) => g,
        Err(_) => return row,
    };
    row.m_hat = Some(g_hat.num_constraints());
    row.acyclic = Some(g_hat.is_acyclic());

    let mut del_rng = ChaCha12Rng::seed_from_u64(aux_seed(seed, 7));
    let deleted: Vec<ConId> = g_hat
        .con_ids()
        .filter(|_| del_rng.random::<f64>() >= p_keep)
        .collect();
    row.deleted = Some(deleted.len());
    let (pruned, _) = g_hat.remove_constraints(&deleted).expect("valid ids");

    let mut var_rng = ChaCha12Rng::seed_from_u64(aux_seed(seed, 8));
    let victim = VarId(var_rng.random_range(0..n));
    let without_var = g_hat.remove_variable(victim).expect("valid variable");

    let bundle = match exact_bundle(&g_hat, rc.budget) {
        Ok(b) => b,
        Err(e) if is_budget_error(&e) => return row,
        Err(e) => panic!("oracle failure: {e}"),
    };
    let lnz_pruned = match log_partition(&pruned, rc.budget) {
        Ok(z) => z,
        Err(e) if is_budget_error(&e) => return row,
        Err(e) => panic!("oracle failure: {e}"),
    };
    let lnz_without_var = match log_partition(&without_var, rc.budget) {
        Ok(z) => z,
        Err(e) if is_budget_error(&e) => return row,
        Err(e) => panic!("oracle failure: {e}"),
    };

    row.constraint_ratio = Some(bundle.log_z - lnz_pruned);
    row.constraint_prediction = Some(
        deleted
            .iter()
            .map(|&a| constraint_increment(&g_hat, &bundle.messages, a))
            .sum(),
    );
    row.site_ratio = Some(bundle.log_z - lnz_without_var);
    row.site_prediction = Some(site_increment(&g_hat, &bundle.messages, victim).total());
    row.skipped = false;
    row
}

/// Couples the model at sizes `n` and `n-1` through a common supergraph and
/// compares both exact log-partition ratios against their local predictions
/// from the supergraph's exact messages.
pub fn cavity_increment(rc: &ResolvedConfig) -> Result<CavityOutput> {
    let cfg = &rc.config;
    if cfg.model_kind != ModelKind::Poisson {
        return Err(Error::InvalidParameter(
            "the cavity-increment experiment is defined for the Poisson model".into(),
        ));
    }
    if cfg.n_grid.iter().any(|&n| n < 2) {
        return Err(Error::InvalidParameter("n grid must be >= 2".into()));
    }
    let descriptors: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.trials_per_n).map(move |t| (n, t)))
        .collect();
    let attempted = descriptors.len();
    let rows = run_trials(rc, descriptors, |n, t| run_cavity_trial(rc, n, t));

    let mut trials = CsvTable::new(vec![
        col("n", "variable count of the supergraph"),
        col("trial", "trial index within the grid point"),
        col("seed", "derived generator seed for this trial"),
        col(
            "status",
            "ok, or skipped when the enumeration budget was exceeded",
        ),
        col("m_hat", "constraint count of the supergraph"),
        col("acyclic", "whether the supergraph is a forest"),
        col("deleted", "number of constraints removed by the thinning"),
        col(
            "constraint_ratio",
            "exact ln(Z / Z') for the constraint-thinned graph",
        ),
        col(
            "constraint_prediction",
            "sum of constraint increments over the removed set",
        ),
        col(
            "site_ratio",
            "exact ln(Z / Z'') after deleting a variable and its constraints",
        ),
        col(
            "site_prediction",
            "variable + constraint + edge increment terms",
        ),
    ]);
    for r in &rows {
        trials.push(
            vec![r.n as u64, r.trial as u64],
            vec![
                r.n.to_string(),
                r.trial.to_string(),
                r.seed.to_string(),
                if r.skipped { "skipped" } else { "ok" }.to_string(),
                fmt_usize(r.m_hat),
                fmt_bool(r.acyclic),
                fmt_usize(r.deleted),
                fmt_f64(r.constraint_ratio),
                fmt_f64(r.constraint_prediction),
                fmt_f64(r.site_ratio),
                fmt_f64(r.site_prediction),
            ],
        );
    }

    let mut points = Vec::new();
    let mut summary = CsvTable::new(vec![
        col("n", "grid point"),
        col("recorded", "trials with full measurements"),
        col("skipped", "trials dropped by the budget, still accounted"),
        col("mean_constraint_gap", "mean |ln(Z/Z') - Σ increments|"),
        col("mean_site_gap", "mean |ln(Z/Z'') - site increment|"),
        col(
            "acyclic_trials",
            "recorded trials whose supergraph is a forest",
        ),
        col(
            "worst_acyclic_constraint_gap",
            "max constraint gap among forest trials",
        ),
        col("worst_acyclic_site_gap", "max site gap among forest trials"),
    ]);
    for &n in &cfg.n_grid {
        let recorded: Vec<&CavityRow> = rows.iter().filter(|r| r.n == n && !r.skipped).collect();
        let skipped = rows.iter().filter(|r| r.n == n && r.skipped).count();
        let mean = |xs: Vec<f64>| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
        let acyclic: Vec<&&CavityRow> = recorded
            .iter()
            .filter(|r| r.acyclic == Some(true))
            .collect();
        let worst = |f: &dyn Fn(&CavityRow) -> Option<f64>| {
            acyclic.iter().filter_map(|r| f(r)).fold(0.0_f64, f64::max)
        };
        let point = CavityPoint {
            n,
            recorded: recorded.len(),
            skipped,
            mean_constraint_gap: mean(recorded.iter().filter_map(|r| r.constraint_gap()).collect()),
            mean_site_gap: mean(recorded.iter().filter_map(|r| r.site_gap()).collect()),
            acyclic_trials: acyclic.len(),
            worst_acyclic_constraint_gap: worst(&CavityRow::constraint_gap),
            worst_acyclic_site_gap: worst(&CavityRow::site_gap),
        };
        summary.push(
            vec![n as u64],
            vec![
                n.to_string(),
                point.recorded.to_string(),
                point.skipped.to_string(),
                fmt_f64(Some(point.mean_constraint_gap)),
                fmt_f64(Some(point.mean_site_gap)),
                point.acyclic_trials.to_string(),
                fmt_f64(Some(point.worst_acyclic_constraint_gap)),
                fmt_f64(Some(point.worst_acyclic_site_gap)),
            ],
        );
        points.push(point);
    }
    let recorded = rows.iter().filter(|r| !r.skipped).count();
    let skipped = rows.len() - recorded;
    assert_eq!(attempted, recorded + skipped);
    Ok(CavityOutput {
        trials,
        summary,
        rows,
        points,
        attempted,
        recorded,
        skipped,
    })
}

/// One row of the phase scan: all diagnostics at one `(beta, n, trial)`.
#[derive(Debug, Clone)]
pub struct PhaseRow {
    pub beta: f64,
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub skipped: bool,
    pub m: Option<usize>,
    pub residual: Option<f64>,
    pub pair_score: Option<f64>,
    /// per radius in `ell_grid`: non-reconstruction score
    pub nonrecon: Vec<Option<f64>>,
    /// per radius in `ell_grid`: pair score over pairs at distance > 2*ell
    pub pair_beyond: Vec<Option<f64>>,
}

#[derive(Debug)]
pub struct PhaseOutput {
    pub trials: CsvTable,
    pub rows: Vec<PhaseRow>,
    pub ell_grid: Vec<usize>,
    pub attempted: usize,
    pub recorded: usize,
    pub skipped: usize,
}

/// Sweeps the coupling over `beta_grid` at fixed sizes and records every
/// symmetry diagnostic, including the distance-restricted pair score that
/// pairs with each non-reconstruction radius.
pub fn phase_scan(rc: &ResolvedConfig) -> Result<PhaseOutput> {
    let cfg = &rc.config;
    if cfg.beta_grid.is_empty() {
        return Err(Error::InvalidParameter(
            "phase scan needs a non-empty beta grid".into(),
        ));
    }
    let ell_grid = if cfg.ell_grid.is_empty() {
        vec![cfg.ell]
    } else {
        cfg.ell_grid.clone()
    };

    let mut descriptors = Vec::new();
    for (bi, &beta) in cfg.beta_grid.iter().enumerate() {
        for &n in &cfg.n_grid {
            for t in 0..cfg.trials_per_n {
                descriptors.push((bi, beta, n, t));
            }
        }
    }
    let attempted = descriptors.len();

    let worker = |(bi, beta, n, trial): (usize, f64, usize, usize)| -> Result<PhaseRow> {
        let spec = rc.spec_with_beta(beta)?;
        let seed = trial_seed(cfg.master_seed, n, trial ^ (bi << 20));
        let mut row = PhaseRow {
            beta,
            n,
            trial,
            seed,
            skipped: true,
            m: None,
            residual: None,
            pair_score: None,
            nonrecon: vec![None; ell_grid.len()],
            pair_beyond: vec![None; ell_grid.len()],
        };
        let g = match sample_by_kind(&spec, cfg.model_kind, n, cfg.d, cfg.eps, seed) {
            Ok(g) => g,
            Err(_) => return Ok(row),
        };
        row.m = Some(g.num_constraints());
        let bundle = match exact_bundle(&g, rc.budget) {
            Ok(b) => b,
            Err(e) if is_budget_error(&e) => return Ok(row),
            Err(e) => return Err(e),
        };
        row.residual = Some(bp_residual(&g, &bundle.messages));
        row.pair_score = Some(pair_symmetry_score(&g, rc.budget)?.score);
        for (li, &ell) in ell_grid.iter().enumerate() {
            let mut rng = ChaCha12Rng::seed_from_u64(aux_seed(seed, 2000 + li as u64));
            row.nonrecon[li] = Some(nonreconstruction_score(&g, ell, rc.budget, &mut rng)?.score);
            row.pair_beyond[li] = Some(pair_symmetry_score_beyond(&g, 2 * ell, rc.budget)?.score);
        }
        row.skipped = false;
        Ok(row)
    };
    let results: Vec<Result<PhaseRow>> = if rc.jobs() > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(rc.jobs())
            .build()
            .expect("thread pool");
        pool.install(|| descriptors.par_iter().map(|&d| worker(d)).collect())
    } else {
        descriptors.into_iter().map(worker).collect()
    };
    let rows: Vec<PhaseRow> = results.into_iter().collect::<Result<_>>()?;

    // dynamic per-radius columns, documented like the static ones
    let mut columns = vec![
        col("beta", "coupling strength of this row's model"),
        col("n", "variable count"),
        col("trial", "trial index"),
        col("seed", "derived generator seed"),
        col(
            "status",
            "ok, or skipped when the enumeration budget was exceeded",
        ),
        col("m", "constraint count"),
        col(
            "residual",
            "per-variable violation of the update equations at exact messages",
        ),
        col(
            "pair_score",
            "mean TV deviation of variable pairs from product form",
        ),
    ];
    let mut dynamic: Vec<String> = Vec::new();
    for &ell in &ell_grid {
        dynamic.push(format!("nonrecon_ell{ell}"));
        dynamic.push(format!("pair_beyond_{}", 2 * ell));
    }
    let leaked: Vec<&'static str> = dynamic
        .iter()
        .map(|s| Box::leak(s.clone().into_boxed_str()) as &'static str)
        .collect();
    for (i, &ell) in ell_grid.iter().enumerate() {
        let _ = ell;
        columns.push(Column {
            name: leaked[2 * i],
            description: "non-reconstruction score at this radius",
        });
        columns.push(Column {
            name: leaked[2 * i + 1],
            description: "pair score restricted to pairs farther than twice the radius",
        });
    }
    let mut trials = CsvTable::new(columns);
    for r in &rows {
        let mut cells = vec![
            fmt_f64(Some(r.beta)),
            r.n.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            if r.skipped { "skipped" } else { "ok" }.to_string(),
            fmt_usize(r.m),
            fmt_f64(r.residual),
            fmt_f64(r.pair_score),
        ];
        for li in 0..ell_grid.len() {
            cells.push(fmt_f64(r.nonrecon[li]));
            cells.push(fmt_f64(r.pair_beyond[li]));
        }
        trials.push(vec![r.beta.to_bits(), r.n as u64, r.trial as u64], cells);
    }
    let recorded = rows.iter().filter(|r| !r.skipped).count();
    let skipped = rows.len() - recorded;
    assert_eq!(attempted, recorded + skipped);
    Ok(PhaseOutput {
        trials,
        rows,
        ell_grid,
        attempted,
        recorded,
        skipped,
    })
}
