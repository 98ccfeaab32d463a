use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde_json::json;

use fglab_cli::config::{ExperimentConfig, ModelKind};
use fglab_cli::experiments;
use fglab_cli::runner::{write_run, RunOutcome};
use fglab_core::bp::{bethe_free_energy, bp_fixed_point, bp_residual, BpOptions, MessageSet};
use fglab_core::diagnostics::{
    l_symmetry_score, nonreconstruction_score, pair_symmetry_score, ScoreMode,
};
use fglab_core::exact::{exact_bundle, joint_marginal, log_partition, EnumBudget};
use fglab_core::graph::VarId;
use fglab_core::io;
use fglab_core::models::{
    sample_percolated_regular, sample_poisson, sample_regular, GeneratorParams, DEFAULT_RESTART_CAP,
};

/// Factor-graph inference laboratory: exact Gibbs oracle, Belief
/// Propagation, random models and replica-symmetry diagnostics.
#[derive(Parser)]
#[command(name = "fglab", version, about)]
struct Cli {
    /// JSON experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for CSVs and manifests.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Enumeration budget in oracle operations; overrides the config file.
    #[arg(long, global = true)]
    enum_budget: Option<u128>,
    /// Worker threads for independent trials.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Comma-separated variable counts, e.g. 8,10,12,14.
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    /// Trials per grid point.
    #[arg(long)]
    trials: Option<usize>,
    /// Constraint density (Poisson) or variable degree (regular models).
    #[arg(long)]
    d: Option<f64>,
    /// Percolation drop probability.
    #[arg(long)]
    eps: Option<f64>,
    /// Model kind: poisson, regular or percolated.
    #[arg(long)]
    kind: Option<String>,
    /// Model preset name: ksat, potts or ising.
    #[arg(long)]
    model: Option<String>,
    /// Clause/edge arity for the ksat preset.
    #[arg(long)]
    k: Option<usize>,
    /// Spin count for the potts preset.
    #[arg(long)]
    q: Option<usize>,
    /// Coupling strength for presets.
    #[arg(long)]
    beta: Option<f64>,
    /// Radius for the non-reconstruction column.
    #[arg(long)]
    ell: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Residual trend: update-equation violations of the exact messages
    /// across an n-grid, with symmetry diagnostics.
    Thm1(GridArgs),
    /// Free-energy comparison: both Bethe forms against exact ln Z.
    Bethe(GridArgs),
    /// Coupled cavity-increment decomposition on the Poisson model.
    Ass(GridArgs),
    /// Coupling sweep of all diagnostics at fixed sizes.
    Phase {
        #[command(flatten)]
        grid: GridArgs,
        /// Comma-separated coupling values.
        #[arg(long, value_delimiter = ',')]
        beta_grid: Option<Vec<f64>>,
        /// Comma-separated non-reconstruction radii.
        #[arg(long, value_delimiter = ',')]
        ell_grid: Option<Vec<usize>>,
    },
    /// Ad-hoc oracle queries on a graph file.
    Oracle {
        /// Graph JSON file.
        #[arg(long)]
        graph: PathBuf,
        /// One of: logz, marginal, messages, residual, bethe, bp,
        /// pair-score, l-score, nonrecon.
        #[arg(long)]
        query: String,
        /// Comma-separated variable ids for the marginal query.
        #[arg(long, value_delimiter = ',')]
        vars: Option<Vec<usize>>,
        /// Tuple length for l-score.
        #[arg(long)]
        l: Option<usize>,
        /// Radius for nonrecon.
        #[arg(long)]
        ell: Option<usize>,
        /// exact or sampled; sampled lowers the budget to force sampling.
        #[arg(long)]
        mode: Option<String>,
        /// Budget override for this query.
        #[arg(long)]
        budget: Option<u128>,
        /// Damping for the bp query.
        #[arg(long)]
        damping: Option<f64>,
        /// Convergence tolerance for the bp query.
        #[arg(long)]
        tol: Option<f64>,
        /// Iteration cap for the bp query.
        #[arg(long)]
        max_iter: Option<usize>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out_file: Option<PathBuf>,
    },
    /// Sample a random graph and emit it as JSON.
    Gen {
        #[command(flatten)]
        grid: GridArgs,
        /// Variable count.
        #[arg(long)]
        n: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out_file: Option<PathBuf>,
    },
}

fn load_or_default_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig {
            model: json!({"preset": "ksat", "k": 3, "beta": 0.5}),
            model_kind: ModelKind::Poisson,
            n_grid: vec![8, 10, 12],
            trials_per_n: 50,
            d: 1.0,
            eps: 0.0,
            ell: 1,
            ell_grid: vec![],
            beta_grid: vec![],
            master_seed: 1,
            enum_budget: EnumBudget::default().0,
            acyclic_only: false,
            bp_damping: None,
            bp_tol: None,
            bp_max_iter: None,
            jobs: None,
        },
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(b) = cli.enum_budget {
        cfg.enum_budget = b;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = Some(j);
    }
    Ok(cfg)
}

fn apply_grid_args(cfg: &mut ExperimentConfig, grid: &GridArgs) -> anyhow::Result<()> {
    if let Some(n_grid) = &grid.n_grid {
        cfg.n_grid = n_grid.clone();
    }
    if let Some(trials) = grid.trials {
        cfg.trials_per_n = trials;
    }
    if let Some(d) = grid.d {
        cfg.d = d;
    }
    if let Some(eps) = grid.eps {
        cfg.eps = eps;
    }
    if let Some(kind) = &grid.kind {
        cfg.model_kind = kind.parse::<ModelKind>()?;
    }
    if let Some(ell) = grid.ell {
        cfg.ell = ell;
    }
    if grid.model.is_some() || grid.k.is_some() || grid.q.is_some() || grid.beta.is_some() {
        let preset = grid.model.clone().unwrap_or_else(|| {
            cfg.model
                .get("preset")
                .and_then(|p| p.as_str())
                .unwrap_or("ksat")
                .to_string()
        });
        let mut model = json!({ "preset": preset });
        let obj = model.as_object_mut().unwrap();
        let prior = cfg.model.as_object().cloned().unwrap_or_default();
        for key in ["k", "q", "beta"] {
            if let Some(v) = prior.get(key) {
                obj.insert(key.into(), v.clone());
            }
        }
        if let Some(k) = grid.k {
            obj.insert("k".into(), json!(k));
        }
        if let Some(q) = grid.q {
            obj.insert("q".into(), json!(q));
        }
        if let Some(beta) = grid.beta {
            obj.insert("beta".into(), json!(beta));
        }
        cfg.model = model;
    }
    Ok(())
}

fn emit(out_file: Option<PathBuf>, text: String) -> anyhow::Result<()> {
    match out_file {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let started = Instant::now();
    match &cli.command {
        Command::Thm1(grid) => {
            let mut cfg = load_or_default_config(&cli)?;
            apply_grid_args(&mut cfg, grid)?;
            let rc = cfg.resolve()?;
            let out = experiments::residual_trend(&rc)?;
            let artifacts = write_run(
                &cli.out,
                RunOutcome {
                    name: "thm1",
                    config_echo: serde_json::to_value(&cfg)?,
                    trials: &out.trials,
                    summary: Some(&out.summary),
                    attempted: out.attempted,
                    recorded: out.recorded,
                    skipped: out.skipped,
                },
                started,
            )?;
            eprintln!(
                "thm1: {} trials recorded, {} skipped -> {}",
                out.recorded,
                out.skipped,
                artifacts.trials_path.display()
            );
        }
        Command::Bethe(grid) => {
            let mut cfg = load_or_default_config(&cli)?;
            apply_grid_args(&mut cfg, grid)?;
            let rc = cfg.resolve()?;
            let out = experiments::bethe_comparison(&rc)?;
            let artifacts = write_run(
                &cli.out,
                RunOutcome {
                    name: "bethe",
                    config_echo: serde_json::to_value(&cfg)?,
                    trials: &out.trials,
                    summary: Some(&out.summary),
                    attempted: out.attempted,
                    recorded: out.recorded,
                    skipped: out.skipped,
                },
                started,
            )?;
            eprintln!(
                "bethe: {} trials recorded, {} skipped -> {}",
                out.recorded,
                out.skipped,
                artifacts.trials_path.display()
            );
        }
        Command::Ass(grid) => {
            let mut cfg = load_or_default_config(&cli)?;
            apply_grid_args(&mut cfg, grid)?;
            let rc = cfg.resolve()?;
            let out = experiments::cavity_increment(&rc)?;
            let artifacts = write_run(
                &cli.out,
                RunOutcome {
                    name: "ass",
                    config_echo: serde_json::to_value(&cfg)?,
                    trials: &out.trials,
                    summary: Some(&out.summary),
                    attempted: out.attempted,
                    recorded: out.recorded,
                    skipped: out.skipped,
                },
                started,
            )?;
            eprintln!(
                "ass: {} trials recorded, {} skipped -> {}",
                out.recorded,
                out.skipped,
                artifacts.trials_path.display()
            );
        }
        Command::Phase {
            grid,
            beta_grid,
            ell_grid,
        } => {
            let mut cfg = load_or_default_config(&cli)?;
            apply_grid_args(&mut cfg, grid)?;
            if let Some(bg) = beta_grid {
                cfg.beta_grid = bg.clone();
            }
            if let Some(eg) = ell_grid {
                cfg.ell_grid = eg.clone();
            }
            let rc = cfg.resolve()?;
            let out = experiments::phase_scan(&rc)?;
            let artifacts = write_run(
                &cli.out,
                RunOutcome {
                    name: "phase",
                    config_echo: serde_json::to_value(&cfg)?,
                    trials: &out.trials,
                    summary: None,
                    attempted: out.attempted,
                    recorded: out.recorded,
                    skipped: out.skipped,
                },
                started,
            )?;
            eprintln!(
                "phase: {} rows recorded, {} skipped -> {}",
                out.recorded,
                out.skipped,
                artifacts.trials_path.display()
            );
        }
        Command::Oracle {
            graph,
            query,
            vars,
            l,
            ell,
            mode,
            budget,
            damping,
            tol,
            max_iter,
            out_file,
        } => {
            let g = io::load_graph(graph)?;
            let cfg = load_or_default_config(&cli)?;
            let mut budget_ops = budget.unwrap_or(cfg.enum_budget);
            if mode.as_deref() == Some("sampled") {
                // force the Monte Carlo paths by capping below the exact cost
                let states = fglab_core::exact::state_count(g.q(), g.num_vars());
                budget_ops =
                    budget_ops.min(states.saturating_mul(g.num_constraints().max(1) as u128) * 2);
            }
            let b = EnumBudget(budget_ops);
            let seed = cfg.master_seed;
            let value = match query.as_str() {
                "logz" => json!({ "log_z": log_partition(&g, b)? }),
                "marginal" => {
                    let vars: Vec<VarId> = vars
                        .clone()
                        .unwrap_or_else(|| vec![0])
                        .into_iter()
                        .map(VarId)
                        .collect();
                    let t = joint_marginal(&g, &vars, b)?;
                    serde_json::from_str(&io::marginal_to_json(&t))?
                }
                "messages" => {
                    let bundle = exact_bundle(&g, b)?;
                    serde_json::from_str(&io::messages_to_json(&g, &bundle.messages))?
                }
                "residual" => {
                    let bundle = exact_bundle(&g, b)?;
                    json!({ "residual": bp_residual(&g, &bundle.messages) })
                }
                "bethe" => {
                    let bundle = exact_bundle(&g, b)?;
                    json!({
                        "log_z": bundle.log_z,
                        "bethe_messages": bethe_free_energy(&g, &bundle.messages),
                        "bethe_marginals": fglab_core::bethe_marginal_form(
                            &g, &bundle.var_marginals, &bundle.con_marginals),
                    })
                }
                "bp" => {
                    let opts = BpOptions {
                        damping: damping.unwrap_or_else(|| if g.is_acyclic() { 0.0 } else { 0.5 }),
                        tol: tol.unwrap_or(1e-10),
                        max_iter: max_iter.unwrap_or(1000),
                    };
                    let (m, report) = bp_fixed_point(&g, MessageSet::uniform(&g), opts);
                    json!({
                        "converged": report.converged,
                        "iterations": report.iterations,
                        "final_delta": report.final_delta,
                        "bethe_messages": bethe_free_energy(&g, &m),
                        "residual": bp_residual(&g, &m),
                    })
                }
                "pair-score" => {
                    let rep = pair_symmetry_score(&g, b)?;
                    json!({
                        "score": rep.score,
                        "pair_count": rep.pair_count,
                        "mode": if rep.mode == ScoreMode::Exact { "exact" } else { "sampled" },
                        "stderr": rep.stderr,
                    })
                }
                "l-score" => {
                    let mut rng = ChaCha12Rng::seed_from_u64(seed);
                    let rep = l_symmetry_score(&g, l.unwrap_or(2), b, &mut rng)?;
                    json!({
                        "score": rep.score,
                        "tuple_count": rep.pair_count,
                        "mode": if rep.mode == ScoreMode::Exact { "exact" } else { "sampled" },
                        "stderr": rep.stderr,
                    })
                }
                "nonrecon" => {
                    let mut rng = ChaCha12Rng::seed_from_u64(seed);
                    let rep = nonreconstruction_score(&g, ell.unwrap_or(1), b, &mut rng)?;
                    json!({
                        "score": rep.score,
                        "mode": if rep.mode == ScoreMode::Exact { "exact" } else { "sampled" },
                        "stderr": rep.stderr,
                        "evaluations": rep.evaluations,
                    })
                }
                other => bail!("unknown query {other:?}"),
            };
            emit(out_file.clone(), serde_json::to_string_pretty(&value)?)?;
        }
        Command::Gen { grid, n, out_file } => {
            let mut cfg = load_or_default_config(&cli)?;
            apply_grid_args(&mut cfg, grid)?;
            let rc = cfg.resolve()?;
            let params = GeneratorParams::new(*n, cfg.d, cfg.eps, cfg.master_seed)?;
            let g = match cfg.model_kind {
                ModelKind::Poisson => sample_poisson(&rc.spec, &params)?,
                ModelKind::Regular => sample_regular(&rc.spec, &params)?,
                ModelKind::Percolated => {
                    sample_percolated_regular(&rc.spec, &params, DEFAULT_RESTART_CAP)?.graph
                }
            };
            emit(out_file.clone(), io::graph_to_json(&g))?;
        }
    }
    Ok(())
}
