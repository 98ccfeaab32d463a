//! Factor-graph inference laboratory.
//!
//! The crate pairs a brute-force Gibbs oracle with a Belief Propagation
//! engine on the same factor-graph representation, adds the random graph
//! models the two are meant to be compared on, and a set of diagnostics
//! (symmetry scores, regularity checks, non-reconstruction) that quantify
//! when the two viewpoints agree.
//!
//! All numeric types default to `f64`; the engines are generic over
//! [`scalar::Real`], so `f32` instantiations work where lower precision is
//! acceptable.
//!
//! ```
//! use fglab_core::*;
//!
//! // one ferromagnetic coupling between two binary spins
//! let e = 1.0_f64.exp();
//! let graph = FactorGraph::new(
//!     2,
//!     SpinAlphabet::numeric(2),
//!     vec![WeightFunction::new(2, vec![e, 1.0, 1.0, e])?],
//!     vec![Constraint::new(vec![VarId(0), VarId(1)], 0)],
//! )?;
//!
//! // the graph is a tree, so the Bethe free energy at the exact cavity
//! // messages reproduces ln Z = ln(2e + 2)
//! let bundle = exact_bundle(&graph, EnumBudget::default())?;
//! let bethe = bethe_free_energy(&graph, &bundle.messages);
//! assert!((bethe - bundle.log_z).abs() < 1e-12);
//! assert!((bundle.log_z - (2.0 * e + 2.0).ln()).abs() < 1e-12);
//! # Ok::<(), fglab_core::Error>(())
//! ```

pub mod bp;
pub mod diagnostics;
pub mod error;
pub mod exact;
pub mod graph;
pub mod io;
pub mod models;
pub mod scalar;

pub use bp::{
    beliefs, bethe_free_energy, bethe_marginal_form, bp_fixed_point, bp_residual, bp_step,
    constraint_increment, site_increment, BpOptions, ConvergenceReport, MessageSet, SiteIncrement,
};
pub use diagnostics::{
    empirical_spin_dist, homogeneity_check, l_symmetry_score, nonreconstruction_score,
    pair_symmetry_score, pair_symmetry_score_beyond, regularity_violation_search, state_score,
    tv_distance, HomogeneityReport, NonReconstructionReport, PartitionPair, RegularityReport,
    ScoreMode, SymmetryReport,
};
pub use error::{Error, Result};
pub use exact::{
    conditional_marginal, exact_bundle, exact_messages, gibbs_sample, joint_marginal,
    log_gibbs_weight, log_partition, EnumBudget, ExactBundle, ExplicitMeasure, MarginalTable,
};
pub use graph::{
    Assignment, ConId, Constraint, FactorGraph, SpinAlphabet, ValidationReport, VarId, Violation,
    WeightFunction,
};
pub use models::{
    ksat_weight, marginalize_weight, potts_weight, sample_forest, sample_percolated_regular,
    sample_poisson, sample_regular, ForestParams, GeneratorParams, ModelSpec, PercolatedSample,
};
pub use scalar::Real;
