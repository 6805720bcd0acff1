//! Simulation and verification of the stochastic sandpile model (SSM) and of
//! activated random walks with instantaneous deactivation (ARWD).

pub mod analysis;
pub mod arwd;
pub mod coupled;
pub mod error;
pub mod hierarchy;
pub mod lattice;
pub mod randomness;
pub mod ssm;

pub use analysis::{
    bernoulli_geometric_domination_check, constants, cycle_escape, dominance_test, exit_times, fit_exponential_time,
    geometric_composition_check, ghost_probe, green_function, mean_and_se, rho0, upsilon, upsilon_one, CompositionReport,
    Constants, Coupling, DominanceVerdict, ExpFit, GhostReport, GreenTable,
};
pub use arwd::{
    arwd_image, check_comparison_sets, run_arwd, ArwdConfig, ArwdParams, ArwdProcess, ArwdRun, Domination,
    DominationSamples, MinActive, RunStatus, SleepMask, Slot, StepKind, SubsetConfig, TopplingStrategy, Wake, WakeAll,
};
pub use coupled::{coupled_parity_probe, ParityEntry, ParityReport};
pub use error::{Error, Result};
pub use hierarchy::{
    connectivity_radius, hierarchy_dynamics, literal_strategy_choice, merge_diameter, toppling_procedure, Cluster, ClusterId,
    ColorSequence, Hierarchy, HierarchySleepMask, HierarchyStrategy, LevelParameters, MaskCase, ParameterPack,
    ProcedureChoice, ProcedureParams,
};
pub use lattice::{Graph, GraphKind, Metric, SiteId, SiteSet};
pub use randomness::{derive_seed, mix64, Distribution, InstructionField, InstructionSource, RandomStream, TruncatedField};
pub use ssm::{
    abelian_probe, enumerate_outcomes, half_topple, is_unstable, poisson_init, stabilize, topple, AbelianReport,
    Odometer, SelectionPolicy, SsmState, StabilityMode, Stabilization, Status,
};
