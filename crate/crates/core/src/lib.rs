//! Divergence-preserving compression of finite distributions.
//!
//! The library solves a bottleneck problem over discrete alphabets: find a
//! stochastic encoder that minimizes mutual information with the source
//! while keeping the pushed-forward divergence from a closed-form reference
//! model above a target level. An annealed Blahut-Arimoto iteration traces
//! the full compression curve; permutation-group utilities turn the
//! structural characterizations of the optimal encoders (invariance,
//! equivariance, orbit partitions) into executable checks; and a synthetic
//! grid experiment exercises the whole pipeline.

pub mod error;
pub mod family;
pub mod gridworld;
pub mod partition;
pub mod prob;
pub mod solver;
pub mod symmetry;

pub use error::{Error, Result};
pub use family::{
    divergence_from_family, joint_from_flat, latent_divergence, project_to_family,
    HierarchicalModel,
};
pub use partition::{
    cell_label, enforce_factorization, is_congruent, partition_from_channel_rows,
    partition_from_dib_relation, partitions_equal_up_to_relabeling, projection_channel,
    quotient_channel, Partition,
};
pub use prob::{
    compose_channels, joint_decompose, kl_divergence, mutual_information, product_labels,
    pushforward, pushforward_weight, tensor_channels, tensor_dists, Channel, Distribution, Joint,
    MassVector, UnnormalizedWeight, MASS_TOL,
};
pub use solver::{
    anneal_reverse, ba_step, default_init, detect_bifurcations, effective_cardinality,
    geometric_schedule, info_pair, lagrangian, solve_classic_ib, solve_fixed_beta,
    support_restrict_extend, target_lambda, AnnealingTrace, BifurcationReport, ClassicIbResult,
    DibProblem, Diagnostics, GroupThreshold, SolverConfig, SolverResult, TracePoint,
    EFF_CARD_THRESHOLD, RESIDUAL_THRESHOLD,
};
pub use symmetry::{
    channel_invariance_group, discover_equivariances, distribution_invariance_group,
    divergence_from_symmetric, group_average_channel, group_closure, is_channel_equivariance,
    is_channel_invariance, is_distribution_invariance, orbits_partition, soft_symmetry_residual,
    DiscoveryLimits, Group, Permutation, PermutationLike, ProductPermutation,
};
pub use gridworld::{
    c4_group, d4_group, flatten_group, generate_base_channel, perturb_iid, perturb_preserving,
    reflection_action, rotation_action, run_experiment, BetaThresholds, ExperimentConfig,
    ExperimentSummary, GridSpec,
};
