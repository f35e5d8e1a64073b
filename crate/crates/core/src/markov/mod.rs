//! Markov sources on grids: kernels, stationary laws, entropy oracles and
//! seeded generators.

mod generate;
mod kernel;
mod oracle;

pub use generate::{
    derive_seed, gen_defn1, gen_defn1_corpus, gen_scenario, gen_scenario_corpus, optimal_loss_defn1, Axis,
    Defn1Params, OptimalLossEstimate,
};
pub use kernel::{stationary, MarkovKernel, StationaryDist, STATIONARY_MAX_ITERATIONS, STATIONARY_TOLERANCE};
pub use oracle::{
    binary_entropy, entropy, epsilon, h_infinity, joint_entropy_exact, prop2_bound, remark1_rate, EntropyReport,
    SwitchingRate,
};
