//! Per-slide stain matrix estimation by sparse NMF, concentration solves,
//! pseudo-maximum normalization and Saffron ground-truth extraction.

mod normalize;
mod sample;
mod snmf;
mod solve;

pub use normalize::{
    extract_saffron, normalize_p99, percentile_nearest_rank, pseudo_max, saffron_raw, PSEUDO_MAX_PERCENTILE,
};
pub use sample::{sample_tissue_pixels, PixelSample};
pub use snmf::{estimate_stain_matrix, reference_stains, SnmfConfig, SnmfInit, SnmfOutcome};
pub use solve::{solve_concentrations, SolveMode, MAX_CONDITION};

pub const DEFAULT_SAMPLE_SIZE: usize = 100_000;
