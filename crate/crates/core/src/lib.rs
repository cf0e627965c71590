//! Generalized neighborhood attention (GNA): masks, a tile-visitation
//! simulator for fused attention kernels, and speedup models.
//!
//! Speedups are exact rationals ([`Rational`]); rounding happens only when
//! formatting. The workload model is generic over [`Scalar`] and the numeric
//! attention oracle over [`num_traits::Float`]; the aliases below fix the
//! usual choices.

pub mod coords;
pub mod error;
pub mod mask;
pub mod permute;
pub mod reference;
pub mod scalar;
pub mod sim;
pub mod workload;

pub use coords::{delinearize, linearize, padded_extents, tile_grid, Coord, Shape, MAX_RANK};
pub use error::{GnaError, Result};
pub use mask::{
    attended_count, axis_window, group_leader, is_attended, render_mask, split_window, AxisWindow, GnaMask, GnaParams,
    MaskMatrix, DEFAULT_RENDER_CAP,
};
pub use permute::{inverse_map, permutation_map, permute_overhead, permuted_order, PermutationMap};
pub use reference::{attention_weights, gna_attention, masked_attention, merge_partials, AttnPartial, SmallTensor};
pub use scalar::{format_decimal, parse_rational, round_half_even_scaled, Rational, Scalar};
pub use sim::{
    perfect_bs_analytic, simulate, simulate_bruteforce, simulate_flat_order, sweep_strides, visited_counts,
    visited_tiles_bruteforce, visited_tiles_fast, ExactFields, FlatOrder, Fraction, KvMode, SimRecord, SimReport,
    SweepEntry, SweepResult, TileConfig, TilingMode, TokenLayout,
};
pub use workload::{e2e_speedup, flopwise_speedup, sparsity, WorkloadModel};

pub type SmallTensorF64 = SmallTensor<f64>;
pub type AttnPartialF64 = AttnPartial<f64>;
pub type WorkloadModelExact = WorkloadModel<Rational>;
pub type WorkloadModelF64 = WorkloadModel<f64>;
