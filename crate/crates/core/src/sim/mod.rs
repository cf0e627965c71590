//! Tile-visitation simulation.
//!
//! Given a token layout, GNA parameters, and the Q/KV tile shapes of a fused
//! attention kernel, the simulator finds which KV tiles each Q tile must
//! visit. A kernel skips every other tile, so the worst Q tile bounds the
//! achievable speedup over dense attention far more tightly than the raw
//! FLOP count does.
//!
//! Three engines compute visitation:
//!
//! * [`visited_tiles_bruteforce`] enumerates every attended (query, key) pair.
//!   It is the reference and the only engine for one-dimensional tiling.
//! * The axis-factorized engine behind [`simulate`] exploits the fact that a
//!   GNA mask is a product of per-axis masks and that multi-dimensional tiles
//!   are products of per-axis ranges, so all statistics factor per axis.
//! * [`visited_tiles_fast`] evaluates the union-window closed form
//!   (undilated, multi-dimensional tiling only).

mod axis;
mod brute;
mod fast;
mod report;
mod sweep;

use serde::{Deserialize, Serialize};

use std::collections::BTreeMap;

use crate::coords::{Coord, Shape};
use crate::error::{GnaError, Result};
use crate::mask::{GnaMask, GnaParams};
use crate::scalar::{ratio, Rational};

pub use brute::{simulate_bruteforce, simulate_flat_order, visited_tiles_bruteforce, FlatOrder};
pub use fast::visited_tiles_fast;
pub use report::{ExactFields, Fraction, SimRecord, CSV_FIXED_COLUMNS};
pub use sweep::{sweep_strides, SweepEntry, SweepResult};

pub(crate) use axis::AxisEngine;

/// Default cap on tokens for brute-force enumeration.
pub const DEFAULT_TOKEN_CAP: usize = 1 << 20;

/// Token grid plus an optional count of appended dense context tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenLayout {
    pub extents: Shape,
    #[serde(default)]
    pub extra_kv: usize,
}

impl TokenLayout {
    pub fn new(extents: Shape) -> Self {
        Self { extents, extra_kv: 0 }
    }

    pub fn with_extra_kv(mut self, extra_kv: usize) -> Self {
        self.extra_kv = extra_kv;
        self
    }

    pub fn token_count(&self) -> usize {
        self.extents.volume()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TilingMode {
    #[default]
    MultiDimensional,
    OneDimensional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KvMode {
    /// Fixed KV tile grid; tiles are visited or skipped.
    #[default]
    Static,
    /// The needed KV region is sliced out per Q tile, then tiled from its start.
    Dynamic,
}

/// Q/KV tile shapes plus the two implementation design choices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileConfig {
    pub q_tile: Shape,
    pub kv_tile: Shape,
    #[serde(default)]
    pub tiling_mode: TilingMode,
    #[serde(default)]
    pub kv_mode: KvMode,
}

impl TileConfig {
    pub fn new(q_tile: Shape, kv_tile: Shape) -> Self {
        Self {
            q_tile,
            kv_tile,
            tiling_mode: TilingMode::MultiDimensional,
            kv_mode: KvMode::Static,
        }
    }

    pub fn with_tiling_mode(mut self, mode: TilingMode) -> Self {
        self.tiling_mode = mode;
        self
    }

    pub fn with_kv_mode(mut self, mode: KvMode) -> Self {
        self.kv_mode = mode;
        self
    }

    /// Flat Q tile size used by one-dimensional tiling.
    pub fn flat_q(&self) -> usize {
        self.q_tile.volume()
    }

    /// Flat KV tile size used by one-dimensional tiling.
    pub fn flat_kv(&self) -> usize {
        self.kv_tile.volume()
    }

    pub fn validate(&self, layout: &TokenLayout) -> Result<()> {
        let rank = layout.extents.rank();
        self.q_tile.ensure_rank("q_tile", rank)?;
        self.kv_tile.ensure_rank("kv_tile", rank)
    }
}

/// Outcome of simulating one configuration.
///
/// Tile counts include the KV tiles holding extra (dense) context tokens,
/// which every Q tile visits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimReport {
    /// KV tiles a dense kernel visits per Q tile.
    pub dense_kv_tiles: u64,
    /// Of which hold extra context tokens.
    pub extra_kv_tiles: u64,
    pub q_tiles: u64,
    /// Worst case over Q tiles.
    pub visited_max: u64,
    /// Average over Q tiles. Diagnostic only; speedups use the worst case.
    pub visited_mean: Rational,
    /// `dense_kv_tiles / visited_max`.
    pub simulated_speedup: Rational,
    /// Total context over attended context of the most-attending query.
    pub flopwise_speedup: Rational,
    /// Every in-bounds (query, key) pair in every visited tile is attended.
    pub perfectly_block_sparse: bool,
    /// Share of computed (query, key) pairs discarded by the mask or padding.
    pub masked_flop_fraction: Rational,
}

/// Raw totals shared by all engines; [`SimReport`] is derived from these.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct SimTotals {
    pub q_tiles: u64,
    pub q_tile_volume: u64,
    pub kv_tile_volume: u64,
    pub dense_layout_kv_tiles: u64,
    pub visited_max: u64,
    pub visited_sum: u64,
    pub attended_pairs: u128,
    pub computed_pairs: u128,
    pub perfect: bool,
    /// Attended key count of the most-attending query.
    pub worst_query: u128,
}

pub(crate) fn finish_report(layout: &TokenLayout, t: &SimTotals) -> SimReport {
    let extra = layout.extra_kv as u64;
    let extra_tiles = extra.div_ceil(t.kv_tile_volume);
    let dense = t.dense_layout_kv_tiles + extra_tiles;
    let visited_max = t.visited_max + extra_tiles;
    let visited_mean = ratio(
        u128::from(t.visited_sum) + u128::from(t.q_tiles) * u128::from(extra_tiles),
        u128::from(t.q_tiles),
    );

    let n = layout.token_count() as u128;
    let attended = t.attended_pairs + n * u128::from(extra);
    let computed = t.computed_pairs
        + u128::from(t.q_tiles) * u128::from(t.q_tile_volume) * u128::from(extra_tiles) * u128::from(t.kv_tile_volume);
    let masked = ratio(computed - attended, computed);

    let flopwise = ratio(n + u128::from(extra), t.worst_query + u128::from(extra));

    SimReport {
        dense_kv_tiles: dense,
        extra_kv_tiles: extra_tiles,
        q_tiles: t.q_tiles,
        visited_max,
        visited_mean,
        simulated_speedup: ratio(u128::from(dense), u128::from(visited_max)),
        flopwise_speedup: flopwise,
        perfectly_block_sparse: t.perfect,
        masked_flop_fraction: masked,
    }
}

/// Simulates one configuration.
///
/// Multi-dimensional tiling uses the axis-factorized engine (exact for any
/// dilation and causal flags); one-dimensional tiling enumerates tokens and is
/// subject to [`DEFAULT_TOKEN_CAP`].
pub fn simulate(layout: &TokenLayout, params: &GnaParams, tiles: &TileConfig) -> Result<SimReport> {
    let mask = GnaMask::new(params, layout)?;
    tiles.validate(layout)?;
    match tiles.tiling_mode {
        TilingMode::MultiDimensional => {
            let engine = AxisEngine::new(&mask, tiles);
            Ok(finish_report(layout, &engine.totals()))
        }
        TilingMode::OneDimensional => simulate_bruteforce(layout, params, tiles, DEFAULT_TOKEN_CAP),
    }
}

/// Closed-form perfect block-sparsity test.
///
/// Under dynamic KV tiling with multi-dimensional tiles, a configuration is
/// perfectly block-sparse whenever on every axis the KV tile divides the
/// window and the Q tile divides the stride. This is a sufficient condition
/// (layouts where a window spans a whole axis can be dense without it).
///
/// Returns `None` where no closed form exists: static KV tiling,
/// one-dimensional tiling, dilation, or causal axes. Use [`simulate`] there.
pub fn perfect_bs_analytic(params: &GnaParams, tiles: &TileConfig) -> Option<bool> {
    if tiles.tiling_mode != TilingMode::MultiDimensional
        || tiles.kv_mode != KvMode::Dynamic
        || params.is_dilated()
        || params.is_causal()
    {
        return None;
    }
    let rank = params.rank();
    if tiles.q_tile.rank() != rank || tiles.kv_tile.rank() != rank {
        return Some(false);
    }
    Some(
        (0..rank).all(|a| {
            params.window[a].is_multiple_of(tiles.kv_tile[a]) && params.stride[a].is_multiple_of(tiles.q_tile[a])
        }),
    )
}

/// Visited KV tile count for every Q tile (extra context tiles excluded).
///
/// Multi-dimensional tiling uses the axis-factorized engine; one-dimensional
/// tiling enumerates tokens and is subject to [`DEFAULT_TOKEN_CAP`].
pub fn visited_counts(layout: &TokenLayout, params: &GnaParams, tiles: &TileConfig) -> Result<BTreeMap<Coord, usize>> {
    let mask = GnaMask::new(params, layout)?;
    tiles.validate(layout)?;
    match tiles.tiling_mode {
        TilingMode::MultiDimensional => Ok(AxisEngine::new(&mask, tiles).visited_counts()),
        TilingMode::OneDimensional => Ok(visited_tiles_bruteforce(layout, params, tiles, DEFAULT_TOKEN_CAP)?
            .into_iter()
            .map(|(q, kv)| (q, kv.len()))
            .collect()),
    }
}

pub(crate) fn check_cap(tokens: usize, cap: usize) -> Result<()> {
    if tokens > cap {
        Err(GnaError::CapExceeded {
            what: "brute-force simulation",
            tokens,
            cap,
        })
    } else {
        Ok(())
    }
}
