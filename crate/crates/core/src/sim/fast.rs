//! Closed-form visitation from per-axis union windows.
//!
//! Without dilation, with stride at most the window, the keys attended along
//! one axis by the queries of a Q tile form one contiguous interval, so the
//! visited tiles on that axis are exactly those overlapping the interval.

use std::collections::BTreeMap;

use crate::coords::{tile_grid, Coord};
use crate::error::{GnaError, Result};
use crate::mask::{GnaMask, GnaParams};

use super::{KvMode, TileConfig, TilingMode, TokenLayout};

fn axis_count(start: usize, end: usize, tile: usize, kv_mode: KvMode) -> usize {
    match kv_mode {
        KvMode::Static => (end - 1) / tile - start / tile + 1,
        KvMode::Dynamic => (end - start).div_ceil(tile),
    }
}

/// Visited KV tile count for every Q tile, excluding extra context tiles.
pub fn visited_tiles_fast(
    layout: &TokenLayout,
    params: &GnaParams,
    tiles: &TileConfig,
) -> Result<BTreeMap<Coord, usize>> {
    let mask = GnaMask::new(params, layout)?;
    tiles.validate(layout)?;
    if tiles.tiling_mode != TilingMode::MultiDimensional {
        return Err(GnaError::UnsupportedMode(
            "the closed form needs multi-dimensional tiling".into(),
        ));
    }
    if params.is_dilated() {
        return Err(GnaError::UnsupportedMode("the closed form needs dilation 1".into()));
    }

    let per_axis: Vec<Vec<usize>> = mask
        .axes()
        .iter()
        .enumerate()
        .map(|(a, m)| {
            let (tq, tkv) = (tiles.q_tile[a], tiles.kv_tile[a]);
            (0..m.extent().div_ceil(tq))
                .map(|qt| {
                    let queries = qt * tq..((qt + 1) * tq).min(m.extent());
                    let start = queries.clone().map(|q| m.window(q).start).min().expect("non-empty");
                    let end = queries.map(|q| m.window(q).end).max().expect("non-empty");
                    axis_count(start, end, tkv, tiles.kv_mode)
                })
                .collect()
        })
        .collect();

    let grid = tile_grid(&layout.extents, &tiles.q_tile)?;
    Ok(grid
        .iter_coords()
        .map(|qt| {
            let n = per_axis.iter().enumerate().map(|(a, c)| c[qt[a]]).product();
            (qt, n)
        })
        .collect())
}
