//! Axis-factorized visitation.
//!
//! A GNA mask is the conjunction of independent per-axis masks, and a
//! multi-dimensional (static or dynamic) tile is a product of per-axis index
//! ranges. Hence a (Q tile, KV tile) pair holds an attended pair iff every
//! axis does, its attended-pair count is the product of per-axis counts, and
//! sums and maxima over the tile grid factor into per-axis sums and maxima.

use std::collections::BTreeMap;

use crate::coords::{Coord, Shape};
use crate::mask::{AxisMask, GnaMask};

use super::{KvMode, SimTotals, TileConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct AxisVisit {
    /// KV tile index: grid index (static) or offset from the sliced region start (dynamic).
    pub tile: usize,
    pub attended: u64,
    pub keys: u64,
}

#[derive(Debug, Clone)]
pub(crate) struct AxisQTile {
    pub queries: u64,
    pub visits: Vec<AxisVisit>,
}

#[derive(Debug, Clone)]
pub(crate) struct AxisProfile {
    pub q_tile: usize,
    pub kv_tile: usize,
    pub dense_kv_tiles: usize,
    pub tiles: Vec<AxisQTile>,
}

impl AxisProfile {
    pub fn build(mask: &AxisMask, q_tile: usize, kv_tile: usize, kv_mode: KvMode) -> Self {
        let extent = mask.extent();
        let tiles = (0..extent.div_ceil(q_tile))
            .map(|qt| {
                let q_lo = qt * q_tile;
                let q_hi = (q_lo + q_tile).min(extent);
                let lo = (q_lo..q_hi).map(|q| mask.span(q).start).min().expect("non-empty tile");
                let hi = (q_lo..q_hi).map(|q| mask.span(q).end).max().expect("non-empty tile");
                // hits[k - lo]: queries of this tile attending key k
                let mut hits = vec![0u64; hi - lo];
                for q in q_lo..q_hi {
                    for k in mask.attended(q) {
                        hits[k - lo] += 1;
                    }
                }
                let anchor = match kv_mode {
                    KvMode::Static => 0,
                    KvMode::Dynamic => lo,
                };
                let mut visits: Vec<AxisVisit> = Vec::new();
                for (off, &h) in hits.iter().enumerate() {
                    if h == 0 {
                        continue;
                    }
                    let tile = (lo + off - anchor) / kv_tile;
                    match visits.last_mut() {
                        Some(v) if v.tile == tile => v.attended += h,
                        _ => {
                            let start = anchor + tile * kv_tile;
                            let keys = (start + kv_tile).min(extent) - start;
                            visits.push(AxisVisit {
                                tile,
                                attended: h,
                                keys: keys as u64,
                            });
                        }
                    }
                }
                AxisQTile {
                    queries: (q_hi - q_lo) as u64,
                    visits,
                }
            })
            .collect();
        Self {
            q_tile,
            kv_tile,
            dense_kv_tiles: extent.div_ceil(kv_tile),
            tiles,
        }
    }

    pub fn summary(&self, mask: &AxisMask) -> AxisSummary {
        let counts = self.tiles.iter().map(|t| t.visits.len() as u64);
        AxisSummary {
            q_tiles: self.tiles.len() as u64,
            q_tile: self.q_tile as u64,
            kv_tile: self.kv_tile as u64,
            dense_kv_tiles: self.dense_kv_tiles as u64,
            max_visits: counts.clone().max().unwrap_or(0),
            sum_visits: counts.sum(),
            attended: self
                .tiles
                .iter()
                .flat_map(|t| &t.visits)
                .map(|v| u128::from(v.attended))
                .sum(),
            all_dense: self
                .tiles
                .iter()
                .all(|t| t.visits.iter().all(|v| v.attended == t.queries * v.keys)),
            max_count: (0..mask.extent()).map(|i| mask.count(i)).max().unwrap_or(0) as u64,
        }
    }
}

/// Per-axis aggregates; [`SimTotals`] is their product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct AxisSummary {
    pub q_tiles: u64,
    pub q_tile: u64,
    pub kv_tile: u64,
    pub dense_kv_tiles: u64,
    pub max_visits: u64,
    pub sum_visits: u64,
    pub attended: u128,
    pub all_dense: bool,
    /// Largest per-query attended count on this axis.
    pub max_count: u64,
}

pub(crate) fn combine(axes: &[AxisSummary]) -> SimTotals {
    SimTotals {
        q_tiles: axes.iter().map(|a| a.q_tiles).product(),
        q_tile_volume: axes.iter().map(|a| a.q_tile).product(),
        kv_tile_volume: axes.iter().map(|a| a.kv_tile).product(),
        dense_layout_kv_tiles: axes.iter().map(|a| a.dense_kv_tiles).product(),
        visited_max: axes.iter().map(|a| a.max_visits).product(),
        visited_sum: axes.iter().map(|a| a.sum_visits).product(),
        attended_pairs: axes.iter().map(|a| a.attended).product(),
        computed_pairs: axes
            .iter()
            .map(|a| u128::from(a.sum_visits) * u128::from(a.q_tile * a.kv_tile))
            .product(),
        perfect: axes.iter().all(|a| a.all_dense),
        worst_query: axes.iter().map(|a| u128::from(a.max_count)).product(),
    }
}

pub(crate) struct AxisEngine {
    profiles: Vec<AxisProfile>,
    summaries: Vec<AxisSummary>,
}

impl AxisEngine {
    pub fn new(mask: &GnaMask, tiles: &TileConfig) -> Self {
        let profiles = mask
            .axes()
            .iter()
            .enumerate()
            .map(|(a, m)| AxisProfile::build(m, tiles.q_tile[a], tiles.kv_tile[a], tiles.kv_mode))
            .collect::<Vec<_>>();
        let summaries = profiles.iter().zip(mask.axes()).map(|(p, m)| p.summary(m)).collect();
        Self { profiles, summaries }
    }

    pub fn totals(&self) -> SimTotals {
        combine(&self.summaries)
    }

    /// Visited KV tile count for every Q tile coordinate.
    pub fn visited_counts(&self) -> BTreeMap<Coord, usize> {
        let grid: Vec<usize> = self.profiles.iter().map(|p| p.tiles.len()).collect();
        let grid = Shape::new(grid).expect("valid rank");
        grid.iter_coords()
            .map(|qt| {
                let n = self
                    .profiles
                    .iter()
                    .enumerate()
                    .map(|(a, p)| p.tiles[qt[a]].visits.len())
                    .product();
                (qt, n)
            })
            .collect()
    }
}
