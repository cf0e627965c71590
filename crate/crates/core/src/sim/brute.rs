//! Token-level visitation by direct enumeration of attended pairs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::coords::{delinearize, tile_grid, Coord, Shape};
use crate::error::{GnaError, Result};
use crate::mask::{GnaMask, GnaParams};

use super::{check_cap, finish_report, KvMode, SimReport, SimTotals, TileConfig, TilingMode, TokenLayout};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct KvVisit {
    attended: u64,
    keys: u64,
}

#[derive(Debug, Clone)]
struct QTileVisit {
    q_tile: Coord,
    queries: u64,
    worst_query: u64,
    kv: BTreeMap<Coord, KvVisit>,
}

#[derive(Debug, Clone)]
struct TileVisits {
    q_tile_volume: u64,
    kv_tile_volume: u64,
    dense_layout_kv_tiles: u64,
    tiles: Vec<QTileVisit>,
}

impl TileVisits {
    fn totals(&self) -> SimTotals {
        let counts = self.tiles.iter().map(|t| t.kv.len() as u64);
        let visited_sum: u64 = counts.clone().sum();
        SimTotals {
            q_tiles: self.tiles.len() as u64,
            q_tile_volume: self.q_tile_volume,
            kv_tile_volume: self.kv_tile_volume,
            dense_layout_kv_tiles: self.dense_layout_kv_tiles,
            visited_max: counts.max().unwrap_or(0),
            visited_sum,
            attended_pairs: self
                .tiles
                .iter()
                .flat_map(|t| t.kv.values())
                .map(|v| u128::from(v.attended))
                .sum(),
            computed_pairs: u128::from(visited_sum) * u128::from(self.q_tile_volume) * u128::from(self.kv_tile_volume),
            perfect: self
                .tiles
                .iter()
                .all(|t| t.kv.values().all(|v| v.attended == t.queries * v.keys)),
            worst_query: self.tiles.iter().map(|t| u128::from(t.worst_query)).max().unwrap_or(0),
        }
    }

    fn visited_sets(&self) -> BTreeMap<Coord, BTreeSet<Coord>> {
        self.tiles
            .iter()
            .map(|t| (t.q_tile.clone(), t.kv.keys().cloned().collect()))
            .collect()
    }
}

/// Token placement for one-dimensional tiling: each real query/key token is
/// assigned a slot in a flat sequence that may also contain padding slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatOrder {
    q_pos: Vec<usize>,
    q_slots: usize,
    kv_pos: Vec<usize>,
    kv_slots: usize,
}

impl FlatOrder {
    /// Row-major order without padding.
    pub fn identity(tokens: usize) -> Self {
        let pos: Vec<usize> = (0..tokens).collect();
        Self {
            q_pos: pos.clone(),
            q_slots: tokens,
            kv_pos: pos,
            kv_slots: tokens,
        }
    }

    /// `q_pos[t]` / `kv_pos[t]` give the slot of row-major token `t`.
    pub fn new(q_pos: Vec<usize>, q_slots: usize, kv_pos: Vec<usize>, kv_slots: usize) -> Result<Self> {
        for (pos, slots, what) in [(&q_pos, q_slots, "query"), (&kv_pos, kv_slots, "key")] {
            let mut seen = vec![false; slots];
            for &p in pos {
                if p >= slots || std::mem::replace(&mut seen[p], true) {
                    return Err(GnaError::ShapeMismatch(format!(
                        "{what} slot {p} is out of range or assigned twice"
                    )));
                }
            }
        }
        if q_pos.len() != kv_pos.len() {
            return Err(GnaError::ShapeMismatch(
                "query and key orders cover different token counts".into(),
            ));
        }
        Ok(Self {
            q_pos,
            q_slots,
            kv_pos,
            kv_slots,
        })
    }

    pub fn tokens(&self) -> usize {
        self.q_pos.len()
    }
}

fn multi_dimensional_visits(mask: &GnaMask, tiles: &TileConfig) -> TileVisits {
    let extents = mask.extents();
    let rank = extents.rank();
    let q_grid = tile_grid(extents, &tiles.q_tile).expect("ranks validated");
    let kv_dims = tiles.kv_tile.extents();

    let entries = q_grid
        .iter_coords()
        .map(|qt| {
            let queries: Vec<Coord> = tile_members(&qt, &tiles.q_tile, extents);
            let anchor: Vec<usize> = match tiles.kv_mode {
                KvMode::Static => vec![0; rank],
                KvMode::Dynamic => {
                    let mut lo = vec![usize::MAX; rank];
                    for q in &queries {
                        mask.for_each_attended(q, |k| {
                            let kc = delinearize(k, extents).expect("in bounds");
                            for a in 0..rank {
                                lo[a] = lo[a].min(kc[a]);
                            }
                        });
                    }
                    lo
                }
            };
            let mut kv: BTreeMap<Coord, KvVisit> = BTreeMap::new();
            let mut worst_query = 0;
            for q in &queries {
                let mut count = 0;
                mask.for_each_attended(q, |k| {
                    let kc = delinearize(k, extents).expect("in bounds");
                    let tile: Vec<usize> = (0..rank).map(|a| (kc[a] - anchor[a]) / kv_dims[a]).collect();
                    kv.entry(Coord::from_vec(tile)).or_default().attended += 1;
                    count += 1;
                });
                worst_query = worst_query.max(count);
            }
            for (tile, visit) in kv.iter_mut() {
                visit.keys = (0..rank)
                    .map(|a| {
                        let start = anchor[a] + tile[a] * kv_dims[a];
                        ((start + kv_dims[a]).min(extents[a]) - start) as u64
                    })
                    .product();
            }
            QTileVisit {
                q_tile: qt,
                queries: queries.len() as u64,
                worst_query,
                kv,
            }
        })
        .collect();

    TileVisits {
        q_tile_volume: tiles.q_tile.volume() as u64,
        kv_tile_volume: tiles.kv_tile.volume() as u64,
        dense_layout_kv_tiles: tile_grid(extents, &tiles.kv_tile).expect("ranks validated").volume() as u64,
        tiles: entries,
    }
}

fn tile_members(tile: &Coord, tile_shape: &Shape, extents: &Shape) -> Vec<Coord> {
    let rank = extents.rank();
    let lo: Vec<usize> = (0..rank).map(|a| tile[a] * tile_shape[a]).collect();
    let dims: Vec<usize> = (0..rank)
        .map(|a| (lo[a] + tile_shape[a]).min(extents[a]) - lo[a])
        .collect();
    Shape::new(dims)
        .expect("tile intersects layout")
        .iter_coords()
        .map(|off| Coord::from_vec((0..rank).map(|a| lo[a] + off[a]).collect()))
        .collect()
}

fn flat_visits(mask: &GnaMask, flat_q: usize, flat_kv: usize, kv_mode: KvMode, order: &FlatOrder) -> TileVisits {
    let mut q_at_slot = vec![None; order.q_slots];
    for (token, &slot) in order.q_pos.iter().enumerate() {
        q_at_slot[slot] = Some(token);
    }
    let mut kv_prefix = vec![0u64; order.kv_slots + 1];
    {
        let mut occupied = vec![0u64; order.kv_slots];
        for &slot in &order.kv_pos {
            occupied[slot] = 1;
        }
        for (i, o) in occupied.iter().enumerate() {
            kv_prefix[i + 1] = kv_prefix[i] + o;
        }
    }
    let keys_in = |lo: usize, hi: usize| {
        let hi = hi.min(order.kv_slots);
        kv_prefix[hi] - kv_prefix[lo.min(hi)]
    };

    let entries = (0..order.q_slots.div_ceil(flat_q))
        .map(|qt| {
            let slots = qt * flat_q..((qt + 1) * flat_q).min(order.q_slots);
            let queries: Vec<usize> = slots.filter_map(|s| q_at_slot[s]).collect();
            let mut hits: HashMap<usize, u64> = HashMap::new();
            let mut worst_query = 0;
            for &q in &queries {
                let qc = crate::mask::token(mask, q);
                let mut count = 0;
                mask.for_each_attended(&qc, |k| {
                    *hits.entry(order.kv_pos[k]).or_default() += 1;
                    count += 1;
                });
                worst_query = worst_query.max(count);
            }
            let anchor = match kv_mode {
                KvMode::Static => 0,
                KvMode::Dynamic => hits.keys().copied().min().unwrap_or(0),
            };
            let mut kv: BTreeMap<Coord, KvVisit> = BTreeMap::new();
            for (&slot, &h) in &hits {
                let tile = (slot - anchor) / flat_kv;
                kv.entry(Coord::from_vec(vec![tile])).or_default().attended += h;
            }
            for (tile, visit) in kv.iter_mut() {
                let start = anchor + tile[0] * flat_kv;
                visit.keys = keys_in(start, start + flat_kv);
            }
            QTileVisit {
                q_tile: Coord::from_vec(vec![qt]),
                queries: queries.len() as u64,
                worst_query,
                kv,
            }
        })
        .collect();

    TileVisits {
        q_tile_volume: flat_q as u64,
        kv_tile_volume: flat_kv as u64,
        dense_layout_kv_tiles: order.kv_slots.div_ceil(flat_kv) as u64,
        tiles: entries,
    }
}

fn visits(mask: &GnaMask, layout: &TokenLayout, tiles: &TileConfig) -> TileVisits {
    match tiles.tiling_mode {
        TilingMode::MultiDimensional => multi_dimensional_visits(mask, tiles),
        TilingMode::OneDimensional => flat_visits(
            mask,
            tiles.flat_q(),
            tiles.flat_kv(),
            tiles.kv_mode,
            &FlatOrder::identity(layout.token_count()),
        ),
    }
}

/// Visited KV tiles per Q tile, found by enumerating every attended pair.
///
/// Keys are Q tile coordinates (rank 1 flat indices under one-dimensional
/// tiling). Values identify KV tiles: grid coordinates for static tiling,
/// offsets from the sliced region's start for dynamic tiling.
pub fn visited_tiles_bruteforce(
    layout: &TokenLayout,
    params: &GnaParams,
    tiles: &TileConfig,
    cap: usize,
) -> Result<BTreeMap<Coord, BTreeSet<Coord>>> {
    check_cap(layout.token_count(), cap)?;
    let mask = GnaMask::new(params, layout)?;
    tiles.validate(layout)?;
    Ok(visits(&mask, layout, tiles).visited_sets())
}

/// [`simulate`](super::simulate) computed entirely by pair enumeration.
pub fn simulate_bruteforce(
    layout: &TokenLayout,
    params: &GnaParams,
    tiles: &TileConfig,
    cap: usize,
) -> Result<SimReport> {
    check_cap(layout.token_count(), cap)?;
    let mask = GnaMask::new(params, layout)?;
    tiles.validate(layout)?;
    Ok(finish_report(layout, &visits(&mask, layout, tiles).totals()))
}

/// One-dimensional tiling over an arbitrary token order (e.g. a permuted
/// layout). Returns the report and the visited count of every flat Q tile.
pub fn simulate_flat_order(
    layout: &TokenLayout,
    params: &GnaParams,
    flat_q: usize,
    flat_kv: usize,
    kv_mode: KvMode,
    order: &FlatOrder,
    cap: usize,
) -> Result<(SimReport, Vec<usize>)> {
    check_cap(layout.token_count(), cap)?;
    let mask = GnaMask::new(params, layout)?;
    if order.tokens() != layout.token_count() {
        return Err(GnaError::ShapeMismatch(format!(
            "order covers {} tokens, layout has {}",
            order.tokens(),
            layout.token_count()
        )));
    }
    if flat_q == 0 || flat_kv == 0 {
        return Err(GnaError::NonPositive("flat tile size"));
    }
    let v = flat_visits(&mask, flat_q, flat_kv, kv_mode, order);
    let counts = v.tiles.iter().map(|t| t.kv.len()).collect();
    Ok((finish_report(layout, &v.totals()), counts))
}
