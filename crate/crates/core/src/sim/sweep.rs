//! Exhaustive stride sweep with dominance pruning.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::coords::Shape;
use crate::error::{GnaError, Result};
use crate::mask::{GnaMask, GnaParams};
use crate::scalar::Rational;

use super::axis::{combine, AxisProfile, AxisSummary};
use super::{finish_report, simulate_bruteforce, SimReport, TileConfig, TilingMode, TokenLayout, DEFAULT_TOKEN_CAP};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepEntry {
    pub stride: Vec<usize>,
    pub report: SimReport,
}

impl SweepEntry {
    pub fn stride_product(&self) -> usize {
        self.stride.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepResult {
    /// Entries surviving the pruning filter, by stride product, then speedup.
    pub retained: Vec<SweepEntry>,
    /// Number of stride vectors simulated.
    pub evaluated: usize,
}

fn stride_space(window: &Shape) -> Vec<Vec<usize>> {
    window
        .iter_coords()
        .map(|c| c.values().iter().map(|v| v + 1).collect())
        .collect()
}

/// Per-axis summaries for every stride value on that axis; a stride vector's
/// totals are then a product lookup.
fn axis_tables(layout: &TokenLayout, base: &GnaParams, tiles: &TileConfig) -> Result<Vec<Vec<AxisSummary>>> {
    let rank = layout.extents.rank();
    (0..rank)
        .map(|a| {
            (1..=base.window[a])
                .map(|s| {
                    let mut stride = vec![1; rank];
                    stride[a] = s;
                    let params = base.clone().with_stride(Shape::new(stride)?);
                    let mask = GnaMask::new(&params, layout)?;
                    let m = mask.axis(a);
                    let profile = AxisProfile::build(m, tiles.q_tile[a], tiles.kv_tile[a], tiles.kv_mode);
                    Ok(profile.summary(m))
                })
                .collect()
        })
        .collect()
}

fn evaluate(
    layout: &TokenLayout,
    base: &GnaParams,
    tiles: &TileConfig,
    strides: &[Vec<usize>],
) -> Result<Vec<SimReport>> {
    match tiles.tiling_mode {
        TilingMode::MultiDimensional => {
            let tables = axis_tables(layout, base, tiles)?;
            Ok(strides
                .par_iter()
                .map(|s| {
                    let axes: Vec<AxisSummary> = s.iter().enumerate().map(|(a, &v)| tables[a][v - 1]).collect();
                    finish_report(layout, &combine(&axes))
                })
                .collect())
        }
        TilingMode::OneDimensional => strides
            .par_iter()
            .map(|s| {
                let params = base.clone().with_stride(Shape::new(s.clone())?);
                simulate_bruteforce(layout, &params, tiles, DEFAULT_TOKEN_CAP)
            })
            .collect(),
    }
}

/// Keeps an entry iff its speedup strictly exceeds the best speedup among
/// all entries (retained or not) of smaller stride product. Stride product 1
/// is always kept.
pub(crate) fn prune(entries: Vec<SweepEntry>) -> Vec<SweepEntry> {
    let mut groups: BTreeMap<usize, Vec<SweepEntry>> = BTreeMap::new();
    for e in entries {
        groups.entry(e.stride_product()).or_default().push(e);
    }
    let mut best: Option<Rational> = None;
    let mut retained = Vec::new();
    for (product, group) in groups {
        let group_best = group.iter().map(|e| e.report.simulated_speedup).max();
        for e in group {
            let keep = product == 1 || best.is_none_or(|b| e.report.simulated_speedup > b);
            if keep {
                retained.push(e);
            }
        }
        best = best.max(group_best);
    }
    retained.sort_by(|a, b| {
        a.stride_product()
            .cmp(&b.stride_product())
            .then(a.report.simulated_speedup.cmp(&b.report.simulated_speedup))
            .then(a.stride.cmp(&b.stride))
    });
    retained
}

/// Simulates every stride vector in `[1, w]` per axis and prunes the ones
/// that do not beat all configurations of smaller stride product.
///
/// `jobs` bounds worker threads (0 uses the default pool). Results do not
/// depend on `jobs`.
pub fn sweep_strides(layout: &TokenLayout, base: &GnaParams, tiles: &TileConfig, jobs: usize) -> Result<SweepResult> {
    // The base stride is irrelevant; validate everything else with stride 1.
    let unit = Shape::uniform(base.rank(), 1)?;
    let base = base.clone().with_stride(unit);
    base.validate(layout)?;
    tiles.validate(layout)?;

    let strides = stride_space(&base.window);
    let reports = if jobs == 0 {
        evaluate(layout, &base, tiles, &strides)?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| GnaError::UnsupportedMode(format!("worker pool: {e}")))?
            .install(|| evaluate(layout, &base, tiles, &strides))?
    };
    let evaluated = strides.len();
    let entries = strides
        .into_iter()
        .zip(reports)
        .map(|(stride, report)| SweepEntry { stride, report })
        .collect();
    Ok(SweepResult {
        retained: prune(entries),
        evaluated,
    })
}
