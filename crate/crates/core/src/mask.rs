//! Generalized neighborhood attention masks.
//!
//! Every axis is independent: a query attends a key iff, on every axis, both
//! fall in the same dilation class and the key's class-local index lies in the
//! query's class-local window. Windows come from standard neighborhood
//! attention applied at the query's *group leader*, where queries are grouped
//! in runs of `stride` along each axis. Stride 1 is neighborhood attention;
//! stride equal to the window (dividing the extent) is blocked attention.

use serde::{Deserialize, Serialize};
use std::io::{self, Write};

use crate::coords::{delinearize, linearize, Coord, Shape};
use crate::error::{GnaError, Result};
use crate::sim::TokenLayout;

/// Default cap on the token count of a dense mask rendering.
pub const DEFAULT_RENDER_CAP: usize = 4096;

/// Full parameterization of a GNA mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GnaParams {
    pub window: Shape,
    pub stride: Shape,
    pub dilation: Shape,
    pub causal: Vec<bool>,
    /// Per-axis override of the number of tokens left of the leader.
    pub window_left: Option<Vec<usize>>,
}

impl GnaParams {
    /// Neighborhood attention (stride 1, no dilation, non-causal) with `window`.
    pub fn new(window: Shape) -> Self {
        let rank = window.rank();
        Self {
            stride: Shape::uniform(rank, 1).expect("rank already valid"),
            dilation: Shape::uniform(rank, 1).expect("rank already valid"),
            causal: vec![false; rank],
            window_left: None,
            window,
        }
    }

    pub fn with_stride(mut self, stride: Shape) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_dilation(mut self, dilation: Shape) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_causal(mut self, causal: Vec<bool>) -> Self {
        self.causal = causal;
        self
    }

    pub fn with_window_left(mut self, window_left: Vec<usize>) -> Self {
        self.window_left = Some(window_left);
        self
    }

    pub fn rank(&self) -> usize {
        self.window.rank()
    }

    pub fn is_causal(&self) -> bool {
        self.causal.iter().any(|&c| c)
    }

    pub fn is_dilated(&self) -> bool {
        self.dilation.extents().iter().any(|&d| d > 1)
    }

    fn window_left_for(&self, axis: usize) -> Option<usize> {
        self.window_left.as_ref().map(|v| v[axis])
    }

    /// Checks the parameter invariants against a token layout.
    pub fn validate(&self, layout: &TokenLayout) -> Result<()> {
        validate(self, layout)
    }
}

/// Half-open token interval `[start, end)` on one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AxisWindow {
    pub start: usize,
    pub end: usize,
}

impl AxisWindow {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }
}

/// Validates `params` against `layout`, reporting the first offending axis.
pub fn validate(params: &GnaParams, layout: &TokenLayout) -> Result<()> {
    let rank = layout.extents.rank();
    params.window.ensure_rank("window", rank)?;
    params.stride.ensure_rank("stride", rank)?;
    params.dilation.ensure_rank("dilation", rank)?;
    if params.causal.len() != rank {
        return Err(GnaError::RankMismatch {
            what: "causal",
            expected: rank,
            found: params.causal.len(),
        });
    }
    if let Some(left) = &params.window_left {
        if left.len() != rank {
            return Err(GnaError::RankMismatch {
                what: "window_left",
                expected: rank,
                found: left.len(),
            });
        }
    }
    for axis in 0..rank {
        let (w, s, d) = (params.window[axis], params.stride[axis], params.dilation[axis]);
        let extent = layout.extents[axis];
        if s > w {
            return Err(GnaError::StrideExceedsWindow {
                axis,
                stride: s,
                window: w,
            });
        }
        if w * d > extent {
            return Err(GnaError::WindowExceedsExtent {
                axis,
                window: w,
                dilation: d,
                extent,
            });
        }
        if let Some(left) = params.window_left_for(axis) {
            if left >= w {
                return Err(GnaError::WindowLeftOutOfRange { axis, left, window: w });
            }
        }
    }
    Ok(())
}

/// Splits a window into tokens left and right of the center query.
///
/// Without an override the left side takes `floor(w/2)`, so even windows lean left.
pub fn split_window(window: usize, left_override: Option<usize>) -> Result<(usize, usize)> {
    if window == 0 {
        return Err(GnaError::ZeroValue {
            what: "window",
            axis: 0,
        });
    }
    let left = left_override.unwrap_or(window / 2);
    if left >= window {
        return Err(GnaError::WindowLeftOutOfRange { axis: 0, left, window });
    }
    Ok((left, window - 1 - left))
}

/// The query whose neighborhood the stride group of `i` shares: the center of
/// the group (right of center for even strides), clamped into the axis.
pub fn group_leader(i: usize, stride: usize, axis_len: usize) -> usize {
    debug_assert!(i < axis_len && stride > 0);
    ((i / stride) * stride + stride / 2).min(axis_len - 1)
}

/// Context window of query `i` on a single (undilated) axis.
pub fn axis_window(
    i: usize,
    axis_len: usize,
    window: usize,
    window_left: usize,
    stride: usize,
    causal: bool,
) -> AxisWindow {
    debug_assert!(window <= axis_len && window_left < window);
    let leader = group_leader(i, stride, axis_len);
    if causal {
        let start = (leader + 1).saturating_sub(window);
        let end = leader.min(i) + 1;
        AxisWindow { start, end }
    } else {
        let start = leader.saturating_sub(window_left).min(axis_len - window);
        AxisWindow {
            start,
            end: start + window,
        }
    }
}

/// Precomputed per-query windows for one axis, in class-local coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisMask {
    extent: usize,
    dilation: usize,
    windows: Vec<AxisWindow>,
}

impl AxisMask {
    fn build(extent: usize, window: usize, left: usize, stride: usize, dilation: usize, causal: bool) -> Self {
        let windows = (0..extent)
            .map(|i| {
                let class = i % dilation;
                let class_len = (extent - class).div_ceil(dilation);
                axis_window(i / dilation, class_len, window, left, stride, causal)
            })
            .collect();
        Self {
            extent,
            dilation,
            windows,
        }
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    /// Class-local window of query `i`.
    pub fn window(&self, i: usize) -> AxisWindow {
        self.windows[i]
    }

    pub fn attends(&self, q: usize, kv: usize) -> bool {
        let d = self.dilation;
        q % d == kv % d && self.windows[q].contains(kv / d)
    }

    /// Keys attended by query `q` on this axis, ascending.
    pub fn attended(&self, q: usize) -> impl Iterator<Item = usize> + '_ {
        let class = q % self.dilation;
        let w = self.windows[q];
        (w.start..w.end).map(move |j| class + j * self.dilation)
    }

    pub fn count(&self, q: usize) -> usize {
        self.windows[q].len()
    }

    /// Token interval spanned by the attended keys of `q`.
    pub fn span(&self, q: usize) -> AxisWindow {
        let class = q % self.dilation;
        let w = self.windows[q];
        AxisWindow {
            start: class + w.start * self.dilation,
            end: class + (w.end - 1) * self.dilation + 1,
        }
    }
}

/// Deliberate mask corruptions used to check that the verification suites
/// detect real bugs.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskFault {
    /// Right side computed as `w - w_left` instead of `w - 1 - w_left`.
    WindowLeftOffByOne,
}

/// A validated GNA mask over a concrete token layout.
#[derive(Debug, Clone)]
pub struct GnaMask {
    params: GnaParams,
    extents: Shape,
    axes: Vec<AxisMask>,
}

impl GnaMask {
    pub fn new(params: &GnaParams, layout: &TokenLayout) -> Result<Self> {
        validate(params, layout)?;
        let axes = (0..layout.extents.rank())
            .map(|a| {
                let w = params.window[a];
                let (left, _) = split_window(w, params.window_left_for(a)).expect("validated");
                AxisMask::build(
                    layout.extents[a],
                    w,
                    left,
                    params.stride[a],
                    params.dilation[a],
                    params.causal[a],
                )
            })
            .collect();
        Ok(Self {
            params: params.clone(),
            extents: layout.extents.clone(),
            axes,
        })
    }

    #[doc(hidden)]
    pub fn with_fault(mut self, fault: MaskFault) -> Self {
        match fault {
            MaskFault::WindowLeftOffByOne => {
                for axis in &mut self.axes {
                    let extent = axis.extent;
                    let d = axis.dilation;
                    for (i, w) in axis.windows.iter_mut().enumerate() {
                        let class_len = (extent - i % d).div_ceil(d);
                        w.end = (w.end + 1).min(class_len);
                    }
                }
            }
        }
        self
    }

    pub fn params(&self) -> &GnaParams {
        &self.params
    }

    pub fn extents(&self) -> &Shape {
        &self.extents
    }

    pub fn rank(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, axis: usize) -> &AxisMask {
        &self.axes[axis]
    }

    pub fn axes(&self) -> &[AxisMask] {
        &self.axes
    }

    pub fn token_count(&self) -> usize {
        self.extents.volume()
    }

    /// Whether query `q` attends key `kv`. Both must be in bounds.
    pub fn is_attended(&self, q: &Coord, kv: &Coord) -> bool {
        self.axes.iter().enumerate().all(|(a, m)| m.attends(q[a], kv[a]))
    }

    pub fn attended_count(&self, q: &Coord) -> usize {
        self.axes.iter().enumerate().map(|(a, m)| m.count(q[a])).product()
    }

    /// Calls `f` with the row-major index of every key attended by `q`.
    pub fn for_each_attended(&self, q: &Coord, mut f: impl FnMut(usize)) {
        let lists: Vec<Vec<usize>> = self
            .axes
            .iter()
            .enumerate()
            .map(|(a, m)| m.attended(q[a]).collect())
            .collect();
        let ext = self.extents.extents();
        match lists.len() {
            1 => lists[0].iter().for_each(|&x| f(x)),
            2 => {
                for &y in &lists[0] {
                    for &x in &lists[1] {
                        f(y * ext[1] + x);
                    }
                }
            }
            _ => {
                for &z in &lists[0] {
                    for &y in &lists[1] {
                        let base = (z * ext[1] + y) * ext[2];
                        for &x in &lists[2] {
                            f(base + x);
                        }
                    }
                }
            }
        }
    }

    /// Dense `(N, N)` boolean matrix indexed by row-major token indices.
    pub fn render(&self, cap: usize) -> Result<MaskMatrix> {
        let n = self.token_count();
        if n > cap {
            return Err(GnaError::CapExceeded {
                what: "mask rendering",
                tokens: n,
                cap,
            });
        }
        let mut matrix = MaskMatrix::new(n, n);
        for (row, q) in self.extents.iter_coords().enumerate() {
            self.for_each_attended(&q, |col| matrix.set(row, col, true));
        }
        Ok(matrix)
    }
}

/// Whether `q` attends `kv` under `params` on `layout`.
pub fn is_attended(q: &Coord, kv: &Coord, params: &GnaParams, layout: &TokenLayout) -> Result<bool> {
    let mask = GnaMask::new(params, layout)?;
    linearize(q, &layout.extents)?;
    linearize(kv, &layout.extents)?;
    Ok(mask.is_attended(q, kv))
}

/// Number of keys attended by `q`.
pub fn attended_count(q: &Coord, params: &GnaParams, layout: &TokenLayout) -> Result<usize> {
    let mask = GnaMask::new(params, layout)?;
    linearize(q, &layout.extents)?;
    Ok(mask.attended_count(q))
}

/// Renders the dense mask for `params` on `layout`, refusing layouts above `cap` tokens.
pub fn render_mask(params: &GnaParams, layout: &TokenLayout, cap: usize) -> Result<MaskMatrix> {
    GnaMask::new(params, layout)?.render(cap)
}

/// Row-major dense boolean matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl MaskMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[bool] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_count(&self, row: usize) -> usize {
        self.row(row).iter().filter(|&&b| b).count()
    }

    /// Appends `extra` always-attended columns.
    pub fn with_dense_columns(&self, extra: usize) -> Self {
        let cols = self.cols + extra;
        Self::from_fn(self.rows, cols, |r, c| c >= self.cols || self.get(r, c))
    }

    /// One line per row, `#` for attended and `.` for masked.
    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity(self.rows * (self.cols + 1));
        for r in 0..self.rows {
            out.extend(self.row(r).iter().map(|&b| if b { '#' } else { '.' }));
            out.push('\n');
        }
        out
    }

    /// Binary PGM (P5, maxval 255): 255 attended, 0 masked.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.cols, self.rows)?;
        let bytes: Vec<u8> = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        w.write_all(&bytes)
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_pgm(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}

/// Row-major token coordinate for index `i` of `mask`'s layout.
pub(crate) fn token(mask: &GnaMask, i: usize) -> Coord {
    delinearize(i, mask.extents()).expect("index within layout")
}
