//! Randomized self-checks over small configurations.
//!
//! Each suite draws `trials` configurations no larger than the bound layout
//! (the config's `layout.extents`, or 8×8) and checks one property against an
//! independent oracle. Suites draw from separate streams of one seed, so a
//! report depends only on the seed, the trial count, and the bound.

use std::collections::BTreeMap;

use clap::ValueEnum;
use gna_core::mask::MaskFault;
use gna_core::{
    gna_attention, masked_attention, merge_partials, permuted_order, simulate, simulate_bruteforce,
    simulate_flat_order, visited_counts, visited_tiles_bruteforce, visited_tiles_fast, Coord, GnaMask, GnaParams,
    KvMode, MaskMatrix, Rational, Shape, SmallTensorF64, TileConfig, TokenLayout,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// Structural suites stay below this many tokens; the bound is shrunk to fit.
pub const MAX_TOKENS: usize = 4096;
/// Numeric suites materialize an N×N mask.
pub const NUMERIC_MAX_TOKENS: usize = 256;
pub const NUMERIC_REL_TOL: f64 = 1e-10;
const DEFAULT_BOUND: [usize; 2] = [8, 8];
const MAX_EXAMPLES: usize = 3;

/// Corruptions injected into the masks under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Every window reaches one token further right.
    WindowLeftOffByOne,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    pub trials: usize,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyReport {
    pub seed: u64,
    pub trials: usize,
    pub bound: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub checked: usize,
    pub failed: usize,
    /// The first few failing configurations.
    pub examples: Vec<String>,
}

struct Tally {
    checked: usize,
    failed: usize,
    examples: Vec<String>,
}

impl Tally {
    fn new() -> Self {
        Self {
            checked: 0,
            failed: 0,
            examples: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failed += 1;
            if self.examples.len() < MAX_EXAMPLES {
                self.examples.push(what());
            }
        }
    }
}

type Suite = fn(&mut Gen, &mut Tally, Option<Fault>) -> Result<()>;

const SUITES: [(&str, Suite); 9] = [
    ("window-formula", window_formula),
    ("fixed-count", fixed_count),
    ("fast-vs-bruteforce", fast_vs_bruteforce),
    ("engines-agree", engines_agree),
    ("self-attention", self_attention),
    ("blocked", blocked),
    ("split-merge", split_merge),
    ("permutation", permutation),
    ("sandwich", sandwich),
];

pub fn run(config: &RunConfig, options: &VerifyOptions) -> Result<VerifyReport> {
    let bound = match &config.layout {
        Some(l) => l.extents.extents().to_vec(),
        None => DEFAULT_BOUND.to_vec(),
    };
    if options.trials == 0 {
        return Err(CliError::Invalid("trials must be positive".into()));
    }
    let mut suites = Vec::with_capacity(SUITES.len());
    for (stream, (name, suite)) in SUITES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(stream as u64);
        let mut gen = Gen { rng, bound: &bound };
        let mut tally = Tally::new();
        for _ in 0..options.trials {
            suite(&mut gen, &mut tally, options.fault)?;
        }
        suites.push(SuiteResult {
            name: name.to_string(),
            passed: tally.failed == 0,
            checked: tally.checked,
            failed: tally.failed,
            examples: tally.examples,
        });
    }
    Ok(VerifyReport {
        seed: options.seed,
        trials: options.trials,
        bound,
        fault: options.fault,
        passed: suites.iter().all(|s| s.passed),
        suites,
    })
}

fn shape(v: &[usize]) -> Shape {
    Shape::new(v.to_vec()).expect("generated shapes are valid")
}

fn divisors(e: usize) -> Vec<usize> {
    (1..=e).filter(|d| e.is_multiple_of(*d)).collect()
}

/// Random configurations inside the bound layout.
struct Gen<'a> {
    rng: ChaCha8Rng,
    bound: &'a [usize],
}

impl Gen<'_> {
    /// Extents drawn per axis, then the largest axis halved until the token
    /// count fits `max_tokens`.
    fn extents(&mut self, max_tokens: usize) -> Vec<usize> {
        let mut ext: Vec<usize> = self.bound.iter().map(|&b| self.rng.gen_range(1..=b)).collect();
        while ext.iter().product::<usize>() > max_tokens {
            let (axis, _) = ext.iter().enumerate().max_by_key(|&(_, &e)| e).expect("rank >= 1");
            ext[axis] = ext[axis].div_ceil(2);
        }
        ext
    }

    fn params(&mut self, ext: &[usize], dilate: bool, causal: bool) -> GnaParams {
        let rng = &mut self.rng;
        let dil: Vec<usize> = ext
            .iter()
            .map(|&e| {
                if dilate && rng.gen_bool(0.3) {
                    rng.gen_range(1..=e)
                } else {
                    1
                }
            })
            .collect();
        let win: Vec<usize> = ext.iter().zip(&dil).map(|(&e, &d)| rng.gen_range(1..=e / d)).collect();
        let stride: Vec<usize> = win.iter().map(|&w| rng.gen_range(1..=w)).collect();
        let flags: Vec<bool> = ext.iter().map(|_| causal && rng.gen_bool(0.3)).collect();
        let mut p = GnaParams::new(shape(&win))
            .with_stride(shape(&stride))
            .with_dilation(shape(&dil))
            .with_causal(flags);
        if rng.gen_bool(0.25) {
            let left: Vec<usize> = win.iter().map(|&w| rng.gen_range(0..w)).collect();
            p = p.with_window_left(left);
        }
        p
    }

    fn tiles(&mut self, ext: &[usize]) -> TileConfig {
        let rng = &mut self.rng;
        let tq: Vec<usize> = ext.iter().map(|&e| rng.gen_range(1..=e)).collect();
        let tk: Vec<usize> = ext.iter().map(|&e| rng.gen_range(1..=e)).collect();
        let kv_mode = if rng.gen_bool(0.5) {
            KvMode::Static
        } else {
            KvMode::Dynamic
        };
        TileConfig::new(shape(&tq), shape(&tk)).with_kv_mode(kv_mode)
    }

    fn dividing_tiles(&mut self, ext: &[usize]) -> TileConfig {
        let mut pick = |e: usize| {
            let divs = divisors(e);
            divs[self.rng.gen_range(0..divs.len())]
        };
        let tq: Vec<usize> = ext.iter().map(|&e| pick(e)).collect();
        let tk: Vec<usize> = ext.iter().map(|&e| pick(e)).collect();
        TileConfig::new(shape(&tq), shape(&tk))
    }

    fn tensor(&mut self, rows: usize, cols: usize) -> SmallTensorF64 {
        SmallTensorF64::from_fn(rows, cols, |_, _| self.rng.gen_range(-2.0..2.0)).expect("finite")
    }
}

fn mask_under_test(params: &GnaParams, layout: &TokenLayout, fault: Option<Fault>) -> Result<GnaMask> {
    let mask = GnaMask::new(params, layout)?;
    Ok(match fault {
        Some(Fault::WindowLeftOffByOne) => mask.with_fault(MaskFault::WindowLeftOffByOne),
        None => mask,
    })
}

/// Keys of class-local query `j` on an axis of `n` class tokens, from the
/// neighborhood definition: a non-causal window is the in-bounds placement of
/// `w` keys that puts the leader closest to `left` keys from its start; a
/// causal window keeps keys at most `w - 1` behind the leader and not after
/// the query.
fn window_oracle(j: usize, n: usize, w: usize, left: usize, s: usize, causal: bool) -> (usize, usize) {
    let leader = ((j / s) * s + s / 2).min(n - 1);
    if causal {
        let keys: Vec<usize> = (0..n).filter(|&k| k <= leader.min(j) && leader < k + w).collect();
        return (keys[0], keys[keys.len() - 1] + 1);
    }
    let start = (0..=n - w)
        .min_by_key(|&start| (start + left).abs_diff(leader))
        .expect("window fits the axis");
    (start, start + w)
}

fn window_formula(g: &mut Gen, t: &mut Tally, fault: Option<Fault>) -> Result<()> {
    let ext = g.extents(MAX_TOKENS);
    let layout = TokenLayout::new(shape(&ext));
    let params = g.params(&ext, true, true);
    let mask = mask_under_test(&params, &layout, fault)?;
    let mut mismatch = None;
    'axes: for (a, &extent) in ext.iter().enumerate() {
        let (w, s, d) = (params.window[a], params.stride[a], params.dilation[a]);
        let left = params.window_left.as_ref().map_or(w / 2, |l| l[a]);
        for i in 0..extent {
            let n = (extent - i % d).div_ceil(d);
            let want = window_oracle(i / d, n, w, left, s, params.causal[a]);
            let got = mask.axis(a).window(i);
            if (got.start, got.end) != want {
                mismatch = Some(format!("axis {a} query {i}: got {got:?}, want {want:?}"));
                break 'axes;
            }
        }
    }
    t.check(mismatch.is_none(), || {
        format!("{ext:?} {params:?}: {}", mismatch.unwrap_or_default())
    });
    Ok(())
}

fn fixed_count(g: &mut Gen, t: &mut Tally, fault: Option<Fault>) -> Result<()> {
    let ext = g.extents(MAX_TOKENS);
    let layout = TokenLayout::new(shape(&ext));
    let params = g.params(&ext, true, false);
    let mask = mask_under_test(&params, &layout, fault)?;
    let expected = params.window.volume();
    let keys: Vec<Coord> = layout.extents.iter_coords().collect();
    let all = keys.iter().all(|q| mask.attended_count(q) == expected);
    let sampled = (0..4).all(|_| {
        let q = &keys[g.rng.gen_range(0..keys.len())];
        keys.iter().filter(|k| mask.is_attended(q, k)).count() == expected
    });
    t.check(all && sampled, || format!("{ext:?} {params:?}"));
    Ok(())
}

fn fast_vs_bruteforce(g: &mut Gen, t: &mut Tally, _: Option<Fault>) -> Result<()> {
    let ext = g.extents(MAX_TOKENS);
    let layout = TokenLayout::new(shape(&ext));
    let params = g.params(&ext, false, true);
    let tiles = g.tiles(&ext);
    let fast = visited_tiles_fast(&layout, &params, &tiles)?;
    let brute: BTreeMap<Coord, usize> = visited_tiles_bruteforce(&layout, &params, &tiles, MAX_TOKENS)?
        .into_iter()
        .map(|(q, kv)| (q, kv.len()))
        .collect();
    t.check(fast == brute, || format!("{ext:?} {params:?} {tiles:?}"));
    Ok(())
}

fn engines_agree(g: &mut Gen, t: &mut Tally, _: Option<Fault>) -> Result<()> {
    let ext = g.extents(MAX_TOKENS);
    let layout = TokenLayout::new(shape(&ext)).with_extra_kv(g.rng.gen_range(0..3) * 3);
    let params = g.params(&ext, true, true);
    let tiles = g.tiles(&ext);
    let factorized = simulate(&layout, &params, &tiles)?;
    let brute = simulate_bruteforce(&layout, &params, &tiles, MAX_TOKENS)?;
    t.check(factorized == brute, || format!("{layout:?} {params:?} {tiles:?}"));
    Ok(())
}

/// `max |a - b| / max |b|`.
fn rel_err(a: &SmallTensorF64, b: &SmallTensorF64) -> f64 {
    let scale = b
        .data()
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    a.data()
        .iter()
        .zip(b.data())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

struct Qkv {
    layout: TokenLayout,
    q: SmallTensorF64,
    k: SmallTensorF64,
    v: SmallTensorF64,
}

fn qkv(g: &mut Gen) -> Qkv {
    let ext = g.extents(NUMERIC_MAX_TOKENS);
    let layout = TokenLayout::new(shape(&ext));
    let n = layout.token_count();
    let d = g.rng.gen_range(1..=8);
    Qkv {
        layout,
        q: g.tensor(n, d),
        k: g.tensor(n, d),
        v: g.tensor(n, d),
    }
}

fn self_attention(g: &mut Gen, t: &mut Tally, _: Option<Fault>) -> Result<()> {
    let Qkv { layout, q, k, v } = qkv(g);
    let ext = layout.extents.extents().to_vec();
    let stride: Vec<usize> = ext.iter().map(|&e| g.rng.gen_range(1..=e)).collect();
    let params = GnaParams::new(shape(&ext)).with_stride(shape(&stride));
    let n = layout.token_count();
    let got = gna_attention(&q, &k, &v, &layout, &params, None)?;
    let want = masked_attention(&q, &k, &v, &MaskMatrix::from_fn(n, n, |_, _| true), None)?;
    let e = rel_err(&got.output, &want.output);
    t.check(e <= NUMERIC_REL_TOL, || format!("{ext:?} stride {stride:?}: {e:e}"));
    Ok(())
}

/// Stride equal to a window that divides the extent is attention inside
/// independent blocks.
fn blocked(g: &mut Gen, t: &mut Tally, _: Option<Fault>) -> Result<()> {
    let Qkv { layout, q, k, v } = qkv(g);
    let ext = layout.extents.extents().to_vec();
    let win: Vec<usize> = ext
        .iter()
        .map(|&e| {
            let divs = divisors(e);
            divs[g.rng.gen_range(0..divs.len())]
        })
        .collect();
    let params = GnaParams::new(shape(&win)).with_stride(shape(&win));
    let got = gna_attention(&q, &k, &v, &layout, &params, None)?.output;

    let mut blocks: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (i, c) in layout.extents.iter_coords().enumerate() {
        blocks
            .entry((0..ext.len()).map(|a| c[a] / win[a]).collect())
            .or_default()
            .push(i);
    }
    let gather = |x: &SmallTensorF64, rows: &[usize]| {
        SmallTensorF64::from_fn(rows.len(), x.cols(), |r, c| x.get(rows[r], c)).expect("finite")
    };
    let cols = got.cols();
    let mut want = vec![0.0; got.rows() * cols];
    for members in blocks.values() {
        let m = members.len();
        let out = masked_attention(
            &gather(&q, members),
            &gather(&k, members),
            &gather(&v, members),
            &MaskMatrix::from_fn(m, m, |_, _| true),
            None,
        )?
        .output;
        for (r, &row) in members.iter().enumerate() {
            want[row * cols..(row + 1) * cols].copy_from_slice(out.row(r));
        }
    }
    let e = rel_err(&got, &SmallTensorF64::new(got.rows(), cols, want)?);
    t.check(e <= NUMERIC_REL_TOL, || format!("{ext:?} window {win:?}: {e:e}"));
    Ok(())
}

/// Attention over a random split of each row's keys, merged by logsumexp,
/// equals attention over all of them. Parameters are redrawn until every
/// row has two keys to split; single-token layouts are skipped.
fn split_merge(g: &mut Gen, t: &mut Tally, _: Option<Fault>) -> Result<()> {
    let Qkv { layout, q, k, v } = qkv(g);
    let ext = layout.extents.extents().to_vec();
    let mut params = GnaParams::new(shape(&ext));
    for _ in 0..50 {
        let p = g.params(&ext, true, true);
        let mask = GnaMask::new(&p, &layout)?;
        if layout.extents.iter_coords().all(|c| mask.attended_count(&c) >= 2) {
            params = p;
            break;
        }
    }
    let mask = GnaMask::new(&params, &layout)?.render(NUMERIC_MAX_TOKENS)?;
    if (0..mask.rows()).any(|i| mask.row_count(i) < 2) {
        return Ok(());
    }
    let (mut a, mut b) = (
        MaskMatrix::new(mask.rows(), mask.cols()),
        MaskMatrix::new(mask.rows(), mask.cols()),
    );
    for i in 0..mask.rows() {
        let keys: Vec<usize> = (0..mask.cols()).filter(|&j| mask.get(i, j)).collect();
        let pivot = g.rng.gen_range(1..keys.len());
        for (n, &j) in keys.iter().enumerate() {
            let first = n == 0 || (n != pivot && g.rng.gen_bool(0.5));
            if first {
                a.set(i, j, true);
            } else {
                b.set(i, j, true);
            }
        }
    }
    let merged = merge_partials(
        &masked_attention(&q, &k, &v, &a, None)?,
        &masked_attention(&q, &k, &v, &b, None)?,
    )?;
    let full = masked_attention(&q, &k, &v, &mask, None)?;
    let lse_err = merged
        .lse
        .iter()
        .zip(&full.lse)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0f64, f64::max);
    let e = rel_err(&merged.output, &full.output).max(lse_err);
    t.check(e <= NUMERIC_REL_TOL, || format!("{ext:?} {params:?}: {e:e}"));
    Ok(())
}

/// One-dimensional tiling of the tile-permuted token order reproduces
/// multi-dimensional tiling, report and per-tile counts alike.
fn permutation(g: &mut Gen, t: &mut Tally, _: Option<Fault>) -> Result<()> {
    let ext = g.extents(MAX_TOKENS);
    let layout = TokenLayout::new(shape(&ext)).with_extra_kv(g.rng.gen_range(0..3) * 5);
    let params = g.params(&ext, false, true);
    let tiles = g.dividing_tiles(&ext);
    let multi = simulate(&layout, &params, &tiles)?;
    let multi_counts: Vec<usize> = visited_counts(&layout, &params, &tiles)?.into_values().collect();
    let order = permuted_order(&layout.extents, &tiles.q_tile, &tiles.kv_tile)?;
    let (flat, flat_counts) = simulate_flat_order(
        &layout,
        &params,
        tiles.flat_q(),
        tiles.flat_kv(),
        KvMode::Static,
        &order,
        MAX_TOKENS,
    )?;
    t.check(multi == flat && multi_counts == flat_counts, || {
        format!("{ext:?} {params:?} {tiles:?}")
    });
    Ok(())
}

/// `1 <= simulated <= flopwise` when tiles divide the layout and extra
/// context fills whole KV tiles. Padding can break the upper bound.
fn sandwich(g: &mut Gen, t: &mut Tally, _: Option<Fault>) -> Result<()> {
    let ext = g.extents(MAX_TOKENS);
    let params = g.params(&ext, true, false);
    let mut tiles = g.dividing_tiles(&ext);
    if g.rng.gen_bool(0.5) {
        tiles = tiles.with_kv_mode(KvMode::Dynamic);
    }
    let layout = TokenLayout::new(shape(&ext)).with_extra_kv(g.rng.gen_range(0..3) * tiles.flat_kv());
    let r = simulate(&layout, &params, &tiles)?;
    let one = Rational::from_integer(1);
    t.check(
        one <= r.simulated_speedup && r.simulated_speedup <= r.flopwise_speedup,
        || format!("{layout:?} {params:?} {tiles:?}"),
    );
    Ok(())
}
