//! Naive masked attention used as a numeric oracle for mask semantics.
//!
//! Single head, single batch, quadratic. Generic over the float type; the
//! crate-root aliases fix it to `f64`.

use num_traits::Float;

use crate::error::{GnaError, Result};
use crate::mask::{GnaMask, GnaParams, MaskMatrix, DEFAULT_RENDER_CAP};
use crate::sim::TokenLayout;

/// Row-major matrix of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallTensor<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Float> SmallTensor<F> {
    pub fn new(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(GnaError::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} tensor",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(GnaError::NonFinite("tensor entry"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Result<Self> {
        let data = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    /// Rows `range` as a new tensor.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            rows: range.len(),
            cols: self.cols,
            data: self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        }
    }

    /// Largest `|a - b| / max(|b|, floor)` over all entries.
    pub fn max_relative_error(&self, reference: &Self, floor: F) -> F {
        self.data
            .iter()
            .zip(&reference.data)
            .map(|(&a, &b)| (a - b).abs() / b.abs().max(floor))
            .fold(F::zero(), F::max)
    }
}

/// Attention output with the per-row log-sum-exp of the scaled logits.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnPartial<F> {
    pub output: SmallTensor<F>,
    pub lse: Vec<F>,
}

fn check_operands<F>(q: &SmallTensor<F>, k: &SmallTensor<F>, v: &SmallTensor<F>, mask: &MaskMatrix) -> Result<()> {
    if q.cols != k.cols {
        return Err(GnaError::ShapeMismatch(format!(
            "q has head dim {}, k has {}",
            q.cols, k.cols
        )));
    }
    if k.rows != v.rows {
        return Err(GnaError::ShapeMismatch(format!(
            "k has {} rows, v has {}",
            k.rows, v.rows
        )));
    }
    if mask.rows() != q.rows || mask.cols() != k.rows {
        return Err(GnaError::ShapeMismatch(format!(
            "mask is {}x{}, attention is {}x{}",
            mask.rows(),
            mask.cols(),
            q.rows,
            k.rows
        )));
    }
    Ok(())
}

/// `1 / sqrt(head_dim)`.
pub fn default_scale<F: Float>(head_dim: usize) -> F {
    F::from(head_dim).expect("head dim fits the float type").sqrt().recip()
}

fn resolve_scale<F: Float>(scale: Option<F>, head_dim: usize) -> Result<F> {
    let s = scale.unwrap_or_else(|| default_scale(head_dim));
    if !s.is_finite() {
        return Err(GnaError::NonFinite("scale"));
    }
    if s <= F::zero() {
        return Err(GnaError::NonPositive("scale"));
    }
    Ok(s)
}

/// Per-row `(max logit, unmasked columns, logits)`.
fn row_logits<F: Float>(
    q: &SmallTensor<F>,
    k: &SmallTensor<F>,
    mask: &MaskMatrix,
    scale: F,
    i: usize,
) -> Result<(F, Vec<(usize, F)>)> {
    let qi = q.row(i);
    let logits: Vec<(usize, F)> = (0..k.rows)
        .filter(|&j| mask.get(i, j))
        .map(|j| {
            let dot = qi.iter().zip(k.row(j)).fold(F::zero(), |acc, (&a, &b)| acc + a * b);
            (j, scale * dot)
        })
        .collect();
    let m = logits
        .iter()
        .map(|&(_, l)| l)
        .fold(None, |acc: Option<F>, l| Some(acc.map_or(l, |a| a.max(l))))
        .ok_or(GnaError::FullyMaskedRow { row: i })?;
    Ok((m, logits))
}

/// Softmax weights over unmasked keys (`q.rows × k.rows`).
pub fn attention_weights<F: Float>(
    q: &SmallTensor<F>,
    k: &SmallTensor<F>,
    mask: &MaskMatrix,
    scale: Option<F>,
) -> Result<SmallTensor<F>> {
    check_operands(q, k, k, mask)?;
    let scale = resolve_scale(scale, q.cols)?;
    let mut out = SmallTensor::zeros(q.rows, k.rows);
    for i in 0..q.rows {
        let (m, logits) = row_logits(q, k, mask, scale, i)?;
        let total = logits.iter().fold(F::zero(), |acc, &(_, l)| acc + (l - m).exp());
        for (j, l) in logits {
            out.data[i * k.rows + j] = (l - m).exp() / total;
        }
    }
    Ok(out)
}

/// Softmax attention restricted to the `true` entries of `mask`.
///
/// `scale` defaults to `1 / sqrt(head_dim)`. Every query row must attend at
/// least one key.
pub fn masked_attention<F: Float>(
    q: &SmallTensor<F>,
    k: &SmallTensor<F>,
    v: &SmallTensor<F>,
    mask: &MaskMatrix,
    scale: Option<F>,
) -> Result<AttnPartial<F>> {
    check_operands(q, k, v, mask)?;
    let scale = resolve_scale(scale, q.cols)?;
    let mut output = SmallTensor::zeros(q.rows, v.cols);
    let mut lse = Vec::with_capacity(q.rows);
    for i in 0..q.rows {
        let (m, logits) = row_logits(q, k, mask, scale, i)?;
        let mut total = F::zero();
        let out = &mut output.data[i * v.cols..(i + 1) * v.cols];
        for (j, l) in logits {
            let w = (l - m).exp();
            total = total + w;
            for (o, &x) in out.iter_mut().zip(v.row(j)) {
                *o = *o + w * x;
            }
        }
        for o in out.iter_mut() {
            *o = *o / total;
        }
        lse.push(m + total.ln());
    }
    Ok(AttnPartial { output, lse })
}

/// GNA attention by mask materialization.
///
/// `q` holds one row per layout token; `k`/`v` additionally hold
/// `layout.extra_kv` trailing rows that every query attends.
pub fn gna_attention<F: Float>(
    q: &SmallTensor<F>,
    k: &SmallTensor<F>,
    v: &SmallTensor<F>,
    layout: &TokenLayout,
    params: &GnaParams,
    scale: Option<F>,
) -> Result<AttnPartial<F>> {
    let n = layout.token_count();
    if q.rows != n || k.rows != n + layout.extra_kv {
        return Err(GnaError::ShapeMismatch(format!(
            "layout needs {n} query rows and {} key rows, got {} and {}",
            n + layout.extra_kv,
            q.rows,
            k.rows
        )));
    }
    let mask = GnaMask::new(params, layout)?.render(DEFAULT_RENDER_CAP)?;
    masked_attention(q, k, v, &mask.with_dense_columns(layout.extra_kv), scale)
}

/// Combines attention over two disjoint key sets into attention over their union.
pub fn merge_partials<F: Float>(a: &AttnPartial<F>, b: &AttnPartial<F>) -> Result<AttnPartial<F>> {
    let (oa, ob) = (&a.output, &b.output);
    if oa.rows != ob.rows || oa.cols != ob.cols || a.lse.len() != oa.rows || b.lse.len() != ob.rows {
        return Err(GnaError::ShapeMismatch(format!(
            "cannot merge {}x{} with {}x{}",
            oa.rows, oa.cols, ob.rows, ob.cols
        )));
    }
    let mut output = SmallTensor::zeros(oa.rows, oa.cols);
    let mut lse = Vec::with_capacity(oa.rows);
    for i in 0..oa.rows {
        let m = a.lse[i].max(b.lse[i]);
        let wa = (a.lse[i] - m).exp();
        let wb = (b.lse[i] - m).exp();
        let total = wa + wb;
        for c in 0..oa.cols {
            output.data[i * oa.cols + c] = (wa * oa.get(i, c) + wb * ob.get(i, c)) / total;
        }
        lse.push(m + total.ln());
    }
    Ok(AttnPartial { output, lse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coords::Shape;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(rows: usize, cols: usize, data: &[f64]) -> SmallTensor<f64> {
        SmallTensor::new(rows, cols, data.to_vec()).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> SmallTensor<f64> {
        SmallTensor::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0)).unwrap()
    }

    fn full(rows: usize, cols: usize) -> MaskMatrix {
        MaskMatrix::from_fn(rows, cols, |_, _| true)
    }

    #[test]
    fn single_key() {
        let r = masked_attention(
            &t(1, 1, &[1.0]),
            &t(1, 1, &[1.0]),
            &t(1, 1, &[7.0]),
            &full(1, 1),
            Some(1.0),
        )
        .unwrap();
        assert_eq!(r.output.data(), &[7.0]);
        assert_eq!(r.lse, vec![1.0]);
    }

    #[test]
    fn identical_keys_average() {
        let k = t(2, 1, &[0.5, 0.5]);
        let r = masked_attention(&t(1, 1, &[1.0]), &k, &t(2, 1, &[1.0, 3.0]), &full(1, 2), None).unwrap();
        assert_relative_eq!(r.output.get(0, 0), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn errors() {
        let q = t(1, 1, &[1.0]);
        let empty = MaskMatrix::new(1, 1);
        assert_eq!(
            masked_attention(&q, &q, &q, &empty, None),
            Err(GnaError::FullyMaskedRow { row: 0 })
        );
        assert!(matches!(
            masked_attention(&q, &t(1, 2, &[1.0, 2.0]), &q, &full(1, 1), None),
            Err(GnaError::ShapeMismatch(_))
        ));
        assert!(matches!(
            SmallTensor::new(1, 1, vec![f64::NAN]),
            Err(GnaError::NonFinite(_))
        ));
        assert!(matches!(
            masked_attention(&q, &q, &q, &full(1, 1), Some(-1.0)),
            Err(GnaError::NonPositive(_))
        ));
    }

    #[test]
    fn weights_are_row_stochastic_and_outputs_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layout = TokenLayout::new(Shape::new(vec![4, 5]).unwrap());
        let params = GnaParams::new(Shape::new(vec![3, 3]).unwrap()).with_stride(Shape::new(vec![2, 1]).unwrap());
        let mask = GnaMask::new(&params, &layout).unwrap().render(64).unwrap();
        let (q, k, v) = (
            random(&mut rng, 20, 4),
            random(&mut rng, 20, 4),
            random(&mut rng, 20, 3),
        );
        let w = attention_weights(&q, &k, &mask, None).unwrap();
        let out = masked_attention(&q, &k, &v, &mask, None).unwrap();
        for i in 0..20 {
            let s: f64 = w.row(i).iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
            for c in 0..3 {
                let col = (0..20).filter(|&j| mask.get(i, j)).map(|j| v.get(j, c));
                let lo = col.clone().fold(f64::INFINITY, f64::min);
                let hi = col.fold(f64::NEG_INFINITY, f64::max);
                let x = out.output.get(i, c);
                assert!(lo - 1e-12 <= x && x <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn merge_identical_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (q, k, v) = (random(&mut rng, 3, 2), random(&mut rng, 4, 2), random(&mut rng, 4, 2));
        let x = masked_attention(&q, &k, &v, &full(3, 4), None).unwrap();
        let m = merge_partials(&x, &x).unwrap();
        assert!(m.output.max_relative_error(&x.output, 1e-300) <= 1e-15);
        for (a, b) in m.lse.iter().zip(&x.lse) {
            assert_relative_eq!(*a, b + 2f64.ln(), epsilon = 1e-14);
        }
    }

    #[test]
    fn gna_with_extra_keys_matches_direct_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layout = TokenLayout::new(Shape::new(vec![8]).unwrap()).with_extra_kv(3);
        let params = GnaParams::new(Shape::new(vec![3]).unwrap());
        let (q, k, v) = (random(&mut rng, 8, 4), random(&mut rng, 11, 4), random(&mut rng, 11, 2));
        let got = gna_attention(&q, &k, &v, &layout, &params, None).unwrap();
        let mask = MaskMatrix::from_fn(8, 11, |i, j| {
            let start = i.saturating_sub(1).min(5);
            j >= 8 || (start..start + 3).contains(&j)
        });
        assert_eq!(got, masked_attention(&q, &k, &v, &mask, None).unwrap());
    }

    #[test]
    fn generic_over_f32() {
        let q = SmallTensor::<f32>::new(1, 1, vec![1.0]).unwrap();
        let v = SmallTensor::<f32>::new(2, 1, vec![1.0, 3.0]).unwrap();
        let k = SmallTensor::<f32>::new(2, 1, vec![0.0, 0.0]).unwrap();
        let r = masked_attention(&q, &k, &v, &full(1, 2), None).unwrap();
        assert!((r.output.get(0, 0) - 2.0).abs() < 1e-6);
    }
}
