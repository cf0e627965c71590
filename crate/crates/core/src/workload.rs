//! End-to-end speedup from an operation-level speedup (Amdahl composition).

use crate::coords::Shape;
use crate::error::{GnaError, Result};
use crate::mask::{validate, GnaParams};
use crate::scalar::{ratio, Rational, Scalar};
use crate::sim::{TileConfig, TokenLayout};

/// Share of runtime spent in self-attention and how many denoising steps
/// run sparse attention.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadModel<T> {
    sa_share: T,
    total_steps: u64,
    sparse_steps: u64,
}

impl<T: Scalar> WorkloadModel<T> {
    pub fn new(sa_share: T, total_steps: u64, sparse_steps: u64) -> Result<Self> {
        if !(sa_share > T::zero() && sa_share <= T::one()) {
            return Err(GnaError::InvalidModel(format!(
                "self-attention share {sa_share:?} is outside (0, 1]"
            )));
        }
        if total_steps == 0 {
            return Err(GnaError::InvalidModel("total_steps must be positive".into()));
        }
        if sparse_steps > total_steps {
            return Err(GnaError::InvalidModel(format!(
                "sparse_steps {sparse_steps} exceeds total_steps {total_steps}"
            )));
        }
        Ok(Self {
            sa_share,
            total_steps,
            sparse_steps,
        })
    }

    pub fn sa_share(&self) -> &T {
        &self.sa_share
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn sparse_steps(&self) -> u64 {
        self.sparse_steps
    }

    /// Limit of [`e2e_speedup`] as the operation speedup grows without bound.
    pub fn speedup_ceiling(&self) -> Option<T> {
        let p = self.sa_share.clone();
        let sparse = T::from_u64(self.sparse_steps) / T::from_u64(self.total_steps);
        let denom = T::one() - p * sparse;
        (denom > T::zero()).then(|| T::one() / denom)
    }
}

/// `1 / ((1 - p) + p·((T - k)/T + (k/T)/s_op))`.
pub fn e2e_speedup<T: Scalar>(s_op: &T, model: &WorkloadModel<T>) -> Result<T> {
    if *s_op < T::one() {
        return Err(GnaError::InvalidModel(format!("operation speedup {s_op:?} is below 1")));
    }
    let p = model.sa_share.clone();
    let total = T::from_u64(model.total_steps);
    let sparse = T::from_u64(model.sparse_steps) / total.clone();
    let dense = T::from_u64(model.total_steps - model.sparse_steps) / total;
    let attention = dense + sparse / s_op.clone();
    Ok(T::one() / ((T::one() - p.clone()) + p * attention))
}

fn attended_context(params: &GnaParams, layout: &TokenLayout) -> Result<u128> {
    validate(params, layout)?;
    if params.is_causal() {
        return Err(GnaError::UnsupportedMode(
            "sparsity is defined for non-causal masks only".into(),
        ));
    }
    Ok(params.window.extents().iter().map(|&w| w as u128).product())
}

/// `1 - (Π window + extra_kv) / (N + extra_kv)`.
pub fn sparsity(params: &GnaParams, layout: &TokenLayout) -> Result<Rational> {
    Ok(Rational::from_integer(1) - density(params, layout)?)
}

/// `1 / (1 - sparsity)`.
pub fn flopwise_speedup(params: &GnaParams, layout: &TokenLayout) -> Result<Rational> {
    Ok(density(params, layout)?.recip())
}

fn density(params: &GnaParams, layout: &TokenLayout) -> Result<Rational> {
    let attended = attended_context(params, layout)?;
    let extra = layout.extra_kv as u128;
    Ok(ratio(attended + extra, layout.token_count() as u128 + extra))
}

/// Reference configurations for three video/image generation models.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub layout: TokenLayout,
    pub tiles: TileConfig,
    pub sa_share: Rational,
    pub total_steps: u64,
    /// Steps that keep full self-attention.
    pub dense_steps: u64,
}

impl Preset {
    /// The workload with sparse attention on every step (`all_steps`) or
    /// only on the steps after `dense_steps`.
    pub fn model(&self, all_steps: bool) -> WorkloadModel<Rational> {
        let sparse = if all_steps {
            self.total_steps
        } else {
            self.total_steps - self.dense_steps
        };
        WorkloadModel::new(self.sa_share, self.total_steps, sparse).expect("preset is valid")
    }
}

fn preset(
    name: &'static str,
    extents: &[usize],
    q_tile: &[usize],
    kv_tile: &[usize],
    share_permille: u128,
    total_steps: u64,
    dense_steps: u64,
) -> Preset {
    let shape = |v: &[usize]| Shape::new(v.to_vec()).expect("preset shape");
    Preset {
        name,
        layout: TokenLayout::new(shape(extents)),
        tiles: TileConfig::new(shape(q_tile), shape(kv_tile)),
        sa_share: ratio(share_permille, 1000),
        total_steps,
        dense_steps,
    }
}

/// Cosmos-7B text-to-world: 16×44×80 tokens.
pub fn cosmos() -> Preset {
    preset("cosmos", &[16, 44, 80], &[8, 4, 8], &[4, 4, 8], 587, 35, 12)
}

/// HunyuanVideo: 30×48×80 tokens.
pub fn hunyuan() -> Preset {
    preset("hunyuan", &[30, 48, 80], &[4, 8, 8], &[2, 8, 8], 607, 50, 15)
}

/// FLUX.1-dev at 4K: 256×256 tokens.
pub fn flux() -> Preset {
    preset("flux", &[256, 256], &[16, 16], &[16, 8], 518, 28, 9)
}

pub fn presets() -> [Preset; 3] {
    [cosmos(), hunyuan(), flux()]
}

pub fn preset_by_name(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{format_decimal, parse_rational};

    fn q(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    fn shape(v: &[usize]) -> Shape {
        Shape::new(v.to_vec()).unwrap()
    }

    fn cell(s_op: Rational, p: &str, t: u64, k: u64) -> String {
        let m = WorkloadModel::new(q(p), t, k).unwrap();
        format_decimal(&e2e_speedup(&s_op, &m).unwrap(), 2)
    }

    #[test]
    fn e2e_examples() {
        assert_eq!(cell(ratio(100, 9), "0.607", 50, 35), "1.63");
        assert_eq!(cell(q("2.2917"), "0.587", 35, 23), "1.28");
        assert_eq!(cell(ratio(900, 275), "0.607", 50, 35), "1.42");
        let m = WorkloadModel::new(q("0.3"), 10, 4).unwrap();
        assert_eq!(e2e_speedup(&ratio(1, 1), &m).unwrap(), ratio(1, 1));
    }

    #[test]
    fn e2e_identity_when_all_attention() {
        let m = WorkloadModel::new(ratio(1, 1), 7, 7).unwrap();
        for s in [ratio(1, 1), ratio(7, 3), ratio(100, 9)] {
            assert_eq!(e2e_speedup(&s, &m).unwrap(), s);
        }
    }

    #[test]
    fn e2e_monotone_and_bounded() {
        let m = WorkloadModel::new(q("0.607"), 50, 35).unwrap();
        let ceiling = m.speedup_ceiling().unwrap();
        assert_eq!(format_decimal(&ceiling, 2), "1.74");
        let mut prev = ratio(0, 1);
        for n in 1..60u128 {
            let e = e2e_speedup(&ratio(n, 1), &m).unwrap();
            assert!(e > prev || n == 1);
            assert!(e < ceiling);
            prev = e;
        }
        let s = ratio(3, 1);
        let lo = e2e_speedup(&s, &WorkloadModel::new(q("0.5"), 50, 35).unwrap()).unwrap();
        let hi = e2e_speedup(&s, &WorkloadModel::new(q("0.6"), 50, 35).unwrap()).unwrap();
        assert!(lo < hi);
        let more = e2e_speedup(&s, &WorkloadModel::new(q("0.5"), 50, 40).unwrap()).unwrap();
        assert!(lo < more);
    }

    #[test]
    fn e2e_generic_over_floats() {
        let exact = e2e_speedup(&ratio(100, 9), &WorkloadModel::new(q("0.607"), 50, 35).unwrap()).unwrap();
        let m = WorkloadModel::new(0.607f64, 50, 35).unwrap();
        let e = e2e_speedup(&(100.0 / 9.0), &m).unwrap();
        assert!((e - exact.to_f64_lossy()).abs() < 1e-12);
        let m32 = WorkloadModel::new(0.607f32, 50, 35).unwrap();
        assert!((e2e_speedup(&(100.0f32 / 9.0), &m32).unwrap() - e as f32).abs() < 1e-5);
    }

    #[test]
    fn model_validation() {
        assert!(WorkloadModel::new(ratio(0, 1), 10, 1).is_err());
        assert!(WorkloadModel::new(q("1.1"), 10, 1).is_err());
        assert!(WorkloadModel::new(q("0.5"), 0, 0).is_err());
        assert!(WorkloadModel::new(q("0.5"), 10, 11).is_err());
        let m = WorkloadModel::new(q("0.5"), 10, 5).unwrap();
        assert!(e2e_speedup(&q("0.9"), &m).is_err());
    }

    #[test]
    fn sparsity_examples() {
        let s = |w: &[usize], l: &[usize]| sparsity(&GnaParams::new(shape(w)), &TokenLayout::new(shape(l))).unwrap();
        assert_eq!(s(&[18, 24, 24], &[30, 48, 80]), ratio(91, 100));
        assert_eq!(
            format_decimal(&(s(&[16, 32, 48], &[16, 44, 80]) * ratio(100, 1)), 1),
            "56.4"
        );
        assert_eq!(format_decimal(&(s(&[80, 80], &[256, 256]) * ratio(100, 1)), 1), "90.2");
        let f = flopwise_speedup(&GnaParams::new(shape(&[80, 80])), &TokenLayout::new(shape(&[256, 256]))).unwrap();
        assert_eq!(f, ratio(1024, 100));
        assert_eq!(s(&[4, 4], &[4, 4]), ratio(0, 1));
    }

    #[test]
    fn sparsity_with_extra_context_and_rejections() {
        let l = TokenLayout::new(shape(&[10])).with_extra_kv(10);
        let p = GnaParams::new(shape(&[5]));
        assert_eq!(sparsity(&p, &l).unwrap(), ratio(1, 4));
        let causal = p.clone().with_causal(vec![true]);
        assert!(matches!(sparsity(&causal, &l), Err(GnaError::UnsupportedMode(_))));
        let too_big = GnaParams::new(shape(&[11]));
        assert!(sparsity(&too_big, &l).is_err());
    }

    #[test]
    fn presets_are_consistent() {
        for p in presets() {
            p.tiles.validate(&p.layout).unwrap();
            assert!(p.model(true).sparse_steps() == p.total_steps);
            assert!(p.model(false).sparse_steps() < p.total_steps);
            assert_eq!(preset_by_name(p.name), Some(p.clone()));
        }
    }
}
