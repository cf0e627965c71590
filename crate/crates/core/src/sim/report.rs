//! Stable JSON and CSV forms of a [`SimReport`].

use serde::{Deserialize, Serialize};

use crate::scalar::{format_decimal, rounded_f64, Rational};

use super::SimReport;

/// CSV columns following the per-axis `stride_<i>` columns.
pub const CSV_FIXED_COLUMNS: [&str; 7] = [
    "dense_kv_tiles",
    "visited_max",
    "visited_mean",
    "simulated_speedup",
    "flopwise_speedup",
    "perfect_bs",
    "masked_flop_fraction",
];

/// Exact value as a reduced fraction.
///
/// 64-bit parts keep it representable in every JSON reader; reported
/// ratios of tile and token counts stay far below that range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fraction {
    pub num: i64,
    pub den: i64,
}

impl From<&Rational> for Fraction {
    fn from(r: &Rational) -> Self {
        let part = |v: i128| i64::try_from(v).expect("reported fraction fits in 64 bits");
        Self {
            num: part(*r.numer()),
            den: part(*r.denom()),
        }
    }
}

impl From<Fraction> for Rational {
    fn from(f: Fraction) -> Self {
        Rational::new(i128::from(f.num), i128::from(f.den))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactFields {
    pub visited_mean: Fraction,
    pub simulated_speedup: Fraction,
    pub flopwise_speedup: Fraction,
    pub masked_flop_fraction: Fraction,
}

/// One simulated configuration, ready for output.
///
/// Decimal fields are rounded half-even to `precision` places; `exact`
/// carries the unrounded values. Unknown fields are tolerated so reports
/// can embed it with `#[serde(flatten)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub stride: Vec<usize>,
    pub dense_kv_tiles: u64,
    pub extra_kv_tiles: u64,
    pub q_tiles: u64,
    pub visited_max: u64,
    pub visited_mean: f64,
    pub simulated_speedup: f64,
    pub flopwise_speedup: f64,
    pub perfect_bs: bool,
    pub masked_flop_fraction: f64,
    pub precision: u32,
    pub exact: ExactFields,
}

impl SimRecord {
    pub fn new(stride: &[usize], report: &SimReport, precision: u32) -> Self {
        Self {
            stride: stride.to_vec(),
            dense_kv_tiles: report.dense_kv_tiles,
            extra_kv_tiles: report.extra_kv_tiles,
            q_tiles: report.q_tiles,
            visited_max: report.visited_max,
            visited_mean: rounded_f64(&report.visited_mean, precision),
            simulated_speedup: rounded_f64(&report.simulated_speedup, precision),
            flopwise_speedup: rounded_f64(&report.flopwise_speedup, precision),
            perfect_bs: report.perfectly_block_sparse,
            masked_flop_fraction: rounded_f64(&report.masked_flop_fraction, precision),
            precision,
            exact: ExactFields {
                visited_mean: (&report.visited_mean).into(),
                simulated_speedup: (&report.simulated_speedup).into(),
                flopwise_speedup: (&report.flopwise_speedup).into(),
                masked_flop_fraction: (&report.masked_flop_fraction).into(),
            },
        }
    }

    pub fn csv_header(rank: usize) -> Vec<String> {
        (0..rank)
            .map(|a| format!("stride_{a}"))
            .chain(CSV_FIXED_COLUMNS.iter().map(|c| c.to_string()))
            .collect()
    }

    /// Decimal columns are formatted from the exact values, so trailing
    /// zeros are kept (`1.50`, not `1.5`).
    pub fn csv_row(&self) -> Vec<String> {
        let dec = |f: Fraction| format_decimal(&f.into(), self.precision);
        self.stride
            .iter()
            .map(|s| s.to_string())
            .chain([
                self.dense_kv_tiles.to_string(),
                self.visited_max.to_string(),
                dec(self.exact.visited_mean),
                dec(self.exact.simulated_speedup),
                dec(self.exact.flopwise_speedup),
                self.perfect_bs.to_string(),
                dec(self.exact.masked_flop_fraction),
            ])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;

    fn report() -> SimReport {
        SimReport {
            dense_kv_tiles: 900,
            extra_kv_tiles: 0,
            q_tiles: 480,
            visited_max: 81,
            visited_mean: ratio(3, 2),
            simulated_speedup: ratio(100, 9),
            flopwise_speedup: ratio(100, 9),
            perfectly_block_sparse: true,
            masked_flop_fraction: ratio(0, 1),
        }
    }

    #[test]
    fn rounded_and_exact() {
        let r = SimRecord::new(&[16, 8, 8], &report(), 2);
        assert_eq!(r.simulated_speedup, 11.11);
        assert_eq!(r.exact.simulated_speedup, Fraction { num: 100, den: 9 });
        assert!(r.perfect_bs);
    }

    #[test]
    fn csv_layout() {
        let r = SimRecord::new(&[16, 8, 8], &report(), 2);
        let header = SimRecord::csv_header(3);
        assert_eq!(header[..3], ["stride_0", "stride_1", "stride_2"]);
        assert_eq!(header.len(), 3 + CSV_FIXED_COLUMNS.len());
        assert_eq!(
            r.csv_row(),
            ["16", "8", "8", "900", "81", "1.50", "11.11", "11.11", "true", "0.00"]
        );
    }
}
