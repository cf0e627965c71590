//! The five subcommands. Each returns its rendered output; nothing is
//! written until the command has finished.

use gna_core::scalar::rounded_f64;
use gna_core::{
    e2e_speedup, flopwise_speedup, render_mask, simulate, sparsity, sweep_strides, Fraction, Rational, SimRecord,
    WorkloadModel, DEFAULT_RENDER_CAP,
};
use serde::{Deserialize, Serialize};

use crate::config::{Format, RunConfig};
use crate::error::{CliError, Result};
use crate::verify::{self, VerifyOptions};

/// Rendered command output plus an invariant failure to report after writing it.
#[derive(Debug)]
pub struct Output {
    pub bytes: Vec<u8>,
    pub failure: Option<String>,
}

impl Output {
    fn ok(bytes: Vec<u8>) -> Self {
        Self { bytes, failure: None }
    }
}

fn unsupported(command: &str, format: Format) -> CliError {
    CliError::Invalid(format!("{command} cannot write {format:?} output").to_lowercase())
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn to_csv(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| CliError::Write(e.into_error()))
}

fn decimal(value: &Option<Rational>, places: u32) -> String {
    value
        .as_ref()
        .map(|v| gna_core::format_decimal(v, places))
        .unwrap_or_default()
}

/// One configuration: simulation record plus mask sparsity and, with a
/// workload section, the end-to-end speedup of the simulated speedup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    #[serde(flatten)]
    pub record: SimRecord,
    /// Absent for causal masks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e2e_speedup: Option<f64>,
    pub analysis_exact: AnalysisExact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisExact {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<Fraction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e2e_speedup: Option<Fraction>,
}

pub fn analyze(config: &RunConfig, format: Format) -> Result<Output> {
    let layout = config.layout()?;
    let params = config.params(&layout)?;
    let tiles = config.tiles(&layout)?;
    let model = config.workload()?;
    let precision = config.output.precision;

    let report = simulate(&layout, &params, &tiles)?;
    if report.flopwise_speedup != flopwise_speedup(&params, &layout).unwrap_or(report.flopwise_speedup) {
        return Err(CliError::Invariant(format!(
            "simulated FLOP-wise speedup {} disagrees with the mask density",
            report.flopwise_speedup
        )));
    }
    let sparse = (!params.is_causal()).then(|| sparsity(&params, &layout)).transpose()?;
    let e2e = model
        .as_ref()
        .map(|m| e2e_speedup(&report.simulated_speedup, m))
        .transpose()?;

    let analyzed = AnalyzeReport {
        record: SimRecord::new(params.stride.extents(), &report, precision),
        sparsity: sparse.as_ref().map(|s| rounded_f64(s, precision)),
        e2e_speedup: e2e.as_ref().map(|e| rounded_f64(e, precision)),
        analysis_exact: AnalysisExact {
            sparsity: sparse.as_ref().map(Fraction::from),
            e2e_speedup: e2e.as_ref().map(Fraction::from),
        },
    };
    match format {
        Format::Json => Ok(Output::ok(to_json(&analyzed)?)),
        Format::Csv => {
            let mut header = SimRecord::csv_header(layout.extents.rank());
            header.extend(["sparsity".to_string(), "e2e_speedup".to_string()]);
            let mut row = analyzed.record.csv_row();
            row.extend([decimal(&sparse, precision), decimal(&e2e, precision)]);
            Ok(Output::ok(to_csv(&header, [row])?))
        }
        other => Err(unsupported("analyze", other)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepReport {
    /// Stride vectors simulated before pruning.
    pub evaluated: usize,
    pub retained: Vec<SimRecord>,
}

fn run_sweep(config: &RunConfig, jobs: usize) -> Result<(usize, SweepReport)> {
    let layout = config.layout()?;
    let params = config.params(&layout)?;
    let tiles = config.tiles(&layout)?;
    let result = sweep_strides(&layout, &params, &tiles, jobs)?;
    let stride_space: usize = params.window.volume();
    if result.retained.len() > stride_space || result.evaluated != stride_space {
        return Err(CliError::Invariant(format!(
            "sweep kept {} of {} evaluated strides over a space of {stride_space}",
            result.retained.len(),
            result.evaluated
        )));
    }
    let retained = result
        .retained
        .iter()
        .map(|e| SimRecord::new(&e.stride, &e.report, config.output.precision))
        .collect();
    Ok((
        layout.extents.rank(),
        SweepReport {
            evaluated: result.evaluated,
            retained,
        },
    ))
}

pub fn sweep(config: &RunConfig, format: Format, jobs: usize) -> Result<Output> {
    let (rank, report) = run_sweep(config, jobs)?;
    match format {
        Format::Json => Ok(Output::ok(to_json(&report)?)),
        Format::Csv => Ok(Output::ok(to_csv(
            &SimRecord::csv_header(rank),
            report.retained.iter().map(SimRecord::csv_row),
        )?)),
        other => Err(unsupported("sweep", other)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictReport {
    pub sa_share: Fraction,
    pub total_steps: u64,
    pub sparse_steps: u64,
    /// End-to-end speedup as the operation speedup grows without bound.
    pub ceiling: Option<f64>,
    pub rows: Vec<PredictRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRow {
    /// Present when the row comes from a sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<Vec<usize>>,
    pub s_op: f64,
    pub e2e_speedup: f64,
    pub s_op_exact: Fraction,
    pub e2e_speedup_exact: Fraction,
}

/// End-to-end speedups for the listed operation speedups, or for every
/// stride a sweep retains when the config lists none.
pub fn predict(config: &RunConfig, format: Format, jobs: usize) -> Result<Output> {
    let model: WorkloadModel<Rational> = config.workload()?.ok_or(CliError::MissingSection("workload"))?;
    let precision = config.output.precision;
    let inputs: Vec<(Option<Vec<usize>>, Rational)> = match &config.predict {
        Some(p) => p.s_op.iter().map(|s| (None, s.0)).collect(),
        None => run_sweep(config, jobs)?
            .1
            .retained
            .into_iter()
            .map(|r| (Some(r.stride), r.exact.simulated_speedup.into()))
            .collect(),
    };
    let rows = inputs
        .into_iter()
        .map(|(stride, s)| {
            let e = e2e_speedup(&s, &model)?;
            Ok(PredictRow {
                stride,
                s_op: rounded_f64(&s, precision),
                e2e_speedup: rounded_f64(&e, precision),
                s_op_exact: (&s).into(),
                e2e_speedup_exact: (&e).into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = PredictReport {
        sa_share: model.sa_share().into(),
        total_steps: model.total_steps(),
        sparse_steps: model.sparse_steps(),
        ceiling: model.speedup_ceiling().map(|c| rounded_f64(&c, precision)),
        rows,
    };
    match format {
        Format::Json => Ok(Output::ok(to_json(&report)?)),
        Format::Csv => {
            let header: Vec<String> = ["stride", "s_op", "e2e_speedup"].map(String::from).to_vec();
            let dec = |f: Fraction| gna_core::format_decimal(&f.into(), precision);
            let rows = report.rows.iter().map(|r| {
                let stride = r
                    .stride
                    .as_ref()
                    .map(|s| s.iter().map(usize::to_string).collect::<Vec<_>>().join("x"))
                    .unwrap_or_default();
                vec![stride, dec(r.s_op_exact), dec(r.e2e_speedup_exact)]
            });
            Ok(Output::ok(to_csv(&header, rows)?))
        }
        other => Err(unsupported("predict", other)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderReport {
    pub tokens: usize,
    pub attended: usize,
    /// One string per query row, `#` attended and `.` masked.
    pub rows: Vec<String>,
}

/// Layout tokens only; extra context keys are not drawn.
pub fn render(config: &RunConfig, format: Format) -> Result<Output> {
    let layout = config.layout()?;
    let params = config.params(&layout)?;
    let matrix = render_mask(&params, &layout, DEFAULT_RENDER_CAP)?;
    match format {
        Format::Ascii => Ok(Output::ok(matrix.to_ascii().into_bytes())),
        Format::Pgm => Ok(Output::ok(matrix.to_pgm())),
        Format::Json => {
            let rows: Vec<String> = matrix.to_ascii().lines().map(String::from).collect();
            let attended = (0..matrix.rows()).map(|r| matrix.row_count(r)).sum();
            Ok(Output::ok(to_json(&RenderReport {
                tokens: matrix.rows(),
                attended,
                rows,
            })?))
        }
        Format::Csv => Err(unsupported("render", Format::Csv)),
    }
}

pub fn verify(config: &RunConfig, format: Format, options: &VerifyOptions) -> Result<Output> {
    let report = verify::run(config, options)?;
    let failed: Vec<&str> = report
        .suites
        .iter()
        .filter(|s| !s.passed)
        .map(|s| s.name.as_str())
        .collect();
    let failure = (!failed.is_empty()).then(|| format!("verification failed: {}", failed.join(", ")));
    let bytes = match format {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let header: Vec<String> = ["suite", "passed", "checked", "failed"].map(String::from).to_vec();
            let rows = report.suites.iter().map(|s| {
                vec![
                    s.name.clone(),
                    s.passed.to_string(),
                    s.checked.to_string(),
                    s.failed.to_string(),
                ]
            });
            to_csv(&header, rows)?
        }
        other => return Err(unsupported("verify", other)),
    };
    Ok(Output { bytes, failure })
}
