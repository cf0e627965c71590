//! The JSON run configuration.
//!
//! Every section is optional at parse time; each subcommand asks for the
//! sections it needs. Unknown keys are rejected at every level.

use std::io::{IsTerminal, Read};
use std::path::Path;

use clap::ValueEnum;
use gna_core::scalar::{parse_rational, rational_from_f64};
use gna_core::{GnaParams, Rational, Shape, TileConfig, TokenLayout, WorkloadModel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Ascii,
    Pgm,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub layout: Option<TokenLayout>,
    pub gna: Option<GnaSection>,
    pub tiles: Option<TileConfig>,
    pub workload: Option<WorkloadSection>,
    #[serde(default)]
    pub output: OutputSection,
    pub predict: Option<PredictSection>,
}

/// Stride and dilation default to 1, causal to false, window-left to centered.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnaSection {
    pub window: Vec<usize>,
    pub stride: Option<Vec<usize>>,
    pub dilation: Option<Vec<usize>>,
    pub causal: Option<AxisFlags>,
    pub window_left: Option<Vec<usize>>,
}

/// A single flag for every axis or one per axis.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum AxisFlags {
    All(bool),
    PerAxis(Vec<bool>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    pub sa_share: ExactNumber,
    pub total_steps: u64,
    pub sparse_steps: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub format: Option<Format>,
    #[serde(default = "default_precision")]
    pub precision: u32,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            format: None,
            precision: default_precision(),
        }
    }
}

fn default_precision() -> u32 {
    2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    pub s_op: Vec<ExactNumber>,
}

/// A JSON number or a string such as `"100/9"`, held exactly.
///
/// Numbers go through their shortest decimal form, so `0.607` is `607/1000`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "NumberRepr")]
pub struct ExactNumber(pub Rational);

#[derive(Deserialize)]
#[serde(untagged)]
enum NumberRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<NumberRepr> for ExactNumber {
    type Error = String;

    fn try_from(repr: NumberRepr) -> std::result::Result<Self, String> {
        match repr {
            NumberRepr::Number(v) => rational_from_f64(v).ok_or_else(|| format!("{v} is not a finite number")),
            NumberRepr::Text(s) => {
                parse_rational(&s).ok_or_else(|| format!("cannot parse {s:?} as a number or fraction"))
            }
        }
        .map(ExactNumber)
    }
}

const MAX_PRECISION: u32 = 12;

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let text = if text.trim().is_empty() { "{}" } else { text };
        let config: RunConfig = serde_json::from_str(text)?;
        if config.output.precision > MAX_PRECISION {
            return Err(CliError::Invalid(format!(
                "output.precision {} exceeds {MAX_PRECISION}",
                config.output.precision
            )));
        }
        Ok(config)
    }

    /// Reads `path`, or standard input when `path` is `None` or `-`.
    /// An interactive terminal on standard input counts as an empty config.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) if p.as_os_str() != "-" => std::fs::read_to_string(p).map_err(|source| CliError::ReadConfig {
                path: p.to_path_buf(),
                source,
            })?,
            _ => {
                let stdin = std::io::stdin();
                if stdin.is_terminal() {
                    String::new()
                } else {
                    let mut buf = String::new();
                    stdin
                        .lock()
                        .read_to_string(&mut buf)
                        .map_err(|source| CliError::ReadConfig {
                            path: "<stdin>".into(),
                            source,
                        })?;
                    buf
                }
            }
        };
        Self::from_json(&text)
    }

    pub fn layout(&self) -> Result<TokenLayout> {
        self.layout.clone().ok_or(CliError::MissingSection("layout"))
    }

    /// GNA parameters with defaults filled in, validated against `layout`.
    pub fn params(&self, layout: &TokenLayout) -> Result<GnaParams> {
        let gna = self.gna.as_ref().ok_or(CliError::MissingSection("gna"))?;
        let rank = layout.extents.rank();
        let ones = || vec![1; rank];
        let causal = match &gna.causal {
            None => vec![false; rank],
            Some(AxisFlags::All(flag)) => vec![*flag; rank],
            Some(AxisFlags::PerAxis(v)) => v.clone(),
        };
        let mut params = GnaParams::new(Shape::new(gna.window.clone())?)
            .with_stride(Shape::new(gna.stride.clone().unwrap_or_else(ones))?)
            .with_dilation(Shape::new(gna.dilation.clone().unwrap_or_else(ones))?)
            .with_causal(causal);
        if let Some(left) = &gna.window_left {
            params = params.with_window_left(left.clone());
        }
        params.validate(layout)?;
        Ok(params)
    }

    pub fn tiles(&self, layout: &TokenLayout) -> Result<TileConfig> {
        let tiles = self.tiles.clone().ok_or(CliError::MissingSection("tiles"))?;
        tiles.validate(layout)?;
        Ok(tiles)
    }

    pub fn workload(&self) -> Result<Option<WorkloadModel<Rational>>> {
        self.workload
            .as_ref()
            .map(|w| WorkloadModel::new(w.sa_share.0, w.total_steps, w.sparse_steps).map_err(CliError::from))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_per_rank() {
        let c = RunConfig::from_json(r#"{"layout":{"extents":[8,8]},"gna":{"window":[3,5],"causal":true}}"#).unwrap();
        let layout = c.layout().unwrap();
        let p = c.params(&layout).unwrap();
        assert_eq!(p.stride.extents(), &[1, 1]);
        assert_eq!(p.causal, vec![true, true]);
        assert_eq!(c.output.precision, 2);
    }

    #[test]
    fn unknown_keys_rejected_at_every_level() {
        for text in [
            r#"{"layuot":{"extents":[4]}}"#,
            r#"{"layout":{"extents":[4],"extra":1}}"#,
            r#"{"gna":{"window":[3],"strides":[1]}}"#,
            r#"{"tiles":{"q_tile":[1],"kv_tile":[1],"mode":"static"}}"#,
            r#"{"output":{"precision":2,"colour":true}}"#,
        ] {
            assert!(RunConfig::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn exact_numbers() {
        let c = RunConfig::from_json(
            r#"{"workload":{"sa_share":0.607,"total_steps":50,"sparse_steps":35},"predict":{"s_op":["100/9",3,"2.2917"]}}"#,
        )
        .unwrap();
        assert_eq!(c.workload.unwrap().sa_share.0, Rational::new(607, 1000));
        let s: Vec<Rational> = c.predict.unwrap().s_op.into_iter().map(|n| n.0).collect();
        assert_eq!(
            s,
            vec![
                Rational::new(100, 9),
                Rational::from_integer(3),
                Rational::new(22917, 10000)
            ]
        );
        assert!(RunConfig::from_json(r#"{"predict":{"s_op":["x"]}}"#).is_err());
    }

    #[test]
    fn missing_sections_and_validation() {
        let c = RunConfig::from_json("").unwrap();
        assert!(matches!(c.layout(), Err(CliError::MissingSection("layout"))));
        let c = RunConfig::from_json(r#"{"layout":{"extents":[8]},"gna":{"window":[3],"stride":[4]}}"#).unwrap();
        let err = c.params(&c.layout().unwrap()).unwrap_err();
        assert!(err.to_string().contains("axis 0"));
        assert_eq!(err.exit_code(), 2);
        assert!(RunConfig::from_json(r#"{"output":{"precision":40}}"#).is_err());
    }
}
