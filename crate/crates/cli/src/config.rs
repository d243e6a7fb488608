//! Experiment configuration: a single TOML document.
//!
//! ```toml
//! [manifold]
//! model = "hyperbolic"
//! n = 3
//! k = 1.0
//!
//! [experiment]
//! name = "profile"
//!
//! [sampling]
//! seed = 7
//! count = 5
//!
//! [output]
//! format = "json"
//! ```

use std::collections::BTreeMap;
use std::fmt;

use horolab_core::{ManifoldSpec, ModelParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based line of the offending entry, when it can be located.
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config error at line {l}, field `{}`: {}", self.field, self.message),
            None => write!(f, "config error, field `{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ManifoldConfig {
    Euclidean {
        n: usize,
    },
    Hyperbolic {
        n: usize,
        #[serde(default = "unit")]
        k: f64,
    },
    Product {
        left: Box<ManifoldConfig>,
        right: Box<ManifoldConfig>,
    },
    Sl2r {
        a: f64,
        b: f64,
    },
    Heisenberg {
        b: f64,
    },
    /// Euclidean metric scaled by `1 + amplitude·exp(−|x − center|²/width²)`.
    PerturbedEuclidean {
        n: usize,
        amplitude: f64,
        width: f64,
        center: Option<Vec<f64>>,
    },
}

fn unit() -> f64 {
    1.0
}

impl ManifoldConfig {
    fn params(&self) -> Option<ModelParams> {
        Some(match self {
            ManifoldConfig::Euclidean { n } => ModelParams::Euclidean { n: *n },
            ManifoldConfig::Hyperbolic { n, k } => ModelParams::Hyperbolic { n: *n, k: *k },
            ManifoldConfig::Product { left, right } => {
                ModelParams::Product(Box::new(left.params()?), Box::new(right.params()?))
            }
            ManifoldConfig::Sl2r { a, b } => ModelParams::Sl2r { a: *a, b: *b },
            ManifoldConfig::Heisenberg { b } => ModelParams::Heisenberg { b: *b },
            ManifoldConfig::PerturbedEuclidean { .. } => return None,
        })
    }

    pub fn build(&self) -> horolab_core::Result<ManifoldSpec> {
        match self {
            ManifoldConfig::PerturbedEuclidean { n, amplitude, width, center } => ManifoldSpec::perturbed_euclidean(
                *n,
                *amplitude,
                *width,
                center.clone().unwrap_or_else(|| vec![0.0; *n]),
            ),
            ManifoldConfig::Product { left, right } => ManifoldSpec::product(left.build()?, right.build()?),
            other => horolab_core::make_model(&other.params().expect("built-in model")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentConfig {
    CurvatureCheck {},
    Jacobi {},
    StableTensor {
        r_values: Option<Vec<f64>>,
    },
    Profile {},
    FlowScan {},
    ReversibilityScan {},
    Busemann {
        direction: Option<Vec<f64>>,
        points: Option<Vec<Vec<f64>>>,
        t_max: Option<f64>,
    },
    LeafProbe {
        direction: Option<Vec<f64>>,
        shifts: Option<Vec<Vec<f64>>>,
    },
    ConjugateScan {
        #[serde(rename = "T")]
        horizon: f64,
        dt: Option<f64>,
        direction: Option<Vec<f64>>,
        expected_first_conjugate_time: Option<f64>,
    },
    DatriCheck {
        #[serde(default)]
        expect_harmonic: bool,
    },
    Sl2Verify {},
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::CurvatureCheck {} => "curvature-check",
            ExperimentConfig::Jacobi {} => "jacobi",
            ExperimentConfig::StableTensor { .. } => "stable-tensor",
            ExperimentConfig::Profile {} => "profile",
            ExperimentConfig::FlowScan {} => "flow-scan",
            ExperimentConfig::ReversibilityScan {} => "reversibility-scan",
            ExperimentConfig::Busemann { .. } => "busemann",
            ExperimentConfig::LeafProbe { .. } => "leaf-probe",
            ExperimentConfig::ConjugateScan { .. } => "conjugate-scan",
            ExperimentConfig::DatriCheck { .. } => "datri-check",
            ExperimentConfig::Sl2Verify {} => "sl2-verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub seed: u64,
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default)]
    pub time_grid: Vec<f64>,
    /// Chart point for sampled vectors; the model's anchor when absent.
    pub base: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<String>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub manifold: ManifoldConfig,
    pub experiment: ExperimentConfig,
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Tolerance names accepted by each experiment, with defaults.
pub fn default_tolerances(experiment: &str) -> &'static [(&'static str, f64)] {
    match experiment {
        "curvature-check" => &[("christoffel", 1e-6), ("symmetry", 1e-8), ("jacobi_symmetry", 1e-10)],
        "jacobi" => &[("wronskian", 1e-7)],
        "stable-tensor" => &[("limit", 1e-6), ("monotone", 1e-8), ("asymmetry", 1e-6)],
        "profile" => &[("limit", 1e-6), ("identity", 1e-6), ("nonnegative", 1e-7), ("rank", 1e-4)],
        "flow-scan" => &[("limit", 1e-6), ("h", 1e-4), ("rank", 1e-4)],
        "reversibility-scan" => &[("limit", 1e-6), ("identity", 1e-6), ("rank", 1e-4)],
        "busemann" => &[("busemann", 1e-6), ("split", 1e-4)],
        "leaf-probe" => &[("monotone", 1e-9)],
        "conjugate-scan" => &[("first_conjugate_time", 1e-3)],
        "datri-check" => &[("symmetry", 1e-6), ("spread", 1e-6)],
        "sl2-verify" => &[("closed_form", 1e-5), ("curvature", 1e-7)],
        _ => &[],
    }
}

impl Config {
    pub fn tolerance(&self, key: &str) -> f64 {
        self.sampling.tolerances.get(key).copied().unwrap_or_else(|| {
            default_tolerances(self.experiment.name())
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .expect("tolerance declared for experiment")
        })
    }

    /// Canonical JSON of the parsed config.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Line of `key` inside `[section]` (dotted sections allowed), by scanning
/// the source text.
fn locate(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut section_line = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            if current == section {
                section_line = Some(i + 1);
            }
            continue;
        }
        let (lhs, _) = line.split_once('=').unwrap_or((line, ""));
        if current == section && lhs.trim() == key {
            return Some(i + 1);
        }
    }
    section_line
}

fn invalid(src: &str, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: locate(src, section, key),
        field: format!("{section}.{key}"),
        message: message.into(),
    }
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Parses and validates a config document.
pub fn parse(src: &str) -> Result<Config, ConfigError> {
    let cfg: Config = toml::from_str(src).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(src, s.start));
        let message = e.message().trim().to_string();
        let field = message
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| "document".into());
        ConfigError { line, field, message }
    })?;
    validate(src, &cfg)?;
    Ok(cfg)
}

fn positive(src: &str, section: &str, key: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(src, section, key, format!("must be positive and finite, got {x}")))
    }
}

fn validate(src: &str, cfg: &Config) -> Result<(), ConfigError> {
    let name = cfg.experiment.name();
    let known = default_tolerances(name);
    for (k, &v) in &cfg.sampling.tolerances {
        if !known.iter().any(|(n, _)| n == k) {
            let names: Vec<&str> = known.iter().map(|(n, _)| *n).collect();
            return Err(invalid(
                src,
                "sampling.tolerances",
                k,
                format!("unknown tolerance for {name}; expected one of {}", names.join(", ")),
            ));
        }
        if !(v > 0.0 && v.is_finite()) {
            let mut e = invalid(src, "sampling.tolerances", k, format!("tolerance must be positive, got {v}"));
            if e.line.is_none() {
                // inline table under [sampling]
                e.line = locate(src, "sampling", "tolerances");
            }
            return Err(e);
        }
    }
    if cfg.sampling.count == 0 {
        return Err(invalid(src, "sampling", "count", "must be at least 1"));
    }
    for (i, &t) in cfg.sampling.time_grid.iter().enumerate() {
        if !t.is_finite() {
            return Err(invalid(src, "sampling", "time_grid", format!("entry {i} is not finite")));
        }
    }
    match &cfg.experiment {
        ExperimentConfig::ConjugateScan { horizon, dt, expected_first_conjugate_time, .. } => {
            positive(src, "experiment", "T", *horizon)?;
            if let Some(dt) = dt {
                positive(src, "experiment", "dt", *dt)?;
                if *dt > horizon / 10.0 {
                    return Err(invalid(src, "experiment", "dt", "must not exceed T/10"));
                }
            }
            if let Some(t) = expected_first_conjugate_time {
                positive(src, "experiment", "expected_first_conjugate_time", *t)?;
            }
        }
        ExperimentConfig::StableTensor { r_values: Some(rs) } => {
            for &r in rs {
                positive(src, "experiment", "r_values", r)?;
            }
        }
        ExperimentConfig::Busemann { t_max: Some(t), .. } => positive(src, "experiment", "t_max", *t)?,
        ExperimentConfig::Sl2Verify {} if !matches!(cfg.manifold, ManifoldConfig::Sl2r { .. }) => {
            return Err(invalid(src, "manifold", "model", "sl2-verify needs model = \"sl2r\""));
        }
        ExperimentConfig::DatriCheck { .. } | ExperimentConfig::Jacobi {} if cfg.sampling.time_grid.is_empty() => {
            return Err(invalid(src, "sampling", "time_grid", format!("{name} needs a non-empty time grid")));
        }
        ExperimentConfig::FlowScan {} if cfg.sampling.time_grid.is_empty() => {
            return Err(invalid(src, "sampling", "time_grid", "flow-scan needs a non-empty time grid"));
        }
        _ => {}
    }
    if matches!(cfg.experiment, ExperimentConfig::DatriCheck { .. } | ExperimentConfig::Jacobi {})
        && cfg.sampling.time_grid.iter().any(|&t| t <= 0.0)
    {
        return Err(invalid(src, "sampling", "time_grid", "times must be positive"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const PROFILE: &str = r#"
[manifold]
model = "hyperbolic"
n = 3

[experiment]
name = "profile"

[sampling]
seed = 7
count = 5
"#;

    #[test]
    fn parses_minimal_profile() {
        let cfg = parse(PROFILE).unwrap();
        assert_eq!(cfg.manifold, ManifoldConfig::Hyperbolic { n: 3, k: 1.0 });
        assert_eq!(cfg.experiment.name(), "profile");
        assert_eq!(cfg.output.format, Format::Json);
        assert_eq!(cfg.tolerance("limit"), 1e-6);
    }

    #[test]
    fn negative_tolerance_names_field_and_line() {
        let src = format!("{PROFILE}\n[sampling.tolerances]\nlimit = -1e-6\n");
        let e = parse(&src).unwrap_err();
        assert_eq!(e.field, "sampling.tolerances.limit");
        assert_eq!(e.line, Some(src.lines().position(|l| l.starts_with("limit")).unwrap() + 1));
        assert!(e.to_string().contains("line"));
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let src = PROFILE.replace("count = 5", "count = 5\ncolour = 1");
        let e = parse(&src).unwrap_err();
        let want = src.lines().position(|l| l.starts_with("colour")).unwrap() + 1;
        assert_eq!(e.line, Some(want));
        assert!(e.message.contains("colour"), "{e}");
    }

    #[test]
    fn nested_product_and_conjugate_scan() {
        let src = r#"
[manifold]
model = "product"
left = { model = "hyperbolic", n = 2 }
right = { model = "euclidean", n = 1 }

[experiment]
name = "conjugate-scan"
T = 8.0
dt = 2.0

[sampling]
seed = 1
"#;
        let e = parse(src).unwrap_err();
        assert_eq!(e.field, "experiment.dt");
        assert_eq!(e.line, Some(10));
        let ok = parse(&src.replace("dt = 2.0", "dt = 0.05")).unwrap();
        assert_eq!(ok.manifold.build().unwrap().dim(), 3);
    }

    #[test]
    fn echo_is_canonical() {
        let a = parse(PROFILE).unwrap().echo();
        let b = parse(&PROFILE.replace("count = 5", "count = 5 # five")).unwrap().echo();
        assert_eq!(a, b);
    }
}
