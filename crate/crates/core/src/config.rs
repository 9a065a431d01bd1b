//! TOML run configuration.
//!
//! ```toml
//! [model]
//! steps = [
//!     { step = [1, 0], prob = "1/8" },
//!     { step = [-1, 0], prob = "3/8" },
//!     { step = [0, 1], prob = "1/8" },
//!     { step = [0, -1], prob = "3/8" },
//! ]
//! cone = { kind = "orthant", dim = 2 }
//! ```
//!
//! Every other table is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{Tolerances, VerifyOptions};
use crate::error::{LabError, Result};
use crate::model::{ConeSpec, StepLaw};
use crate::spectral::{QSD_MAX_ITER, QSD_TOL};
use crate::whiten::WhiteningMode;

/// A probability given as `"p/q"`, a decimal string, or a TOML number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prob {
    Text(String),
    Number(f64),
}

impl Prob {
    pub fn value(&self) -> std::result::Result<f64, String> {
        match self {
            Prob::Number(v) => Ok(*v),
            Prob::Text(s) => parse_probability(s),
        }
    }
}

/// Parses `"p/q"` with integer `p`, `q` as a single correctly rounded division,
/// or a plain decimal.
pub fn parse_probability(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    if let Some((num, den)) = t.split_once('/') {
        let p: u64 = num
            .trim()
            .parse()
            .map_err(|_| format!("bad numerator in '{s}'"))?;
        let q: u64 = den
            .trim()
            .parse()
            .map_err(|_| format!("bad denominator in '{s}'"))?;
        if q == 0 {
            return Err(format!("zero denominator in '{s}'"));
        }
        if p > (1 << 53) || q > (1 << 53) {
            return Err(format!("'{s}' is not exactly representable"));
        }
        Ok(p as f64 / q as f64)
    } else {
        t.parse::<f64>().map_err(|_| format!("'{s}' is not a number"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepEntry {
    pub step: Vec<i64>,
    pub prob: Prob,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub steps: Vec<StepEntry>,
    pub cone: ConeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    /// DP window radius.
    pub window: i64,
    /// Harmonic-table window radius.
    pub harmonic_window: i64,
    pub harmonic_iter: usize,
    /// Horizon of DP series and tail fits.
    pub n_max: usize,
    /// Time at which limit laws are compared.
    pub n_hi: usize,
    pub n_lo: usize,
    pub seed: u64,
    pub workers: usize,
    pub whitening: WhiteningMode,
    /// Start point; defaults to the cone point nearest the origin.
    pub x0: Option<Vec<i64>>,
    /// Second start for ratio checks; defaults to `2 x0`.
    pub x_alt: Option<Vec<i64>>,
    pub tolerances: Tolerances,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            window: 60,
            harmonic_window: 60,
            harmonic_iter: 5000,
            n_max: 400,
            n_hi: 300,
            n_lo: 50,
            seed: 20240601,
            workers: 4,
            whitening: WhiteningMode::General,
            x0: None,
            x_alt: None,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    /// Horizon of the survival estimators.
    pub n: usize,
    pub samples: u64,
    pub z_paths: u64,
    pub z_steps: usize,
    /// Early step of the transience statistic.
    pub z_early: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            n: 60,
            samples: 1_000_000,
            z_paths: 1000,
            z_steps: 200,
            z_early: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QsdSection {
    pub radii: Vec<i64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QsdSection {
    fn default() -> Self {
        Self {
            radii: vec![20, 30, 40, 60],
            tol: QSD_TOL,
            max_iter: QSD_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("conelab_out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub qsd: QsdSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| LabError::Config(e.to_string().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            LabError::Config(format!("cannot read config '{}': {e}", path.display()))
        })?;
        Ok((Self::parse(&text)?, text))
    }

    fn validate(&self) -> Result<()> {
        let p = &self.pipeline;
        let bad = |key: &str, why: String| Err(LabError::Config(format!("{key}: {why}")));
        if p.window < 1 {
            return bad("pipeline.window", format!("must be positive, got {}", p.window));
        }
        if p.harmonic_window < 1 {
            return bad(
                "pipeline.harmonic_window",
                format!("must be positive, got {}", p.harmonic_window),
            );
        }
        if p.n_lo == 0 || p.n_max < 4 * p.n_lo {
            return bad("pipeline.n_max", format!("must be at least 4 n_lo = {}", 4 * p.n_lo));
        }
        if p.n_hi < 4 || p.n_hi > p.n_max {
            return bad("pipeline.n_hi", format!("must lie in [4, n_max], got {}", p.n_hi));
        }
        if p.workers == 0 {
            return bad("pipeline.workers", "must be at least 1".into());
        }
        if self.simulate.z_early > self.simulate.z_steps {
            return bad("simulate.z_early", "must not exceed simulate.z_steps".into());
        }
        if self.qsd.radii.is_empty() {
            return bad("qsd.radii", "must not be empty".into());
        }
        self.step_law()?;
        self.model.cone.validate()?;
        Ok(())
    }

    pub fn step_law(&self) -> Result<StepLaw> {
        let mut pairs = Vec::with_capacity(self.model.steps.len());
        for (i, e) in self.model.steps.iter().enumerate() {
            let v = e
                .prob
                .value()
                .map_err(|why| LabError::Config(format!("model.steps[{i}].prob: {why}")))?;
            pairs.push((e.step.clone(), v));
        }
        StepLaw::from_pairs(pairs)
    }

    pub fn verify_options(&self) -> VerifyOptions {
        let p = &self.pipeline;
        let mut o = VerifyOptions::for_cone(&self.model.cone);
        if let Some(x0) = &p.x0 {
            o.x0 = x0.clone();
            o.x_alt = x0.iter().map(|v| 2 * v).collect();
            o.bridge_set = vec![x0.clone()];
            o.bridge_end = x0.clone();
        }
        if let Some(xa) = &p.x_alt {
            o.x_alt = xa.clone();
        }
        o.n_hi = p.n_hi;
        o.n_lo = p.n_lo;
        o.n_fit = p.n_max;
        o.window = p.window;
        o.harmonic_window = p.harmonic_window;
        o.harmonic_iter = p.harmonic_iter;
        o.whitening_mode = p.whitening;
        o.tolerances = p.tolerances;
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NN4: &str = r#"
[model]
steps = [
    { step = [1, 0], prob = "1/8" },
    { step = [-1, 0], prob = "3/8" },
    { step = [0, 1], prob = "1/8" },
    { step = [0, -1], prob = "3/8" },
]
cone = { kind = "orthant", dim = 2 }
"#;

    #[test]
    fn rationals_are_exact() {
        assert_eq!(parse_probability("1/8").unwrap(), 0.125);
        assert_eq!(parse_probability(" 3 / 8 ").unwrap(), 0.375);
        assert_eq!(parse_probability("1/3").unwrap(), 1.0 / 3.0);
        assert_eq!(parse_probability("0.25").unwrap(), 0.25);
        assert!(parse_probability("1/0").is_err());
        assert!(parse_probability("a/2").is_err());
        assert!(parse_probability("x").is_err());
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::parse(NN4).unwrap();
        assert_eq!(cfg.pipeline, PipelineSection::default());
        let law = cfg.step_law().unwrap();
        assert_eq!(law.probs(), &[0.125, 0.375, 0.125, 0.375]);
        let o = cfg.verify_options();
        assert_eq!(o.x0, vec![1, 1]);
        assert_eq!(o.x_alt, vec![2, 2]);
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = format!("{NN4}\n[pipeline]\nwindw = 3\n");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("windw"), "{err}");
        let text = NN4.replace("dim = 2", "dim = 2, extra = 1");
        assert!(RunConfig::parse(&text).unwrap_err().to_string().contains("extra"));
    }

    #[test]
    fn bad_values_are_named() {
        let err = RunConfig::parse(&NN4.replace("\"3/8\" }", "\"3/0\" }")).unwrap_err();
        assert!(err.to_string().contains("model.steps[1].prob"), "{err}");
        let err = RunConfig::parse(&format!("{NN4}\n[pipeline]\nn_hi = 900\n")).unwrap_err();
        assert!(err.to_string().contains("pipeline.n_hi"), "{err}");
        let err = RunConfig::parse(&NN4.replace("[0, 1], prob = \"1/8\"", "[0, 1], prob = \"1/4\""))
            .unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn config_round_trips() {
        let cfg = RunConfig::parse(NN4).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }
}
