//! Scenario configuration: a TOML-serializable description of one data-generating process.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mr::Adjuster;
use crate::numkit::rng::validate_mixture;
use crate::numkit::MixtureComponent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Regression,
    MrSingle,
    MrMulti,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableForm {
    #[default]
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeFamily {
    #[default]
    Linear,
    Logistic,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDist {
    #[default]
    Normal,
    T4,
    Lognormal,
    Mixture,
}

/// Log-normal error parameters (μ = 0, σ² = golden ratio).
pub const LOGNORMAL_MU: f64 = 0.0;
pub const LOGNORMAL_SIGMA2: f64 = 1.618_033_988_749_895;

/// Bimodal error mixture.
pub const ERROR_MIXTURE: [MixtureComponent; 2] = [
    MixtureComponent { weight: 0.25, mean: -2.0, sd: 0.5 },
    MixtureComponent { weight: 0.75, mean: 2.0, sd: 0.5 },
];

/// Coefficients of logit(π_R) = α_R + β_R X + γ_R Z + δ_R Y (+ λ_R V).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    /// Intercept; derived by calibration when `target_observed_fraction` is given instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_r: Option<f64>,
    #[serde(default)]
    pub beta_r: f64,
    #[serde(default)]
    pub gamma_r: f64,
    #[serde(default)]
    pub delta_r: f64,
}

/// Unobserved confounder V of the outcome and selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfounderConfig {
    pub lambda_y: f64,
    pub lambda_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingOn {
    Exposure,
    Outcome,
    Both,
}

impl MissingOn {
    pub fn exposure(self) -> bool {
        matches!(self, MissingOn::Exposure | MissingOn::Both)
    }

    pub fn outcome(self) -> bool {
        matches!(self, MissingOn::Outcome | MissingOn::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MrDesign {
    #[default]
    OneSample,
    TwoSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstStage {
    #[default]
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Populations {
    #[default]
    Same,
    /// Second sample's genotype score drawn from t(4).
    Different,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MrEstimatorChoice {
    Wald,
    Tsls,
    /// Selection-adjusted summary statistics combined by IVW.
    Summary,
}

/// Variant-exposure effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaXSpec {
    /// The same effect for every variant.
    Fixed(f64),
    /// Per-replication draws from N(0, sd²) truncated below at `lower`.
    TruncatedNormal { sd: f64, lower: f64 },
}

/// MR-specific settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrConfig {
    /// Number of variants; must be 1 for `mr_single`.
    pub k: usize,
    #[serde(default)]
    pub alpha_x: f64,
    #[serde(default)]
    pub alpha_y: f64,
    #[serde(default = "one")]
    pub gamma_x: f64,
    #[serde(default = "one")]
    pub gamma_y: f64,
    pub beta_x: BetaXSpec,
    /// Range of allele frequencies for `mr_multi`.
    #[serde(default = "default_freq")]
    pub allele_freq: [f64; 2],
    pub missing_on: MissingOn,
    #[serde(default)]
    pub design: MrDesign,
    #[serde(default)]
    pub first_stage: FirstStage,
    #[serde(default)]
    pub populations: Populations,
    #[serde(default)]
    pub beta_x2: f64,
    /// Defaults to Wald for one variant, 2SLS for one-sample and summary statistics for two-sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<MrEstimatorChoice>,
    /// Bootstrap resamples for Heckman/TTW 2SLS standard errors.
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
}

fn one() -> f64 {
    1.0
}

fn default_freq() -> [f64; 2] {
    [0.1, 0.9]
}

fn default_bootstrap() -> usize {
    100
}

impl MrConfig {
    pub fn estimator(&self) -> MrEstimatorChoice {
        self.estimator.unwrap_or(if self.k == 1 {
            MrEstimatorChoice::Wald
        } else if self.design == MrDesign::OneSample {
            MrEstimatorChoice::Tsls
        } else {
            MrEstimatorChoice::Summary
        })
    }
}

/// Parameter sweep attached to a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    pub values: Vec<f64>,
}

/// Full specification of one simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub kind: ScenarioKind,
    pub n: usize,
    /// Regression coefficient of interest (regression scenarios).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Causal effect of interest (MR scenarios).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Outcome intercept (regression scenarios).
    #[serde(default = "one")]
    pub alpha: f64,
    pub selection: SelectionConfig,
    #[serde(default)]
    pub instrument_form: VariableForm,
    #[serde(default)]
    pub covariate_form: VariableForm,
    #[serde(default)]
    pub outcome_family: OutcomeFamily,
    #[serde(default)]
    pub error_dist: ErrorDist,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confounder_selection: Option<ConfounderConfig>,
    /// Direct effect of the selection instrument on the covariate/exposure.
    #[serde(default)]
    pub zx_effect: f64,
    /// Direct effect of the selection instrument on the outcome.
    #[serde(default)]
    pub zy_effect: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mr: Option<MrConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_observed_fraction: Option<f64>,
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Methods run by default; all applicable methods when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<Adjuster>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl ScenarioConfig {
    /// Parses TOML text; syntax and schema errors name the offending field and line.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            match line {
                Some(l) => Error::Config(format!("line {l}: {}", e.message())),
                None => Error::Config(e.message().to_string()),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parameter of interest (β or θ).
    pub fn truth(&self) -> f64 {
        match self.kind {
            ScenarioKind::Regression => self.beta.unwrap_or(f64::NAN),
            _ => self.theta.unwrap_or(f64::NAN),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::Config(format!("`{field}`: {msg}")));
        if self.replications == 0 {
            return bad("replications", "must be at least 1");
        }
        if self.n < 10 {
            return bad("n", "must be at least 10");
        }
        match (self.selection.alpha_r, self.target_observed_fraction) {
            (Some(_), Some(_)) | (None, None) => {
                return bad(
                    "selection.alpha_r",
                    "exactly one of selection.alpha_r and target_observed_fraction must be given",
                )
            }
            (None, Some(t)) if !(t > 0.0 && t < 1.0) => {
                return bad("target_observed_fraction", "must lie strictly between 0 and 1")
            }
            _ => {}
        }
        let s = &self.selection;
        for (name, v) in [
            ("selection.alpha_r", s.alpha_r.unwrap_or(0.0)),
            ("selection.beta_r", s.beta_r),
            ("selection.gamma_r", s.gamma_r),
            ("selection.delta_r", s.delta_r),
            ("alpha", self.alpha),
            ("zx_effect", self.zx_effect),
            ("zy_effect", self.zy_effect),
        ] {
            if !v.is_finite() {
                return bad(name, "must be finite");
            }
        }
        if let Some(c) = &self.confounder_selection {
            if !(c.lambda_y.is_finite() && c.lambda_r.is_finite()) {
                return bad("confounder_selection", "effects must be finite");
            }
        }
        if self.error_dist == ErrorDist::Mixture {
            validate_mixture(&ERROR_MIXTURE)?;
        }
        match self.kind {
            ScenarioKind::Regression => {
                if !self.beta.is_some_and(f64::is_finite) {
                    return bad("beta", "a finite regression coefficient is required");
                }
                if self.theta.is_some() {
                    return bad("theta", "only used by MR scenarios");
                }
                if self.mr.is_some() {
                    return bad("mr", "only allowed for MR scenarios");
                }
                if self.outcome_family != OutcomeFamily::Linear && self.error_dist != ErrorDist::Normal {
                    return bad("error_dist", "non-normal errors require a linear outcome");
                }
                if self.covariate_form == VariableForm::Binary && self.zx_effect != 0.0 {
                    return bad("zx_effect", "a binary covariate has no instrument effect");
                }
                if self.outcome_family != OutcomeFamily::Linear && self.confounder_selection.is_some() {
                    return bad("confounder_selection", "requires a linear outcome");
                }
            }
            ScenarioKind::MrSingle | ScenarioKind::MrMulti => {
                if !self.theta.is_some_and(f64::is_finite) {
                    return bad("theta", "a finite causal effect is required");
                }
                if self.beta.is_some() {
                    return bad("beta", "only used by regression scenarios");
                }
                let Some(mr) = &self.mr else {
                    return bad("mr", "section is required for MR scenarios");
                };
                if self.outcome_family != OutcomeFamily::Linear {
                    return bad("outcome_family", "MR scenarios use linear models");
                }
                if self.error_dist != ErrorDist::Normal {
                    return bad("error_dist", "MR scenarios use normal errors");
                }
                if self.covariate_form != VariableForm::Continuous {
                    return bad("covariate_form", "the MR exposure is continuous");
                }
                if self.confounder_selection.is_some() {
                    return bad("confounder_selection", "only used by regression scenarios");
                }
                if mr.k == 0 {
                    return bad("mr.k", "must be at least 1");
                }
                if self.kind == ScenarioKind::MrSingle && mr.k != 1 {
                    return bad("mr.k", "mr_single scenarios have exactly one variant");
                }
                let [lo, hi] = mr.allele_freq;
                if !(0.0 < lo && lo <= hi && hi < 1.0) {
                    return bad("mr.allele_freq", "must satisfy 0 < low <= high < 1");
                }
                match mr.beta_x {
                    BetaXSpec::Fixed(b) if !b.is_finite() => return bad("mr.beta_x", "must be finite"),
                    BetaXSpec::TruncatedNormal { sd, lower } if !(sd > 0.0 && lower.is_finite()) => {
                        return bad("mr.beta_x", "needs sd > 0 and a finite lower bound")
                    }
                    _ => {}
                }
                for (name, v) in [
                    ("mr.alpha_x", mr.alpha_x),
                    ("mr.alpha_y", mr.alpha_y),
                    ("mr.gamma_x", mr.gamma_x),
                    ("mr.gamma_y", mr.gamma_y),
                    ("mr.beta_x2", mr.beta_x2),
                ] {
                    if !v.is_finite() {
                        return bad(name, "must be finite");
                    }
                }
                let est = mr.estimator();
                if est == MrEstimatorChoice::Wald && mr.k != 1 {
                    return bad("mr.estimator", "the Wald ratio needs exactly one variant");
                }
                if est == MrEstimatorChoice::Tsls && mr.design == MrDesign::TwoSample {
                    return bad("mr.estimator", "2SLS needs one-sample individual data");
                }
                if self.kind == ScenarioKind::MrMulti
                    && (mr.first_stage == FirstStage::Quadratic || mr.populations == Populations::Different)
                {
                    return bad("mr.first_stage", "quadratic effects and t(4) scores need a single variant");
                }
                if mr.populations == Populations::Different && mr.design == MrDesign::OneSample {
                    return bad("mr.populations", "different populations require a two-sample design");
                }
            }
        }
        if let Some(s) = &self.sweep {
            if !super::sweep::SWEEPABLE.contains(&s.parameter.as_str()) {
                return bad("sweep.parameter", &format!("`{}` is not a numeric scenario field", s.parameter));
            }
        }
        Ok(())
    }
}
