//! Data-generating processes and selection-intercept calibration.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numkit::{expit, normal_quantile, normal_sf, RngStream};

use super::config::{
    BetaXSpec, ErrorDist, FirstStage, MrConfig, MrDesign, OutcomeFamily, Populations,
    ScenarioConfig, ScenarioKind, VariableForm, ERROR_MIXTURE, LOGNORMAL_MU, LOGNORMAL_SIGMA2,
};

/// Units in the fixed calibration draw.
pub const CALIBRATION_SAMPLE: usize = 200_000;
const CALIBRATION_TOL: f64 = 0.002;
const CALIBRATION_BRACKET: (f64, f64) = (-20.0, 20.0);
/// Stream index reserved for calibration; replications use 0, 1, 2, ...
const CALIBRATION_STREAM: u64 = u64::MAX;

/// Observed (masked) data together with the complete data used by the oracle.
#[derive(Debug, Clone)]
pub struct Draw {
    pub observed: Dataset,
    pub complete: Dataset,
}

#[derive(Debug, Clone)]
pub enum MrData {
    OneSample(Draw),
    TwoSample { exposure: Draw, outcome: Draw },
}

/// Columns of one sample plus the selection index without its intercept.
struct Latent {
    columns: Vec<(String, Vec<f64>)>,
    index: Vec<f64>,
}

impl Latent {
    fn select(self, alpha_r: f64, governed: &[&str], keep: &[&str], stream: &mut RngStream) -> Result<Draw> {
        let selected: Vec<bool> = self.index.iter().map(|s| stream.uniform01() < expit(alpha_r + s)).collect();
        let columns: Vec<(String, Vec<f64>)> =
            self.columns.into_iter().filter(|(name, _)| keep.contains(&name.as_str())).collect();
        let complete = Dataset::complete(columns.clone())?;
        let selected = if governed.is_empty() { vec![true; selected.len()] } else { selected };
        let observed = Dataset::with_selection(columns, selected, governed)?;
        Ok(Draw { observed, complete })
    }
}

fn draw_instrument(form: VariableForm, stream: &mut RngStream) -> f64 {
    match form {
        VariableForm::Continuous => stream.normal(),
        VariableForm::Binary => stream.bernoulli(0.5),
    }
}

fn draw_error(dist: ErrorDist, stream: &mut RngStream) -> Result<f64> {
    match dist {
        ErrorDist::Normal => Ok(stream.normal()),
        ErrorDist::T4 => stream.sample_t(4.0),
        ErrorDist::Lognormal => stream.sample_lognormal(LOGNORMAL_MU, LOGNORMAL_SIGMA2),
        ErrorDist::Mixture => stream.sample_normal_mixture(&ERROR_MIXTURE),
    }
}

/// Draws one ε from the configured error distribution (exposed for distribution checks).
pub fn sample_error(dist: ErrorDist, stream: &mut RngStream) -> Result<f64> {
    draw_error(dist, stream)
}

fn regression_latent(cfg: &ScenarioConfig, n: usize, stream: &mut RngStream) -> Result<Latent> {
    let beta = cfg.truth();
    let s = &cfg.selection;
    let (mut z, mut x, mut y, mut index) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let zi = draw_instrument(cfg.instrument_form, stream);
        let xi = match cfg.covariate_form {
            VariableForm::Continuous => cfg.zx_effect * zi + stream.normal(),
            VariableForm::Binary => stream.bernoulli(0.5),
        };
        let (v_y, v_r) = match &cfg.confounder_selection {
            Some(c) => {
                let v = stream.normal();
                (c.lambda_y * v, c.lambda_r * v)
            }
            None => (0.0, 0.0),
        };
        let eta = cfg.alpha + beta * xi + cfg.zy_effect * zi;
        let yi = match cfg.outcome_family {
            OutcomeFamily::Linear => eta + v_y + draw_error(cfg.error_dist, stream)?,
            OutcomeFamily::Logistic => stream.bernoulli(expit(eta)),
            OutcomeFamily::Poisson => stream.sample_poisson(eta.exp())?,
        };
        index.push(s.beta_r * xi + s.gamma_r * zi + s.delta_r * yi + v_r);
        z.push(zi);
        x.push(xi);
        y.push(yi);
    }
    Ok(Latent { columns: vec![("x".into(), x), ("z".into(), z), ("y".into(), y)], index })
}

/// Names of the variant columns: `g` for a single variant, `g1`..`gK` otherwise.
pub fn variant_names(k: usize) -> Vec<String> {
    if k == 1 {
        vec!["g".into()]
    } else {
        (1..=k).map(|j| format!("g{j}")).collect()
    }
}

/// Per-replication genetic architecture.
struct Architecture {
    beta_x: Vec<f64>,
    /// Allele frequencies (`mr_multi`); empty for a normal score.
    freq: Vec<f64>,
}

/// Draw from N(0, sd²) conditioned on exceeding `lower`, by inverting the truncated CDF.
fn truncated_normal(sd: f64, lower: f64, stream: &mut RngStream) -> Result<f64> {
    let tail = normal_sf(lower / sd);
    let u = stream.uniform01();
    Ok(-sd * normal_quantile((1.0 - u) * tail)?)
}

fn architecture(cfg: &ScenarioConfig, mr: &MrConfig, stream: &mut RngStream) -> Result<Architecture> {
    let beta_x = (0..mr.k)
        .map(|_| match mr.beta_x {
            BetaXSpec::Fixed(b) => Ok(b),
            BetaXSpec::TruncatedNormal { sd, lower } => truncated_normal(sd, lower, stream),
        })
        .collect::<Result<Vec<_>>>()?;
    let freq = if cfg.kind == ScenarioKind::MrMulti {
        (0..mr.k).map(|_| stream.sample_uniform(mr.allele_freq[0], mr.allele_freq[1])).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    Ok(Architecture { beta_x, freq })
}

fn mr_latent(
    cfg: &ScenarioConfig,
    mr: &MrConfig,
    arch: &Architecture,
    second_population: bool,
    n: usize,
    stream: &mut RngStream,
) -> Result<Latent> {
    let theta = cfg.truth();
    let s = &cfg.selection;
    let k = mr.k;
    let mut g = vec![Vec::with_capacity(n); k];
    let (mut x, mut y, mut z, mut index) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let mut xi = mr.alpha_x;
        for j in 0..k {
            let gj = if arch.freq.is_empty() {
                if second_population {
                    stream.sample_t(4.0)?
                } else {
                    stream.normal()
                }
            } else {
                stream.sample_binomial2(arch.freq[j])?
            };
            xi += arch.beta_x[j] * gj;
            if mr.first_stage == FirstStage::Quadratic {
                xi += mr.beta_x2 * gj * gj;
            }
            g[j].push(gj);
        }
        let zi = draw_instrument(cfg.instrument_form, stream);
        let u = stream.normal();
        xi += mr.gamma_x * u + cfg.zx_effect * zi + stream.normal();
        let yi = mr.alpha_y + theta * xi + mr.gamma_y * u + cfg.zy_effect * zi + stream.normal();
        index.push(s.beta_r * xi + s.gamma_r * zi + s.delta_r * yi);
        x.push(xi);
        y.push(yi);
        z.push(zi);
    }
    let mut columns: Vec<(String, Vec<f64>)> = variant_names(k).into_iter().zip(g).collect();
    columns.push(("x".into(), x));
    columns.push(("y".into(), y));
    columns.push(("z".into(), z));
    Ok(Latent { columns, index })
}

fn resolved_alpha_r(cfg: &ScenarioConfig) -> Result<f64> {
    match (cfg.selection.alpha_r, cfg.target_observed_fraction) {
        (Some(a), _) => Ok(a),
        (None, Some(t)) => calibrate_alpha_r(cfg, t),
        (None, None) => Err(Error::Config("`selection.alpha_r`: no intercept or target fraction".into())),
    }
}

/// Regression scenario: columns `x`, `z`, `y`, with `y` masked where R = 0.
///
/// Calibrates α_R first when the config gives a target observed fraction.
pub fn generate_regression(cfg: &ScenarioConfig, stream: &mut RngStream) -> Result<Dataset> {
    Ok(draw_regression(cfg, stream)?.observed)
}

/// As [`generate_regression`], also returning the unmasked data.
pub fn draw_regression(cfg: &ScenarioConfig, stream: &mut RngStream) -> Result<Draw> {
    if cfg.kind != ScenarioKind::Regression {
        return Err(Error::Config("`kind`: expected a regression scenario".into()));
    }
    cfg.validate()?;
    let alpha_r = resolved_alpha_r(cfg)?;
    regression_latent(cfg, cfg.n, stream)?.select(alpha_r, &["y"], &["x", "z", "y"], stream)
}

/// MR scenario: variant columns, `x`, `y`, `z`.
///
/// One-sample data share one selection indicator masking the variables in `missing_on`.
/// Two-sample designs return an exposure sample (variants, `x`, `z`) and an outcome sample
/// (variants, `y`, `z`), each with its own selection draw.
pub fn generate_mr(cfg: &ScenarioConfig, stream: &mut RngStream) -> Result<MrData> {
    cfg.validate()?;
    let Some(mr) = cfg.mr.as_ref().filter(|_| cfg.kind != ScenarioKind::Regression) else {
        return Err(Error::Config("`kind`: expected an MR scenario".into()));
    };
    let alpha_r = resolved_alpha_r(cfg)?;
    let arch = architecture(cfg, mr, stream)?;
    let variants = variant_names(mr.k);
    let mut keep: Vec<&str> = variants.iter().map(String::as_str).collect();
    match mr.design {
        MrDesign::OneSample => {
            keep.extend(["x", "y", "z"]);
            let mut governed = Vec::new();
            if mr.missing_on.exposure() {
                governed.push("x");
            }
            if mr.missing_on.outcome() {
                governed.push("y");
            }
            let latent = mr_latent(cfg, mr, &arch, false, cfg.n, stream)?;
            Ok(MrData::OneSample(latent.select(alpha_r, &governed, &keep, stream)?))
        }
        MrDesign::TwoSample => {
            let mut keep_x = keep.clone();
            keep_x.extend(["x", "z"]);
            let gov_x: &[&str] = if mr.missing_on.exposure() { &["x"] } else { &[] };
            let exposure = mr_latent(cfg, mr, &arch, false, cfg.n, stream)?.select(alpha_r, gov_x, &keep_x, stream)?;
            keep.extend(["y", "z"]);
            let gov_y: &[&str] = if mr.missing_on.outcome() { &["y"] } else { &[] };
            let second = mr.populations == Populations::Different;
            let outcome = mr_latent(cfg, mr, &arch, second, cfg.n, stream)?.select(alpha_r, gov_y, &keep, stream)?;
            Ok(MrData::TwoSample { exposure, outcome })
        }
    }
}

/// Selection index (without α_R) over a fresh draw of `n` units.
pub fn selection_index(cfg: &ScenarioConfig, n: usize, stream: &mut RngStream) -> Result<Vec<f64>> {
    let latent = match (cfg.kind, &cfg.mr) {
        (ScenarioKind::Regression, _) => regression_latent(cfg, n, stream)?,
        (_, Some(mr)) => {
            let arch = architecture(cfg, mr, stream)?;
            mr_latent(cfg, mr, &arch, false, n, stream)?
        }
        (_, None) => return Err(Error::Config("`mr`: section is required for MR scenarios".into())),
    };
    Ok(latent.index)
}

fn mean_probability(alpha_r: f64, index: &[f64]) -> f64 {
    index.iter().map(|s| expit(alpha_r + s)).sum::<f64>() / index.len() as f64
}

/// Selection intercept giving mean selection probability `target`, by bisection on a
/// fixed calibration draw from a stream reserved for this purpose.
pub fn calibrate_alpha_r(cfg: &ScenarioConfig, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Domain(format!("target probability {target} must lie in (0, 1)")));
    }
    let mut stream = RngStream::new(cfg.base_seed, CALIBRATION_STREAM);
    let index = selection_index(cfg, CALIBRATION_SAMPLE, &mut stream)?;
    let (mut lo, mut hi) = CALIBRATION_BRACKET;
    let (f_lo, f_hi) = (mean_probability(lo, &index), mean_probability(hi, &index));
    if !(f_lo < target && target < f_hi) {
        return Err(Error::Config(format!(
            "target observed fraction {target} unattainable: α_R in [{lo}, {hi}] gives [{f_lo:.4}, {f_hi:.4}]"
        )));
    }
    // Bisect to a narrow bracket; the midpoint then meets the tolerance by a wide margin.
    let mut mid = 0.5 * (lo + hi);
    while hi - lo > 1e-10 {
        mid = 0.5 * (lo + hi);
        if mean_probability(mid, &index) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let achieved = mean_probability(mid, &index);
    if (achieved - target).abs() >= CALIBRATION_TOL {
        return Err(Error::Estimation(format!(
            "calibration reached {achieved:.4} for target {target}"
        )));
    }
    Ok(mid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::bundled;

    #[test]
    fn regression_masks_only_unselected_outcomes() {
        let mut cfg = bundled::load("table1_baseline").unwrap();
        cfg.n = 2000;
        let mut s = RngStream::new(1, 0);
        let d = draw_regression(&cfg, &mut s).unwrap();
        let y = d.observed.column("y").unwrap();
        for (i, &r) in d.observed.selected().iter().enumerate() {
            assert_eq!(y[i].is_nan(), !r);
        }
        assert!(!d.complete.has_missing("y"));
        assert_eq!(d.complete.column("x").unwrap(), d.observed.column("x").unwrap());
    }

    #[test]
    fn truncated_normal_respects_bound() {
        let mut s = RngStream::new(3, 0);
        for _ in 0..1000 {
            let b = truncated_normal(0.05, 0.15, &mut s).unwrap();
            assert!((0.15..0.4).contains(&b), "{b}");
        }
    }

    #[test]
    fn zero_slopes_calibrate_to_zero() {
        let mut cfg = bundled::load("table1_baseline").unwrap();
        cfg.selection.beta_r = 0.0;
        cfg.selection.gamma_r = 0.0;
        cfg.selection.delta_r = 0.0;
        let a = calibrate_alpha_r(&cfg, 0.5).unwrap();
        assert!(a.abs() < 0.01, "{a}");
    }

    #[test]
    fn two_sample_carries_own_variable() {
        let mut cfg = bundled::load("table4_summary_x_r").unwrap();
        cfg.n = 500;
        let mut s = RngStream::new(9, 0);
        let MrData::TwoSample { exposure, outcome } = generate_mr(&cfg, &mut s).unwrap() else {
            panic!("expected two samples");
        };
        assert!(exposure.observed.column("y").is_err() && outcome.observed.column("x").is_err());
        assert!(exposure.observed.has_missing("x") && !outcome.observed.has_missing("y"));
        assert_eq!(outcome.observed.n_selected(), 500);
    }
}
