//! Scenario configs shipped with the crate, one per table regime.

use crate::error::{Error, Result};

use super::config::ScenarioConfig;

/// (name, TOML text) for every bundled scenario.
pub const BUNDLED: &[(&str, &str)] = &[
    ("supp_beta_r_sweep", include_str!("../../configs/supp_beta_r_sweep.toml")),
    ("supp_confounded_selection", include_str!("../../configs/supp_confounded_selection.toml")),
    ("supp_delta_r_sweep", include_str!("../../configs/supp_delta_r_sweep.toml")),
    ("supp_first_stage_linear_different_population", include_str!("../../configs/supp_first_stage_linear_different_population.toml")),
    ("supp_first_stage_linear_one_sample", include_str!("../../configs/supp_first_stage_linear_one_sample.toml")),
    ("supp_first_stage_linear_same_population", include_str!("../../configs/supp_first_stage_linear_same_population.toml")),
    ("supp_first_stage_quadratic_different_population", include_str!("../../configs/supp_first_stage_quadratic_different_population.toml")),
    ("supp_first_stage_quadratic_one_sample", include_str!("../../configs/supp_first_stage_quadratic_one_sample.toml")),
    ("supp_first_stage_quadratic_same_population", include_str!("../../configs/supp_first_stage_quadratic_same_population.toml")),
    ("supp_gamma_r_sweep", include_str!("../../configs/supp_gamma_r_sweep.toml")),
    ("supp_lognormal_errors", include_str!("../../configs/supp_lognormal_errors.toml")),
    ("supp_mixture_errors", include_str!("../../configs/supp_mixture_errors.toml")),
    ("supp_mr_observed_fraction", include_str!("../../configs/supp_mr_observed_fraction.toml")),
    ("supp_mr_sample_size", include_str!("../../configs/supp_mr_sample_size.toml")),
    ("supp_mr_theta_sweep", include_str!("../../configs/supp_mr_theta_sweep.toml")),
    ("supp_mr_zx_sweep", include_str!("../../configs/supp_mr_zx_sweep.toml")),
    ("supp_mr_zy_sweep", include_str!("../../configs/supp_mr_zy_sweep.toml")),
    ("supp_null_binary_outcome", include_str!("../../configs/supp_null_binary_outcome.toml")),
    ("supp_null_binary_x", include_str!("../../configs/supp_null_binary_x.toml")),
    ("supp_null_binary_z", include_str!("../../configs/supp_null_binary_z.toml")),
    ("supp_null_discrete_outcome", include_str!("../../configs/supp_null_discrete_outcome.toml")),
    ("supp_observed_fraction_sweep", include_str!("../../configs/supp_observed_fraction_sweep.toml")),
    ("supp_summary_one_sample_x_r", include_str!("../../configs/supp_summary_one_sample_x_r.toml")),
    ("supp_summary_one_sample_xy_r", include_str!("../../configs/supp_summary_one_sample_xy_r.toml")),
    ("supp_summary_one_sample_y_r", include_str!("../../configs/supp_summary_one_sample_y_r.toml")),
    ("supp_t4_errors", include_str!("../../configs/supp_t4_errors.toml")),
    ("supp_weak_binary_z", include_str!("../../configs/supp_weak_binary_z.toml")),
    ("supp_zx_sweep", include_str!("../../configs/supp_zx_sweep.toml")),
    ("supp_zy_sweep", include_str!("../../configs/supp_zy_sweep.toml")),
    ("table1_baseline", include_str!("../../configs/table1_baseline.toml")),
    ("table1_beta_zero", include_str!("../../configs/table1_beta_zero.toml")),
    ("table1_binary_outcome", include_str!("../../configs/table1_binary_outcome.toml")),
    ("table1_binary_x", include_str!("../../configs/table1_binary_x.toml")),
    ("table1_binary_z", include_str!("../../configs/table1_binary_z.toml")),
    ("table1_discrete_outcome", include_str!("../../configs/table1_discrete_outcome.toml")),
    ("table1_no_xr", include_str!("../../configs/table1_no_xr.toml")),
    ("table1_no_yr_mar", include_str!("../../configs/table1_no_yr_mar.toml")),
    ("table1_zx_effect", include_str!("../../configs/table1_zx_effect.toml")),
    ("table1_zy_effect", include_str!("../../configs/table1_zy_effect.toml")),
    ("table2_instrument_strength", include_str!("../../configs/table2_instrument_strength.toml")),
    ("table3_x_r_one_sample", include_str!("../../configs/table3_x_r_one_sample.toml")),
    ("table3_x_r_two_sample", include_str!("../../configs/table3_x_r_two_sample.toml")),
    ("table3_xy_r_one_sample", include_str!("../../configs/table3_xy_r_one_sample.toml")),
    ("table3_xy_r_two_sample", include_str!("../../configs/table3_xy_r_two_sample.toml")),
    ("table3_y_r_one_sample", include_str!("../../configs/table3_y_r_one_sample.toml")),
    ("table3_y_r_two_sample", include_str!("../../configs/table3_y_r_two_sample.toml")),
    ("table4_summary_x_r", include_str!("../../configs/table4_summary_x_r.toml")),
    ("table4_summary_xy_r", include_str!("../../configs/table4_summary_xy_r.toml")),
    ("table4_summary_y_r", include_str!("../../configs/table4_summary_y_r.toml")),
    ("table4_tsls_x_r", include_str!("../../configs/table4_tsls_x_r.toml")),
    ("table4_tsls_xy_r", include_str!("../../configs/table4_tsls_xy_r.toml")),
    ("table4_tsls_y_r", include_str!("../../configs/table4_tsls_y_r.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn text(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Parses a bundled scenario by name.
pub fn load(name: &str) -> Result<ScenarioConfig> {
    let text = text(name).ok_or_else(|| {
        Error::Config(format!(
            "no bundled scenario `{name}`; available: {}",
            names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    ScenarioConfig::from_toml(text)
}
