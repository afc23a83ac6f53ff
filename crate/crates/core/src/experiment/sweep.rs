//! Parameter sweeps with analytical overlays: one metrics row per axis
//! value, evaluated at the configured or solver-selected threshold.

use serde::{Deserialize, Serialize};

use crate::analysis::MatchingModel;
use crate::error::{Error, Result};

use super::{Experiment, ExperimentConfig, MetricsReport, TauSpec};

/// Sweepable experiment axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Tau,
    Gain,
    PPos,
    QueryDim,
}

impl SweepAxis {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "tau" => Ok(SweepAxis::Tau),
            "gain" => Ok(SweepAxis::Gain),
            "p_pos" => Ok(SweepAxis::PPos),
            "query_dim" => Ok(SweepAxis::QueryDim),
            other => Err(Error::invalid("axis", format!("unknown axis {other:?} (expected tau, gain, p_pos, or query_dim)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Tau => "tau",
            SweepAxis::Gain => "gain",
            SweepAxis::PPos => "p_pos",
            SweepAxis::QueryDim => "query_dim",
        }
    }
}

/// One sweep point: simulated metrics plus the analytical predictions at
/// the same threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub tau_used: f64,
    pub accuracy: f64,
    pub acc_ci: f64,
    pub eps_md: f64,
    pub md_ci: f64,
    pub eps_fa: f64,
    pub fa_ci: f64,
    pub mean_ntp: f64,
    pub analytic_md: f64,
    pub analytic_fa: f64,
    pub analytic_entp: f64,
}

impl SweepRow {
    fn build(axis_value: f64, tau: f64, report: &MetricsReport, exp: &Experiment) -> Result<Self> {
        let params = exp.match_params();
        let (analytic_md, analytic_fa) = params.end_to_end_md_fa(tau, exp.channel())?;
        let analytic_entp = params.expected_tp(tau, exp.channel())?;
        Ok(SweepRow {
            axis_value,
            tau_used: tau,
            accuracy: report.accuracy,
            acc_ci: report.accuracy_ci,
            eps_md: report.eps_md,
            md_ci: report.eps_md_ci,
            eps_fa: report.eps_fa,
            fa_ci: report.eps_fa_ci,
            mean_ntp: report.mean_ntp,
            analytic_md,
            analytic_fa,
            analytic_entp,
        })
    }
}

fn config_at(base: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::Tau => {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::domain("sweep", format!("tau value must lie in (0,1], got {value}")));
            }
            cfg.tau = TauSpec::Fixed(value);
        }
        SweepAxis::Gain => {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::domain("sweep", format!("gain value must be positive, got {value}")));
            }
            cfg.target_gain = value;
        }
        SweepAxis::PPos => {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::domain("sweep", format!("p_pos value must lie in [0,1], got {value}")));
            }
            cfg.p_pos = value;
        }
        SweepAxis::QueryDim => {
            if value.fract() != 0.0 || value < 1.0 || value > base.feature_dim as f64 {
                return Err(Error::domain("sweep", format!("query_dim value must be an integer in [1, {}], got {value}", base.feature_dim)));
            }
            cfg.query_dim = value as usize;
        }
    }
    Ok(cfg)
}

impl Experiment {
    /// Runs the experiment across `values` of `axis` with `trials` rounds
    /// per point. The threshold is the swept value on the τ axis and the
    /// solver optimum elsewhere. Every point reuses the base seed, so
    /// adjacent points share scenario draws.
    pub fn sweep(
        &self,
        axis: SweepAxis,
        values: &[f64],
        trials: usize,
    ) -> Result<Vec<SweepRow>> {
        if values.is_empty() {
            return Err(Error::invalid("values", "sweep needs at least one value"));
        }
        let mut rows = Vec::with_capacity(values.len());
        for &value in values {
            let cfg = config_at(self.config(), axis, value)?;
            let point = Experiment::new(cfg)?;
            // Non-τ axes operate at the optimized threshold of the point's
            // own channel.
            let tau = match axis {
                SweepAxis::Tau => value,
                _ => {
                    let mut auto = point.config().clone();
                    auto.tau = TauSpec::Auto;
                    Experiment::new(auto)?.resolve_tau()?.0
                }
            };
            let report = point.estimate_metrics(tau, trials, point.config().seed)?;
            rows.push(SweepRow::build(value, tau, &report, &point)?);
        }
        Ok(rows)
    }
}
