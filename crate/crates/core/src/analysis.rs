//! Closed-form matching statistics, transmission-rate mapping, end-to-end
//! missed-detection / false-alarm combination, threshold optimization, and
//! empirical score calibration.
//!
//! The matching stage admits a device when its score clears the threshold
//! τ. For a query-class device the squared key distance is a central
//! chi-square variable, for a foreign-class device a noncentral one with
//! noncentrality G_ij/2, which yields the two closed forms below in terms
//! of the regularized incomplete gamma function and the Marcum Q-function
//! (both in τ̃ = l ln(1/τ)).

use serde::{Deserialize, Serialize};

use crate::channel::{AccessScheme, ChannelParams};
use crate::error::{Error, Result};
use crate::query::Projection;
use crate::special::{ln_gamma, ln_normalized_bessel_i, marcum_q, reg_gamma_lower, reg_gamma_upper};

/// Open-interval guard at τ → 0. Matching at or below this threshold is
/// operationally "accept everything".
pub const TAU_MIN: f64 = 1e-6;

fn check_tau(op: &'static str, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::domain(op, format!("threshold must lie in (0, 1], got {tau}")));
    }
    Ok(())
}

/// Common surface over closed-form and empirically calibrated matching
/// statistics, so the rate mapping and the numeric threshold solvers accept
/// either.
pub trait MatchingModel {
    /// Probability that a query-class device fails to transmit.
    fn md_match_prob(&self, tau: f64) -> Result<f64>;
    /// Probability that a foreign-class device transmits.
    fn fa_match_prob(&self, tau: f64) -> Result<f64>;
    fn p_pos(&self) -> f64;
    fn num_devices(&self) -> usize;

    /// Poisson rates of true-positive and false-alarm transmissions:
    /// λ_TP = M p_pos (1 - ε_MD,match), λ_FA = M (1 - p_pos) ε_FA,match.
    fn tx_rates(&self, tau: f64) -> Result<(f64, f64)> {
        let m = self.num_devices() as f64;
        let lambda_tp = m * self.p_pos() * (1.0 - self.md_match_prob(tau)?);
        let lambda_fa = m * (1.0 - self.p_pos()) * self.fa_match_prob(tau)?;
        Ok((lambda_tp, lambda_fa))
    }

    /// Expected number of received true positives λ_TP (1 - p_err_ul). For
    /// the repetition scheme the approximation is valid below the frame
    /// capacity and the objective is zero at or beyond it.
    fn expected_tp(&self, tau: f64, channel: &ChannelParams) -> Result<f64> {
        let (lambda_tp, lambda_fa) = self.tx_rates(tau)?;
        let total = lambda_tp + lambda_fa;
        match &channel.scheme {
            AccessScheme::Aloha => Ok(lambda_tp * (1.0 - channel.uplink_error_prob(total)?)),
            AccessScheme::Irsa { .. } => {
                if total >= channel.slots as f64 {
                    Ok(0.0)
                } else {
                    Ok(lambda_tp * (1.0 - channel.uplink_error_prob(total)?))
                }
            }
        }
    }

    /// End-to-end missed-detection and false-alarm approximations with the
    /// uplink folded in at the matched arrival rate.
    fn end_to_end_md_fa(&self, tau: f64, channel: &ChannelParams) -> Result<(f64, f64)> {
        let md_match = self.md_match_prob(tau)?;
        let fa_match = self.fa_match_prob(tau)?;
        let (lambda_tp, lambda_fa) = self.tx_rates(tau)?;
        let p_ul = channel.uplink_error_prob(lambda_tp + lambda_fa)?;
        Ok(combine_md_fa(md_match, fa_match, p_ul))
    }
}

/// Folds an uplink error probability into the matching-stage statistics:
/// ε_MD = ε_m + p_ul (1 - ε_m), ε_FA = (1 - p_ul) ε_f.
pub fn combine_md_fa(md_match: f64, fa_match: f64, p_err_ul: f64) -> (f64, f64) {
    (
        md_match + p_err_ul * (1.0 - md_match),
        (1.0 - p_err_ul) * fa_match,
    )
}

/// Closed-form matching statistics of the Gaussian sensing world under a
/// fixed projection: query dimension, pairwise discriminant gains, downlink
/// outage, and the population parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchParams {
    query_dim: usize,
    num_classes: usize,
    gains: Vec<Vec<f64>>,
    /// Distinct gain values with pair multiplicities; collapsing exact
    /// duplicates keeps the Marcum sums cheap on dense grids.
    gain_spectrum: Vec<(f64, usize)>,
    p_err_dl: f64,
    p_pos: f64,
    num_devices: usize,
}

impl MatchParams {
    pub fn new(
        query_dim: usize,
        gains: Vec<Vec<f64>>,
        p_err_dl: f64,
        p_pos: f64,
        num_devices: usize,
    ) -> Result<Self> {
        if query_dim == 0 {
            return Err(Error::invalid("query_dim", "must be at least 1"));
        }
        let z = gains.len();
        if z < 2 {
            return Err(Error::invalid("gains", "need at least two classes"));
        }
        if gains.iter().any(|row| row.len() != z) {
            return Err(Error::invalid("gains", "matrix must be square"));
        }
        for i in 0..z {
            if gains[i][i] != 0.0 {
                return Err(Error::invalid("gains", format!("diagonal entry {i} must be zero")));
            }
            for j in 0..z {
                let g = gains[i][j];
                if !(g >= 0.0) || !g.is_finite() {
                    return Err(Error::invalid("gains", format!("entry ({i},{j}) must be finite and nonnegative")));
                }
                let asym = (g - gains[j][i]).abs();
                if asym > 1e-9 * g.abs().max(1.0) {
                    return Err(Error::invalid("gains", format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
            }
        }
        for (name, p) in [("p_err_dl", p_err_dl), ("p_pos", p_pos)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid("probability", format!("{name} must lie in [0,1], got {p}")));
            }
        }
        let mut upper: Vec<f64> = Vec::with_capacity(z * (z - 1) / 2);
        for i in 0..z {
            for j in (i + 1)..z {
                upper.push(gains[i][j]);
            }
        }
        upper.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut gain_spectrum: Vec<(f64, usize)> = Vec::new();
        for g in upper {
            match gain_spectrum.last_mut() {
                Some((v, count)) if *v == g => *count += 1,
                _ => gain_spectrum.push((g, 1)),
            }
        }
        Ok(MatchParams {
            query_dim,
            num_classes: z,
            gains,
            gain_spectrum,
            p_err_dl,
            p_pos,
            num_devices,
        })
    }

    /// Parameters under the gains induced by an optimized projection.
    pub fn from_projection(
        projection: &Projection,
        p_err_dl: f64,
        p_pos: f64,
        num_devices: usize,
    ) -> Result<Self> {
        Self::new(
            projection.query_dim(),
            projection.gains().to_vec(),
            p_err_dl,
            p_pos,
            num_devices,
        )
    }

    pub fn query_dim(&self) -> usize {
        self.query_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn gains(&self) -> &[Vec<f64>] {
        &self.gains
    }

    pub fn p_err_dl(&self) -> f64 {
        self.p_err_dl
    }

    fn pair_count(&self) -> f64 {
        let z = self.num_classes as f64;
        z * (z - 1.0) / 2.0
    }

    fn tau_tilde(&self, tau: f64) -> f64 {
        self.query_dim as f64 * (1.0 / tau).ln()
    }

    /// Optimality residual ψ(τ) of the expected true-positive objective
    /// under slotted ALOHA. Strictly increasing in τ; its unique root (when
    /// one exists in (0, 1]) is the maximizer. Approaches `slots` as τ → 1
    /// and diverges to -∞ as τ → 0.
    ///
    /// The Bessel-series pair terms are evaluated in log space with the
    /// largest term factored out, so large gain-threshold products cannot
    /// overflow intermediate sums; an astronomically negative residual
    /// saturates to -∞ with the correct sign.
    pub fn psi(&self, tau: f64, slots: usize) -> Result<f64> {
        check_tau("psi", tau)?;
        let l = self.query_dim as f64;
        let tt = self.tau_tilde(tau);
        let gamma_low = reg_gamma_lower(l / 2.0, tt / 4.0)?;
        if gamma_low == 0.0 {
            return Ok(slots as f64);
        }
        // Pair sum Σ_{i<j} e^{-G/4} Ĩ_{l/2-1}(G τ̃ / 16) in log space, where
        // Ĩ_ν(u) = Σ_k u^k / (k! Γ(ν+k+1)) carries the Bessel series.
        let nu = l / 2.0 - 1.0;
        let log_terms: Vec<(f64, f64)> = self
            .gain_spectrum
            .iter()
            .map(|&(g, count)| {
                (
                    ln_normalized_bessel_i(nu, g * tt / 16.0) - g / 4.0,
                    count as f64,
                )
            })
            .collect();
        let peak = log_terms
            .iter()
            .map(|&(v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let rel_sum: f64 = log_terms
            .iter()
            .map(|&(v, c)| c * (v - peak).exp())
            .sum();
        let z = self.num_classes as f64;
        // (1-p_pos) 2^{l-1} Γ(l/2) φ(τ̃) / (|Z|(|Z|-1)) with the τ̃ and gain
        // powers of φ cancelled against the series prefactor.
        let ln_fa_weight = (2.0 / (z * (z - 1.0))).ln() + ln_gamma(l / 2.0) + peak + rel_sum.ln();
        let fa_weight = (1.0 - self.p_pos) * ln_fa_weight.exp();
        let m = self.num_devices as f64;
        Ok(slots as f64 - m * (1.0 - self.p_err_dl) * gamma_low * (self.p_pos + fa_weight))
    }

    /// Root of ψ by bisection on (TAU_MIN, 1]. When ψ is positive on the
    /// whole bracket the objective is decreasing everywhere and the
    /// boundary τ = TAU_MIN is returned with the boundary flag set.
    pub fn solve_threshold_aloha(&self, slots: usize) -> Result<ThresholdSolution> {
        let residual_tol = 1e-9 * slots as f64;
        let mut lo = TAU_MIN;
        let mut hi = 1.0;
        let psi_lo = self.psi(lo, slots)?;
        let mut iterations = 0;
        let (tau, residual, boundary) = if psi_lo >= 0.0 {
            (lo, psi_lo, true)
        } else {
            let mut tau = lo;
            let mut residual = psi_lo;
            for _ in 0..500 {
                iterations += 1;
                let mid = 0.5 * (lo + hi);
                let v = self.psi(mid, slots)?;
                tau = mid;
                residual = v;
                if v.abs() <= residual_tol || (hi - lo) < f64::EPSILON * hi {
                    break;
                }
                if v < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (tau, residual, false)
        };
        let channel = ChannelParams::aloha(slots);
        let (lambda_tp, lambda_fa) = self.tx_rates(tau)?;
        Ok(ThresholdSolution {
            tau,
            expected_tp: self.expected_tp(tau, &channel)?,
            lambda_tp,
            lambda_fa,
            p_err_ul: channel.uplink_error_prob(lambda_tp + lambda_fa)?,
            solver: SolverKind::AlohaRoot,
            iterations,
            residual,
            boundary,
        })
    }

    /// Constrained numeric maximization for the repetition scheme: find the
    /// feasibility bound τ_lb where the arrival rate meets the frame size,
    /// then golden-section ascent from ten equally spaced starts.
    pub fn solve_threshold_irsa(&self, channel: &ChannelParams) -> Result<ThresholdSolution> {
        solve_threshold_numeric(self, channel)
    }
}

impl MatchingModel for MatchParams {
    /// 1 - (1 - p_err_dl)(1 - Q(l/2, τ̃/4)) with Q the regularized upper
    /// incomplete gamma function.
    fn md_match_prob(&self, tau: f64) -> Result<f64> {
        check_tau("md_match_prob", tau)?;
        let l = self.query_dim as f64;
        let upper = reg_gamma_upper(l / 2.0, self.tau_tilde(tau) / 4.0)?;
        Ok(1.0 - (1.0 - self.p_err_dl) * (1.0 - upper))
    }

    /// (1 - p_err_dl)[1 - mean pairwise Marcum Q(l/2, √(G/2), √(τ̃/2))].
    fn fa_match_prob(&self, tau: f64) -> Result<f64> {
        check_tau("fa_match_prob", tau)?;
        let l = self.query_dim as f64;
        let tt = self.tau_tilde(tau);
        let b = (tt / 2.0).sqrt();
        let mut acc = 0.0;
        for &(g, count) in &self.gain_spectrum {
            acc += count as f64 * marcum_q(l / 2.0, (g / 2.0).sqrt(), b)?;
        }
        Ok((1.0 - self.p_err_dl) * (1.0 - acc / self.pair_count()))
    }

    fn p_pos(&self) -> f64 {
        self.p_pos
    }

    fn num_devices(&self) -> usize {
        self.num_devices
    }
}

/// Threshold solver outcome with predicted operating point and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSolution {
    pub tau: f64,
    pub expected_tp: f64,
    pub lambda_tp: f64,
    pub lambda_fa: f64,
    pub p_err_ul: f64,
    pub solver: SolverKind,
    pub iterations: usize,
    /// ψ residual at the root for the bisection solver, final bracket width
    /// for the multistart solver.
    pub residual: f64,
    /// Set when the optimum sits on the τ boundary instead of a root.
    pub boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    AlohaRoot,
    IrsaMultistart,
    Grid,
}

/// Golden-section ascent of the expected true-positive objective from ten
/// equally spaced starts over the feasible threshold range. Works for any
/// matching model, including empirically calibrated curves.
pub fn solve_threshold_numeric<M: MatchingModel>(
    model: &M,
    channel: &ChannelParams,
) -> Result<ThresholdSolution> {
    let slots = channel.slots;
    let rate = |tau: f64| -> Result<f64> {
        let (tp, fa) = model.tx_rates(tau)?;
        Ok(tp + fa)
    };
    // Feasibility bound: arrival rate is monotone decreasing in τ.
    let mut iterations = 0usize;
    let tau_lb = if rate(TAU_MIN)? <= slots as f64 {
        TAU_MIN
    } else {
        let mut lo = TAU_MIN;
        let mut hi = 1.0;
        while hi - lo > 1e-12 {
            iterations += 1;
            let mid = 0.5 * (lo + hi);
            if rate(mid)? > slots as f64 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };

    let objective = |tau: f64| -> Result<f64> { model.expected_tp(tau, channel) };

    const STARTS: usize = 10;
    let width = (1.0 - tau_lb) / STARTS as f64;
    let mut best_tau = tau_lb;
    let mut best_val = objective(tau_lb)?;
    let mut best_width = 1.0 - tau_lb;
    let at_one = objective(1.0)?;
    if at_one > best_val {
        best_val = at_one;
        best_tau = 1.0;
        best_width = 0.0;
    }
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    for start in 0..STARTS {
        let center = tau_lb + (start as f64 + 0.5) * width;
        let mut a = (center - width).max(tau_lb);
        let mut b = (center + width).min(1.0);
        let mut x1 = b - inv_phi * (b - a);
        let mut x2 = a + inv_phi * (b - a);
        let mut f1 = objective(x1)?;
        let mut f2 = objective(x2)?;
        while b - a > 1e-10 {
            iterations += 1;
            if f1 >= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - inv_phi * (b - a);
                f1 = objective(x1)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + inv_phi * (b - a);
                f2 = objective(x2)?;
            }
        }
        let (tau, val) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
        if val > best_val {
            best_val = val;
            best_tau = tau;
            best_width = b - a;
        }
    }

    let (lambda_tp, lambda_fa) = model.tx_rates(best_tau)?;
    let p_err_ul = channel.uplink_error_prob(lambda_tp + lambda_fa)?;
    Ok(ThresholdSolution {
        tau: best_tau,
        expected_tp: best_val,
        lambda_tp,
        lambda_fa,
        p_err_ul,
        solver: SolverKind::IrsaMultistart,
        iterations,
        residual: best_width,
        boundary: best_tau <= TAU_MIN,
    })
}

/// Empirical matching curves built from labelled score samples: step
/// functions of the positive-pair and negative-pair score distributions
/// with the downlink outage folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCurves {
    positives: Vec<f64>,
    negatives: Vec<f64>,
    p_err_dl: f64,
}

/// Builds empirical curves from raw matched scores. Positive scores come
/// from query-class pairs, negative scores from foreign-class pairs.
pub fn calibrate_empirical(
    positive_scores: &[f64],
    negative_scores: &[f64],
    p_err_dl: f64,
) -> Result<EmpiricalCurves> {
    if positive_scores.is_empty() {
        return Err(Error::EmptySamples("positive"));
    }
    if negative_scores.is_empty() {
        return Err(Error::EmptySamples("negative"));
    }
    if !(0.0..=1.0).contains(&p_err_dl) {
        return Err(Error::invalid("p_err_dl", format!("must lie in [0,1], got {p_err_dl}")));
    }
    let validate = |scores: &[f64]| -> Result<Vec<f64>> {
        if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::invalid("scores", "matching scores must lie in [0,1]"));
        }
        let mut v = scores.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(v)
    };
    Ok(EmpiricalCurves {
        positives: validate(positive_scores)?,
        negatives: validate(negative_scores)?,
        p_err_dl,
    })
}

impl EmpiricalCurves {
    /// Fraction of positive scores strictly below τ (a device transmits
    /// when its score is at or above the threshold).
    pub fn conditional_md(&self, tau: f64) -> f64 {
        let below = self.positives.partition_point(|&s| s < tau);
        below as f64 / self.positives.len() as f64
    }

    /// Fraction of negative scores at or above τ.
    pub fn conditional_fa(&self, tau: f64) -> f64 {
        let below = self.negatives.partition_point(|&s| s < tau);
        (self.negatives.len() - below) as f64 / self.negatives.len() as f64
    }

    /// ε_MD,match(τ) = p_dl + (1 - p_dl) ε'_MD(τ).
    pub fn md_match_prob(&self, tau: f64) -> f64 {
        self.p_err_dl + (1.0 - self.p_err_dl) * self.conditional_md(tau)
    }

    /// ε_FA,match(τ) = (1 - p_dl) ε'_FA(τ).
    pub fn fa_match_prob(&self, tau: f64) -> f64 {
        (1.0 - self.p_err_dl) * self.conditional_fa(tau)
    }

    /// Wires the curves to population parameters so they can replace the
    /// closed forms in the rate mapping and the numeric solver.
    pub fn with_population(self, p_pos: f64, num_devices: usize) -> Result<EmpiricalMatchParams> {
        if !(0.0..=1.0).contains(&p_pos) {
            return Err(Error::invalid("p_pos", format!("must lie in [0,1], got {p_pos}")));
        }
        Ok(EmpiricalMatchParams {
            curves: self,
            p_pos,
            num_devices,
        })
    }
}

/// Empirical curves paired with the population parameters needed by the
/// rate mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMatchParams {
    curves: EmpiricalCurves,
    p_pos: f64,
    num_devices: usize,
}

impl EmpiricalMatchParams {
    pub fn curves(&self) -> &EmpiricalCurves {
        &self.curves
    }
}

impl MatchingModel for EmpiricalMatchParams {
    fn md_match_prob(&self, tau: f64) -> Result<f64> {
        check_tau("md_match_prob", tau)?;
        Ok(self.curves.md_match_prob(tau))
    }

    fn fa_match_prob(&self, tau: f64) -> Result<f64> {
        check_tau("fa_match_prob", tau)?;
        Ok(self.curves.fa_match_prob(tau))
    }

    fn p_pos(&self) -> f64 {
        self.p_pos
    }

    fn num_devices(&self) -> usize {
        self.num_devices
    }
}
