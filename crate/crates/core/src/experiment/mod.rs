//! End-to-end Monte Carlo of the full protocol and estimation of the
//! operating metrics: inference accuracy, missed detection, false alarm,
//! and the received true-positive count.
//!
//! Trials are partitioned across workers with one counter-based random
//! stream per trial index, derived from the experiment seed, and reduced in
//! trial order, so a report is bit-identical for any worker count. Runs
//! that share a seed also share scenario draws (common random numbers),
//! which sharpens scheme-to-scheme comparisons.

mod baselines;
mod sweep;

pub use baselines::{default_tau_grid, query_free_activation, BaselineTarget};
pub use sweep::{SweepAxis, SweepRow};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{MatchParams, ThresholdSolution, TAU_MIN};
use crate::channel::{downlink_outage, simulate_frame, AccessScheme, ChannelParams};
use crate::error::{Error, Result};
use crate::query::{encode_key, encode_query, matching_score, optimal_projection, Projection};
use crate::sensing::{
    build_centroids, calibrate_covariance, fuse_features, map_classify, relevancy_score, GmmModel,
};

/// Downlink specification: either an explicit outage probability or the
/// fading-link pair it derives from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DownlinkSpec {
    Outage { p_err_dl: f64 },
    Fading { rate_bits_per_symbol: f64, snr_linear: f64 },
}

impl DownlinkSpec {
    pub fn outage_probability(&self) -> Result<f64> {
        match *self {
            DownlinkSpec::Outage { p_err_dl } => {
                if !(0.0..=1.0).contains(&p_err_dl) {
                    return Err(Error::invalid("p_err_dl", format!("must lie in [0,1], got {p_err_dl}")));
                }
                Ok(p_err_dl)
            }
            DownlinkSpec::Fading { rate_bits_per_symbol, snr_linear } => {
                downlink_outage(rate_bits_per_symbol, snr_linear)
            }
        }
    }
}

/// Matching threshold: a fixed value or solver-selected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauSpec {
    Fixed(f64),
    Auto,
}

impl Serialize for TauSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TauSpec::Fixed(v) => s.serialize_f64(*v),
            TauSpec::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for TauSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(TauSpec::Fixed(v)),
            Raw::Word(w) if w == "auto" => Ok(TauSpec::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "tau must be a number in (0,1] or \"auto\", got {w:?}"
            ))),
        }
    }
}

/// Weight source for server-side feature fusion: the full-dimension
/// relevancy score of the received feature, or the reduced-dimension
/// matching score the device itself computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionWeights {
    #[default]
    Relevancy,
    MatchingScore,
}

/// Full experiment description; serializable as the CLI config format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub target_gain: f64,
    pub num_devices: usize,
    pub p_pos: f64,
    pub query_dim: usize,
    pub downlink: DownlinkSpec,
    pub slots: usize,
    pub access: AccessScheme,
    pub tau: TauSpec,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub fusion_weights: FusionWeights,
}

impl ExperimentConfig {
    /// Paper-scale Gaussian experiment with a slotted-ALOHA uplink.
    pub fn paper_gmm_aloha(target_gain: f64) -> Self {
        ExperimentConfig {
            num_classes: 21,
            feature_dim: 75,
            target_gain,
            num_devices: 200,
            p_pos: 0.1,
            query_dim: 20,
            downlink: DownlinkSpec::Outage { p_err_dl: 0.1 },
            slots: 10,
            access: AccessScheme::Aloha,
            tau: TauSpec::Auto,
            trials: 10_000,
            seed: 1,
            fusion_weights: FusionWeights::Relevancy,
        }
    }

    /// Paper-scale Gaussian experiment with the three-replica repetition
    /// uplink.
    pub fn paper_gmm_irsa(target_gain: f64) -> Self {
        use crate::channel::{DegreeDistribution, IrsaConstants};
        let mut cfg = Self::paper_gmm_aloha(target_gain);
        cfg.access = AccessScheme::Irsa {
            degrees: DegreeDistribution::regular(3).unwrap(),
            constants: IrsaConstants::x3(),
        };
        cfg
    }

    /// Checks every structural invariant; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes", "need at least two classes"));
        }
        if self.feature_dim == 0 {
            return Err(Error::invalid("feature_dim", "must be positive"));
        }
        if self.feature_dim < self.num_classes {
            warnings.push(format!(
                "feature_dim {} below num_classes {}: some centroids coincide",
                self.feature_dim, self.num_classes
            ));
        }
        if !(self.target_gain > 0.0) || !self.target_gain.is_finite() {
            return Err(Error::invalid("target_gain", "must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&self.p_pos) {
            return Err(Error::invalid("p_pos", format!("must lie in [0,1], got {}", self.p_pos)));
        }
        if self.query_dim == 0 || self.query_dim > self.feature_dim {
            return Err(Error::invalid("query_dim", format!("must lie in [1, {}], got {}", self.feature_dim, self.query_dim)));
        }
        self.downlink.outage_probability()?;
        if self.slots == 0 {
            return Err(Error::invalid("slots", "must be at least 1"));
        }
        match &self.access {
            AccessScheme::Aloha => {}
            AccessScheme::Irsa { degrees, constants } => {
                if degrees.max_degree() > self.slots {
                    return Err(Error::DegreeExceedsSlots {
                        degree: degrees.max_degree(),
                        slots: self.slots,
                    });
                }
                constants.validate()?;
            }
        }
        if let TauSpec::Fixed(tau) = self.tau {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::invalid("tau", format!("must lie in (0,1], got {tau}")));
            }
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must be at least 1"));
        }
        Ok(warnings)
    }

    pub fn channel(&self) -> ChannelParams {
        ChannelParams {
            slots: self.slots,
            scheme: self.access.clone(),
        }
    }
}

/// One protocol round: who matched, who transmitted, who was decoded, and
/// what the server concluded.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub query_class: usize,
    pub matched: Vec<usize>,
    pub transmitted: Vec<usize>,
    pub decoded: Vec<usize>,
    pub n_tp_received: usize,
    pub predicted: Option<usize>,
    /// Query-class devices absent from the received set / all query-class
    /// devices.
    pub md_misses: usize,
    pub md_total: usize,
    /// Foreign-class devices among the received set / all received devices.
    pub fa_received: usize,
    pub rx_total: usize,
}

/// Monte Carlo estimates with 95% normal-approximation half-widths.
///
/// `eps_md` averages the per-trial missed fraction over trials that have at
/// least one query-class device (`md_trials` of them); `eps_fa` averages
/// the per-trial foreign fraction over trials with nonempty reception
/// (`fa_trials`). A metric with no contributing trials reports NaN.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub accuracy_ci: f64,
    pub eps_md: f64,
    pub eps_md_ci: f64,
    pub eps_fa: f64,
    pub eps_fa_ci: f64,
    pub mean_ntp: f64,
    pub mean_ntp_ci: f64,
    pub trials: usize,
    pub md_trials: usize,
    pub fa_trials: usize,
}

// Bit-level float comparison so reproducibility checks treat NaN half-widths
// (metrics with under two contributing trials) as equal to themselves.
impl PartialEq for MetricsReport {
    fn eq(&self, other: &Self) -> bool {
        let floats = |r: &MetricsReport| {
            [
                r.accuracy,
                r.accuracy_ci,
                r.eps_md,
                r.eps_md_ci,
                r.eps_fa,
                r.eps_fa_ci,
                r.mean_ntp,
                r.mean_ntp_ci,
            ]
            .map(f64::to_bits)
        };
        floats(self) == floats(other)
            && self.trials == other.trials
            && self.md_trials == other.md_trials
            && self.fa_trials == other.fa_trials
    }
}

/// Prepared experiment: model, projection, closed-form parameters, and the
/// uplink description, all immutable across trials.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    model: GmmModel,
    projection: Projection,
    match_params: MatchParams,
    channel: ChannelParams,
    p_err_dl: f64,
    sampler: SubspaceSampler,
}

/// Device features enter the pipeline only through their projection onto
/// the query subspace unless they are actually received, so the simulator
/// samples the two orthogonal components separately: the in-subspace
/// component for every matching device, the complement only for decoded
/// ones. The split is exact because the whitened feature is a standard
/// Gaussian and the projection rows extend to an orthonormal basis.
#[derive(Debug, Clone)]
struct SubspaceSampler {
    key_scale: f64,
    /// Orthonormal complement of the projection rows (d-l rows of d).
    complement: Vec<Vec<f64>>,
    /// Per-class means of the projected whitened feature, P Σ^{-1/2} μ_z.
    subspace_means: Vec<Vec<f64>>,
    /// Per-class means of the complementary component, Q Σ^{-1/2} μ_z.
    complement_means: Vec<Vec<f64>>,
    std_diag: Vec<f64>,
}

impl SubspaceSampler {
    fn new(model: &GmmModel, projection: &Projection, full_basis: &Projection) -> Self {
        let d = model.feature_dim();
        let l = projection.query_dim();
        let complement: Vec<Vec<f64>> = full_basis.rows()[l..].to_vec();
        let whitened_mean = |class: usize| -> Vec<f64> {
            model
                .centroid(class)
                .iter()
                .zip(model.inv_std_diag())
                .map(|(&mu, &inv)| mu * inv)
                .collect()
        };
        let project = |rows: &[Vec<f64>], v: &[f64]| -> Vec<f64> {
            rows.iter()
                .map(|row| row.iter().zip(v).map(|(&r, &x)| r * x).sum())
                .collect()
        };
        let mut subspace_means = Vec::with_capacity(model.num_classes());
        let mut complement_means = Vec::with_capacity(model.num_classes());
        for z in 0..model.num_classes() {
            let m = whitened_mean(z);
            subspace_means.push(project(projection.rows(), &m));
            complement_means.push(project(&complement, &m));
        }
        SubspaceSampler {
            key_scale: (d as f64 / l as f64).sqrt(),
            complement,
            subspace_means,
            complement_means,
            std_diag: model.cov_diag().iter().map(|&v| v.sqrt()).collect(),
        }
    }

    /// In-subspace component u = P Σ^{-1/2} x for a fresh class-z feature;
    /// the key is key_scale * u.
    fn sample_subspace(&self, class: usize, rng: &mut impl Rng) -> Vec<f64> {
        self.subspace_means[class]
            .iter()
            .map(|&m| m + rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Completes a feature consistent with its sampled subspace component:
    /// x = Σ^{1/2} (Pᵀ u + Qᵀ w) with w drawn from the complement.
    fn complete_feature(
        &self,
        class: usize,
        subspace: &[f64],
        projection: &Projection,
        rng: &mut impl Rng,
    ) -> Vec<f64> {
        let d = self.std_diag.len();
        let w: Vec<f64> = self.complement_means[class]
            .iter()
            .map(|&m| m + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut whitened = vec![0.0; d];
        for (row, &u) in projection.rows().iter().zip(subspace) {
            for (acc, &r) in whitened.iter_mut().zip(row) {
                *acc += r * u;
            }
        }
        for (row, &wv) in self.complement.iter().zip(&w) {
            for (acc, &r) in whitened.iter_mut().zip(row) {
                *acc += r * wv;
            }
        }
        whitened
            .iter()
            .zip(&self.std_diag)
            .map(|(&y, &sd)| sd * y)
            .collect()
    }
}

/// Counter-based per-trial stream: one ChaCha stream per trial index under
/// a shared key.
pub fn trial_rng(seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index);
    rng
}

struct TrialStat {
    correct: bool,
    md: Option<f64>,
    fa: Option<f64>,
    ntp: f64,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let centroids = build_centroids(config.num_classes, config.feature_dim)?;
        let variance = calibrate_covariance(&centroids, config.target_gain)?;
        let model = GmmModel::isotropic(centroids, variance)?;
        // The full eigenbasis supplies both the projection (leading rows)
        // and its orthonormal complement for the subspace sampler.
        let full_basis = optimal_projection(&model, config.feature_dim)?;
        let projection = if config.query_dim == config.feature_dim {
            full_basis.clone()
        } else {
            Projection::from_rows(
                full_basis.rows()[..config.query_dim].to_vec(),
                &model,
            )?
        };
        let sampler = SubspaceSampler::new(&model, &projection, &full_basis);
        let p_err_dl = config.downlink.outage_probability()?;
        let match_params =
            MatchParams::from_projection(&projection, p_err_dl, config.p_pos, config.num_devices)?;
        let channel = config.channel();
        Ok(Experiment {
            config,
            model,
            projection,
            match_params,
            channel,
            p_err_dl,
            sampler,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn model(&self) -> &GmmModel {
        &self.model
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn match_params(&self) -> &MatchParams {
        &self.match_params
    }

    pub fn channel(&self) -> &ChannelParams {
        &self.channel
    }

    pub fn p_err_dl(&self) -> f64 {
        self.p_err_dl
    }

    /// Threshold to operate at: the configured value, or the solver
    /// optimum for the configured channel.
    pub fn resolve_tau(&self) -> Result<(f64, Option<ThresholdSolution>)> {
        match self.config.tau {
            TauSpec::Fixed(tau) => Ok((tau, None)),
            TauSpec::Auto => {
                let sol = match self.channel.scheme {
                    AccessScheme::Aloha => self.match_params.solve_threshold_aloha(self.channel.slots)?,
                    AccessScheme::Irsa { .. } => self.match_params.solve_threshold_irsa(&self.channel)?,
                };
                Ok((sol.tau, Some(sol)))
            }
        }
    }

    fn fusion_weight(&self, feature: &[f64], query_feature: &[f64], query: &[f64]) -> f64 {
        let w = match self.config.fusion_weights {
            FusionWeights::Relevancy => relevancy_score(feature, query_feature, &self.model),
            FusionWeights::MatchingScore => {
                let key = encode_key(feature, &self.projection, &self.model);
                matching_score(&key, query, self.model.feature_dim())
            }
        };
        // The exponential underflows to zero for extremely separated
        // classes; the fusion contract needs strictly positive weights.
        w.max(f64::MIN_POSITIVE)
    }

    /// Draws the query class and per-device classes of one scenario.
    fn sample_classes(&self, rng: &mut ChaCha8Rng) -> (usize, Vec<usize>) {
        let z = self.model.num_classes();
        let query_class = rng.random_range(0..z);
        let device_classes = (0..self.config.num_devices)
            .map(|_| {
                if rng.random_bool(self.config.p_pos) {
                    query_class
                } else {
                    let mut c = rng.random_range(0..z - 1);
                    if c >= query_class {
                        c += 1;
                    }
                    c
                }
            })
            .collect();
        (query_class, device_classes)
    }

    /// One full protocol round at threshold `tau`: scenario sampling,
    /// per-device downlink outage, matching at the devices that received
    /// the query, random access transmission, fusion of the decoded
    /// features, and classification. An empty reception yields no class
    /// estimate and counts as an inference error.
    ///
    /// The distribution matches the literal pipeline over full feature
    /// vectors; the simulator draws the in-subspace key component for every
    /// matching device and completes the feature only on reception.
    pub fn run_trial(&self, tau: f64, rng: &mut ChaCha8Rng) -> Result<TrialOutcome> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::domain("run_trial", format!("threshold must lie in (0,1], got {tau}")));
        }
        let m = self.config.num_devices;
        let d = self.model.feature_dim();
        let (query_class, device_classes) = self.sample_classes(rng);
        let outage: Vec<bool> = (0..m).map(|_| rng.random_bool(self.p_err_dl)).collect();

        let query_feature = self.model.sample_feature(query_class, rng);
        let query = encode_query(&query_feature, &self.projection, &self.model);

        let mut subspace: Vec<Option<Vec<f64>>> = vec![None; m];
        let mut transmitted = Vec::new();
        for dev in 0..m {
            if outage[dev] {
                continue; // never received the query
            }
            let u = self.sampler.sample_subspace(device_classes[dev], rng);
            let dist: f64 = u
                .iter()
                .zip(&query)
                .map(|(&uv, &qv)| {
                    let delta = self.sampler.key_scale * uv - qv;
                    delta * delta
                })
                .sum();
            if (-dist / d as f64).exp() >= tau {
                transmitted.push(dev);
            }
            subspace[dev] = Some(u);
        }
        let matched = transmitted.clone();

        let frame = simulate_frame(
            transmitted.len(),
            self.channel.slots,
            &self.channel.degrees(),
            rng,
        )?;
        let decoded: Vec<usize> = frame.decoded.iter().map(|&u| transmitted[u]).collect();

        let decoded_features: Vec<Vec<f64>> = decoded
            .iter()
            .map(|&dev| {
                self.sampler.complete_feature(
                    device_classes[dev],
                    subspace[dev].as_ref().expect("decoded device has a key"),
                    &self.projection,
                    rng,
                )
            })
            .collect();
        let predicted = self.fuse_and_classify(&decoded_features, &query_feature, &query)?;

        Ok(assemble_outcome(
            query_class,
            &device_classes,
            matched,
            transmitted,
            decoded,
            predicted,
        ))
    }

    /// Fusion of the received features and MAP classification; empty
    /// reception produces no estimate.
    fn fuse_and_classify(
        &self,
        features: &[Vec<f64>],
        query_feature: &[f64],
        query: &[f64],
    ) -> Result<Option<usize>> {
        if features.is_empty() {
            return Ok(None);
        }
        let refs: Vec<&[f64]> = features.iter().map(|v| v.as_slice()).collect();
        let weights: Vec<f64> = features
            .iter()
            .map(|x| self.fusion_weight(x, query_feature, query))
            .collect();
        let fused = fuse_features(&refs, &weights)?;
        Ok(Some(map_classify(&fused, &weights, &self.model)))
    }

    /// Monte Carlo metric estimation over `trials` independent rounds at
    /// threshold `tau`, using per-trial streams derived from `seed`.
    pub fn estimate_metrics(&self, tau: f64, trials: usize, seed: u64) -> Result<MetricsReport> {
        if trials == 0 {
            return Err(Error::invalid("trials", "must be at least 1"));
        }
        let stats: Result<Vec<TrialStat>> = (0..trials as u64)
            .into_par_iter()
            .map(|idx| {
                let mut rng = trial_rng(seed, idx);
                let t = self.run_trial(tau, &mut rng)?;
                Ok(TrialStat {
                    correct: t.predicted == Some(t.query_class),
                    md: (t.md_total > 0).then(|| t.md_misses as f64 / t.md_total as f64),
                    fa: (t.rx_total > 0).then(|| t.fa_received as f64 / t.rx_total as f64),
                    ntp: t.n_tp_received as f64,
                })
            })
            .collect();
        Ok(reduce_stats(&stats?))
    }
}

/// Event counts shared by every trial flavour.
fn assemble_outcome(
    query_class: usize,
    device_classes: &[usize],
    matched: Vec<usize>,
    transmitted: Vec<usize>,
    decoded: Vec<usize>,
    predicted: Option<usize>,
) -> TrialOutcome {
    let md_total = device_classes
        .iter()
        .filter(|&&c| c == query_class)
        .count();
    let received_tp = decoded
        .iter()
        .filter(|&&dev| device_classes[dev] == query_class)
        .count();
    let rx_total = decoded.len();
    TrialOutcome {
        query_class,
        matched,
        transmitted,
        decoded,
        n_tp_received: received_tp,
        predicted,
        md_misses: md_total - received_tp,
        md_total,
        fa_received: rx_total - received_tp,
        rx_total,
    }
}

fn mean_ci(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let nf = n as f64;
    let sum: f64 = values.clone().sum();
    let mean = sum / nf;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    (mean, 1.96 * (var / nf).sqrt())
}

fn reduce_stats(stats: &[TrialStat]) -> MetricsReport {
    let n = stats.len();
    let (accuracy, accuracy_ci) = mean_ci(
        stats.iter().map(|s| if s.correct { 1.0 } else { 0.0 }),
        n,
    );
    let md: Vec<f64> = stats.iter().filter_map(|s| s.md).collect();
    let (eps_md, eps_md_ci) = mean_ci(md.iter().copied(), md.len());
    let fa: Vec<f64> = stats.iter().filter_map(|s| s.fa).collect();
    let (eps_fa, eps_fa_ci) = mean_ci(fa.iter().copied(), fa.len());
    let (mean_ntp, mean_ntp_ci) = mean_ci(stats.iter().map(|s| s.ntp), n);
    MetricsReport {
        accuracy,
        accuracy_ci,
        eps_md,
        eps_md_ci,
        eps_fa,
        eps_fa_ci,
        mean_ntp,
        mean_ntp_ci,
        trials: n,
        md_trials: md.len(),
        fa_trials: fa.len(),
    }
}

/// Convenience: the guard value used when a configuration asks to "accept
/// everything".
pub fn tau_floor() -> f64 {
    TAU_MIN
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::paper_gmm_aloha(40.0);
        cfg.num_devices = 20;
        cfg.trials = 200;
        cfg
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let mut cfg = tiny_config();
        cfg.num_classes = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.query_dim = 76;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.tau = TauSpec::Fixed(0.0);
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.p_pos = -0.2;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.downlink = DownlinkSpec::Outage { p_err_dl: 1.2 };
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.feature_dim = 10;
        cfg.query_dim = 5;
        assert!(!cfg.validate().unwrap().is_empty());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = ExperimentConfig::paper_gmm_irsa(40.0);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        // "auto" and numeric thresholds both parse.
        let auto: TauSpec = serde_json::from_str("\"auto\"").unwrap();
        assert_eq!(auto, TauSpec::Auto);
        let fixed: TauSpec = serde_json::from_str("0.25").unwrap();
        assert_eq!(fixed, TauSpec::Fixed(0.25));
        assert!(serde_json::from_str::<TauSpec>("\"automatic\"").is_err());
    }

    #[test]
    fn trial_subset_chain_holds() {
        let exp = Experiment::new(tiny_config()).unwrap();
        for idx in 0..50 {
            let mut rng = trial_rng(3, idx);
            let t = exp.run_trial(0.4, &mut rng).unwrap();
            assert!(t.transmitted.iter().all(|d| t.matched.contains(d)));
            assert!(t.decoded.iter().all(|d| t.transmitted.contains(d)));
            assert_eq!(t.md_misses + t.n_tp_received, t.md_total);
            assert_eq!(t.fa_received + t.n_tp_received, t.rx_total);
        }
    }

    #[test]
    fn trial_tau_one_transmits_nothing() {
        let exp = Experiment::new(tiny_config()).unwrap();
        let mut rng = trial_rng(5, 0);
        let t = exp.run_trial(1.0, &mut rng).unwrap();
        assert!(t.transmitted.is_empty());
        assert_eq!(t.predicted, None);
    }

    #[test]
    fn single_device_degenerate_pipeline() {
        let mut cfg = tiny_config();
        cfg.num_devices = 1;
        cfg.p_pos = 1.0;
        cfg.downlink = DownlinkSpec::Outage { p_err_dl: 0.0 };
        let exp = Experiment::new(cfg).unwrap();
        let mut rng = trial_rng(7, 0);
        let t = exp.run_trial(TAU_MIN, &mut rng).unwrap();
        assert_eq!(t.decoded, vec![0]);
        assert_eq!(t.n_tp_received, 1);
        assert!(t.predicted.is_some());
    }

    #[test]
    fn metrics_seed_determinism() {
        let exp = Experiment::new(tiny_config()).unwrap();
        let a = exp.estimate_metrics(0.5, 400, 11).unwrap();
        let b = exp.estimate_metrics(0.5, 400, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn metrics_identical_across_worker_counts() {
        let exp = Experiment::new(tiny_config()).unwrap();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| exp.estimate_metrics(0.5, 300, 13).unwrap());
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| exp.estimate_metrics(0.5, 300, 13).unwrap());
        assert_eq!(one, four);
    }

    #[test]
    fn metrics_tau_one_is_all_missed() {
        let exp = Experiment::new(tiny_config()).unwrap();
        let r = exp.estimate_metrics(1.0, 300, 17).unwrap();
        assert_eq!(r.eps_md, 1.0);
        assert_eq!(r.accuracy, 0.0);
        assert_eq!(r.mean_ntp, 0.0);
        assert_eq!(r.fa_trials, 0);
    }

    #[test]
    fn metrics_noiseless_limit() {
        // Perfect downlink, huge gain, frame far wider than the load:
        // accuracy approaches one and missed detection vanishes.
        let mut cfg = tiny_config();
        cfg.num_devices = 200;
        cfg.target_gain = 1e6;
        cfg.downlink = DownlinkSpec::Outage { p_err_dl: 0.0 };
        cfg.slots = 40_000;
        cfg.tau = TauSpec::Fixed(TAU_MIN);
        let exp = Experiment::new(cfg).unwrap();
        let r = exp.estimate_metrics(TAU_MIN, 2000, 19).unwrap();
        assert!(r.accuracy > 0.99, "accuracy {}", r.accuracy);
        assert!(r.eps_md < 0.01, "eps_md {}", r.eps_md);
    }

    #[test]
    fn resolve_tau_fixed_and_auto() {
        let mut cfg = tiny_config();
        cfg.tau = TauSpec::Fixed(0.33);
        let exp = Experiment::new(cfg).unwrap();
        assert_eq!(exp.resolve_tau().unwrap(), (0.33, None));
        let mut cfg = tiny_config();
        cfg.tau = TauSpec::Auto;
        cfg.num_devices = 200;
        let exp = Experiment::new(cfg).unwrap();
        let (tau, sol) = exp.resolve_tau().unwrap();
        let sol = sol.unwrap();
        assert_eq!(sol.tau, tau);
        assert!(!sol.boundary);
    }
}
