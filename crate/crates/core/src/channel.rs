//! Downlink outage model and the uplink random access layer: exact frame
//! simulation with successive interference cancellation, the slotted ALOHA
//! closed form, and the two-regime approximation of the repetition-slotted
//! error probability.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::gaussian_q;

/// Rayleigh block-fading outage probability of the query broadcast:
/// 1 - exp(-(2^R - 1)/γ) at rate R bits/symbol and mean SNR γ.
pub fn downlink_outage(rate_bits_per_symbol: f64, snr_linear: f64) -> Result<f64> {
    if !(rate_bits_per_symbol >= 0.0) || !rate_bits_per_symbol.is_finite() {
        return Err(Error::domain("downlink_outage", format!("rate must be nonnegative, got {rate_bits_per_symbol}")));
    }
    if !(snr_linear > 0.0) {
        return Err(Error::domain("downlink_outage", format!("SNR must be positive, got {snr_linear}")));
    }
    Ok(1.0 - (-(2.0_f64.powf(rate_bits_per_symbol) - 1.0) / snr_linear).exp())
}

/// Replica-count distribution {Λ_ℓ}: probability Λ_ℓ of transmitting ℓ
/// identical packet copies in distinct slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, f64)>", into = "Vec<(usize, f64)>")]
pub struct DegreeDistribution {
    // (degree, probability), sorted by degree, probabilities summing to one.
    entries: Vec<(usize, f64)>,
}

impl DegreeDistribution {
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("degrees", "distribution must have at least one entry"));
        }
        let mut entries = entries;
        entries.sort_by_key(|e| e.0);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid("degrees", format!("duplicate degree {}", w[0].0)));
            }
        }
        if entries.iter().any(|&(l, p)| l == 0 || !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("degrees", "degrees must be >= 1 with nonnegative probabilities"));
        }
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("degrees", format!("probabilities sum to {total}, expected 1")));
        }
        Ok(DegreeDistribution { entries })
    }

    /// Λ(x) = x: classic slotted ALOHA with a single replica.
    pub fn aloha() -> Self {
        DegreeDistribution {
            entries: vec![(1, 1.0)],
        }
    }

    /// Λ(x) = x^r: every transmitter sends exactly r replicas.
    pub fn regular(r: usize) -> Result<Self> {
        Self::new(vec![(r, 1.0)])
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn max_degree(&self) -> usize {
        self.entries.last().map_or(0, |e| e.0)
    }

    /// Probability of the given degree (zero if absent).
    pub fn prob(&self, degree: usize) -> f64 {
        self.entries
            .iter()
            .find(|&&(l, _)| l == degree)
            .map_or(0.0, |&(_, p)| p)
    }

    /// Some(degree) when the distribution is concentrated on one degree.
    pub fn single_degree(&self) -> Option<usize> {
        let live: Vec<_> = self.entries.iter().filter(|e| e.1 > 0.0).collect();
        (live.len() == 1).then(|| live[0].0)
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let mut u: f64 = rng.random();
        for &(l, p) in &self.entries {
            if u < p {
                return l;
            }
            u -= p;
        }
        self.entries.last().unwrap().0
    }
}

impl TryFrom<Vec<(usize, f64)>> for DegreeDistribution {
    type Error = Error;
    fn try_from(v: Vec<(usize, f64)>) -> Result<Self> {
        DegreeDistribution::new(v)
    }
}

impl From<DegreeDistribution> for Vec<(usize, f64)> {
    fn from(d: DegreeDistribution) -> Self {
        d.entries
    }
}

/// Degree-distribution-specific constants of the two-regime error
/// approximation: waterfall coefficients plus the dominant stopping-set
/// profiles of the error floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrsaConstants {
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    /// Aggregate replica count ν[s] of stopping-set profile s.
    pub nu: Vec<u32>,
    /// Multiplicity coefficients β₀[s].
    pub beta0: Vec<u32>,
    /// Slot counts β₁[s] occupied by profile s.
    pub beta1: Vec<u32>,
    /// Optional per-degree replica profile: `nu_by_degree[s]` maps a slot
    /// degree ℓ to ν_ℓ[s] with Σ_ℓ ν_ℓ[s] = ν[s]. When absent, the whole
    /// profile is attributed to the single degree of a concentrated
    /// distribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_by_degree: Option<Vec<Vec<(usize, u32)>>>,
}

impl IrsaConstants {
    /// Constants for Λ(x) = x³.
    pub fn x3() -> Self {
        IrsaConstants {
            alpha0: 0.497_867,
            alpha1: 0.784_399,
            alpha2: 0.818_469,
            alpha3: 0.964_528,
            nu: vec![2, 3],
            beta0: vec![1, 24],
            beta1: vec![3, 4],
            nu_by_degree: None,
        }
    }

    /// Number of stopping-set profiles A.
    pub fn num_profiles(&self) -> usize {
        self.nu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.nu.len();
        if a == 0 {
            return Err(Error::ConstantsMismatch("no stopping-set profiles".into()));
        }
        if self.beta0.len() != a || self.beta1.len() != a {
            return Err(Error::ConstantsMismatch("profile vectors must share a common length".into()));
        }
        if self.nu.iter().any(|&v| v == 0) {
            return Err(Error::ConstantsMismatch("profile replica counts must be >= 1".into()));
        }
        if let Some(per_degree) = &self.nu_by_degree {
            if per_degree.len() != a {
                return Err(Error::ConstantsMismatch("one per-degree profile required per stopping set".into()));
            }
            for (s, profile) in per_degree.iter().enumerate() {
                let total: u32 = profile.iter().map(|e| e.1).sum();
                if total != self.nu[s] {
                    return Err(Error::ConstantsMismatch(format!("per-degree profile {s} sums to {total}, expected {}", self.nu[s])));
                }
            }
        }
        Ok(())
    }
}

/// Uplink configuration: frame size plus the access scheme whose error
/// probability closes the analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub slots: usize,
    pub scheme: AccessScheme,
}

/// Random access scheme used in the uplink frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AccessScheme {
    /// Single replica per transmitter, closed-form collision probability.
    Aloha,
    /// Repetition access with interference cancellation; the analytical
    /// error uses the supplied two-regime constants.
    Irsa {
        degrees: DegreeDistribution,
        constants: IrsaConstants,
    },
}

impl ChannelParams {
    pub fn aloha(slots: usize) -> Self {
        ChannelParams {
            slots,
            scheme: AccessScheme::Aloha,
        }
    }

    pub fn irsa(slots: usize, degrees: DegreeDistribution, constants: IrsaConstants) -> Self {
        ChannelParams {
            slots,
            scheme: AccessScheme::Irsa { degrees, constants },
        }
    }

    /// Degree distribution actually transmitted on this channel.
    pub fn degrees(&self) -> DegreeDistribution {
        match &self.scheme {
            AccessScheme::Aloha => DegreeDistribution::aloha(),
            AccessScheme::Irsa { degrees, .. } => degrees.clone(),
        }
    }

    /// Analytical uplink error probability at Poisson arrival rate λ̄.
    pub fn uplink_error_prob(&self, arrival_rate: f64) -> Result<f64> {
        match &self.scheme {
            AccessScheme::Aloha => aloha_error_prob(arrival_rate, self.slots),
            AccessScheme::Irsa { degrees, constants } => {
                irsa_error_prob_approx(arrival_rate, self.slots, degrees, constants)
            }
        }
    }
}

/// Outcome of one simulated uplink frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameResult {
    /// Transmitter ids that attempted (0..num_transmitters).
    pub attempted: Vec<usize>,
    /// Subset of `attempted` recovered by the receiver.
    pub decoded: Vec<usize>,
    pub slots_used: usize,
    /// Number of cancellation waves performed.
    pub iterations: usize,
}

/// Iterative singleton decoding over explicit replica placements.
///
/// Repeatedly decodes every slot holding exactly one remaining replica,
/// removes all replicas of the decoded transmitters, and stops when no
/// singleton slots remain. The decoded set is a pure function of the
/// placement multiset; the wave order does not affect it.
pub fn sic_decode(placements: &[Vec<usize>], slots: usize) -> FrameResult {
    let n = placements.len();
    let mut slot_count = vec![0usize; slots];
    let mut slot_xor = vec![0usize; slots];
    for (user, reps) in placements.iter().enumerate() {
        for &s in reps {
            debug_assert!(s < slots);
            slot_count[s] += 1;
            slot_xor[s] ^= user;
        }
    }
    let mut decoded_flag = vec![false; n];
    let mut decoded = Vec::new();
    let mut iterations = 0;
    loop {
        let singles: Vec<usize> = (0..slots).filter(|&s| slot_count[s] == 1).collect();
        if singles.is_empty() {
            break;
        }
        iterations += 1;
        for s in singles {
            if slot_count[s] != 1 {
                continue; // resolved earlier in this wave
            }
            let user = slot_xor[s];
            debug_assert!(!decoded_flag[user]);
            decoded_flag[user] = true;
            decoded.push(user);
            for &rs in &placements[user] {
                slot_count[rs] -= 1;
                slot_xor[rs] ^= user;
            }
        }
    }
    decoded.sort_unstable();
    FrameResult {
        attempted: (0..n).collect(),
        decoded,
        slots_used: slots,
        iterations,
    }
}

/// Simulates one frame: every transmitter draws a replica count from the
/// degree distribution, places the replicas in distinct uniformly random
/// slots, and the receiver peels singletons with interference cancellation.
pub fn simulate_frame(
    num_transmitters: usize,
    slots: usize,
    degrees: &DegreeDistribution,
    rng: &mut impl Rng,
) -> Result<FrameResult> {
    if slots == 0 {
        return Err(Error::invalid("slots", "frame must contain at least one slot"));
    }
    if degrees.max_degree() > slots {
        return Err(Error::DegreeExceedsSlots {
            degree: degrees.max_degree(),
            slots,
        });
    }
    let mut placements = Vec::with_capacity(num_transmitters);
    for _ in 0..num_transmitters {
        let l = degrees.sample(rng);
        let chosen = sample_indices(rng, slots, l).into_vec();
        placements.push(chosen);
    }
    Ok(sic_decode(&placements, slots))
}

/// Collision probability of a tagged slotted-ALOHA transmission under
/// Poisson interference of rate `arrival_rate` spread over `slots`:
/// 1 - exp(-λ̄/L).
pub fn aloha_error_prob(arrival_rate: f64, slots: usize) -> Result<f64> {
    if !(arrival_rate >= 0.0) || !arrival_rate.is_finite() {
        return Err(Error::domain("aloha_error_prob", format!("arrival rate must be nonnegative, got {arrival_rate}")));
    }
    if slots == 0 {
        return Err(Error::domain("aloha_error_prob", "slots must be >= 1"));
    }
    Ok(1.0 - (-arrival_rate / slots as f64).exp())
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Alternating polynomial φ(s, λ̄) = Σ_{k=0}^{ν[s]-1} (-1)^{ν[s]-1+k} λ̄^k (ν[s]-1)!/k!.
fn error_floor_poly(nu_s: u32, rate: f64) -> f64 {
    let n = nu_s as i64 - 1;
    let mut total = 0.0;
    // (ν-1)!/k! accumulated downward from k = ν-1 where it equals 1.
    let mut coeff = 1.0;
    for k in (0..=n).rev() {
        let sign = if (n + k) % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * rate.powi(k as i32) * coeff;
        coeff *= k as f64; // (ν-1)!/(k-1)! = (ν-1)!/k! * k
    }
    total
}

/// Two-regime approximation of the repetition-slotted uplink error
/// probability at Poisson arrival rate λ̄: error-floor polynomial plus
/// Gaussian waterfall term, clamped to [0, 1].
pub fn irsa_error_prob_approx(
    arrival_rate: f64,
    slots: usize,
    degrees: &DegreeDistribution,
    constants: &IrsaConstants,
) -> Result<f64> {
    if !(arrival_rate >= 0.0) || !arrival_rate.is_finite() {
        return Err(Error::domain("irsa_error_prob_approx", format!("arrival rate must be nonnegative, got {arrival_rate}")));
    }
    if slots == 0 {
        return Err(Error::domain("irsa_error_prob_approx", "slots must be >= 1"));
    }
    constants.validate()?;
    if let Some(&bad) = constants.beta1.iter().find(|&&b| b as usize > slots) {
        return Err(Error::ConstantsMismatch(format!("stopping-set slot count {bad} exceeds frame size {slots}")));
    }

    let l_ul = slots as f64;
    let load = arrival_rate / l_ul;

    // Waterfall regime.
    let num = l_ul.sqrt() * (constants.alpha2 - constants.alpha3 * l_ul.powf(-2.0 / 3.0) - load);
    let den = (constants.alpha0 * constants.alpha0 + load).sqrt();
    let p_wf = constants.alpha1 * gaussian_q(num / den);

    // Error-floor regime: dominant stopping sets.
    let mut p_ef = 0.0;
    for s in 0..constants.num_profiles() {
        let nu_s = constants.nu[s];
        let mut product = 1.0;
        match &constants.nu_by_degree {
            Some(profiles) => {
                for &(degree, count) in &profiles[s] {
                    if degree > slots {
                        return Err(Error::ConstantsMismatch(format!("profile degree {degree} exceeds frame size {slots}")));
                    }
                    let lam = degrees.prob(degree);
                    let mut fact = 1.0;
                    for i in 2..=count {
                        fact *= i as f64;
                    }
                    product *= lam.powi(count as i32) / fact * binom(slots, degree).powi(-(count as i32));
                }
            }
            None => {
                // Without explicit profiles the stopping sets are made of
                // replicas of a single-degree distribution.
                let degree = degrees.single_degree().ok_or_else(|| {
                    Error::ConstantsMismatch(
                        "per-degree stopping-set profiles required for mixed degree distributions".into(),
                    )
                })?;
                let mut fact = 1.0;
                for i in 2..=nu_s {
                    fact *= i as f64;
                }
                product *= binom(slots, degree).powi(-(nu_s as i32)) / fact;
            }
        }
        p_ef += error_floor_poly(nu_s, arrival_rate)
            * nu_s as f64
            * constants.beta0[s] as f64
            * binom(slots, constants.beta1[s] as usize)
            * product;
    }

    Ok((p_ef + p_wf).clamp(0.0, 1.0))
}
