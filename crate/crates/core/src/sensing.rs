//! Gaussian-mixture sensing world: class centroids with a shared diagonal
//! covariance, scenario sampling, relevancy scoring, feature fusion, and MAP
//! classification of the fused vector.
//!
//! Class indices are zero-based throughout the crate.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Generative sensing model: one centroid per class, shared diagonal
/// covariance. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    num_classes: usize,
    feature_dim: usize,
    centroids: Vec<Vec<f64>>,
    cov_diag: Vec<f64>,
    // Cached per-entry standard deviations and their reciprocals.
    std_diag: Vec<f64>,
    inv_std_diag: Vec<f64>,
}

impl GmmModel {
    /// Validates and builds a model. The covariance must be strictly
    /// positive on the diagonal, and at least one centroid pair must differ
    /// (otherwise no threshold carries information).
    pub fn new(centroids: Vec<Vec<f64>>, cov_diag: Vec<f64>) -> Result<Self> {
        let num_classes = centroids.len();
        if num_classes < 2 {
            return Err(Error::invalid("centroids", "need at least two classes"));
        }
        let feature_dim = centroids[0].len();
        if feature_dim == 0 {
            return Err(Error::invalid("centroids", "feature dimension must be positive"));
        }
        if centroids.iter().any(|c| c.len() != feature_dim) {
            return Err(Error::invalid("centroids", "inconsistent centroid lengths"));
        }
        if centroids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("centroids", "centroid entries must be finite"));
        }
        if cov_diag.len() != feature_dim {
            return Err(Error::invalid("cov_diag", "length must equal the feature dimension"));
        }
        if cov_diag.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("cov_diag", "variances must be strictly positive and finite"));
        }
        if centroids.iter().skip(1).all(|c| c == &centroids[0]) {
            return Err(Error::DegenerateCentroids);
        }
        let std_diag: Vec<f64> = cov_diag.iter().map(|v| v.sqrt()).collect();
        let inv_std_diag: Vec<f64> = std_diag.iter().map(|s| 1.0 / s).collect();
        Ok(GmmModel {
            num_classes,
            feature_dim,
            centroids,
            cov_diag,
            std_diag,
            inv_std_diag,
        })
    }

    /// Isotropic model with covariance `variance * I`.
    pub fn isotropic(centroids: Vec<Vec<f64>>, variance: f64) -> Result<Self> {
        let dim = centroids.first().map_or(0, Vec::len);
        Self::new(centroids, vec![variance; dim])
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn centroid(&self, class: usize) -> &[f64] {
        &self.centroids[class]
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn cov_diag(&self) -> &[f64] {
        &self.cov_diag
    }

    pub(crate) fn inv_std_diag(&self) -> &[f64] {
        &self.inv_std_diag
    }

    /// Squared Mahalanobis distance under the model covariance.
    pub fn sq_mahalanobis(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.feature_dim);
        debug_assert_eq!(b.len(), self.feature_dim);
        let mut acc = 0.0;
        for ((&x, &y), &inv) in a.iter().zip(b).zip(&self.inv_std_diag) {
            let d = (x - y) * inv;
            acc += d * d;
        }
        acc
    }

    /// Mean pairwise whitened centroid separation for this model.
    pub fn average_discriminant_gain(&self) -> f64 {
        average_discriminant_gain(&self.centroids, &self.cov_diag)
    }

    fn fill_feature(&self, class: usize, out: &mut [f64], rng: &mut impl Rng) {
        let mu = &self.centroids[class];
        for ((o, &m), &sd) in out.iter_mut().zip(mu).zip(&self.std_diag) {
            let g: f64 = rng.sample(StandardNormal);
            *o = m + sd * g;
        }
    }

    /// Fresh class-conditional feature vector x ~ N(μ_class, Σ).
    pub fn sample_feature(&self, class: usize, rng: &mut impl Rng) -> Vec<f64> {
        let mut out = vec![0.0; self.feature_dim];
        self.fill_feature(class, &mut out, rng);
        out
    }
}

/// One sampled world state: the query, every device class, and their
/// observed feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub query_class: usize,
    pub device_classes: Vec<usize>,
    pub query_feature: Vec<f64>,
    pub device_features: Vec<Vec<f64>>,
}

/// Block-sign centroids: entry j of centroid i is -1 inside the i-th block
/// of width roughly d/|Z| and +1 elsewhere.
///
/// With one-based indices the block is floor(d(i-1)/|Z|) < j <= floor(di/|Z|).
/// When `feature_dim < num_classes` some blocks are empty and the affected
/// centroids coincide at all-ones.
pub fn build_centroids(num_classes: usize, feature_dim: usize) -> Result<Vec<Vec<f64>>> {
    if num_classes < 2 {
        return Err(Error::domain("build_centroids", format!("need at least two classes, got {num_classes}")));
    }
    if feature_dim == 0 {
        return Err(Error::domain("build_centroids", "feature dimension must be positive"));
    }
    let z = num_classes;
    let d = feature_dim;
    let mut centroids = Vec::with_capacity(z);
    for i in 1..=z {
        let lo = d * (i - 1) / z; // exclusive, one-based
        let hi = d * i / z; // inclusive, one-based
        let mut mu = vec![1.0; d];
        for entry in mu.iter_mut().take(hi).skip(lo) {
            *entry = -1.0;
        }
        centroids.push(mu);
    }
    Ok(centroids)
}

/// Mean pairwise squared Mahalanobis separation of the centroids:
/// 2/(|Z|(|Z|-1)) Σ_{i<j} (μ_i-μ_j)ᵀ Σ⁻¹ (μ_i-μ_j).
pub fn average_discriminant_gain(centroids: &[Vec<f64>], cov_diag: &[f64]) -> f64 {
    let z = centroids.len();
    if z < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..z {
        for j in (i + 1)..z {
            let mut pair = 0.0;
            for n in 0..cov_diag.len() {
                let d = centroids[i][n] - centroids[j][n];
                pair += d * d / cov_diag[n];
            }
            total += pair;
        }
    }
    2.0 * total / (z as f64 * (z - 1) as f64)
}

/// Scalar variance C such that the isotropic model Σ = C·I attains the
/// requested average discriminant gain. Uses the exact scaling
/// gain(C) = gain(1)/C.
pub fn calibrate_covariance(centroids: &[Vec<f64>], target_gain: f64) -> Result<f64> {
    if !(target_gain > 0.0) || !target_gain.is_finite() {
        return Err(Error::domain("calibrate_covariance", format!("target gain must be positive, got {target_gain}")));
    }
    let dim = centroids.first().map_or(0, Vec::len);
    let unit_gain = average_discriminant_gain(centroids, &vec![1.0; dim]);
    if unit_gain == 0.0 {
        return Err(Error::DegenerateCentroids);
    }
    Ok(unit_gain / target_gain)
}

/// Draws a query class uniformly, assigns each device the query class with
/// probability `p_pos` (otherwise uniform over the remaining classes), and
/// samples every feature vector from its class distribution.
pub fn sample_scenario(
    model: &GmmModel,
    num_devices: usize,
    p_pos: f64,
    rng: &mut impl Rng,
) -> Result<Scenario> {
    if !(0.0..=1.0).contains(&p_pos) {
        return Err(Error::domain("sample_scenario", format!("p_pos must lie in [0,1], got {p_pos}")));
    }
    let z = model.num_classes;
    let query_class = rng.random_range(0..z);
    let mut device_classes = Vec::with_capacity(num_devices);
    for _ in 0..num_devices {
        if rng.random_bool(p_pos) {
            device_classes.push(query_class);
        } else {
            // Uniform over the remaining classes, skipping the query class.
            let mut c = rng.random_range(0..z - 1);
            if c >= query_class {
                c += 1;
            }
            device_classes.push(c);
        }
    }
    let mut query_feature = vec![0.0; model.feature_dim];
    model.fill_feature(query_class, &mut query_feature, rng);
    let mut device_features = Vec::with_capacity(num_devices);
    for &c in &device_classes {
        let mut x = vec![0.0; model.feature_dim];
        model.fill_feature(c, &mut x, rng);
        device_features.push(x);
    }
    Ok(Scenario {
        query_class,
        device_classes,
        query_feature,
        device_features,
    })
}

/// Relevancy score exp(-ξ_Σ(x_m, x_q)/d): one at zero distance, strictly
/// decreasing in the squared Mahalanobis distance.
pub fn relevancy_score(x_m: &[f64], x_q: &[f64], model: &GmmModel) -> f64 {
    (-model.sq_mahalanobis(x_m, x_q) / model.feature_dim as f64).exp()
}

/// Weight-normalized convex combination of the received features.
pub fn fuse_features(features: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>> {
    if features.is_empty() {
        return Err(Error::EmptyFeatureSet);
    }
    if features.len() != weights.len() {
        return Err(Error::invalid("weights", "one weight per feature required"));
    }
    if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::invalid("weights", "weights must be strictly positive and finite"));
    }
    let dim = features[0].len();
    let total: f64 = weights.iter().sum();
    let mut fused = vec![0.0; dim];
    // Normalizing the weights first keeps the single-feature case exact.
    for (x, &w) in features.iter().zip(weights) {
        debug_assert_eq!(x.len(), dim);
        let wn = w / total;
        for n in 0..dim {
            fused[n] += wn * x[n];
        }
    }
    Ok(fused)
}

/// Effective covariance multiplier of the fused vector: Σ w² / (Σ w)².
fn effective_cov_scale(weights: &[f64]) -> f64 {
    let sum: f64 = weights.iter().sum();
    let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
    sum_sq / (sum * sum)
}

/// MAP class estimate of the fused vector. The fused covariance is a
/// positive scalar multiple of Σ, so the argmax reduces to the nearest
/// centroid in Mahalanobis distance; ties break to the lowest class index.
pub fn map_classify(fused: &[f64], weights: &[f64], model: &GmmModel) -> usize {
    debug_assert!(!weights.is_empty());
    let mut best = 0;
    let mut best_dist = model.sq_mahalanobis(fused, &model.centroids[0]);
    for z in 1..model.num_classes {
        let d = model.sq_mahalanobis(fused, &model.centroids[z]);
        if d < best_dist {
            best = z;
            best_dist = d;
        }
    }
    best
}

/// Posterior class probabilities of the fused vector, softmax of
/// -ξ_{Σ̂}(x̄, μ_z)/2 with Σ̂ the weight-scaled covariance. The scalar does
/// not move the argmax but calibrates the confidence.
pub fn posterior(fused: &[f64], weights: &[f64], model: &GmmModel) -> Vec<f64> {
    let scale = effective_cov_scale(weights);
    let logits: Vec<f64> = (0..model.num_classes)
        .map(|z| -0.5 * model.sq_mahalanobis(fused, &model.centroids[z]) / scale)
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    unnorm.into_iter().map(|v| v / total).collect()
}
