//! The trial simulator samples device keys in the projected subspace and
//! completes features only on reception. This must be distributionally
//! identical to the literal pipeline that materializes every feature vector
//! and projects it, so both are run here and their metric estimates
//! compared within Monte Carlo resolution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semsource::channel::simulate_frame;
use semsource::experiment::{Experiment, ExperimentConfig};
use semsource::query::{encode_key, encode_query, matching_score};
use semsource::sensing::{fuse_features, map_classify, relevancy_score, sample_scenario};

struct LiteralStats {
    md_sum: f64,
    md_n: usize,
    fa_sum: f64,
    fa_n: usize,
    correct: usize,
    ntp_sum: f64,
    trials: usize,
}

/// Straightforward pipeline over full feature vectors, written from the
/// public operations alone.
fn run_literal(exp: &Experiment, tau: f64, trials: usize, seed: u64) -> LiteralStats {
    let cfg = exp.config();
    let model = exp.model();
    let proj = exp.projection();
    let mut stats = LiteralStats {
        md_sum: 0.0,
        md_n: 0,
        fa_sum: 0.0,
        fa_n: 0,
        correct: 0,
        ntp_sum: 0.0,
        trials,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1111);
    for _ in 0..trials {
        let scenario = sample_scenario(model, cfg.num_devices, cfg.p_pos, &mut rng).unwrap();
        let outage: Vec<bool> = (0..cfg.num_devices)
            .map(|_| rng.random_bool(exp.p_err_dl()))
            .collect();
        let query = encode_query(&scenario.query_feature, proj, model);
        let transmitted: Vec<usize> = (0..cfg.num_devices)
            .filter(|&dev| {
                if outage[dev] {
                    return false;
                }
                let key = encode_key(&scenario.device_features[dev], proj, model);
                matching_score(&key, &query, model.feature_dim()) >= tau
            })
            .collect();
        let frame = simulate_frame(
            transmitted.len(),
            cfg.slots,
            &exp.channel().degrees(),
            &mut rng,
        )
        .unwrap();
        let decoded: Vec<usize> = frame.decoded.iter().map(|&u| transmitted[u]).collect();

        let predicted = if decoded.is_empty() {
            None
        } else {
            let feats: Vec<&[f64]> = decoded
                .iter()
                .map(|&dev| scenario.device_features[dev].as_slice())
                .collect();
            let weights: Vec<f64> = decoded
                .iter()
                .map(|&dev| {
                    relevancy_score(&scenario.device_features[dev], &scenario.query_feature, model)
                        .max(f64::MIN_POSITIVE)
                })
                .collect();
            let fused = fuse_features(&feats, &weights).unwrap();
            Some(map_classify(&fused, &weights, model))
        };

        let md_total = scenario
            .device_classes
            .iter()
            .filter(|&&c| c == scenario.query_class)
            .count();
        let tp = decoded
            .iter()
            .filter(|&&dev| scenario.device_classes[dev] == scenario.query_class)
            .count();
        if md_total > 0 {
            stats.md_sum += (md_total - tp) as f64 / md_total as f64;
            stats.md_n += 1;
        }
        if !decoded.is_empty() {
            stats.fa_sum += (decoded.len() - tp) as f64 / decoded.len() as f64;
            stats.fa_n += 1;
        }
        if predicted == Some(scenario.query_class) {
            stats.correct += 1;
        }
        stats.ntp_sum += tp as f64;
    }
    stats
}

#[test]
fn subspace_sampler_matches_literal_pipeline() {
    let mut cfg = ExperimentConfig::paper_gmm_aloha(40.0);
    cfg.num_devices = 100;
    cfg.slots = 10;
    let exp = Experiment::new(cfg).unwrap();
    // A threshold in the active region where matching, collisions, fusion,
    // and classification all fire.
    let tau = 0.12;
    let trials = 40_000;
    let fast = exp.estimate_metrics(tau, trials, 77).unwrap();
    let lit = run_literal(&exp, tau, trials, 77);

    let lit_md = lit.md_sum / lit.md_n as f64;
    let lit_fa = lit.fa_sum / lit.fa_n as f64;
    let lit_acc = lit.correct as f64 / lit.trials as f64;
    let lit_ntp = lit.ntp_sum / lit.trials as f64;

    // Each side carries its own Monte Carlo error; compare at 3 combined
    // sigmas using the reported half-widths (1.96 sigma each).
    let gate = |a: f64, ci_a: f64, b: f64, ci_b: f64, label: &str| {
        let sigma = ((ci_a / 1.96).powi(2) + (ci_b / 1.96).powi(2)).sqrt().max(1e-6);
        assert!(
            (a - b).abs() <= 3.0 * sigma,
            "{label}: fast {a} vs literal {b} (3 sigma = {})",
            3.0 * sigma
        );
    };
    gate(fast.eps_md, fast.eps_md_ci, lit_md, fast.eps_md_ci, "eps_md");
    gate(fast.eps_fa, fast.eps_fa_ci, lit_fa, fast.eps_fa_ci, "eps_fa");
    gate(fast.accuracy, fast.accuracy_ci, lit_acc, fast.accuracy_ci, "accuracy");
    gate(fast.mean_ntp, fast.mean_ntp_ci, lit_ntp, fast.mean_ntp_ci, "mean_ntp");
}

#[test]
fn subspace_sampler_matches_literal_at_full_query_dim() {
    // At l = d the subspace component is the whole feature; the complement
    // is empty and the two paths coincide distribution-wise.
    let mut cfg = ExperimentConfig::paper_gmm_aloha(20.0);
    cfg.num_devices = 60;
    cfg.query_dim = 75;
    let exp = Experiment::new(cfg).unwrap();
    let tau = 0.12;
    let trials = 20_000;
    let fast = exp.estimate_metrics(tau, trials, 31).unwrap();
    let lit = run_literal(&exp, tau, trials, 31);
    let lit_md = lit.md_sum / lit.md_n as f64;
    let sigma = (fast.eps_md_ci / 1.96_f64).hypot(fast.eps_md_ci / 1.96).max(1e-6);
    assert!(
        (fast.eps_md - lit_md).abs() <= 3.0 * sigma,
        "eps_md fast {} literal {lit_md}",
        fast.eps_md
    );
}
