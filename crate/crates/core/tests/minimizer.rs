//! Exact-distribution training: where each objective's minimizer lies.

use bonbon_core::analytics::eval_policy;
use bonbon_core::policy::{best_worst_joint, bon_policy_exact, DiscretePolicy};
use bonbon_core::training::{
    beta_star, evaluate, train_exact, LossKind, Objective, OptimizerKind, TabularPolicy, TrainConfig, TrainingSet,
};
use bonbon_core::ResponseSpace;

fn small_spaces() -> Vec<ResponseSpace> {
    vec![
        ResponseSpace::uniform("u2", 2).unwrap(),
        ResponseSpace::from_probs("a3", vec![0.3, 0.2, 0.5]).unwrap(),
        ResponseSpace::from_probs("b4", vec![0.1, 0.4, 0.2, 0.3]).unwrap(),
        ResponseSpace::from_probs("c5", vec![0.05, 0.15, 0.4, 0.1, 0.3]).unwrap(),
        ResponseSpace::uniform("u5", 5).unwrap(),
    ]
}

fn sgd(loss: LossKind, n: u32, lr: f64, steps: usize) -> TrainConfig {
    let mut cfg = TrainConfig::new(loss, n, steps);
    cfg.optimizer = OptimizerKind::Sgd;
    cfg.learning_rate = lr;
    cfg.eval_every = steps.max(1);
    cfg
}

#[test]
fn sft_bon_converges_to_bon() {
    let spaces = small_spaces();
    for n in [2, 3, 4, 8] {
        let (policy, _) = train_exact(&sgd(LossKind::SftBon, n, 3.0, 50_000), &spaces).unwrap();
        for (k, space) in spaces.iter().enumerate() {
            let tv = policy.policy(k).total_variation(&bon_policy_exact(space, n).unwrap());
            assert!(tv < 1e-4, "n={n} {}: tv {tv:e}", space.prompt_id());
        }
    }
}

/// Weighted least squares for `g = theta - log p` on one prompt: minimizes
/// `Σ w (g_b - g_w - T)^2` by Gauss-Seidel sweeps on the normal equations,
/// with `g` pinned to mean zero.
fn least_squares_ratio_fit(space: &ResponseSpace, n: u32, target: f64) -> Vec<f64> {
    let len = space.len();
    let pairs: Vec<_> = best_worst_joint(space, n).unwrap().into_iter().filter(|a| a.best != a.worst).collect();
    let mut g = vec![0.0; len];
    for _ in 0..20_000 {
        for i in 0..len {
            let (mut num, mut den) = (0.0, 0.0);
            for a in &pairs {
                if a.best == i {
                    num += a.prob * (g[a.worst] + target);
                    den += a.prob;
                } else if a.worst == i {
                    num += a.prob * (g[a.best] - target);
                    den += a.prob;
                }
            }
            if den > 0.0 {
                g[i] = num / den;
            }
        }
        let mean = g.iter().sum::<f64>() / len as f64;
        g.iter_mut().for_each(|x| *x -= mean);
    }
    g
}

#[test]
fn ipo_bon_minimizer_is_a_ratio_fit_not_bon() {
    let spaces = small_spaces();
    let n = 4;
    let star = beta_star(n).unwrap();
    let (policy, _) = train_exact(&sgd(LossKind::IpoBon, n, 0.05, 40_000), &spaces).unwrap();
    let mut max_tv_to_bon = 0.0f64;
    for (k, space) in spaces.iter().enumerate() {
        let g = least_squares_ratio_fit(space, n, star.target());
        let w: Vec<f64> = space.probs().iter().zip(&g).map(|(p, g)| p * g.exp()).collect();
        let oracle = DiscretePolicy::from_weights(space.prompt_id(), &w).unwrap();
        let trained = policy.policy(k);
        assert!(trained.total_variation(&oracle) < 1e-6, "{}", space.prompt_id());
        max_tv_to_bon = max_tv_to_bon.max(trained.total_variation(&bon_policy_exact(space, n).unwrap()));
    }
    // Only the expectation of h is pinned by BoN; pointwise the fit differs.
    assert!(max_tv_to_bon > 0.05, "{max_tv_to_bon}");
}

#[test]
fn ipo_bon_stationary_point_identity() {
    // At a stationary point Σ_i g_i ∂L/∂θ_i = 0 gives E[h (h - T)] = 0,
    // so E[h] = T - E[(h - T)^2] / T rather than T itself.
    let spaces = small_spaces();
    for n in [2, 4, 8] {
        let star = beta_star(n).unwrap();
        let (policy, _) = train_exact(&sgd(LossKind::IpoBon, n, 0.05, 40_000), &spaces).unwrap();
        let set = TrainingSet::exact(&spaces, n).unwrap();
        let v = evaluate(Objective::ipo_bon(star), &policy, &set).unwrap();
        let t = star.target();
        assert!(v.grad.iter().flatten().all(|g| g.abs() < 1e-9));
        assert!((v.mean_log_ratio - (t - v.ipo_term / t)).abs() < 1e-8, "n={n}");
        if v.ipo_term > 1e-6 {
            assert!(v.mean_log_ratio < t);
        }
    }
}

#[test]
fn bon_itself_meets_the_expected_ratio() {
    let spaces = small_spaces();
    for n in [2, 4, 8] {
        let logits = spaces
            .iter()
            .map(|s| bon_policy_exact(s, n).unwrap().probs().iter().map(|p| p.ln()).collect())
            .collect();
        let ids = spaces.iter().map(|s| s.prompt_id().to_string()).collect();
        let bon = TabularPolicy::from_logits(ids, logits);
        let set = TrainingSet::exact(&spaces, n).unwrap();
        let star = beta_star(n).unwrap();
        let v = evaluate(Objective::ipo_bon(star), &bon, &set).unwrap();
        // Per prompt the exact statistic is below (n-1) H_{n-1} by a discreteness term.
        assert!(v.mean_log_ratio < star.target());
        assert!(v.mean_log_ratio > 0.0);
    }
}

#[test]
fn ipo_bon_cheats_by_lowering_both_likelihoods() {
    // A dominant low-reward response makes most records (0, 0) pairs; the
    // ratio fit then drains it and overshoots onto the next response.
    let space = ResponseSpace::new(
        "skew",
        vec![0.95, 0.048, 0.002],
        vec![0.0, 1.0, 2.0],
        Some(vec![100.0, 160.0, 110.0]),
    )
    .unwrap();
    let spaces = vec![space.clone()];
    let n = 4;
    let mut cfg = sgd(LossKind::IpoBon, n, 0.02, 60_000);
    cfg.eval_every = 6_000;
    let (policy, trace) = train_exact(&cfg, &spaces).unwrap();

    let set = TrainingSet::exact(&spaces, n).unwrap();
    let reference = TabularPolicy::from_reference(&spaces);
    let before = evaluate(Objective::Sft, &reference, &set).unwrap();
    let after = evaluate(Objective::Sft, &policy, &set).unwrap();
    // sft_term is -E log pi(best): it rises, so best responses lost likelihood.
    assert!(after.sft_term > before.sft_term + 0.5, "{} -> {}", before.sft_term, after.sft_term);

    let log_p: Vec<f64> = space.probs().iter().map(|p| p.ln()).collect();
    let log_q = bonbon_core::training::log_softmax(policy.logits(0));
    let worst_shift: f64 = best_worst_joint(&space, n)
        .unwrap()
        .iter()
        .map(|a| a.prob * (log_q[a.worst] - log_p[a.worst]))
        .sum();
    assert!(worst_shift < 0.0);

    let bon = eval_policy(&space, &bon_policy_exact(&space, n).unwrap()).unwrap();
    let first = &trace.rows[0];
    let last = trace.last().unwrap();
    // The trace shows it: win rate past BoN's and a much larger attribute drift.
    assert!(last.win_rate > bon.win_rate_with_ties + 0.02);
    let bon_drift = bon.mean_attribute.unwrap() - first.mean_attribute.unwrap();
    let drift = last.mean_attribute.unwrap() - first.mean_attribute.unwrap();
    assert!(drift > 3.0 * bon_drift, "drift {drift} vs bon {bon_drift}");
    assert!(last.sft_term > first.sft_term);
}

#[test]
fn zero_alpha_bonbon_equals_ipo_bon_training() {
    let spaces = small_spaces();
    let mut a = sgd(LossKind::Bonbon, 4, 0.05, 200);
    a.alpha = Some(0.0);
    let b = sgd(LossKind::IpoBon, 4, 0.05, 200);
    let (pa, _) = train_exact(&a, &spaces).unwrap();
    let (pb, _) = train_exact(&b, &spaces).unwrap();
    assert_eq!(pa, pb);
}
