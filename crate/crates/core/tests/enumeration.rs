//! Exact small-space quantities against brute force over all L^n draw tuples.

use bonbon_core::policy::{best_worst_joint, bon_policy_exact, worst_of_n_policy_exact};
use bonbon_core::sampling::{bon_log_ratios, beta_identity_exact};
use bonbon_core::ResponseSpace;

struct Brute {
    best: Vec<f64>,
    worst: Vec<f64>,
    joint: Vec<Vec<f64>>,
}

/// Probability of every index tuple, accumulated by its max and min.
fn brute(probs: &[f64], n: u32) -> Brute {
    let len = probs.len();
    let mut out = Brute {
        best: vec![0.0; len],
        worst: vec![0.0; len],
        joint: vec![vec![0.0; len]; len],
    };
    let total = len.pow(n);
    let mut tuple = vec![0usize; n as usize];
    for code in 0..total {
        let mut c = code;
        for t in tuple.iter_mut() {
            *t = c % len;
            c /= len;
        }
        let prob: f64 = tuple.iter().map(|&i| probs[i]).product();
        let hi = *tuple.iter().max().unwrap();
        let lo = *tuple.iter().min().unwrap();
        out.best[hi] += prob;
        out.worst[lo] += prob;
        out.joint[lo][hi] += prob;
    }
    out
}

fn spaces() -> Vec<ResponseSpace> {
    vec![
        ResponseSpace::uniform("u2", 2).unwrap(),
        ResponseSpace::from_probs("a3", vec![0.7, 0.2, 0.1]).unwrap(),
        ResponseSpace::from_probs("b4", vec![0.1, 0.4, 0.2, 0.3]).unwrap(),
        ResponseSpace::from_probs("c5", vec![0.05, 0.15, 0.4, 0.1, 0.3]).unwrap(),
        ResponseSpace::from_probs("d6", vec![0.01, 0.3, 0.09, 0.25, 0.15, 0.2]).unwrap(),
        ResponseSpace::uniform("u6", 6).unwrap(),
    ]
}

#[test]
fn bon_and_worst_marginals_match_enumeration() {
    for space in spaces() {
        for n in 1..=4 {
            let b = brute(space.probs(), n);
            let bon = bon_policy_exact(&space, n).unwrap();
            let worst = worst_of_n_policy_exact(&space, n).unwrap();
            for i in 0..space.len() {
                assert!((bon.probs()[i] - b.best[i]).abs() < 1e-14, "{} n={n} i={i}", space.prompt_id());
                assert!((worst.probs()[i] - b.worst[i]).abs() < 1e-14, "{} n={n} i={i}", space.prompt_id());
            }
        }
    }
}

#[test]
fn joint_law_matches_enumeration() {
    for space in spaces() {
        for n in 1..=4 {
            let b = brute(space.probs(), n);
            let mut got = vec![vec![0.0; space.len()]; space.len()];
            for atom in best_worst_joint(&space, n).unwrap() {
                assert!(atom.worst <= atom.best);
                got[atom.worst][atom.best] = atom.prob;
            }
            for i in 0..space.len() {
                for j in 0..space.len() {
                    assert!((got[i][j] - b.joint[i][j]).abs() < 1e-14, "{} n={n} ({i},{j})", space.prompt_id());
                }
            }
        }
    }
}

#[test]
fn log_ratio_identity_matches_enumeration() {
    for space in spaces() {
        for n in 2..=4 {
            let b = brute(space.probs(), n);
            // g_i = log(pi_bon(i) / p_i) computed straight from the enumeration
            let g: Vec<f64> = b.best.iter().zip(space.probs()).map(|(q, p)| (q / p).ln()).collect();
            let mut oracle = 0.0;
            for i in 0..space.len() {
                for j in i..space.len() {
                    oracle += b.joint[i][j] * (g[j] - g[i]);
                }
            }
            let exact = beta_identity_exact(&space, n).unwrap();
            assert!((exact - oracle).abs() < 1e-12, "{} n={n}: {exact} vs {oracle}", space.prompt_id());
            let lr = bon_log_ratios(&space, n);
            for (a, o) in lr.iter().zip(&g) {
                assert!((a - o).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn identity_statistic_stays_below_limit_on_small_spaces() {
    // Discreteness (ties among the n draws) pulls the statistic below (n-1) H_{n-1}.
    let space = ResponseSpace::uniform("u2", 2).unwrap();
    let exact = beta_identity_exact(&space, 2).unwrap();
    assert!((exact - 0.5 * 3f64.ln()).abs() < 1e-14);
    for space in spaces() {
        for n in 2..=4 {
            let limit = bonbon_core::sampling::beta_identity_limit(n);
            assert!(beta_identity_exact(&space, n).unwrap() < limit);
        }
    }
}
