//! Analytic loss gradients against central finite differences.

use bonbon_core::training::{
    beta_star, evaluate, gradient_check, log_softmax, Objective, TabularPolicy, TrainingSet,
};
use bonbon_core::{PreferenceRecord, ResponseSpace, Rng};
use proptest::prelude::*;

fn random_instance(rng: &mut Rng) -> (Vec<ResponseSpace>, TabularPolicy, TrainingSet) {
    let prompts = 1 + rng.below(3) as usize;
    let mut spaces = Vec::new();
    let mut logits = Vec::new();
    let mut records = Vec::new();
    for k in 0..prompts {
        let len = 2 + rng.below(5) as usize;
        let w: Vec<f64> = (0..len).map(|_| 0.05 + rng.uniform()).collect();
        let total: f64 = w.iter().sum();
        let space = ResponseSpace::from_probs(format!("p{k}"), w.iter().map(|x| x / total).collect()).unwrap();
        logits.push((0..len).map(|_| 4.0 * rng.uniform() - 2.0).collect());
        for _ in 0..1 + rng.below(6) {
            let a = rng.below(len as u64) as usize;
            let b = rng.below(len as u64) as usize;
            records.push(PreferenceRecord {
                prompt_id: space.prompt_id().to_string(),
                best_index: a.max(b),
                worst_index: a.min(b),
                n: 4,
            });
        }
        spaces.push(space);
    }
    let ids = spaces.iter().map(|s| s.prompt_id().to_string()).collect();
    let set = TrainingSet::from_records(&spaces, &records).unwrap();
    (spaces, TabularPolicy::from_logits(ids, logits), set)
}

fn objectives(rng: &mut Rng) -> Vec<(&'static str, Objective)> {
    let n = 2 + rng.below(8) as u32;
    let star = beta_star(n).unwrap();
    let beta = 0.05 + 2.0 * rng.uniform();
    vec![
        ("sft_bon", Objective::Sft),
        ("ipo_bon", Objective::ipo_bon(star)),
        ("bonbon", Objective::bonbon(rng.uniform(), star)),
        ("dpo", Objective::Dpo { beta }),
        ("ipo", Objective::ipo(beta)),
    ]
}

#[test]
fn all_losses_pass_finite_difference_checks() {
    let mut rng = Rng::new(2024, 0);
    let mut worst = [0.0f64; 5];
    for _ in 0..100 {
        let (_, policy, set) = random_instance(&mut rng);
        for (k, (name, obj)) in objectives(&mut rng).into_iter().enumerate() {
            let err = gradient_check(obj, &policy, &set, 1e-5).unwrap();
            assert!(err < 1e-5, "{name}: relative error {err}");
            worst[k] = worst[k].max(err);
        }
    }
    println!("worst relative errors: {worst:?}");
}

#[test]
fn sft_gradient_at_uniform_is_softmax_minus_onehot() {
    let space = ResponseSpace::uniform("u", 4).unwrap();
    let policy = TabularPolicy::from_logits(vec!["u".into()], vec![vec![0.0; 4]]);
    let rec = PreferenceRecord {
        prompt_id: "u".into(),
        best_index: 2,
        worst_index: 0,
        n: 2,
    };
    let set = TrainingSet::from_records(std::slice::from_ref(&space), &[rec]).unwrap();
    let v = evaluate(Objective::Sft, &policy, &set).unwrap();
    assert_eq!(v.grad[0], vec![0.25, 0.25, -0.75, 0.25]);
}

#[test]
fn gradient_vanishes_when_target_met() {
    // h = T for the only record and alpha = 0: both gradients are ~0.
    let space = ResponseSpace::uniform("u", 3).unwrap();
    let star = beta_star(4).unwrap();
    let t = star.target();
    let policy = TabularPolicy::from_logits(vec!["u".into()], vec![vec![0.0, 0.3, 0.3 + t]]);
    let rec = PreferenceRecord {
        prompt_id: "u".into(),
        best_index: 2,
        worst_index: 1,
        n: 4,
    };
    let set = TrainingSet::from_records(std::slice::from_ref(&space), &[rec]).unwrap();
    let v = evaluate(Objective::bonbon(0.0, star), &policy, &set).unwrap();
    assert!(v.value < 1e-20);
    assert!(v.grad[0].iter().all(|g| g.abs() < 1e-9));
    assert!(gradient_check(Objective::bonbon(0.0, star), &policy, &set, 1e-5).unwrap() < 1e-5);
}

proptest! {
    #[test]
    fn losses_invariant_to_logit_shift(seed in 0u64..1000, shift in -50.0f64..50.0) {
        let mut rng = Rng::new(seed, 1);
        let (_, policy, set) = random_instance(&mut rng);
        let shifted = TabularPolicy::from_logits(
            policy.prompt_ids().to_vec(),
            policy.all_logits().iter().map(|r| r.iter().map(|x| x + shift).collect()).collect(),
        );
        for (_, obj) in objectives(&mut rng) {
            let a = evaluate(obj, &policy, &set).unwrap();
            let b = evaluate(obj, &shifted, &set).unwrap();
            prop_assert!((a.value - b.value).abs() <= 1e-9 * a.value.abs().max(1.0));
        }
        for k in 0..policy.num_prompts() {
            let a = log_softmax(policy.logits(k));
            let b = log_softmax(shifted.logits(k));
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}
