use super::loss::{evaluate, Objective};
use super::records::TrainingSet;
use super::tabular::TabularPolicy;
use super::TrainError;

/// Largest relative error between the analytic gradient and central finite
/// differences with step `step`, over every logit.
///
/// Each coordinate's error is `|a - d| / max(|a|, |d|, 1e-3)`, so tiny
/// gradients are compared absolutely.
pub fn gradient_check(
    objective: Objective,
    policy: &TabularPolicy,
    set: &TrainingSet,
    step: f64,
) -> Result<f64, TrainError> {
    let analytic = evaluate(objective, policy, set)?.grad;
    let mut probe = policy.clone();
    let mut worst = 0.0f64;
    for (k, row) in analytic.iter().enumerate() {
        for (i, &a) in row.iter().enumerate() {
            let x = probe.logits(k)[i];
            probe.logits_mut(k)[i] = x + step;
            let up = evaluate(objective, &probe, set)?.value;
            probe.logits_mut(k)[i] = x - step;
            let down = evaluate(objective, &probe, set)?.value;
            probe.logits_mut(k)[i] = x;
            let d = (up - down) / (2.0 * step);
            let err = (a - d).abs() / a.abs().max(d.abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
