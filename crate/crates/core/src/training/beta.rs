use super::TrainError;
use serde::{Deserialize, Serialize};

/// The IPO regularization constant for which the best-of-n policy is the
/// target: `1 / (2 (n-1) H_{n-1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaStar {
    pub n: u32,
    pub value: f64,
}

impl BetaStar {
    /// Target log-ratio `1 / (2 beta)`.
    pub fn target(&self) -> f64 {
        1.0 / (2.0 * self.value)
    }
}

pub fn beta_star(n: u32) -> Result<BetaStar, TrainError> {
    if n < 2 {
        return Err(TrainError::BetaStarUndefined(n));
    }
    let m = n - 1;
    let harmonic: f64 = (1..=m).map(|k| 1.0 / k as f64).sum();
    Ok(BetaStar {
        n,
        value: 1.0 / (2.0 * m as f64 * harmonic),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(beta_star(2).unwrap().value, 0.5);
        let b8 = beta_star(8).unwrap();
        assert!((b8.value - 0.0275482094).abs() < 5e-11);
        // 7 H_7 = 7 (1 + 1/2 + ... + 1/7) = 18.15
        assert!((b8.target() - 18.15).abs() < 1e-12);
    }

    #[test]
    fn decreasing_in_n() {
        let vals: Vec<f64> = (2..40).map(|n| beta_star(n).unwrap().value).collect();
        assert!(vals.iter().all(|&v| v > 0.0));
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rejects_small_n() {
        assert!(beta_star(1).is_err());
        assert!(beta_star(0).is_err());
    }
}
