//! Continuous closed forms for win rate and KL of an f-tilt.
//!
//! With `U ~ Uniform(0, 1)` the reward quantile of a reference draw, an f-tilt
//! has win rate `∫u f / ∫f` and KL `∫f log f / ∫f - log ∫f`, independent of
//! the prompt.

use crate::tilt::TiltFunction;

/// Below this rate the exponential family is evaluated by its Taylor series.
pub const SERIES_CUTOFF: f64 = 0.2;

/// Win rate (with ties, continuous) of a tilted policy against the reference.
pub fn closed_win_rate(tilt: TiltFunction) -> f64 {
    match tilt {
        TiltFunction::Power { n } => {
            let n = n as f64;
            n / (n + 1.0)
        }
        TiltFunction::Exponential { c } => exponential_win_rate(c),
    }
}

/// KL divergence (nats) of a tilted policy from the reference.
pub fn closed_kl(tilt: TiltFunction) -> f64 {
    match tilt {
        TiltFunction::Power { n } if n <= 1 => 0.0,
        TiltFunction::Power { n } => {
            let n = n as f64;
            n.ln() - (n - 1.0) / n
        }
        TiltFunction::Exponential { c } => exponential_kl(c),
    }
}

/// `((c-1)e^c + 1) / (c(e^c - 1))`.
pub fn exponential_win_rate(c: f64) -> f64 {
    if c == 0.0 {
        return 0.5;
    }
    if c < SERIES_CUTOFF {
        // 1/2 + sum_k B_2k c^(2k-1) / ((2k) (2k-1)!)
        let c2 = c * c;
        return 0.5
            + c * (1.0 / 12.0
                + c2 * (-1.0 / 720.0
                    + c2 * (1.0 / 30_240.0
                        + c2 * (-1.0 / 1_209_600.0 + c2 * (1.0 / 47_900_160.0)))));
    }
    let em = (-c).exp();
    ((c - 1.0) + em) / (c * (-(-c).exp_m1()))
}

/// `((c-1)e^c + 1)/(e^c - 1) - log((e^c - 1)/c)`.
pub fn exponential_kl(c: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    if c < SERIES_CUTOFF {
        let c2 = c * c;
        return c2
            * (1.0 / 24.0
                + c2 * (-1.0 / 960.0
                    + c2 * (1.0 / 36_288.0
                        + c2 * (-7.0 / 9_676_800.0 + c2 * (1.0 / 53_222_400.0)))));
    }
    let em = (-c).exp();
    let one_minus_em = -(-c).exp_m1();
    let mean_term = ((c - 1.0) + em) / one_minus_em;
    let log_mass = c + one_minus_em.ln() - c.ln();
    mean_term - log_mass
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_values() {
        assert!((closed_win_rate(TiltFunction::Power { n: 8 }) - 8.0 / 9.0).abs() < 1e-15);
        assert_eq!(closed_kl(TiltFunction::Power { n: 1 }), 0.0);
        assert!((closed_kl(TiltFunction::Power { n: 8 }) - (8f64.ln() - 0.875)).abs() < 1e-15);
        assert!((closed_kl(TiltFunction::Power { n: 8 }) - 1.204442).abs() < 1e-6);
    }

    #[test]
    fn exponential_values() {
        let e = std::f64::consts::E;
        assert_eq!(exponential_win_rate(0.0), 0.5);
        assert!((exponential_win_rate(1.0) - 1.0 / (e - 1.0)).abs() < 1e-15);
        assert!((exponential_win_rate(1.0) - 0.581977).abs() < 1e-6);
        let kl1 = 1.0 / (e - 1.0) - (e - 1.0).ln();
        assert!((exponential_kl(1.0) - kl1).abs() < 1e-15);
        assert!((exponential_kl(1.0) - 0.0406519).abs() < 1e-6);
    }

    #[test]
    fn series_joins_direct_form() {
        // The direct forms are accurate to ~1e-13 around the cutoff.
        for c in [SERIES_CUTOFF * 0.999_999, SERIES_CUTOFF] {
            let em = (-c).exp();
            let wr = ((c - 1.0) + em) / (c * (1.0 - em));
            let kl = ((c - 1.0) + em) / (1.0 - em) - ((c.exp() - 1.0) / c).ln();
            assert!((exponential_win_rate(c) - wr).abs() < 1e-13);
            assert!((exponential_kl(c) - kl).abs() < 1e-13);
        }
    }

    #[test]
    fn large_rates_stay_finite() {
        for c in [50.0, 700.0, 1e6] {
            assert!(exponential_kl(c).is_finite());
            assert!(exponential_win_rate(c) < 1.0);
        }
        // KL ~ log c - 1 for large c.
        assert!((exponential_kl(1e6) - (1e6f64.ln() - 1.0)).abs() < 1e-5);
    }
}
