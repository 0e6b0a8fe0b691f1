use std::f64::consts::PI;

use crate::error::{KfpError, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn is_pole(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

/// `sin(πx)` with exact zeros at the integers.
pub fn sin_pi(x: f64) -> f64 {
    let n = (2.0 * x).round();
    let y = x - 0.5 * n;
    let s = (PI * y).sin();
    let c = (PI * y).cos();
    match (n as i64).rem_euclid(4) {
        0 => s,
        1 => c,
        2 => -s,
        _ => -c,
    }
}

fn lanczos(x: f64) -> f64 {
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    // split the power so it does not overflow before exp(-t) brings it down
    let half = t.powf(0.5 * (x + 0.5));
    (2.0 * PI).sqrt() * half * ((-t).exp() * half) * acc
}

/// Gamma function by the Lanczos approximation (g = 7, n = 9) with the
/// reflection formula for `x < 1/2`.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(KfpError::Domain("gamma of NaN".into()));
    }
    if is_pole(x) {
        return Err(KfpError::Domain(format!("gamma has a pole at {x}")));
    }
    if x < 0.5 {
        return Ok(PI / (sin_pi(x) * lanczos(1.0 - x)));
    }
    Ok(lanczos(x))
}

/// Reciprocal gamma `1/Γ(x)`, entire, zero at the poles of `Γ`.
pub fn rgamma(x: f64) -> f64 {
    if is_pole(x) {
        return 0.0;
    }
    if x < 0.5 {
        return sin_pi(x) * lanczos(1.0 - x) / PI;
    }
    1.0 / lanczos(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: Stirling series after upward recurrence.
    fn stirling_gamma(x: f64) -> f64 {
        let mut z = x;
        let mut log_shift = 0.0;
        let mut sign = 1.0;
        while z < 15.0 {
            log_shift += z.abs().ln();
            if z < 0.0 {
                sign = -sign;
            }
            z += 1.0;
        }
        let z2 = z * z;
        let series = 1.0 / (12.0 * z) - 1.0 / (360.0 * z * z2) + 1.0 / (1260.0 * z * z2 * z2)
            - 1.0 / (1680.0 * z * z2 * z2 * z2)
            + 1.0 / (1188.0 * z * z2 * z2 * z2 * z2);
        let lg = (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln() + series;
        sign * (lg - log_shift).exp()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn classical_values() {
        assert!(rel(gamma_fn(1.0).unwrap(), 1.0) < 1e-15);
        assert!(rel(gamma_fn(5.0).unwrap(), 24.0) < 1e-14);
        assert!(rel(gamma_fn(0.5).unwrap(), PI.sqrt()) < 1e-14);
        // 50-digit references
        assert!(rel(gamma_fn(1.0 / 3.0).unwrap(), 2.678_938_534_707_747_6) < 1e-13);
        assert!(rel(gamma_fn(-2.0 / 3.0).unwrap(), -4.018_407_802_061_621_5) < 1e-13);
    }

    #[test]
    fn poles_are_errors() {
        for x in [0.0, -1.0, -2.0, -7.0] {
            assert!(matches!(gamma_fn(x), Err(KfpError::Domain(_))));
            assert_eq!(rgamma(x), 0.0);
        }
    }

    #[test]
    fn matches_stirling_oracle_on_range() {
        let mut worst: f64 = 0.0;
        let mut x: f64 = -9.95;
        while x < 30.0 {
            if (x - x.round()).abs() > 1e-3 || x > 0.0 {
                worst = worst.max(rel(gamma_fn(x).unwrap(), stirling_gamma(x)));
            }
            x += 0.0137;
        }
        assert!(worst < 1e-12, "worst relative error {worst:e}");
    }

    #[test]
    fn sin_pi_exact_at_integers() {
        for k in -5..5 {
            assert_eq!(sin_pi(k as f64), 0.0);
        }
        assert!((sin_pi(0.5) - 1.0).abs() < 1e-16);
    }
}
