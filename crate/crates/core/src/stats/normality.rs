//! Shapiro–Wilk W test with Royston's (1995) coefficient and p-value
//! approximations, valid for 3 ≤ n ≤ 5000.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{require_len, sorted};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapiroWilk {
    pub w: f64,
    pub p: f64,
    pub n: usize,
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

pub fn shapiro_wilk(values: &[f64]) -> Result<ShapiroWilk> {
    require_len(values, 3, "Shapiro-Wilk test")?;
    let n = values.len();
    if n > 5000 {
        return Err(Error::invalid(format!("Shapiro-Wilk test supports n <= 5000, got {n}")));
    }
    let x = sorted(values);
    if x[n - 1] - x[0] <= 1e-19 * x[n - 1].abs().max(1.0) {
        return Err(Error::ZeroVariance);
    }
    let std_normal = Normal::standard();
    let half = n / 2;
    let nf = n as f64;

    // Coefficients for the lower half, a[0] pairing x[0] with x[n-1].
    let mut a = vec![0.0; half];
    if n == 3 {
        a[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let m: Vec<f64> = (1..=half)
            .map(|i| std_normal.inverse_cdf((i as f64 - 0.375) / (nf + 0.25)))
            .collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / nf.sqrt();
        const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
        const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        let (first, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
                / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
                .sqrt();
            a[1] = a2;
            (2, fac)
        } else {
            let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
            (1, fac)
        };
        a[0] = a1;
        for i in first..half {
            a[i] = -m[i] / fac;
        }
    }

    let mean = x.iter().sum::<f64>() / nf;
    let ssq: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let num: f64 = (0..half).map(|i| a[i] * (x[n - 1 - i] - x[i])).sum();
    let w = (num * num / ssq).min(1.0);

    let p = if n == 3 {
        const PI6: f64 = 6.0 / std::f64::consts::PI;
        const STQR: f64 = std::f64::consts::FRAC_PI_3;
        (PI6 * (w.sqrt().asin() - STQR)).max(0.0)
    } else {
        let w1 = (1.0 - w).ln();
        let (z, mu, sigma) = if n <= 11 {
            let gamma = poly(&[-2.273, 0.459], nf);
            if w1 >= gamma {
                return Ok(ShapiroWilk { w, p: 0.0, n });
            }
            let mu = poly(&[0.5440, -0.39978, 0.025054, -6.714e-4], nf);
            let sigma = poly(&[1.3822, -0.77857, 0.062767, -0.0020322], nf).exp();
            (-(gamma - w1).ln(), mu, sigma)
        } else {
            let ln_n = nf.ln();
            let mu = poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], ln_n);
            let sigma = poly(&[-0.4803, -0.082676, 0.0030302], ln_n).exp();
            (w1, mu, sigma)
        };
        std_normal.sf((z - mu) / sigma)
    };
    Ok(ShapiroWilk { w, p, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn matches_reference_implementation() {
        // scipy.stats.shapiro on the same data; it works in single precision.
        let x = [2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 2.8, 3.9, 4.1, 2.5, 3.0, 6.2];
        let r = shapiro_wilk(&x).unwrap();
        assert_relative_eq!(r.w, 0.9425832004150616, epsilon = 1e-5);
        assert_relative_eq!(r.p, 0.5322446622966526, epsilon = 1e-4);

        let y = [1.0, 2.0, 4.0];
        let r = shapiro_wilk(&y).unwrap();
        assert_relative_eq!(r.w, 0.9642857142857142, epsilon = 1e-5);
        assert_relative_eq!(r.p, 0.6368868450289689, epsilon = 1e-4);

        let z = [0.3, 1.7, 0.9, 2.2, 1.1, 0.4, 8.0];
        let r = shapiro_wilk(&z).unwrap();
        assert_relative_eq!(r.w, 0.6836212401756329, epsilon = 1e-5);
        assert_relative_eq!(r.p, 0.0024496165158538643, epsilon = 1e-5);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(shapiro_wilk(&[1.0, 2.0]).is_err());
        assert!(matches!(shapiro_wilk(&[4.0; 10]), Err(Error::ZeroVariance)));
    }
}
