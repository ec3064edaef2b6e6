//! Goodness-of-fit helpers used by the calibration checks: one-sample
//! Kolmogorov-Smirnov and Pearson chi-square.

use std::f64::consts::PI;

use crate::dist::{self, DistSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GofResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the limiting Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let f = -PI * PI / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        for j in 0..50 {
            let k = (2 * j + 1) as f64;
            cdf += (k * k * f).exp();
        }
        1.0 - (2.0 * PI).sqrt() / lambda * cdf
    } else {
        let mut sf = 0.0;
        for j in 1..100 {
            let jf = j as f64;
            let term = (-2.0 * jf * jf * lambda * lambda).exp();
            sf += if j % 2 == 1 { term } else { -term };
            if term < 1e-17 {
                break;
            }
        }
        (2.0 * sf).clamp(0.0, 1.0)
    }
}

/// One-sample KS test of `samples` against a continuous CDF.
///
/// The p-value uses Stephens' finite-sample scaling of the Kolmogorov limit.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> GofResult {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let en = n.sqrt();
    let p = kolmogorov_sf((en + 0.12 + 0.11 / en) * d);
    GofResult {
        statistic: d,
        p_value: p,
    }
}

/// KS test of p-values against Uniform(0, 1).
pub fn ks_uniform(p_values: &[f64]) -> GofResult {
    ks_test(p_values, |x| x.clamp(0.0, 1.0))
}

/// Pearson chi-square goodness of fit of observed counts to expected
/// probabilities. Cells with zero expected probability must have zero counts
/// and are skipped; `df = used cells - 1`.
pub fn chi_square_gof(observed: &[u64], expected_prob: &[f64]) -> GofResult {
    assert_eq!(observed.len(), expected_prob.len());
    let total: u64 = observed.iter().sum();
    let total = total as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(expected_prob) {
        if p <= 0.0 {
            continue;
        }
        let e = total * p;
        stat += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    let df = cells.saturating_sub(1).max(1) as f64;
    let p_value = dist::sf(DistSpec::ChiSquare(df), stat).unwrap_or(f64::NAN);
    GofResult {
        statistic: stat,
        p_value,
    }
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_branches_agree() {
        // both series are valid near the switch point
        let l = 1.18;
        let f = -PI * PI / (8.0 * l * l);
        let mut cdf = 0.0;
        for j in 0..50 {
            let k = (2 * j + 1) as f64;
            cdf += (k * k * f).exp();
        }
        let small = 1.0 - (2.0 * PI).sqrt() / l * cdf;
        assert!((small - kolmogorov_sf(l)).abs() < 1e-12);
        // known value: Q_KS(1.36) ~ 0.0494
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn uniform_grid_passes() {
        let ps: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_uniform(&ps);
        assert!(r.statistic <= 0.0005 + 1e-12);
        assert!(r.p_value > 0.99);
        let skewed: Vec<f64> = ps.iter().map(|p| p * p).collect();
        assert!(ks_uniform(&skewed).p_value < 1e-10);
    }

    #[test]
    fn chi_square_gof_exact_fit() {
        let r = chi_square_gof(&[25, 50, 25], &[0.25, 0.5, 0.25]);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }
}
