//! Reference distributions for the test statistics and the outcome transforms.
//!
//! CDFs are built on the regularized incomplete gamma and beta functions, both
//! evaluated with series/continued-fraction switching. Upper tails are computed
//! directly rather than as `1 - cdf` so small p-values keep their precision.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),
    #[error("argument outside the domain: {0}")]
    Domain(String),
}

/// A reference distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistSpec {
    Normal,
    StudentT(f64),
    ChiSquare(f64),
    /// Fisher-Snedecor F with numerator and denominator degrees of freedom.
    FisherF(f64, f64),
}

impl DistSpec {
    pub fn validate(&self) -> Result<(), DistError> {
        let ok = |df: f64| df.is_finite() && df > 0.0;
        match *self {
            DistSpec::Normal => Ok(()),
            DistSpec::StudentT(df) | DistSpec::ChiSquare(df) if ok(df) => Ok(()),
            DistSpec::FisherF(d1, d2) if ok(d1) && ok(d2) => Ok(()),
            other => Err(DistError::InvalidParameter(format!(
                "degrees of freedom must be positive and finite in {other:?}"
            ))),
        }
    }

    fn has_positive_support(&self) -> bool {
        matches!(self, DistSpec::ChiSquare(_) | DistSpec::FisherF(..))
    }
}

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 20_000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete gamma pair `(P(a, x), Q(a, x))`.
pub fn gamma_reg(a: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let log_prefix = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        let p = (sum * log_prefix.exp()).min(1.0);
        (p, 1.0 - p)
    } else {
        // Lentz continued fraction for Q
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        let q = (log_prefix.exp() * h).min(1.0);
        (1.0 - q, q)
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta pair `(I_x(a, b), I_{1-x}(b, a))`.
///
/// `xc` must equal `1 - x`; passing it separately avoids cancellation when the
/// caller can form it exactly.
pub fn beta_reg(a: f64, b: f64, x: f64, xc: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if xc <= 0.0 {
        return (1.0, 0.0);
    }
    let log_front = a * x.ln() + b * xc.ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        let lower = (log_front.exp() * beta_cf(a, b, x) / a).min(1.0);
        (lower, 1.0 - lower)
    } else {
        let upper = (log_front.exp() * beta_cf(b, a, xc) / b).min(1.0);
        (1.0 - upper, upper)
    }
}

/// Returns `(cdf, sf)` at `x`.
fn tails(spec: DistSpec, x: f64) -> (f64, f64) {
    match spec {
        DistSpec::Normal => {
            // Phi(x) = erfc(-x / sqrt 2) / 2, erfc(z) = Q(1/2, z^2)
            let z2 = 0.5 * x * x;
            let (_, q) = gamma_reg(0.5, z2);
            let small = 0.5 * q;
            if x < 0.0 {
                (small, 1.0 - small)
            } else {
                (1.0 - small, small)
            }
        }
        DistSpec::StudentT(df) => {
            if x == 0.0 {
                return (0.5, 0.5);
            }
            if x.is_infinite() {
                return if x > 0.0 { (1.0, 0.0) } else { (0.0, 1.0) };
            }
            let denom = df + x * x;
            let (i, _) = beta_reg(0.5 * df, 0.5, df / denom, x * x / denom);
            let tail = 0.5 * i;
            if x < 0.0 {
                (tail, 1.0 - tail)
            } else {
                (1.0 - tail, tail)
            }
        }
        DistSpec::ChiSquare(df) => gamma_reg(0.5 * df, 0.5 * x.max(0.0)),
        DistSpec::FisherF(d1, d2) => {
            if x <= 0.0 {
                return (0.0, 1.0);
            }
            if x.is_infinite() {
                return (1.0, 0.0);
            }
            let denom = d1 * x + d2;
            beta_reg(0.5 * d1, 0.5 * d2, d1 * x / denom, d2 / denom)
        }
    }
}

/// Probability density function.
pub fn pdf(spec: DistSpec, x: f64) -> Result<f64, DistError> {
    spec.validate()?;
    Ok(pdf_unchecked(spec, x))
}

fn pdf_unchecked(spec: DistSpec, x: f64) -> f64 {
    match spec {
        DistSpec::Normal => (-0.5 * x * x).exp() / (2.0 * PI).sqrt(),
        DistSpec::StudentT(df) => (ln_gamma(0.5 * (df + 1.0))
            - ln_gamma(0.5 * df)
            - 0.5 * (df * PI).ln()
            - 0.5 * (df + 1.0) * (x * x / df).ln_1p())
        .exp(),
        DistSpec::ChiSquare(df) => {
            if x < 0.0 {
                return 0.0;
            }
            let h = 0.5 * df;
            if x == 0.0 {
                return match h {
                    h if h < 1.0 => f64::INFINITY,
                    h if h == 1.0 => 0.5,
                    _ => 0.0,
                };
            }
            ((h - 1.0) * x.ln() - 0.5 * x - h * 2f64.ln() - ln_gamma(h)).exp()
        }
        DistSpec::FisherF(d1, d2) => {
            if x <= 0.0 {
                return 0.0;
            }
            (0.5 * (d1 * d1.ln() + d2 * d2.ln()) + (0.5 * d1 - 1.0) * x.ln()
                - 0.5 * (d1 + d2) * (d2 + d1 * x).ln()
                - ln_beta(0.5 * d1, 0.5 * d2))
            .exp()
        }
    }
}

fn check_x(x: f64) -> Result<(), DistError> {
    if x.is_nan() {
        Err(DistError::Domain("argument is NaN".into()))
    } else {
        Ok(())
    }
}

/// Lower-tail probability `P(X <= x)`.
pub fn cdf(spec: DistSpec, x: f64) -> Result<f64, DistError> {
    spec.validate()?;
    check_x(x)?;
    Ok(tails(spec, x).0)
}

/// Upper-tail probability `P(X > x)`, computed without forming `1 - cdf`.
pub fn sf(spec: DistSpec, x: f64) -> Result<f64, DistError> {
    spec.validate()?;
    check_x(x)?;
    Ok(tails(spec, x).1)
}

/// Upper-tail p-value clamped to `[f64::MIN_POSITIVE, 1]` so that its log is finite.
pub fn sf_pvalue(spec: DistSpec, stat: f64) -> Result<f64, DistError> {
    Ok(clamp_p(sf(spec, stat)?))
}

/// Smallest p-value ever reported.
pub const P_FLOOR: f64 = f64::MIN_POSITIVE;

pub(crate) fn clamp_p(p: f64) -> f64 {
    p.clamp(P_FLOOR, 1.0)
}

/// Inverse CDF.
pub fn quantile(spec: DistSpec, p: f64) -> Result<f64, DistError> {
    spec.validate()?;
    if !(p > 0.0 && p < 1.0) {
        return Err(DistError::Domain(format!("probability {p} not in (0, 1)")));
    }
    Ok(invert(spec, p, 1.0 - p, p <= 0.5))
}

/// Inverse survival function: the `x` with `P(X > x) = q`.
pub fn quantile_upper(spec: DistSpec, q: f64) -> Result<f64, DistError> {
    spec.validate()?;
    if !(q > 0.0 && q < 1.0) {
        return Err(DistError::Domain(format!("probability {q} not in (0, 1)")));
    }
    Ok(invert(spec, 1.0 - q, q, q > 0.5))
}

/// Acklam's rational approximation to the normal quantile (relative error ~1e-9).
fn normal_quantile_approx(p: f64, q: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let tail = |r: f64| {
        let s = (-2.0 * r.ln()).sqrt();
        (((((C[0] * s + C[1]) * s + C[2]) * s + C[3]) * s + C[4]) * s + C[5])
            / ((((D[0] * s + D[1]) * s + D[2]) * s + D[3]) * s + 1.0)
    };
    if p < 0.02425 {
        tail(p)
    } else if q < 0.02425 {
        -tail(q)
    } else {
        let r = p - 0.5;
        let s = r * r;
        (((((A[0] * s + A[1]) * s + A[2]) * s + A[3]) * s + A[4]) * s + A[5]) * r
            / (((((B[0] * s + B[1]) * s + B[2]) * s + B[3]) * s + B[4]) * s + 1.0)
    }
}

fn initial_guess(spec: DistSpec, p: f64, q: f64) -> f64 {
    let z = normal_quantile_approx(p, q);
    match spec {
        DistSpec::Normal => z,
        DistSpec::StudentT(df) => {
            let z3 = z * z * z;
            z + (z3 + z) / (4.0 * df) + (5.0 * z3 * z * z + 16.0 * z3 + 3.0 * z) / (96.0 * df * df)
        }
        DistSpec::ChiSquare(df) => {
            let c = 2.0 / (9.0 * df);
            let base = 1.0 - c + z * c.sqrt();
            (df * base.max(0.05).powi(3)).max(1e-8)
        }
        DistSpec::FisherF(..) => 1.0,
    }
}

/// Safeguarded Newton iteration on whichever tail keeps precision.
/// `use_lower` selects solving `cdf(x) = p`; otherwise `sf(x) = q`.
fn invert(spec: DistSpec, p: f64, q: f64, use_lower: bool) -> f64 {
    let resid = |x: f64| {
        let (c, s) = tails(spec, x);
        if use_lower {
            c - p
        } else {
            q - s
        }
    };
    let x0 = initial_guess(spec, p, q);
    let positive = spec.has_positive_support();

    // bracket [lo, hi] with resid(lo) < 0 <= resid(hi)
    let (mut lo, mut hi);
    if resid(x0) < 0.0 {
        lo = x0;
        let mut step = x0.abs().max(1.0);
        hi = x0 + step;
        while resid(hi) < 0.0 {
            lo = hi;
            step *= 2.0;
            hi += step;
        }
    } else {
        hi = x0;
        if positive {
            lo = 0.0;
        } else {
            let mut step = x0.abs().max(1.0);
            lo = x0 - step;
            while resid(lo) >= 0.0 {
                hi = lo;
                step *= 2.0;
                lo -= step;
            }
        }
    }

    let mut x = x0.clamp(lo, hi);
    for _ in 0..300 {
        let g = resid(x);
        if g == 0.0 {
            return x;
        }
        if g < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = pdf_unchecked(spec, x);
        let mut next = x - g / slope;
        if !(slope > 0.0 && next.is_finite() && next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE)
            || hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs())
        {
            return next;
        }
        x = next;
    }
    x
}
