//! Maximum likelihood for the compound-symmetric correlation with the
//! regression coefficients and scale profiled out.

use std::f64::consts::PI;

use crate::optim::brent_minimize;

use super::{fit_gls, CholFactor, Clusters, DesignMatrix, GlsFit, RegressError};

const GRID_POINTS: usize = 50;
const RHO_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ProfileFit {
    pub rho_hat: f64,
    pub gls: GlsFit,
    /// Maximized Gaussian log-likelihood at `rho_hat`.
    pub loglik: f64,
}

fn loglik_of(fit: &GlsFit) -> f64 {
    let n = fit.fit.residuals.len() as f64;
    let s2 = fit.fit.residual_scale.max(f64::MIN_POSITIVE);
    -0.5 * n * ((2.0 * PI * s2).ln() + 1.0) - fit.log_det
}

/// Profile log-likelihood `-(n/2)(log(2 pi s2(rho)) + 1) - log|C(rho)|`,
/// where `s2(rho)` is the mean squared whitened GLS residual.
pub fn profile_loglik(
    x: &DesignMatrix,
    y: &[f64],
    clusters: &Clusters,
    rho: f64,
) -> Result<f64, RegressError> {
    let fit = fit_gls(x, y, &CholFactor::new(clusters, rho))?;
    Ok(loglik_of(&fit))
}

/// Feasible GLS: maximizes the profile log-likelihood over the
/// positive-definite range of `rho` (coarse grid to locate the global
/// maximum, then Brent inside the winning grid cell) and refits at the optimum.
pub fn profile_rho(
    x: &DesignMatrix,
    y: &[f64],
    clusters: &Clusters,
) -> Result<ProfileFit, RegressError> {
    if clusters.n_obs() != y.len() {
        return Err(RegressError::DimensionMismatch {
            expected: y.len(),
            got: clusters.n_obs(),
        });
    }
    if !clusters.has_correlation() {
        return Err(RegressError::Unidentifiable);
    }
    let (lo, hi) = clusters.rho_bounds();
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for g in 0..GRID_POINTS {
        let rho = lo + step * g as f64;
        let ll = profile_loglik(x, y, clusters, rho)?;
        if ll > best.0 {
            best = (ll, g);
        }
    }
    let centre = lo + step * best.1 as f64;
    let a = (centre - step).max(lo);
    let b = (centre + step).min(hi);

    let mut failure = None;
    let min = brent_minimize(
        |rho| match profile_loglik(x, y, clusters, rho) {
            Ok(ll) => -ll,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        },
        a,
        b,
        RHO_TOL,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let (mut rho_hat, mut top) = (min.x, -min.value);
    if best.0 > top {
        (rho_hat, top) = (centre, best.0);
    }
    // never report something worse than independence
    if lo < 0.0 && hi > 0.0 && profile_loglik(x, y, clusters, 0.0)? > top {
        rho_hat = 0.0;
    }
    let gls = fit_gls(x, y, &CholFactor::new(clusters, rho_hat))?;
    let loglik = loglik_of(&gls);
    Ok(ProfileFit {
        rho_hat,
        gls,
        loglik,
    })
}
