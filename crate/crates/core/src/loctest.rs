//! Generalized location test (gL) and the joint location-scale test (gJLS)
//! built by Fisher-combining gL with gS.

use crate::dist::{self, DistSpec, P_FLOOR};
use crate::regress::profile_rho;
use crate::scaletest::{
    self, gs_test, regression_f, Method, Reference, SampleData, Stage1, TestError, TestResult,
};

#[derive(Debug, Clone, PartialEq)]
pub struct JointResult {
    pub p_location: f64,
    pub p_scale: f64,
    /// Fisher statistic `-2 (ln p_L + ln p_S)`.
    pub w_f: f64,
    /// Upper tail of `chi^2_4` at `w_f`.
    pub p_joint: f64,
    pub location: TestResult,
    pub scale: TestResult,
    /// A component p-value sat at the numerical floor, so `p_joint` is only
    /// an upper bound.
    pub boundary: bool,
}

/// F test of all group coefficients in the mean model. With clusters, the
/// outcome correlation is profiled and the test runs on the whitened problem.
pub fn gl_test(data: &SampleData) -> Result<TestResult, TestError> {
    let labels = data.design().column_labels();
    let (stat, rho_hat) = match data.clusters() {
        Some(c) => {
            let pf = profile_rho(data.design(), data.y(), c)?;
            let stat = regression_f(&pf.gls.whitened_design, &pf.gls.whitened_response, &labels)?;
            (stat, Some(pf.rho_hat))
        }
        None => (regression_f(data.design().matrix(), data.y(), &labels)?, None),
    };
    let k = data.k();
    let (df1, df2) = ((k - 1) as f64, (data.n() - k) as f64);
    let p_value = if stat.degenerate {
        1.0
    } else {
        scaletest::p_value(stat.statistic, df1, df2, Reference::F)?
    };
    Ok(TestResult {
        statistic: stat.statistic,
        df1,
        df2: Some(df2),
        p_value,
        method: Method::GeneralizedLocation,
        reference: Reference::F,
        rho_hat,
        degenerate: stat.degenerate,
        n_obs: data.n(),
    })
}

/// Fisher's combination of two p-values: `(W_F, p)` with `p` from `chi^2_4`.
pub fn fisher_combine(p_location: f64, p_scale: f64) -> Result<(f64, f64), TestError> {
    let pl = p_location.clamp(P_FLOOR, 1.0);
    let ps = p_scale.clamp(P_FLOOR, 1.0);
    // -0.0 when both are 1
    let w = (-2.0 * (pl.ln() + ps.ln())).max(0.0);
    let p = dist::sf_pvalue(DistSpec::ChiSquare(4.0), w)?;
    Ok((w, p))
}

/// Joint location-scale test: gL and gS on the same sample, each with its own
/// profiled correlation, combined by Fisher's method.
pub fn gjls_test(data: &SampleData, scale_method: Stage1) -> Result<JointResult, TestError> {
    let location = gl_test(data)?;
    let scale = gs_test(data, scale_method)?;
    let (w_f, p_joint) = fisher_combine(location.p_value, scale.p_value)?;
    Ok(JointResult {
        p_location: location.p_value,
        p_scale: scale.p_value,
        w_f,
        p_joint,
        boundary: location.p_value <= P_FLOOR || scale.p_value <= P_FLOOR,
        location,
        scale,
    })
}
