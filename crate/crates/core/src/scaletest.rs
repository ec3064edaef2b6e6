//! Variance-heterogeneity tests: classical Levene, the generalized scale test
//! gS, and the cluster-robust twin (TW) test.
//!
//! All of them share the two-stage structure: stage 1 regresses the outcome
//! on the group design (OLS or LAD, always with an identity working
//! covariance) and keeps the absolute residuals `d`; stage 2 tests whether `d`
//! depends on the group columns.

use thiserror::Error;

use crate::dist::{self, DistError, DistSpec};
use crate::linalg::{self, Matrix};
use crate::regress::{
    self, fit_lad, fit_ols, profile_rho, sandwich_cov, Clusters, DesignKind, DesignMatrix,
    RegressError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestError {
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("only {observed} group(s) observed; at least 2 are needed")]
    Monomorphic { observed: usize },
    #[error("group `{group}` has {size} observation(s); at least 2 are needed")]
    InsufficientGroup { group: String, size: usize },
    #[error("this test needs cluster labels")]
    ClustersRequired,
    #[error("classical Levene ignores correlation; drop the clusters explicitly first")]
    ClustersPresent,
    #[error("classical Levene needs a 0/1 indicator design")]
    NotIndicator,
    #[error("invalid sample: {0}")]
    InvalidSample(String),
}

/// Stage-1 regression engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage1 {
    /// Centres on group means.
    Ols,
    /// Centres on group medians.
    Lad,
}

impl Stage1 {
    pub fn suffix(&self) -> &'static str {
        match self {
            Stage1::Ols => "OLS",
            Stage1::Lad => "LAD",
        }
    }
}

/// Null distribution used for the p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// `F(df1, df2)`.
    F,
    /// `chi^2_{df1} / df1`, the large-sample limit.
    ChiSquareScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Levene(Stage1),
    GeneralizedScale(Stage1),
    Twin(Stage1),
    GeneralizedLocation,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Levene(s) => format!("Lev_{}", s.suffix()),
            Method::GeneralizedScale(s) => format!("gS_{}", s.suffix()),
            Method::Twin(s) => format!("TW_{}", s.suffix()),
            Method::GeneralizedLocation => "gL".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub df1: f64,
    /// Absent for the scaled chi-square reference.
    pub df2: Option<f64>,
    pub p_value: f64,
    pub method: Method,
    pub reference: Reference,
    /// Profiled within-cluster correlation, when one was estimated.
    pub rho_hat: Option<f64>,
    /// The stage-2 response carried no variation (e.g. an exact fit); the
    /// statistic is reported as 0 with p = 1.
    pub degenerate: bool,
    pub n_obs: usize,
}

/// One analysis unit: outcome, group design, optional cluster labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleData {
    y: Vec<f64>,
    design: DesignMatrix,
    clusters: Option<Clusters>,
}

impl SampleData {
    pub fn new(
        y: Vec<f64>,
        design: DesignMatrix,
        clusters: Option<Clusters>,
    ) -> Result<Self, TestError> {
        if y.len() != design.nrows() {
            return Err(TestError::InvalidSample(format!(
                "{} outcomes for {} design rows",
                y.len(),
                design.nrows()
            )));
        }
        if let Some(c) = &clusters {
            if c.n_obs() != y.len() {
                return Err(TestError::InvalidSample(format!(
                    "{} cluster labels for {} observations",
                    c.n_obs(),
                    y.len()
                )));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(TestError::InvalidSample(format!("outcome {i} is not finite")));
        }
        Ok(Self {
            y,
            design,
            clusters,
        })
    }

    /// Builds the design from full probability rows `(p_0, ..., p_{K-1})`.
    ///
    /// Groups with no mass anywhere in the sample are dropped (an unobserved
    /// group carries no information and would make the design singular); the
    /// first remaining group becomes the reference.
    pub fn from_probabilities(
        y: Vec<f64>,
        probs: &[Vec<f64>],
        labels: &[String],
        clusters: Option<Clusters>,
    ) -> Result<Self, TestError> {
        let k_all = labels.len();
        let mut mass = vec![0.0; k_all];
        for (i, row) in probs.iter().enumerate() {
            if row.len() != k_all {
                return Err(TestError::InvalidSample(format!(
                    "probability row {i} has {} entries, expected {k_all}",
                    row.len()
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(TestError::InvalidSample(format!(
                    "probability row {i} sums to {total}"
                )));
            }
            for (m, v) in mass.iter_mut().zip(row) {
                *m += v;
            }
        }
        let kept: Vec<usize> = (0..k_all).filter(|&j| mass[j] > 0.0).collect();
        if kept.len() < 2 {
            return Err(TestError::Monomorphic {
                observed: kept.len(),
            });
        }
        let rows: Vec<Vec<f64>> = probs
            .iter()
            .map(|row| kept[1..].iter().map(|&j| row[j]).collect())
            .collect();
        let design = DesignMatrix::new(&rows, kept.iter().map(|&j| labels[j].clone()).collect())?;
        Self::new(y, design, clusters)
    }

    /// Indicator design from group labels in `0..k`.
    pub fn from_groups(
        y: Vec<f64>,
        groups: &[usize],
        k: usize,
        clusters: Option<Clusters>,
    ) -> Result<Self, TestError> {
        if let Some(&g) = groups.iter().find(|&&g| g >= k) {
            return Err(TestError::InvalidSample(format!("group {g} not below k = {k}")));
        }
        let probs: Vec<Vec<f64>> = groups
            .iter()
            .map(|&g| (0..k).map(|j| if j == g { 1.0 } else { 0.0 }).collect())
            .collect();
        let labels: Vec<String> = (0..k).map(|j| j.to_string()).collect();
        Self::from_probabilities(y, &probs, &labels, clusters)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn clusters(&self) -> Option<&Clusters> {
        self.clusters.as_ref()
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of observed groups.
    pub fn k(&self) -> usize {
        self.design.k()
    }

    /// Same data treated as independent observations.
    pub fn without_clusters(&self) -> Self {
        Self {
            clusters: None,
            ..self.clone()
        }
    }

    /// Same design and clusters with a different outcome vector.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Self, TestError> {
        Self::new(y, self.design.clone(), self.clusters.clone())
    }
}

/// Absolute stage-1 residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsResiduals {
    pub d: Vec<f64>,
    pub stage1: Stage1,
}

/// Stage 1: regress `y` on the design ignoring any correlation and take
/// absolute residuals.
pub fn abs_residuals(data: &SampleData, method: Stage1) -> Result<AbsResiduals, TestError> {
    let fit = match method {
        Stage1::Ols => fit_ols(data.design(), data.y())?,
        Stage1::Lad => fit_lad(data.design(), data.y())?,
    };
    Ok(AbsResiduals {
        d: fit.residuals.iter().map(|r| r.abs()).collect(),
        stage1: method,
    })
}

pub(crate) struct FStat {
    pub statistic: f64,
    pub degenerate: bool,
}

const DEGENERATE_TOL: f64 = 1e-24;

/// Regression F statistic for all columns but the first, on a (possibly
/// whitened) problem. The restricted model regresses on the first column
/// alone, which after whitening need not be constant.
pub(crate) fn regression_f(
    x: &Matrix,
    y: &[f64],
    labels: &[String],
) -> Result<FStat, TestError> {
    let n = x.nrows();
    let p = x.ncols();
    let full = regress::least_squares(x, y, labels)?;
    let first = x.column(0);
    let alpha = linalg::dot(&first, y) / linalg::dot(&first, &first);
    let explained: f64 = full
        .fitted
        .iter()
        .zip(&first)
        .map(|(f, x1)| (f - x1 * alpha).powi(2))
        .sum();
    let rss: f64 = full.residuals.iter().map(|r| r * r).sum();
    let total: f64 = y.iter().map(|v| v * v).sum();
    if total == 0.0 || (rss <= DEGENERATE_TOL * total && explained <= DEGENERATE_TOL * total) {
        return Ok(FStat {
            statistic: 0.0,
            degenerate: true,
        });
    }
    let statistic = if rss <= DEGENERATE_TOL * total {
        f64::INFINITY
    } else {
        (explained / (p - 1) as f64) / (rss / (n - p) as f64)
    };
    Ok(FStat {
        statistic,
        degenerate: false,
    })
}

pub(crate) fn p_value(
    statistic: f64,
    df1: f64,
    df2: f64,
    reference: Reference,
) -> Result<f64, TestError> {
    if statistic.is_infinite() {
        return Ok(dist::P_FLOOR);
    }
    Ok(match reference {
        Reference::F => dist::sf_pvalue(DistSpec::FisherF(df1, df2), statistic)?,
        Reference::ChiSquareScaled => dist::sf_pvalue(DistSpec::ChiSquare(df1), statistic * df1)?,
    })
}

fn finish(
    stat: FStat,
    df1: f64,
    df2: f64,
    method: Method,
    reference: Reference,
    rho_hat: Option<f64>,
    n_obs: usize,
) -> Result<TestResult, TestError> {
    let p = if stat.degenerate {
        1.0
    } else {
        p_value(stat.statistic, df1, df2, reference)?
    };
    Ok(TestResult {
        statistic: stat.statistic,
        df1,
        df2: (reference == Reference::F).then_some(df2),
        p_value: p,
        method,
        reference,
        rho_hat,
        degenerate: stat.degenerate,
        n_obs,
    })
}

/// Classical Levene test: one-way ANOVA of `|y - centre_j|` across groups,
/// centring on group means (OLS) or lower medians (LAD). Correlation is not
/// modelled, so samples with multi-member clusters are refused; call
/// [`SampleData::without_clusters`] to ignore them deliberately.
pub fn levene_classic(data: &SampleData, method: Stage1) -> Result<TestResult, TestError> {
    if data.clusters().is_some_and(Clusters::has_correlation) {
        return Err(TestError::ClustersPresent);
    }
    if data.design().kind() != DesignKind::Indicator {
        return Err(TestError::NotIndicator);
    }
    let groups = data.design().groups().ok_or(TestError::NotIndicator)?;
    let k = data.k();
    let n = data.n();
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); k];
    for (&g, &v) in groups.iter().zip(data.y()) {
        members[g].push(v);
    }
    for (j, m) in members.iter().enumerate() {
        if m.len() < 2 {
            return Err(TestError::InsufficientGroup {
                group: data.design().labels()[j].clone(),
                size: m.len(),
            });
        }
    }
    let centres: Vec<f64> = members
        .iter()
        .map(|m| match method {
            Stage1::Ols => m.iter().sum::<f64>() / m.len() as f64,
            Stage1::Lad => {
                let mut s = m.clone();
                s.sort_by(f64::total_cmp);
                s[(s.len() - 1) / 2]
            }
        })
        .collect();
    let d: Vec<f64> = groups
        .iter()
        .zip(data.y())
        .map(|(&g, &v)| (v - centres[g]).abs())
        .collect();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&g, &v) in groups.iter().zip(&d) {
        sums[g] += v;
        counts[g] += 1;
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let grand = d.iter().sum::<f64>() / n as f64;
    let between: f64 = groups.iter().map(|&g| (means[g] - grand).powi(2)).sum();
    let within: f64 = groups
        .iter()
        .zip(&d)
        .map(|(&g, &v)| (v - means[g]).powi(2))
        .sum();
    let total: f64 = d.iter().map(|v| v * v).sum();
    let stat = if total == 0.0
        || (within <= DEGENERATE_TOL * total && between <= DEGENERATE_TOL * total)
    {
        FStat {
            statistic: 0.0,
            degenerate: true,
        }
    } else if within <= DEGENERATE_TOL * total {
        FStat {
            statistic: f64::INFINITY,
            degenerate: false,
        }
    } else {
        FStat {
            statistic: (between / (k - 1) as f64) / (within / (n - k) as f64),
            degenerate: false,
        }
    };
    finish(
        stat,
        (k - 1) as f64,
        (n - k) as f64,
        Method::Levene(method),
        Reference::F,
        None,
        n,
    )
}

/// Generalized scale test with the default `F(k-1, n-k)` reference.
pub fn gs_test(data: &SampleData, method: Stage1) -> Result<TestResult, TestError> {
    gs_test_with(data, method, Reference::F)
}

/// Generalized scale test.
///
/// Stage 2 regresses `d` on the (indicator or probability) design. With
/// clusters, the within-cluster correlation of `d` is profiled out and the
/// stage-2 F statistic is computed on the whitened problem.
pub fn gs_test_with(
    data: &SampleData,
    method: Stage1,
    reference: Reference,
) -> Result<TestResult, TestError> {
    let d = abs_residuals(data, method)?.d;
    let labels = data.design().column_labels();
    let (stat, rho_hat) = match data.clusters() {
        Some(c) => {
            let pf = profile_rho(data.design(), &d, c)?;
            let stat = regression_f(&pf.gls.whitened_design, &pf.gls.whitened_response, &labels)?;
            (stat, Some(pf.rho_hat))
        }
        None => (regression_f(data.design().matrix(), &d, &labels)?, None),
    };
    let k = data.k();
    finish(
        stat,
        (k - 1) as f64,
        (data.n() - k) as f64,
        Method::GeneralizedScale(method),
        reference,
        rho_hat,
        data.n(),
    )
}

/// Twin test with the default `F(k-1, G-1)` reference, `G` the number of clusters.
pub fn tw_test(data: &SampleData, method: Stage1) -> Result<TestResult, TestError> {
    tw_test_with(data, method, Reference::F)
}

/// Twin (TW) test: stage-2 OLS of `d` on the design with a cluster-robust
/// sandwich covariance and a joint Wald statistic on the `k - 1` group
/// coefficients, divided by `k - 1`. For `k > 2` this is the joint-Wald
/// extension of the two-group test.
pub fn tw_test_with(
    data: &SampleData,
    method: Stage1,
    reference: Reference,
) -> Result<TestResult, TestError> {
    let clusters = data.clusters().ok_or(TestError::ClustersRequired)?;
    let k = data.k();
    let g = clusters.n_clusters();
    if g < k {
        return Err(RegressError::DegenerateVariance(format!(
            "{g} clusters for {k} groups"
        ))
        .into());
    }
    let d = abs_residuals(data, method)?.d;
    let df1 = (k - 1) as f64;
    let df2 = (g - 1) as f64;
    let method = Method::Twin(method);
    if d.iter().all(|&v| v == 0.0) {
        let stat = FStat {
            statistic: 0.0,
            degenerate: true,
        };
        return finish(stat, df1, df2, method, reference, None, data.n());
    }
    let fit = fit_ols(data.design(), &d)?;
    let v = sandwich_cov(data.design(), &fit, clusters)?;
    let idx: Vec<usize> = (1..k).collect();
    let v_gg = v.select(&idx, &idx);
    let gamma: Vec<f64> = fit.coefficients[1..].to_vec();
    let solved = linalg::solve_general(&v_gg, &gamma).ok_or_else(|| {
        RegressError::DegenerateVariance("sandwich covariance of the group effects is singular".into())
    })?;
    let wald = linalg::dot(&gamma, &solved) / df1;
    if !(wald >= 0.0) {
        return Err(RegressError::DegenerateVariance(
            "sandwich covariance of the group effects is not positive definite".into(),
        )
        .into());
    }
    let stat = FStat {
        statistic: wald,
        degenerate: false,
    };
    finish(stat, df1, df2, method, reference, None, data.n())
}
