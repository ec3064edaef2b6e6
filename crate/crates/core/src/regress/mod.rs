//! Regression engines shared by both stages of every test: OLS, LAD, GLS under
//! a compound-symmetric cluster correlation, feasible GLS with a profiled
//! correlation parameter, and the cluster-robust sandwich covariance.

mod cluster;
mod design;
mod lad;
mod profile;

use thiserror::Error;

use crate::linalg::{Cholesky, Matrix};

pub use cluster::{CholFactor, ClusterCorrelation, Clusters};
pub use design::{DesignKind, DesignMatrix};
pub use lad::{fit_lad, lad_objective, LadOptions};
pub use profile::{profile_loglik, profile_rho, ProfileFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressError {
    #[error("outcome has {got} values but the design has {expected} rows")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("design is rank deficient: column `{column}` is a linear combination of earlier columns")]
    SingularDesign { column: String },
    #[error("LAD did not converge after {iterations} iterations (objective gap {objective_gap:e})")]
    Convergence {
        iterations: usize,
        objective_gap: f64,
        coefficients: Vec<f64>,
    },
    #[error("correlation is unidentified: every cluster is a singleton, fit without clusters instead")]
    Unidentifiable,
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),
    #[error("correlation {rho} outside the positive-definite range ({lower}, 1)")]
    InvalidCorrelation { rho: f64, lower: f64 },
    #[error("outcome contains a non-finite value at position {0}")]
    NonFinite(usize),
}

/// Output of any of the regression engines.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Leverages `h_ii`, only populated by OLS.
    pub hat_diagonal: Option<Vec<f64>>,
    /// Mean squared residual for least squares fits (the conditional MLE of the
    /// error variance); mean absolute residual for LAD.
    pub residual_scale: f64,
}

/// A GLS fit together with the whitened problem it was solved on.
/// `fit.fitted` and `fit.residuals` live on the whitened scale.
#[derive(Debug, Clone)]
pub struct GlsFit {
    pub fit: FitResult,
    pub whitened_response: Vec<f64>,
    pub whitened_design: Matrix,
    pub rho: f64,
    pub log_det: f64,
}

pub(crate) fn check_inputs(x: &DesignMatrix, y: &[f64]) -> Result<(), RegressError> {
    if y.len() != x.nrows() {
        return Err(RegressError::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(RegressError::NonFinite(i));
    }
    Ok(())
}

pub(crate) struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub gram: Cholesky,
}

/// Least squares on an arbitrary matrix via the normal equations.
pub(crate) fn least_squares(
    x: &Matrix,
    y: &[f64],
    column_labels: &[String],
) -> Result<LeastSquares, RegressError> {
    let gram = Cholesky::new(&x.gram()).map_err(|j| RegressError::SingularDesign {
        column: column_labels
            .get(j)
            .cloned()
            .unwrap_or_else(|| format!("#{j}")),
    })?;
    let coefficients = gram.solve(&x.t_mul_vec(y));
    let fitted = x.mul_vec(&coefficients);
    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    Ok(LeastSquares {
        coefficients,
        fitted,
        residuals,
        gram,
    })
}

fn mean_square(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64
}

/// Ordinary least squares.
pub fn fit_ols(x: &DesignMatrix, y: &[f64]) -> Result<FitResult, RegressError> {
    check_inputs(x, y)?;
    let ls = least_squares(x.matrix(), y, &x.column_labels())?;
    let inv = ls.gram.inverse();
    let hat = (0..x.nrows())
        .map(|i| {
            let r = x.row(i);
            let v = inv.mul_vec(r);
            crate::linalg::dot(r, &v)
        })
        .collect();
    Ok(FitResult {
        residual_scale: mean_square(&ls.residuals),
        coefficients: ls.coefficients,
        fitted: ls.fitted,
        residuals: ls.residuals,
        hat_diagonal: Some(hat),
    })
}

/// `C^{-1} X`, column by column.
pub fn whiten_matrix(chol: &CholFactor, x: &Matrix) -> Matrix {
    let n = x.nrows();
    let p = x.ncols();
    let mut out = Matrix::zeros(n, p);
    for j in 0..p {
        let col = chol.whiten(&x.column(j));
        for (i, v) in col.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// Generalized least squares for a fixed correlation factor: OLS of
/// `C^{-1} y` on `C^{-1} X`.
pub fn fit_gls(x: &DesignMatrix, y: &[f64], chol: &CholFactor) -> Result<GlsFit, RegressError> {
    check_inputs(x, y)?;
    if chol.n_obs() != y.len() {
        return Err(RegressError::DimensionMismatch {
            expected: chol.n_obs(),
            got: y.len(),
        });
    }
    let ys = chol.whiten(y);
    let xs = whiten_matrix(chol, x.matrix());
    let ls = least_squares(&xs, &ys, &x.column_labels())?;
    Ok(GlsFit {
        fit: FitResult {
            residual_scale: mean_square(&ls.residuals),
            coefficients: ls.coefficients,
            fitted: ls.fitted,
            residuals: ls.residuals,
            hat_diagonal: None,
        },
        whitened_response: ys,
        whitened_design: xs,
        rho: chol.rho(),
        log_det: chol.log_det(),
    })
}

/// Cluster-robust (Huber-White) covariance of the coefficients of a fit on
/// `x`: `(X'X)^{-1} (sum_c X_c' r_c r_c' X_c) (X'X)^{-1}`.
pub fn sandwich_cov(
    x: &DesignMatrix,
    fit: &FitResult,
    clusters: &Clusters,
) -> Result<Matrix, RegressError> {
    check_inputs(x, &fit.residuals)?;
    if clusters.n_obs() != x.nrows() {
        return Err(RegressError::DimensionMismatch {
            expected: x.nrows(),
            got: clusters.n_obs(),
        });
    }
    if clusters.n_clusters() < 2 {
        return Err(RegressError::DegenerateVariance(format!(
            "{} cluster(s); the sandwich needs at least 2",
            clusters.n_clusters()
        )));
    }
    let p = x.ncols();
    let bread = Cholesky::new(&x.matrix().gram())
        .map_err(|j| RegressError::SingularDesign {
            column: x.column_labels()[j].clone(),
        })?
        .inverse();
    let mut meat = Matrix::zeros(p, p);
    let mut score = vec![0.0; p];
    for block in clusters.blocks() {
        score.iter_mut().for_each(|s| *s = 0.0);
        for &i in block {
            let r = fit.residuals[i];
            for (s, xv) in score.iter_mut().zip(x.row(i)) {
                *s += xv * r;
            }
        }
        for a in 0..p {
            for b in 0..p {
                meat[(a, b)] += score[a] * score[b];
            }
        }
    }
    let mut v = bread.mul(&meat).mul(&bread);
    // symmetrize away rounding
    for a in 0..p {
        for b in 0..a {
            let s = 0.5 * (v[(a, b)] + v[(b, a)]);
            v[(a, b)] = s;
            v[(b, a)] = s;
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_general;

    fn design_from(cols: &[Vec<f64>]) -> DesignMatrix {
        let n = cols[0].len();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        let labels = (0..=cols.len()).map(|j| format!("c{j}")).collect();
        DesignMatrix::new(&rows, labels).unwrap()
    }

    #[test]
    fn ols_on_group_design_gives_group_means() {
        let groups = vec![0, 0, 1, 1, 1, 2, 2, 0];
        let y = vec![1.0, 2.0, 10.0, 11.0, 15.0, -3.0, -5.0, 6.0];
        let x = DesignMatrix::from_groups(&groups, 3).unwrap();
        let fit = fit_ols(&x, &y).unwrap();
        let means = [3.0, 12.0, -4.0];
        for (i, &g) in groups.iter().enumerate() {
            assert!((fit.fitted[i] - means[g]).abs() < 1e-12);
            assert_eq!(fit.fitted[i] + fit.residuals[i], y[i]);
        }
        // group designs have h_ii = 1/n_j
        let h = fit.hat_diagonal.unwrap();
        assert!((h[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((h[5] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ols_exact_fit_has_zero_residuals() {
        let x = design_from(&[vec![0.1, 0.5, 0.9, 0.3, 0.0, 0.7]]);
        let y: Vec<f64> = (0..6).map(|i| 1.0 + 2.0 * x.row(i)[1]).collect();
        let fit = fit_ols(&x, &y).unwrap();
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-13));
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ols_five_points_normal_equations_by_hand() {
        // x = 0, .25, .5, .75, 1 ; y = 1, 2, 2, 4, 5
        // Sxx = 0.625, Sxy = 2.5 -> slope 4, intercept 2.8 - 4 * 0.5 = 0.8
        let x = design_from(&[vec![0.0, 0.25, 0.5, 0.75, 1.0]]);
        let y = [1.0, 2.0, 2.0, 4.0, 5.0];
        let fit = fit_ols(&x, &y).unwrap();
        assert!((fit.coefficients[0] - 0.8).abs() < 1e-10);
        assert!((fit.coefficients[1] - 4.0).abs() < 1e-10);
        for j in 0..2 {
            let s: f64 = (0..5).map(|i| x.row(i)[j] * fit.residuals[i]).sum();
            assert!(s.abs() < 1e-8);
        }
    }

    #[test]
    fn singular_design_names_the_column() {
        // second group column duplicates the first
        let x = design_from(&[vec![0.2, 0.3, 0.0, 0.5, 0.1], vec![0.2, 0.3, 0.0, 0.5, 0.1]]);
        match fit_ols(&x, &[1.0, 2.0, 3.0, 4.0, 5.0]) {
            Err(RegressError::SingularDesign { column }) => assert_eq!(column, "c2"),
            other => panic!("expected singular design, got {other:?}"),
        }
    }

    #[test]
    fn gls_identity_equals_ols() {
        let x = design_from(&[vec![0.1, 0.5, 0.9, 0.3, 0.0, 0.7, 0.2]]);
        let y = [0.3, 1.0, -2.0, 4.0, 0.0, 1.5, 2.5];
        let ols = fit_ols(&x, &y).unwrap();
        let gls = fit_gls(&x, &y, &CholFactor::identity(7)).unwrap();
        assert_eq!(ols.coefficients, gls.fit.coefficients);
        assert_eq!(ols.fitted, gls.fit.fitted);
        assert_eq!(ols.residuals, gls.fit.residuals);
        assert_eq!(ols.residual_scale, gls.fit.residual_scale);
    }

    #[test]
    fn gls_single_pair_against_direct_solve() {
        // one cluster of size 2 plus singletons so the design has full rank
        let x = design_from(&[vec![0.0, 1.0, 0.0, 1.0, 0.5]]);
        let y = [1.0, 3.0, 0.5, 2.0, 4.0];
        let clusters = Clusters::from_labels(&[0, 0, 1, 2, 3]);
        let rho = 0.5;
        let gls = fit_gls(&x, &y, &CholFactor::new(&clusters, rho)).unwrap();
        // direct: Sigma^{-1} block for the pair is [[1, -rho], [-rho, 1]] / (1 - rho^2)
        let mut winv = Matrix::identity(5);
        let s = 1.0 / (1.0 - rho * rho);
        winv[(0, 0)] = s;
        winv[(1, 1)] = s;
        winv[(0, 1)] = -rho * s;
        winv[(1, 0)] = -rho * s;
        let xm = x.matrix();
        let xtw = xm.transpose().mul(&winv);
        let lhs = xtw.mul(xm);
        let rhs = xtw.mul_vec(&y);
        let direct = solve_general(&lhs, &rhs).unwrap();
        for (a, b) in gls.fit.coefficients.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn gls_constant_outcome() {
        let x = design_from(&[vec![0.0, 1.0, 0.0, 1.0, 0.5, 0.2]]);
        let clusters = Clusters::from_labels(&[0, 0, 1, 1, 2, 2]);
        let gls = fit_gls(&x, &[2.5; 6], &CholFactor::new(&clusters, 0.3)).unwrap();
        assert!((gls.fit.coefficients[0] - 2.5).abs() < 1e-12);
        assert!(gls.fit.coefficients[1].abs() < 1e-12);
    }

    #[test]
    fn sandwich_three_clusters_by_hand() {
        // x = (1, t), t = 0,1,0,1,1 ; clusters {0,1}, {2,3}, {4}
        let x = design_from(&[vec![0.0, 1.0, 0.0, 1.0, 1.0]]);
        let fit = FitResult {
            coefficients: vec![0.0, 0.0],
            fitted: vec![0.0; 5],
            residuals: vec![1.0, -2.0, 0.5, 1.0, -1.0],
            hat_diagonal: None,
            residual_scale: 0.0,
        };
        let clusters = Clusters::from_labels(&[0, 0, 1, 1, 2]);
        let v = sandwich_cov(&x, &fit, &clusters).unwrap();
        // X'X = [[5, 3], [3, 3]], inverse = [[1/2, -1/2], [-1/2, 5/6]]
        // scores: c0 = (-1, -2), c1 = (1.5, 1), c2 = (-1, -1)
        // meat = [[1 + 2.25 + 1, 2 + 1.5 + 1], [., 4 + 1 + 1]] = [[4.25, 4.5], [4.5, 6]]
        let b = Matrix::from_rows(&[vec![0.5, -0.5], vec![-0.5, 5.0 / 6.0]]);
        let m = Matrix::from_rows(&[vec![4.25, 4.5], vec![4.5, 6.0]]);
        let expect = b.mul(&m).mul(&b);
        for i in 0..2 {
            for j in 0..2 {
                assert!((v[(i, j)] - expect[(i, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sandwich_constant_residual_magnitude_is_model_based() {
        let x = design_from(&[vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0]]);
        let fit = FitResult {
            coefficients: vec![0.0, 0.0],
            fitted: vec![0.0; 6],
            residuals: vec![1.0, -1.0, 1.0, -1.0, -1.0, 1.0],
            hat_diagonal: None,
            residual_scale: 0.0,
        };
        let v = sandwich_cov(&x, &fit, &Clusters::singletons(6)).unwrap();
        let inv = Cholesky::new(&x.matrix().gram()).unwrap().inverse();
        for i in 0..2 {
            for j in 0..2 {
                assert!((v[(i, j)] - inv[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sandwich_halves_when_clusters_duplicated() {
        let t = vec![0.0, 1.0, 0.0, 1.0, 1.0];
        let r = vec![0.3, -1.2, 0.5, 1.0, -0.1];
        let lab = vec![0, 0, 1, 1, 2];
        let x = design_from(&[t.clone()]);
        let mk = |res: Vec<f64>| FitResult {
            coefficients: vec![],
            fitted: vec![0.0; res.len()],
            residuals: res,
            hat_diagonal: None,
            residual_scale: 0.0,
        };
        let v1 = sandwich_cov(&x, &mk(r.clone()), &Clusters::from_labels(&lab)).unwrap();
        let t2 = [t.clone(), t].concat();
        let r2 = [r.clone(), r].concat();
        let lab2: Vec<usize> = lab.iter().copied().chain(lab.iter().map(|c| c + 10)).collect();
        let x2 = design_from(&[t2]);
        let v2 = sandwich_cov(&x2, &mk(r2), &Clusters::from_labels(&lab2)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((v2[(i, j)] - 0.5 * v1[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sandwich_needs_two_clusters() {
        let x = design_from(&[vec![0.0, 1.0, 0.0, 1.0]]);
        let fit = fit_ols(&x, &[1.0, 2.0, 3.0, 5.0]).unwrap();
        let err = sandwich_cov(&x, &fit, &Clusters::from_labels(&[0, 0, 0, 0])).unwrap_err();
        assert!(matches!(err, RegressError::DegenerateVariance(_)));
    }
}
