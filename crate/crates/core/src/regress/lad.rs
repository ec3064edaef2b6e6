//! Least absolute deviation regression.
//!
//! Group-indicator designs decompose into one median per group and are solved
//! directly (lower median for even group sizes). Everything else is warm-started
//! with damped IRLS and then finished by an exact vertex descent: at a basic
//! solution with `p` zero residuals, each edge direction is searched exactly
//! (the objective along an edge is convex piecewise linear, minimized at a
//! weighted median of breakpoints) until no edge improves.

use crate::linalg::{invert_general, solve_general, Cholesky, Matrix};

use super::{check_inputs, least_squares, DesignKind, DesignMatrix, FitResult, RegressError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadOptions {
    pub max_irls_iter: usize,
    /// Relative objective change that stops IRLS.
    pub irls_tol: f64,
    /// Weight floor is `delta_scale * MAD(y)`.
    pub delta_scale: f64,
    pub max_descent_iter: usize,
}

impl Default for LadOptions {
    fn default() -> Self {
        Self {
            max_irls_iter: 200,
            irls_tol: 1e-10,
            delta_scale: 1e-6,
            max_descent_iter: 10_000,
        }
    }
}

/// `sum_i |y_i - x_i beta|`.
pub fn lad_objective(x: &DesignMatrix, y: &[f64], beta: &[f64]) -> f64 {
    objective(x.matrix(), y, beta)
}

fn objective(x: &Matrix, y: &[f64], beta: &[f64]) -> f64 {
    (0..x.nrows())
        .map(|i| (y[i] - crate::linalg::dot(x.row(i), beta)).abs())
        .sum()
}

pub(crate) fn lower_median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// LAD regression with default options.
pub fn fit_lad(x: &DesignMatrix, y: &[f64]) -> Result<FitResult, RegressError> {
    fit_lad_with(x, y, &LadOptions::default())
}

pub fn fit_lad_with(
    x: &DesignMatrix,
    y: &[f64],
    opts: &LadOptions,
) -> Result<FitResult, RegressError> {
    check_inputs(x, y)?;
    let labels = x.column_labels();
    Cholesky::new(&x.matrix().gram()).map_err(|j| RegressError::SingularDesign {
        column: labels[j].clone(),
    })?;
    if x.kind() == DesignKind::Indicator {
        return Ok(group_medians(x, y));
    }
    let beta = general_lad(x.matrix(), y, &labels, opts)?;
    Ok(finish(x.matrix(), y, beta))
}

fn finish(x: &Matrix, y: &[f64], beta: Vec<f64>) -> FitResult {
    let fitted = x.mul_vec(&beta);
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    FitResult {
        residual_scale: residuals.iter().map(|r| r.abs()).sum::<f64>() / y.len() as f64,
        coefficients: beta,
        fitted,
        residuals,
        hat_diagonal: None,
    }
}

fn group_medians(x: &DesignMatrix, y: &[f64]) -> FitResult {
    let groups = x.groups().expect("indicator design");
    let k = x.k();
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); k];
    for (&g, &v) in groups.iter().zip(y) {
        members[g].push(v);
    }
    // full rank guarantees every group is non-empty
    let medians: Vec<f64> = members.iter_mut().map(|m| lower_median(m)).collect();
    let mut coefficients = vec![medians[0]; k];
    for j in 1..k {
        coefficients[j] = medians[j] - medians[0];
    }
    let fitted: Vec<f64> = groups.iter().map(|&g| medians[g]).collect();
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    FitResult {
        residual_scale: residuals.iter().map(|r| r.abs()).sum::<f64>() / y.len() as f64,
        coefficients,
        fitted,
        residuals,
        hat_diagonal: None,
    }
}

pub(crate) fn general_lad(
    x: &Matrix,
    y: &[f64],
    labels: &[String],
    opts: &LadOptions,
) -> Result<Vec<f64>, RegressError> {
    let ols = least_squares(x, y, labels)?.coefficients;
    let warm = irls(x, y, ols, opts);
    let warm_obj = objective(x, y, &warm);
    let exact = vertex_descent(x, y, &warm, opts.max_descent_iter)?;
    if objective(x, y, &exact) <= warm_obj {
        Ok(exact)
    } else {
        Ok(warm)
    }
}

fn irls(x: &Matrix, y: &[f64], start: Vec<f64>, opts: &LadOptions) -> Vec<f64> {
    let n = x.nrows();
    let p = x.ncols();
    let mut centre: Vec<f64> = y.to_vec();
    let med = lower_median(&mut centre);
    let mut dev: Vec<f64> = y.iter().map(|v| (v - med).abs()).collect();
    let mad = lower_median(&mut dev);
    let delta = if mad > 0.0 { opts.delta_scale * mad } else { 1e-12 };

    let mut beta = start;
    let mut obj = objective(x, y, &beta);
    let mut xw = Matrix::zeros(n, p);
    let mut yw = vec![0.0; n];
    for _ in 0..opts.max_irls_iter {
        for i in 0..n {
            let r = y[i] - crate::linalg::dot(x.row(i), &beta);
            let w = (1.0 / r.abs().max(delta)).sqrt();
            for (dst, src) in xw.row_mut(i).iter_mut().zip(x.row(i)) {
                *dst = src * w;
            }
            yw[i] = y[i] * w;
        }
        let Ok(gram) = Cholesky::new(&xw.gram()) else {
            break;
        };
        let proposal = gram.solve(&xw.t_mul_vec(&yw));
        // damp toward the current iterate until the objective decreases
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = beta
                .iter()
                .zip(&proposal)
                .map(|(b, q)| b + step * (q - b))
                .collect();
            let t_obj = objective(x, y, &trial);
            if t_obj < obj {
                accepted = Some((trial, t_obj));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_obj)) = accepted else {
            break;
        };
        let rel = (obj - next_obj) / obj.max(f64::MIN_POSITIVE);
        beta = next;
        obj = next_obj;
        if rel < opts.irls_tol {
            break;
        }
    }
    beta
}

/// Picks `p` rows with the smallest absolute residuals whose design rows are
/// linearly independent.
fn initial_basis(x: &Matrix, resid: &[f64]) -> Option<Vec<usize>> {
    let p = x.ncols();
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| resid[a].abs().total_cmp(&resid[b].abs()));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut chosen = Vec::with_capacity(p);
    for i in order {
        let mut v = x.row(i).to_vec();
        let norm0 = crate::linalg::dot(&v, &v).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        for q in &basis {
            let c = crate::linalg::dot(&v, q);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        let norm = crate::linalg::dot(&v, &v).sqrt();
        if norm > 1e-8 * norm0 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
            chosen.push(i);
            if chosen.len() == p {
                return Some(chosen);
            }
        }
    }
    None
}

fn vertex_descent(
    x: &Matrix,
    y: &[f64],
    start: &[f64],
    max_iter: usize,
) -> Result<Vec<f64>, RegressError> {
    let n = x.nrows();
    let p = x.ncols();
    let r0: Vec<f64> = (0..n)
        .map(|i| y[i] - crate::linalg::dot(x.row(i), start))
        .collect();
    let mut active = initial_basis(x, &r0).ok_or_else(|| RegressError::SingularDesign {
        column: "intercept".into(),
    })?;
    let solve_basis = |active: &[usize]| -> Option<Vec<f64>> {
        let xa = x.select(active, &(0..p).collect::<Vec<_>>());
        let ya: Vec<f64> = active.iter().map(|&i| y[i]).collect();
        solve_general(&xa, &ya)
    };
    let mut beta = solve_basis(&active).ok_or_else(|| RegressError::SingularDesign {
        column: "intercept".into(),
    })?;

    let mut is_active = vec![false; n];
    let mut r = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut breaks: Vec<(f64, f64, usize)> = Vec::with_capacity(n);
    let mut last_gap = f64::INFINITY;

    for _ in 0..max_iter {
        is_active.iter_mut().for_each(|a| *a = false);
        for &a in &active {
            is_active[a] = true;
        }
        for i in 0..n {
            r[i] = if is_active[i] {
                0.0
            } else {
                y[i] - crate::linalg::dot(x.row(i), &beta)
            };
        }
        let obj0: f64 = r.iter().map(|v| v.abs()).sum();
        let xa = x.select(&active, &(0..p).collect::<Vec<_>>());
        let Some(inv) = invert_general(&xa) else {
            return Err(RegressError::SingularDesign {
                column: "intercept".into(),
            });
        };

        // (improvement, leaving slot, entering row, step)
        let mut best: Option<(f64, usize, usize, f64)> = None;
        for j in 0..p {
            let dir = inv.column(j);
            for i in 0..n {
                u[i] = if is_active[i] {
                    if i == active[j] {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    crate::linalg::dot(x.row(i), &dir)
                };
            }
            breaks.clear();
            let mut total = 0.0;
            for i in 0..n {
                if u[i] != 0.0 {
                    breaks.push((r[i] / u[i], u[i].abs(), i));
                    total += u[i].abs();
                }
            }
            breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut cum = 0.0;
            let mut pick = breaks.len() - 1;
            for (idx, b) in breaks.iter().enumerate() {
                cum += b.1;
                if cum >= 0.5 * total {
                    pick = idx;
                    break;
                }
            }
            let (t, _, entering) = breaks[pick];
            if entering == active[j] {
                continue;
            }
            let obj_t: f64 = (0..n).map(|i| (r[i] - t * u[i]).abs()).sum();
            let gain = obj0 - obj_t;
            if gain > best.map_or(0.0, |b| b.0) {
                best = Some((gain, j, entering, t));
            }
        }
        match best {
            Some((gain, j, entering, _)) if gain > 1e-12 * (1.0 + obj0) => {
                let mut trial = active.clone();
                trial[j] = entering;
                match solve_basis(&trial) {
                    Some(b) => {
                        last_gap = gain;
                        active = trial;
                        beta = b;
                    }
                    None => return Ok(beta),
                }
            }
            _ => return Ok(beta),
        }
    }
    Err(RegressError::Convergence {
        iterations: max_iter,
        objective_gap: last_gap,
        coefficients: beta,
    })
}
