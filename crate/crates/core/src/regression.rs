//! Linear fitting engines: ordinary and weighted least squares, median
//! (least absolute deviations) regression, and an exhaustive LAD oracle for
//! small problems.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressionError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("weights must be strictly positive")]
    NonPositiveWeight,
    #[error("design is rank deficient; dependent columns {columns:?}")]
    RankDeficient { columns: Vec<usize> },
    #[error("median fit did not converge: best objective {objective}, last change {gap}")]
    NonConvergence {
        best: Vec<f64>,
        objective: f64,
        gap: f64,
    },
    #[error("problem too large for the oracle ({rows} rows, {cols} columns)")]
    TooLarge { rows: usize, cols: usize },
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, RegressionError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(RegressionError::Dimension("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// `1, x, x^2, ..., x^degree` per observation.
    pub fn polynomial(x: &[f64], degree: usize) -> Self {
        let rows: Vec<Vec<f64>> = x
            .iter()
            .map(|&v| (0..=degree).map(|p| v.powi(p as i32)).collect())
            .collect();
        Self::from_rows(&rows).expect("rows have equal length")
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    pub predictors: Matrix,
    pub response: Vec<f64>,
    pub weights: Option<Vec<f64>>,
}

impl RegressionProblem {
    pub fn new(predictors: Matrix, response: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self, RegressionError> {
        if predictors.rows != response.len() {
            return Err(RegressionError::Dimension(format!(
                "{} predictor rows but {} responses",
                predictors.rows,
                response.len()
            )));
        }
        if predictors.data.iter().any(|v| !v.is_finite()) {
            return Err(RegressionError::NonFinite("predictors"));
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(RegressionError::NonFinite("response"));
        }
        if let Some(w) = &weights {
            if w.len() != response.len() {
                return Err(RegressionError::Dimension(format!(
                    "{} weights for {} observations",
                    w.len(),
                    response.len()
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(RegressionError::NonFinite("weights"));
            }
            if w.iter().any(|&v| v <= 0.0) {
                return Err(RegressionError::NonPositiveWeight);
            }
        }
        Ok(Self {
            predictors,
            response,
            weights,
        })
    }

    pub fn residuals(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.predictors.rows)
            .map(|i| self.response[i] - dot(self.predictors.row(i), beta))
            .collect()
    }

    fn with_weights(&self, weights: Vec<f64>) -> Self {
        Self {
            predictors: self.predictors.clone(),
            response: self.response.clone(),
            weights: Some(weights),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Ols,
    Wls,
    Qr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    pub objective: f64,
    pub method: FitMethod,
    pub residuals: Vec<f64>,
}

/// Check (pinball) loss `u (tau - 1[u < 0])`.
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// Sum of check losses at `tau = 0.5`.
pub fn lad_objective(residuals: &[f64]) -> f64 {
    residuals.iter().map(|&u| check_loss(u, 0.5)).sum()
}

/// Householder least squares with column pivoting on rows already scaled by
/// square-root weights.
fn householder_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, RegressionError> {
    let (m, n) = (a.rows, a.cols);
    if m < n {
        return Err(RegressionError::Dimension(format!("{m} rows for {n} columns")));
    }
    let mut r = a.data.clone();
    let mut y = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let at = |i: usize, j: usize| i * n + j;
    let col_norm = |r: &[f64], j: usize, from: usize| -> f64 {
        (from..m).map(|i| r[at(i, j)].powi(2)).sum::<f64>().sqrt()
    };
    let original_norms: Vec<f64> = (0..n).map(|j| col_norm(&r, j, 0)).collect();
    let scale = original_norms.iter().copied().fold(0.0, f64::max);
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    for k in 0..n {
        let (best, best_norm) = (k..n)
            .map(|j| (j, col_norm(&r, j, k)))
            .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if best_norm <= tol {
            let mut columns: Vec<usize> = perm[k..].to_vec();
            columns.sort_unstable();
            return Err(RegressionError::RankDeficient { columns });
        }
        if best != k {
            for i in 0..m {
                r.swap(at(i, k), at(i, best));
            }
            perm.swap(k, best);
        }
        let alpha = if r[at(k, k)] > 0.0 { -best_norm } else { best_norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[at(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                let s: f64 = (k..m).map(|i| v[i - k] * r[at(i, j)]).sum::<f64>() * 2.0 / vnorm2;
                for i in k..m {
                    r[at(i, j)] -= s * v[i - k];
                }
            }
            let s: f64 = (k..m).map(|i| v[i - k] * y[i]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..m {
                y[i] -= s * v[i - k];
            }
        }
    }
    let mut z = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| r[at(k, j)] * z[j]).sum();
        z[k] = (y[k] - s) / r[at(k, k)];
    }
    let mut beta = vec![0.0; n];
    for (k, &p) in perm.iter().enumerate() {
        beta[p] = z[k];
    }
    Ok(beta)
}

fn weighted_solve(problem: &RegressionProblem, weights: Option<&[f64]>) -> Result<Vec<f64>, RegressionError> {
    match weights {
        None => householder_solve(&problem.predictors, &problem.response),
        Some(w) => {
            let n = problem.predictors.cols;
            let mut data = problem.predictors.data.clone();
            let mut b = problem.response.clone();
            for (i, wi) in w.iter().enumerate() {
                let sw = wi.sqrt();
                data[i * n..(i + 1) * n].iter_mut().for_each(|v| *v *= sw);
                b[i] *= sw;
            }
            let scaled = Matrix {
                rows: problem.predictors.rows,
                cols: n,
                data,
            };
            householder_solve(&scaled, &b)
        }
    }
}

/// Ordinary least squares; any weights on the problem are ignored.
pub fn ols_fit(problem: &RegressionProblem) -> Result<FitResult, RegressionError> {
    let coefficients = weighted_solve(problem, None)?;
    let residuals = problem.residuals(&coefficients);
    Ok(FitResult {
        objective: residuals.iter().map(|r| r * r).sum(),
        coefficients,
        method: FitMethod::Ols,
        residuals,
    })
}

/// Weighted least squares; a problem without weights is fitted with unit
/// weights.
pub fn wls_fit(problem: &RegressionProblem) -> Result<FitResult, RegressionError> {
    let coefficients = weighted_solve(problem, problem.weights.as_deref())?;
    let residuals = problem.residuals(&coefficients);
    let objective = match &problem.weights {
        Some(w) => residuals.iter().zip(w).map(|(r, w)| w * r * r).sum(),
        None => residuals.iter().map(|r| r * r).sum(),
    };
    Ok(FitResult {
        coefficients,
        objective,
        method: FitMethod::Wls,
        residuals,
    })
}

/// Tuning for [`median_fit_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedianFitOptions {
    /// Smoothing `eps` starts at `eps_start * scale` and shrinks tenfold
    /// down to `eps_end * scale`, where `scale` is the mean absolute OLS
    /// residual.
    pub eps_start: f64,
    pub eps_end: f64,
    /// Total reweighting iterations across all smoothing levels.
    pub max_iter: usize,
    /// Convergence threshold on the coefficient change.
    pub coef_tol: f64,
    /// Finish with an exact vertex search.
    pub polish: bool,
}

impl Default for MedianFitOptions {
    fn default() -> Self {
        Self {
            eps_start: 1e-2,
            eps_end: 1e-10,
            max_iter: 500,
            coef_tol: 1e-10,
            polish: true,
        }
    }
}

/// Median regression with default options.
pub fn median_fit(problem: &RegressionProblem) -> Result<FitResult, RegressionError> {
    median_fit_with(problem, &MedianFitOptions::default())
}

/// Median regression: iteratively reweighted least squares on the smoothed
/// loss `sqrt(u^2 + eps^2)`, warm-started at OLS, followed by a descent over
/// interpolating vertices which lands on an exact LAD minimiser.
pub fn median_fit_with(problem: &RegressionProblem, opts: &MedianFitOptions) -> Result<FitResult, RegressionError> {
    let unweighted = RegressionProblem {
        weights: None,
        ..problem.clone()
    };
    let start = ols_fit(&unweighted)?;
    let m = problem.predictors.rows;
    let scale = start.residuals.iter().map(|r| r.abs()).sum::<f64>() / m.max(1) as f64;
    let finish = |beta: Vec<f64>| {
        let residuals = problem.residuals(&beta);
        FitResult {
            objective: lad_objective(&residuals),
            coefficients: beta,
            method: FitMethod::Qr,
            residuals,
        }
    };
    if scale == 0.0 {
        return Ok(finish(start.coefficients));
    }

    let mut beta = start.coefficients.clone();
    let mut iterations = 0;
    let mut converged;
    let mut last_change = f64::INFINITY;
    let mut eps = opts.eps_start * scale;
    let eps_end = opts.eps_end * scale;
    'levels: loop {
        converged = false;
        while iterations < opts.max_iter {
            iterations += 1;
            let w: Vec<f64> = problem
                .residuals(&beta)
                .iter()
                .map(|r| 1.0 / (r * r + eps * eps).sqrt())
                .collect();
            let next = match weighted_solve(&unweighted.with_weights(w.clone()), Some(&w)) {
                Ok(b) => b,
                // Extreme weights can make the scaled design numerically
                // singular; stop refining and keep the current iterate.
                Err(RegressionError::RankDeficient { .. }) => break 'levels,
                Err(e) => return Err(e),
            };
            let size = beta.iter().map(|b| b.abs()).fold(0.0, f64::max);
            last_change = beta.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            beta = next;
            if last_change < opts.coef_tol * (1.0 + size) {
                converged = true;
                break;
            }
        }
        if iterations >= opts.max_iter || eps <= eps_end {
            break;
        }
        eps = (eps * 0.1).max(eps_end);
    }

    let irls = finish(beta);
    if opts.polish {
        if let Some(vertex) = vertex_descent(problem, &irls.residuals) {
            let polished = finish(vertex);
            return Ok(if polished.objective <= irls.objective { polished } else { irls });
        }
    }
    if !converged {
        return Err(RegressionError::NonConvergence {
            objective: irls.objective,
            best: irls.coefficients,
            gap: last_change,
        });
    }
    Ok(irls)
}

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve_square(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, &bi)| {
        let mut r = row.clone();
        r.push(bi);
        r
    }).collect();
    let scale = a.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))?;
        if m[piv][k].abs() <= 1e-12 * scale {
            return None;
        }
        m.swap(k, piv);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            if f != 0.0 {
                for j in k..=n {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
        x[k] = (m[k][n] - s) / m[k][k];
    }
    Some(x)
}

/// Columns of the inverse of `a`.
fn inverse_columns(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let cols: Option<Vec<Vec<f64>>> = (0..n)
        .map(|j| {
            let e: Vec<f64> = (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
            solve_square(a, &e)
        })
        .collect();
    cols
}

/// Picks `p` rows with the smallest residuals that give a nonsingular basis.
fn initial_basis(problem: &RegressionProblem, residuals: &[f64]) -> Option<Vec<usize>> {
    let x = &problem.predictors;
    let p = x.cols;
    let mut order: Vec<usize> = (0..x.rows).collect();
    order.sort_by(|&a, &b| residuals[a].abs().total_cmp(&residuals[b].abs()));
    let mut basis = Vec::with_capacity(p);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(p);
    for i in order {
        let mut v = x.row(i).to_vec();
        let norm0 = dot(&v, &v).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        for u in &ortho {
            let c = dot(&v, u);
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-9 * norm0 {
            v.iter_mut().for_each(|a| *a /= norm);
            ortho.push(v);
            basis.push(i);
            if basis.len() == p {
                return Some(basis);
            }
        }
    }
    None
}

/// Exact LAD descent between interpolating vertices, starting from the rows
/// with the smallest residuals. Each accepted move strictly lowers the
/// objective, so the loop terminates.
fn vertex_descent(problem: &RegressionProblem, residuals: &[f64]) -> Option<Vec<f64>> {
    let x = &problem.predictors;
    let (m, p) = (x.rows, x.cols);
    let mut basis = initial_basis(problem, residuals)?;
    let solve_basis = |basis: &[usize]| {
        let a: Vec<Vec<f64>> = basis.iter().map(|&i| x.row(i).to_vec()).collect();
        let b: Vec<f64> = basis.iter().map(|&i| problem.response[i]).collect();
        Some((solve_square(&a, &b)?, inverse_columns(&a)?))
    };
    let (mut beta, mut binv) = solve_basis(&basis)?;
    let mut r = problem.residuals(&beta);
    let mut obj: f64 = r.iter().map(|v| v.abs()).sum();

    for _ in 0..(50 * m).max(100) {
        let mut best: Option<(f64, usize, usize, f64)> = None; // (new obj, basis slot, entering row, step)
        for slot in 0..p {
            let d = &binv[slot];
            // breakpoints of f(step) = sum |r_i - step c_i|
            let mut points: Vec<(f64, f64, usize)> = Vec::with_capacity(m);
            for i in 0..m {
                let c = dot(x.row(i), d);
                if i == basis[slot] {
                    points.push((0.0, 1.0, i));
                } else if c != 0.0 && !basis.contains(&i) {
                    points.push((r[i] / c, c.abs(), i));
                }
            }
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = points.iter().map(|p| p.1).sum();
            let mut acc = 0.0;
            let mut median = points[0];
            for pt in &points {
                acc += pt.1;
                if acc >= 0.5 * total {
                    median = *pt;
                    break;
                }
            }
            let (step, _, entering) = median;
            if entering == basis[slot] || step == 0.0 {
                continue;
            }
            let cand: Vec<f64> = beta.iter().zip(d).map(|(b, dj)| b + step * dj).collect();
            let cand_obj: f64 = problem.residuals(&cand).iter().map(|v| v.abs()).sum();
            if cand_obj < obj - 1e-13 * (1.0 + obj) && best.is_none_or(|b| cand_obj < b.0) {
                best = Some((cand_obj, slot, entering, step));
            }
        }
        let Some((_, slot, entering, _)) = best else {
            break;
        };
        basis[slot] = entering;
        let (b, inv) = solve_basis(&basis)?;
        beta = b;
        binv = inv;
        r = problem.residuals(&beta);
        obj = r.iter().map(|v| v.abs()).sum();
    }
    Some(beta)
}

/// Every interpolating vertex whose LAD objective is within `tol` (relative)
/// of the best one, best first. Ties are ordered by coefficient vector.
pub fn lad_oracle_minimizers(problem: &RegressionProblem, tol: f64) -> Result<Vec<FitResult>, RegressionError> {
    let (m, p) = (problem.predictors.rows, problem.predictors.cols);
    if m > 15 || p > 3 {
        return Err(RegressionError::TooLarge { rows: m, cols: p });
    }
    if p == 0 || m < p {
        return Err(RegressionError::Dimension(format!("{m} rows for {p} columns")));
    }
    let mut found: Vec<FitResult> = Vec::new();
    let mut subset: Vec<usize> = (0..p).collect();
    loop {
        let a: Vec<Vec<f64>> = subset.iter().map(|&i| problem.predictors.row(i).to_vec()).collect();
        let b: Vec<f64> = subset.iter().map(|&i| problem.response[i]).collect();
        if let Some(beta) = solve_square(&a, &b) {
            let residuals = problem.residuals(&beta);
            found.push(FitResult {
                objective: lad_objective(&residuals),
                coefficients: beta,
                method: FitMethod::Qr,
                residuals,
            });
        }
        // next combination in lexicographic order
        let mut i = p;
        loop {
            if i == 0 {
                return finish_oracle(found, tol, m, p);
            }
            i -= 1;
            if subset[i] < m - p + i {
                subset[i] += 1;
                for j in i + 1..p {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn finish_oracle(mut found: Vec<FitResult>, tol: f64, m: usize, p: usize) -> Result<Vec<FitResult>, RegressionError> {
    if found.is_empty() {
        return Err(RegressionError::RankDeficient { columns: (0..p).collect() });
    }
    let best = found.iter().map(|f| f.objective).fold(f64::INFINITY, f64::min);
    let cut = best + tol * (1.0 + best);
    found.retain(|f| f.objective <= cut);
    found.sort_by(|a, b| {
        let near = (a.objective - b.objective).abs() <= 1e-12 * (1.0 + best);
        if near {
            a.coefficients
                .iter()
                .zip(&b.coefficients)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        } else {
            a.objective.total_cmp(&b.objective)
        }
    });
    let _ = m;
    Ok(found)
}

/// Exact LAD fit by enumerating every `p`-row interpolating solution.
/// Limited to 15 rows and 3 columns.
pub fn lad_oracle(problem: &RegressionProblem) -> Result<FitResult, RegressionError> {
    Ok(lad_oracle_minimizers(problem, 0.0)?.swap_remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_problem(x: &[f64], y: &[f64]) -> RegressionProblem {
        RegressionProblem::new(Matrix::polynomial(x, 1), y.to_vec(), None).unwrap()
    }

    #[test]
    fn check_loss_values() {
        assert_eq!(check_loss(0.0, 0.3), 0.0);
        assert_eq!(check_loss(2.0, 0.5), 1.0);
        assert_eq!(check_loss(-2.0, 0.5), 1.0);
        assert!((check_loss(-1.0, 0.9) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn ols_exact_line() {
        let fit = ols_fit(&line_problem(&[100.0, 200.0], &[5.0, 10.0])).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-12);
        assert!((fit.coefficients[1] - 0.05).abs() < 1e-15);
        let fit = ols_fit(&line_problem(&[1.0, 2.0, 3.0, 4.0], &[7.0; 4])).unwrap();
        assert!(fit.coefficients[1].abs() < 1e-12);
    }

    #[test]
    fn ols_objective_matches_residuals() {
        let p = line_problem(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.1, 1.9, 3.2, 3.9, 5.3]);
        let fit = ols_fit(&p).unwrap();
        let again: f64 = p.residuals(&fit.coefficients).iter().map(|r| r * r).sum();
        assert!((fit.objective - again).abs() <= 1e-9 * again);
    }

    #[test]
    fn rank_deficiency_names_columns() {
        let rows = vec![vec![1.0, 2.0, 4.0], vec![1.0, 3.0, 6.0], vec![1.0, 5.0, 10.0], vec![1.0, 1.0, 2.0]];
        let p = RegressionProblem::new(Matrix::from_rows(&rows).unwrap(), vec![1.0, 2.0, 3.0, 4.0], None).unwrap();
        match ols_fit(&p) {
            Err(RegressionError::RankDeficient { columns }) => assert_eq!(columns.len(), 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn problem_validation() {
        let m = Matrix::polynomial(&[1.0, 2.0], 1);
        assert!(RegressionProblem::new(m.clone(), vec![1.0], None).is_err());
        assert!(RegressionProblem::new(m.clone(), vec![1.0, f64::NAN], None).is_err());
        assert!(RegressionProblem::new(m, vec![1.0, 2.0], Some(vec![1.0, 0.0])).is_err());
    }

    #[test]
    fn wls_behaviour() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.0, 3.0, 2.0, 5.0, 4.0];
        let ols = ols_fit(&line_problem(&x, &y)).unwrap();
        let equal = RegressionProblem::new(Matrix::polynomial(&x, 1), y.to_vec(), Some(vec![1.0; 5])).unwrap();
        let wls = wls_fit(&equal).unwrap();
        for (a, b) in ols.coefficients.iter().zip(&wls.coefficients) {
            assert!((a - b).abs() < 1e-10);
        }
        let mut w = vec![1.0; 5];
        w[2] = 1e12;
        let heavy = RegressionProblem::new(Matrix::polynomial(&x, 1), y.to_vec(), Some(w)).unwrap();
        assert!(wls_fit(&heavy).unwrap().residuals[2].abs() < 1e-6);
        let two = RegressionProblem::new(Matrix::polynomial(&[1.0, 4.0], 1), vec![2.0, -1.0], Some(vec![0.3, 9.0])).unwrap();
        assert!(wls_fit(&two).unwrap().residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn median_fit_example() {
        let p = line_problem(&[1.0, 2.0, 3.0], &[1.0, 2.0, 100.0]);
        let fit = median_fit(&p).unwrap();
        assert!((fit.objective - 24.25).abs() < 1e-9, "{fit:?}");
        assert!((fit.coefficients[0] + 48.5).abs() < 1e-9);
        assert!((fit.coefficients[1] - 49.5).abs() < 1e-9);
        let oracle = lad_oracle(&p).unwrap();
        assert!((oracle.objective - 24.25).abs() < 1e-12);
    }

    #[test]
    fn median_fit_exact_line() {
        let x: Vec<f64> = (0..8).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let fit = median_fit(&line_problem(&x, &y)).unwrap();
        assert!(fit.objective < 1e-12);
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn median_fit_ignores_outlier() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let mut y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v).collect();
        y[6] = 1e4;
        let p = line_problem(&x, &y);
        let fit = median_fit(&p).unwrap();
        let oracle = lad_oracle(&p).unwrap();
        assert!((fit.objective - oracle.objective).abs() < 1e-9 * oracle.objective);
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-9);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn non_convergence_reported() {
        let p = line_problem(&[1.0, 2.0, 3.0, 4.0], &[1.0, 5.0, 2.0, 8.0]);
        let opts = MedianFitOptions { max_iter: 1, polish: false, ..Default::default() };
        assert!(matches!(median_fit_with(&p, &opts), Err(RegressionError::NonConvergence { .. })));
    }

    #[test]
    fn oracle_edge_cases() {
        let y = [4.0, 1.0, 9.0, 3.0, 7.0];
        let p = RegressionProblem::new(Matrix::polynomial(&[0.0; 5], 0), y.to_vec(), None).unwrap();
        assert_eq!(lad_oracle(&p).unwrap().coefficients, vec![4.0]);
        let two = line_problem(&[1.0, 3.0], &[2.0, 8.0]);
        assert!(lad_oracle(&two).unwrap().objective.abs() < 1e-12);
        let big = line_problem(&[0.0; 16], &[0.0; 16]);
        assert!(matches!(lad_oracle(&big), Err(RegressionError::TooLarge { .. })));
    }

    #[test]
    fn oracle_tie_break_is_lexicographic() {
        // even-count intercept-only problem: every value in [2, 3] is optimal
        let p = RegressionProblem::new(Matrix::polynomial(&[0.0; 4], 0), vec![3.0, 1.0, 2.0, 5.0], None).unwrap();
        let all = lad_oracle_minimizers(&p, 1e-9).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].coefficients, vec![2.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn problem() -> impl Strategy<Value = RegressionProblem> {
            (1usize..=3).prop_flat_map(|p| {
                (p.max(2)..=12).prop_flat_map(move |m| {
                    (
                        proptest::collection::vec(-5.0f64..5.0, m * (p - 1)),
                        proptest::collection::vec(-20.0f64..20.0, m),
                    )
                        .prop_map(move |(xs, y)| {
                            let rows: Vec<Vec<f64>> = (0..m)
                                .map(|i| {
                                    let mut r = vec![1.0];
                                    r.extend_from_slice(&xs[i * (p - 1)..(i + 1) * (p - 1)]);
                                    r
                                })
                                .collect();
                            RegressionProblem::new(Matrix::from_rows(&rows).unwrap(), y, None).unwrap()
                        })
                })
            })
        }

        proptest! {
            #[test]
            fn check_loss_at_median_is_half_abs(u in -1e6f64..1e6) {
                prop_assert_eq!(check_loss(u, 0.5), u.abs() / 2.0);
            }

            #[test]
            fn median_fit_is_certified(p in problem()) {
                if let Ok(oracle) = lad_oracle(&p) {
                    let fit = median_fit(&p).unwrap();
                    prop_assert!(oracle.objective <= fit.objective + 1e-6 * (1.0 + fit.objective));
                    prop_assert!((fit.objective - oracle.objective).abs() <= 1e-6 * oracle.objective.max(1e-12) + 1e-12);
                    let ols = ols_fit(&p).unwrap();
                    prop_assert!(fit.objective <= lad_objective(&ols.residuals) + 1e-9);
                }
            }

            #[test]
            fn median_fit_scale_equivariant(p in problem(), c in 0.1f64..50.0) {
                if lad_oracle_minimizers(&p, 1e-9).map(|v| v.len()).unwrap_or(0) == 1 {
                    let fit = median_fit(&p).unwrap();
                    let scaled = RegressionProblem::new(
                        p.predictors.clone(),
                        p.response.iter().map(|y| c * y).collect(),
                        None,
                    ).unwrap();
                    let fit_c = median_fit(&scaled).unwrap();
                    let y_scale = c * p.response.iter().fold(1.0f64, |m, y| m.max(y.abs()));
                    prop_assert!((fit_c.objective - c * fit.objective).abs() <= 1e-9 * (c * fit.objective).max(1e-3 * y_scale));
                    for (a, b) in fit.coefficients.iter().zip(&fit_c.coefficients) {
                        prop_assert!((b - c * a).abs() <= 1e-9 * (c * a.abs()).max(1e-3 * y_scale));
                    }
                }
            }
        }
    }
}
