//! Random-intercept linear mixed-effects regression by maximum likelihood.
//!
//! Model: `y = X beta + b[group] + e`, with `b ~ N(0, sigma_b2)` and
//! `e ~ N(0, sigma2)`. For a fixed variance ratio `lambda = sigma_b2 / sigma2`
//! the marginal covariance of group `g` is `sigma2 (I + lambda 11')`, whose
//! inverse and determinant are closed-form:
//!
//! ```text
//! (I + lambda 11')^-1 = I - c_g 11',    c_g = lambda / (1 + lambda n_g)
//! det(I + lambda 11') = 1 + lambda n_g
//! ```
//!
//! so `beta` and `sigma2` profile out exactly and only `lambda` is searched.
//! Writing `I - c_g 11'` as the within-group projector plus
//! `w_g 11' / n_g` with `w_g = n_g / (1 + lambda n_g)` keeps every
//! per-candidate quantity free of cancellation even for large `lambda`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmeOptions {
    /// Maximum iterations of the 1-D search after the initial grid.
    pub max_iter: usize,
    /// Relative tolerance on `log(lambda + eps)`.
    pub rel_tol: f64,
    /// Offset keeping `log(lambda + eps)` finite at `lambda = 0`.
    pub eps: f64,
    pub lambda_max: f64,
    /// Coarse grid used to bracket the optimum.
    pub grid_points: usize,
}

impl Default for LmeOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            rel_tol: 1e-8,
            eps: 1e-8,
            lambda_max: 1e8,
            grid_points: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmeFit {
    /// Fixed effects, intercept first.
    pub beta: Vec<f64>,
    /// Random-intercept variance.
    pub sigma_b2: f64,
    /// Residual variance.
    pub sigma2: f64,
    pub lambda: f64,
    /// Per-group intercept estimates.
    pub blups: BTreeMap<String, f64>,
    /// Maximized marginal log-likelihood, nats.
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_obs: usize,
}

impl LmeFit {
    pub fn fixed_prediction(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.beta).map(|(x, b)| x * b).sum()
    }
}

/// How held-out predictions treat the random intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RandomEffectsMode {
    /// Seen groups use their training BLUP; unseen groups integrate it out.
    #[default]
    Conditional,
    /// Every observation integrates the intercept out.
    Marginal,
}

/// Per-group sufficient statistics, fixed for the whole search.
struct Grouped<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    labels: Vec<String>,
    rows: Vec<Vec<usize>>,
    /// Pooled within-group cross products.
    within_xx: DMatrix<f64>,
    within_xy: DVector<f64>,
    means_x: Vec<DVector<f64>>,
    means_y: Vec<f64>,
}

/// Profiled quantities at one value of `lambda`.
#[derive(Debug, Clone)]
pub struct ProfiledPoint {
    pub lambda: f64,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub loglik: f64,
}

impl<'a> Grouped<'a> {
    fn new(x: &'a DMatrix<f64>, y: &'a [f64], groups: &[String]) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        if y.len() != n || groups.len() != n {
            return Err(Error::Design(format!(
                "design has {n} rows but {} responses and {} group labels",
                y.len(),
                groups.len()
            )));
        }
        let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, g) in groups.iter().enumerate() {
            by_label.entry(g.as_str()).or_default().push(i);
        }
        if by_label.len() < 2 {
            return Err(Error::Design(format!(
                "random intercept needs at least 2 groups, found {}",
                by_label.len()
            )));
        }
        let mut within_xx = DMatrix::zeros(p, p);
        let mut within_xy = DVector::zeros(p);
        let mut means_x = Vec::with_capacity(by_label.len());
        let mut means_y = Vec::with_capacity(by_label.len());
        let mut centered = DVector::zeros(p);
        for rows in by_label.values() {
            let ng = rows.len() as f64;
            let mut mx = DVector::zeros(p);
            let mut my = 0.0;
            for &i in rows {
                mx += x.row(i).transpose();
                my += y[i];
            }
            mx /= ng;
            my /= ng;
            for &i in rows {
                centered.copy_from(&(x.row(i).transpose() - &mx));
                let cy = y[i] - my;
                within_xx.ger(1.0, &centered, &centered, 1.0);
                within_xy.axpy(cy, &centered, 1.0);
            }
            means_x.push(mx);
            means_y.push(my);
        }
        Ok(Self {
            x,
            y,
            labels: by_label.keys().map(|s| s.to_string()).collect(),
            rows: by_label.into_values().collect(),
            within_xx,
            within_xy,
            means_x,
            means_y,
        })
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    fn evaluate(&self, lambda: f64) -> Result<ProfiledPoint> {
        let mut a = self.within_xx.clone();
        let mut b = self.within_xy.clone();
        let mut log_det = 0.0;
        for (g, rows) in self.rows.iter().enumerate() {
            let ng = rows.len() as f64;
            let w = ng / (1.0 + lambda * ng);
            a.ger(w, &self.means_x[g], &self.means_x[g], 1.0);
            b.axpy(w * self.means_y[g], &self.means_x[g], 1.0);
            log_det += (lambda * ng).ln_1p();
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::Design("normal equations are not positive definite".into()))?;
        let beta = chol.solve(&b);

        let mut q = 0.0;
        for rows in &self.rows {
            let ng = rows.len() as f64;
            let resid: Vec<f64> = rows
                .iter()
                .map(|&i| self.y[i] - self.x.row(i).dot(&beta.transpose()))
                .collect();
            let mean = resid.iter().sum::<f64>() / ng;
            let within: f64 = resid.iter().map(|r| (r - mean) * (r - mean)).sum();
            q += within + ng / (1.0 + lambda * ng) * mean * mean;
        }
        let n = self.n() as f64;
        let sigma2 = q / n;
        if !(sigma2 > 0.0) {
            return Err(Error::Design("residual variance is zero (perfect fit)".into()));
        }
        let loglik = -0.5 * (n * (2.0 * PI * sigma2).ln() + log_det + n);
        Ok(ProfiledPoint {
            lambda,
            beta: beta.iter().copied().collect(),
            sigma2,
            loglik,
        })
    }
}

fn check_rank(x: &DMatrix<f64>) -> Result<()> {
    let p = x.ncols();
    if x.nrows() <= p {
        return Err(Error::Design(format!(
            "{} observations for {p} fixed effects",
            x.nrows()
        )));
    }
    let xtx = x.tr_mul(x);
    let scale: Vec<f64> = (0..p).map(|j| xtx[(j, j)].sqrt()).collect();
    if let Some(j) = scale.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::Design(format!("column {j} is identically zero")));
    }
    let corr = DMatrix::from_fn(p, p, |i, j| xtx[(i, j)] / (scale[i] * scale[j]));
    let eig = SymmetricEigen::new(corr).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if !(min > 1e-12 * max) {
        return Err(Error::Design(format!(
            "design is rank deficient (condition ratio {:.3e})",
            min / max
        )));
    }
    Ok(())
}

/// Profiled log-likelihood at a fixed variance ratio.
pub fn profiled_loglik(x: &DMatrix<f64>, y: &[f64], groups: &[String], lambda: f64) -> Result<ProfiledPoint> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("variance ratio must be nonnegative, got {lambda}")));
    }
    Grouped::new(x, y, groups)?.evaluate(lambda)
}

pub fn fit_lme(x: &DMatrix<f64>, y: &[f64], groups: &[String]) -> Result<LmeFit> {
    fit_lme_with(x, y, groups, &LmeOptions::default())
}

pub fn fit_lme_with(x: &DMatrix<f64>, y: &[f64], groups: &[String], opts: &LmeOptions) -> Result<LmeFit> {
    let data = Grouped::new(x, y, groups)?;
    check_rank(x)?;

    let lambda_of = |theta: f64| (theta.exp() - opts.eps).max(0.0);
    let lo = opts.eps.ln();
    let hi = (opts.lambda_max + opts.eps).ln();
    let k = opts.grid_points.max(3);
    let grid: Vec<f64> = (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect();
    let mut values = Vec::with_capacity(k);
    for &t in &grid {
        values.push(data.evaluate(lambda_of(t))?.loglik);
    }
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v > values[b] { i } else { b });
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(k - 1)];

    let mut failure = None;
    let objective = |t: f64| match data.evaluate(lambda_of(t)) {
        Ok(p) => -p.loglik,
        Err(e) => {
            failure.get_or_insert(e);
            f64::INFINITY
        }
    };
    let (theta, iterations, converged) = brent_minimize(objective, a, grid[best], b, opts.rel_tol, opts.max_iter);
    if let Some(e) = failure {
        return Err(e);
    }
    if !converged {
        return Err(Error::Convergence {
            iterations,
            low: lambda_of(a),
            high: lambda_of(b),
        });
    }
    let mut point = data.evaluate(lambda_of(theta))?;
    // The search works on the interior; the boundary itself may be better.
    if best == 0 {
        let boundary = data.evaluate(0.0)?;
        if boundary.loglik >= point.loglik {
            point = boundary;
        }
    }

    let lambda = point.lambda;
    let beta = DVector::from_vec(point.beta.clone());
    let mut blups = BTreeMap::new();
    for (label, rows) in data.labels.iter().zip(&data.rows) {
        let ng = rows.len() as f64;
        let resid_sum: f64 = rows.iter().map(|&i| y[i] - x.row(i).dot(&beta.transpose())).sum();
        blups.insert(label.clone(), lambda / (1.0 + lambda * ng) * resid_sum);
    }
    Ok(LmeFit {
        sigma_b2: lambda * point.sigma2,
        sigma2: point.sigma2,
        lambda,
        beta: point.beta,
        blups,
        loglik: point.loglik,
        converged: true,
        iterations,
        n_obs: y.len(),
    })
}

/// Brent's method on `[a, c]` starting from `b`; returns (argmin, iterations, converged).
fn brent_minimize<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    c: f64,
    rel_tol: f64,
    max_iter: usize,
) -> (f64, usize, bool) {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut lo, mut hi) = (a.min(c), a.max(c));
    if hi - lo <= 0.0 {
        return (b, 0, true);
    }
    let (mut x, mut w, mut v) = (b, b, b);
    let fx0 = f(x);
    let (mut fx, mut fw, mut fv) = (fx0, fx0, fx0);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for iter in 1..=max_iter {
        let mid = 0.5 * (lo + hi);
        let tol1 = rel_tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - mid).abs() <= tol2 - 0.5 * (hi - lo) {
            return (x, iter, true);
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (lo - x) && p < q * (hi - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - lo < tol2 || hi - u < tol2 {
                    d = tol1.copysign(mid - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= mid { lo - x } else { hi - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                lo = x;
            } else {
                hi = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                lo = u;
            } else {
                hi = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, max_iter, false)
}

fn normal_logpdf(y: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (y - mean) * (y - mean) / var)
}

/// Per-observation predictive log-densities (nats) of held-out data.
pub fn heldout_loglik(
    fit: &LmeFit,
    x: &DMatrix<f64>,
    y: &[f64],
    groups: &[String],
    mode: RandomEffectsMode,
) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| {
            let fixed = x.row(i).dot(&DVector::from_column_slice(&fit.beta).transpose());
            let blup = match mode {
                RandomEffectsMode::Conditional => fit.blups.get(&groups[i]).copied(),
                RandomEffectsMode::Marginal => None,
            };
            match blup {
                Some(b) => normal_logpdf(y[i], fixed + b, fit.sigma2),
                None => normal_logpdf(y[i], fixed, fit.sigma2 + fit.sigma_b2),
            }
        })
        .collect()
}
