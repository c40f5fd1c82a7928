//! Exact Gaussian-Process regression with the isotropic squared-exponential
//! kernel, `k(x, x') = sig_g² exp(-|x - x'|² / (2 l²))`, zero prior mean.
//!
//! Hyperparameters are chosen by maximum marginal likelihood over
//! `(log sig_g², log l)` inside a box. For the noise-free case the optimal
//! signal variance has the closed form `sig² = yᵀR⁻¹y / N` at every length
//! scale, which reduces the fit to a one-dimensional search over `l`
//! (grid multi-start plus golden-section refinement, one Cholesky per
//! evaluation). A fixed nonzero noise keeps the two-dimensional
//! quasi-Newton path.
//!
//! Factorizations add a jitter escalated through 1e-10..1e-6 before giving
//! up. Inputs are standardized per dimension at fit time; the scaler is
//! stored with the model so queries are transformed identically.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimMismatch(format!(
                "{} input rows vs {} targets",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::DimMismatch("non-finite entry in dataset".into()));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub signal_var: f64,
    pub length_scale: f64,
    pub noise_var: f64,
}

/// Per-dimension affine map to zero mean, unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let m = x.ncols();
        let mut mean = vec![0.0; m];
        let mut std = vec![0.0; m];
        for j in 0..m {
            let col = x.column(j);
            let mu = col.sum() / n;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            mean[j] = mu;
            std[j] = if var.sqrt() > 0.0 { var.sqrt() } else { 1.0 };
        }
        Self { mean, std }
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.mean[j]) / self.std[j]
        })
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| (v - self.mean[j]) / self.std[j])
            .collect()
    }
}

/// SE kernel matrix between row sets. Symmetric PSD when `x == x2`.
pub fn kernel(x: &DMatrix<f64>, x2: &DMatrix<f64>, hp: &Hyperparams) -> Result<DMatrix<f64>> {
    if x.ncols() != x2.ncols() {
        return Err(Error::DimMismatch(format!(
            "kernel inputs have {} vs {} columns",
            x.ncols(),
            x2.ncols()
        )));
    }
    let inv2l2 = 1.0 / (2.0 * hp.length_scale * hp.length_scale);
    Ok(DMatrix::from_fn(x.nrows(), x2.nrows(), |i, j| {
        let mut d2 = 0.0;
        for c in 0..x.ncols() {
            let d = x[(i, c)] - x2[(j, c)];
            d2 += d * d;
        }
        hp.signal_var * (-d2 * inv2l2).exp()
    }))
}

fn pairwise_sq_dist(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut d2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d = 0.0;
            for c in 0..x.ncols() {
                let t = x[(i, c)] - x[(j, c)];
                d += t * t;
            }
            d2[(i, j)] = d;
            d2[(j, i)] = d;
        }
    }
    d2
}

/// Log marginal likelihood and its gradient with respect to
/// `(log sig_g², log l)`, at fixed noise. Inputs are used as given.
pub fn log_marginal(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    hp: &Hyperparams,
    jitter: f64,
) -> Result<(f64, [f64; 2])> {
    let n = x.nrows();
    let k_nl = kernel(x, x, hp)?;
    let mut k = k_nl.clone();
    for i in 0..n {
        k[(i, i)] += hp.noise_var + jitter;
    }
    let chol = nalgebra::Cholesky::new(k)
        .ok_or(Error::FactorizationFailure { max_jitter: jitter })?;
    let alpha = chol.solve(y);
    let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let lml = -0.5 * y.dot(&alpha) - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    let kinv = chol.inverse();
    let d2 = pairwise_sq_dist(x);
    let l2 = hp.length_scale * hp.length_scale;
    let mut grad = [0.0, 0.0];
    for i in 0..n {
        for j in 0..n {
            let a_ij = alpha[i] * alpha[j] - kinv[(i, j)];
            let dk_sig = k_nl[(i, j)];
            let dk_len = k_nl[(i, j)] * d2[(i, j)] / l2;
            grad[0] += 0.5 * a_ij * dk_sig;
            grad[1] += 0.5 * a_ij * dk_len;
        }
    }
    Ok((lml, grad))
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub restarts: usize,
    pub seed: u64,
    /// observation noise variance, fixed by the caller (not optimized)
    pub noise_var: f64,
    /// search box for both hyperparameters, in original units
    pub bounds: (f64, f64),
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            seed: 0,
            noise_var: 0.0,
            bounds: (1e-3, 1e3),
        }
    }
}

/// Fitted model with the training factorization cached: posterior means per
/// query cost O(N) against the stored weights.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub hyperparams: Hyperparams,
    pub scaler: Scaler,
    /// standardized training inputs
    pub x_train: DMatrix<f64>,
    /// lower Cholesky factor of K + (noise + jitter) I
    l_factor: DMatrix<f64>,
    /// (K + noise I)^-1 y
    alpha_weights: DVector<f64>,
    pub jitter: f64,
}

const FINAL_JITTERS: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];
const SEARCH_JITTERS: [f64; 3] = [1e-8, 1e-6, 1e-4];

pub fn fit(data: &Dataset, opts: &FitOptions) -> Result<GpModel> {
    let n = data.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let y0 = data.y[0];
    if data.y.iter().all(|&v| v == y0) {
        return Err(Error::DegenerateTargets);
    }

    let scaler = Scaler::fit(&data.x);
    let xs = scaler.transform(&data.x);
    let (lo, hi) = opts.bounds;

    let hp = if opts.noise_var == 0.0 {
        fit_profiled(&xs, &data.y, opts)?
    } else {
        fit_bfgs(&xs, &data.y, opts)?
    };

    let k = kernel(&xs, &xs, &hp)?;
    let (chol, jitter) = factorize(&k, hp.noise_var, &FINAL_JITTERS)?;
    let alpha_weights = chol.solve(&data.y);
    let model = GpModel {
        hyperparams: Hyperparams {
            signal_var: hp.signal_var.clamp(lo, hi),
            length_scale: hp.length_scale,
            noise_var: opts.noise_var,
        },
        scaler,
        x_train: xs,
        l_factor: chol.l(),
        alpha_weights,
        jitter,
    };
    Ok(model)
}

fn factorize(
    k: &DMatrix<f64>,
    noise: f64,
    ladder: &[f64],
) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, f64)> {
    for &jitter in ladder {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += noise + jitter;
        }
        if let Some(chol) = nalgebra::Cholesky::new(kj) {
            return Ok((chol, jitter));
        }
    }
    Err(Error::FactorizationFailure {
        max_jitter: *ladder.last().unwrap(),
    })
}

/// Profiled log marginal likelihood at one length scale: the signal
/// variance maximizing the likelihood is `yᵀR⁻¹y / N` in closed form.
fn profiled_eval(
    d2: &DMatrix<f64>,
    y: &DVector<f64>,
    log_l: f64,
    bounds: (f64, f64),
) -> Option<(f64, f64)> {
    let n = y.len();
    let l2 = (2.0 * log_l).exp();
    let r = d2.map(|d| (-d / (2.0 * l2)).exp());
    let (chol, _) = factorize(&r, 0.0, &SEARCH_JITTERS).ok()?;
    let alpha = chol.solve(y);
    let quad = y.dot(&alpha);
    if !(quad > 0.0) {
        return None;
    }
    let logdet_r: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let sigma2 = (quad / n as f64).clamp(bounds.0, bounds.1);
    let nf = n as f64;
    let lml = -0.5 * quad / sigma2
        - 0.5 * (nf * sigma2.ln() + logdet_r)
        - 0.5 * nf * (2.0 * std::f64::consts::PI).ln();
    if lml.is_finite() {
        Some((lml, sigma2))
    } else {
        None
    }
}

fn fit_profiled(xs: &DMatrix<f64>, y: &DVector<f64>, opts: &FitOptions) -> Result<Hyperparams> {
    let d2 = pairwise_sq_dist(xs);
    let (lo, hi) = (opts.bounds.0.ln(), opts.bounds.1.ln());
    let starts = 4 * opts.restarts.max(1) + 1;
    let step = (hi - lo) / (starts - 1) as f64;

    let mut best: Option<(f64, f64, f64)> = None; // (lml, log_l, sigma2)
    for i in 0..starts {
        let log_l = lo + i as f64 * step;
        if let Some((lml, s2)) = profiled_eval(&d2, y, log_l, opts.bounds) {
            if best.map_or(true, |(b, _, _)| lml > b) {
                best = Some((lml, log_l, s2));
            }
        }
    }
    let (_, center, _) = best.ok_or(Error::FactorizationFailure { max_jitter: 1e-4 })?;

    // golden-section refinement around the best grid point
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = ((center - step).max(lo), (center + step).min(hi));
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let eval = |l: f64| profiled_eval(&d2, y, l, opts.bounds).map(|(v, s)| (v, s));
    let mut fc = eval(c);
    let mut fd = eval(d);
    for _ in 0..18 {
        let vc = fc.map_or(f64::NEG_INFINITY, |(v, _)| v);
        let vd = fd.map_or(f64::NEG_INFINITY, |(v, _)| v);
        if vc > vd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d);
        }
    }
    let mut cands = vec![];
    if let Some((v, s)) = fc {
        cands.push((v, c, s));
    }
    if let Some((v, s)) = fd {
        cands.push((v, d, s));
    }
    cands.push(best.unwrap());
    let (_, log_l, sigma2) = cands
        .into_iter()
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap();
    Ok(Hyperparams {
        signal_var: sigma2,
        length_scale: log_l.exp(),
        noise_var: 0.0,
    })
}

/// Projected quasi-Newton ascent for the fixed-noise case. Multi-start,
/// deterministic per seed.
fn fit_bfgs(xs: &DMatrix<f64>, y: &DVector<f64>, opts: &FitOptions) -> Result<Hyperparams> {
    let (lo, hi) = (opts.bounds.0.ln(), opts.bounds.1.ln());
    let n = y.len() as f64;
    let var_y = {
        let mu = y.sum() / n;
        (y.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n).max(1e-12)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![[var_y.ln().clamp(lo, hi), 0.0f64.clamp(lo, hi)]];
    for _ in 1..opts.restarts.max(1) {
        starts.push([
            rng.random_range(lo..hi),
            rng.random_range(lo..hi),
        ]);
    }

    let objective = |theta: &[f64; 2]| -> Option<(f64, [f64; 2])> {
        let hp = Hyperparams {
            signal_var: theta[0].exp(),
            length_scale: theta[1].exp(),
            noise_var: opts.noise_var,
        };
        log_marginal(xs, y, &hp, 1e-10).ok()
    };

    let mut best: Option<(f64, [f64; 2])> = None;
    for start in starts {
        let mut theta = start;
        let Some((mut f, mut g)) = objective(&theta) else { continue };
        let mut h = [[1.0, 0.0], [0.0, 1.0]]; // inverse Hessian approx
        for _ in 0..60 {
            let mut dir = [
                h[0][0] * g[0] + h[0][1] * g[1],
                h[1][0] * g[0] + h[1][1] * g[1],
            ];
            if g[0] * dir[0] + g[1] * dir[1] <= 0.0 {
                h = [[1.0, 0.0], [0.0, 1.0]];
                dir = [g[0], g[1]];
            }
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..25 {
                let cand = [
                    (theta[0] + t * dir[0]).clamp(lo, hi),
                    (theta[1] + t * dir[1]).clamp(lo, hi),
                ];
                if let Some((fc, gc)) = objective(&cand) {
                    if fc > f + 1e-4 * t * (g[0] * dir[0] + g[1] * dir[1]).max(0.0) {
                        accepted = Some((cand, fc, gc));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((cand, fc, gc)) = accepted else { break };
            let s = [cand[0] - theta[0], cand[1] - theta[1]];
            let yk = [gc[0] - g[0], gc[1] - g[1]];
            let sy = s[0] * yk[0] + s[1] * yk[1];
            // BFGS update H+ = (I - r s yT) H (I - r y sT) + r s sT; for
            // ascent the curvature condition is s.y < 0, so only update on
            // meaningfully curved steps and let the reset above handle the rest
            if sy.abs() > 1e-12 {
                let rho = 1.0 / sy;
                let hy = [
                    h[0][0] * yk[0] + h[0][1] * yk[1],
                    h[1][0] * yk[0] + h[1][1] * yk[1],
                ];
                let yhy = yk[0] * hy[0] + yk[1] * hy[1];
                for i in 0..2 {
                    for j in 0..2 {
                        h[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                            + (rho * rho * yhy + rho) * s[i] * s[j];
                    }
                }
            }
            let progress = (cand[0] - theta[0]).abs() + (cand[1] - theta[1]).abs();
            theta = cand;
            f = fc;
            g = gc;
            if progress < 1e-8 {
                break;
            }
        }
        if best.map_or(true, |(bf, _)| f > bf) {
            best = Some((f, theta));
        }
    }
    let (_, theta) = best.ok_or(Error::FactorizationFailure { max_jitter: 1e-10 })?;
    Ok(Hyperparams {
        signal_var: theta[0].exp(),
        length_scale: theta[1].exp(),
        noise_var: opts.noise_var,
    })
}

impl GpModel {
    /// Posterior mean and variance at raw (unstandardized) query rows.
    /// Variances are clamped at zero from below.
    pub fn posterior(&self, x_star: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let (mu, var, _) = self.posterior_impl(x_star, false)?;
        Ok((mu, var))
    }

    /// Posterior mean, variance, and the full covariance matrix.
    pub fn posterior_with_cov(
        &self,
        x_star: &DMatrix<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>)> {
        let (mu, var, cov) = self.posterior_impl(x_star, true)?;
        Ok((mu, var, cov.unwrap()))
    }

    fn posterior_impl(
        &self,
        x_star: &DMatrix<f64>,
        want_cov: bool,
    ) -> Result<(DVector<f64>, DVector<f64>, Option<DMatrix<f64>>)> {
        if x_star.ncols() != self.x_train.ncols() {
            return Err(Error::DimMismatch(format!(
                "query has {} columns, model expects {}",
                x_star.ncols(),
                self.x_train.ncols()
            )));
        }
        let xs = self.scaler.transform(x_star);
        let k_star = kernel(&self.x_train, &xs, &self.hyperparams)?;
        let mu = k_star.tr_mul(&self.alpha_weights);
        let v = self
            .l_factor
            .solve_lower_triangular(&k_star)
            .expect("triangular factor is nonsingular");
        let t = xs.nrows();
        let mut var = DVector::zeros(t);
        for j in 0..t {
            let reduction = v.column(j).norm_squared();
            var[j] = (self.hyperparams.signal_var - reduction).max(0.0);
        }
        let cov = if want_cov {
            let k_ss = kernel(&xs, &xs, &self.hyperparams)?;
            Some(k_ss - v.tr_mul(&v))
        } else {
            None
        };
        Ok((mu, var, cov))
    }

    /// O(N) posterior mean for a single raw query against cached weights.
    pub fn posterior_mean(&self, x_star_row: &[f64]) -> f64 {
        self.posterior_mean_counted(x_star_row).0
    }

    pub(crate) fn posterior_mean_counted(&self, x_star_row: &[f64]) -> (f64, usize) {
        let xs = self.scaler.transform_row(x_star_row);
        let inv2l2 =
            1.0 / (2.0 * self.hyperparams.length_scale * self.hyperparams.length_scale);
        let mut acc = 0.0;
        let mut ops = 0;
        for i in 0..self.x_train.nrows() {
            let mut d2 = 0.0;
            for c in 0..xs.len() {
                let d = self.x_train[(i, c)] - xs[c];
                d2 += d * d;
            }
            acc += self.alpha_weights[i] * self.hyperparams.signal_var * (-d2 * inv2l2).exp();
            ops += 1;
        }
        (acc, ops)
    }

    /// Relative reconstruction error of the cached factorization,
    /// `|L Lᵀ - (K + noise I)| / |K|`, used by tests and diagnostics.
    pub fn factorization_residual(&self) -> f64 {
        let k = kernel(&self.x_train, &self.x_train, &self.hyperparams).unwrap();
        let mut kn = k.clone();
        for i in 0..kn.nrows() {
            kn[(i, i)] += self.hyperparams.noise_var + self.jitter;
        }
        let rec = &self.l_factor * self.l_factor.transpose();
        (rec - kn).norm() / k.norm().max(1e-300)
    }

    pub fn to_data(&self) -> GpModelData {
        GpModelData {
            hyperparams: self.hyperparams,
            scaler: self.scaler.clone(),
            x_train: self.x_train.clone(),
            alpha_weights: self.alpha_weights.clone(),
            jitter: self.jitter,
        }
    }

    /// Rebuilds the cached factorization from serialized state. The same
    /// floats go through the same algorithm, so posterior outputs are
    /// bit-identical to the saved model's.
    pub fn from_data(data: GpModelData) -> Result<Self> {
        let k = kernel(&data.x_train, &data.x_train, &data.hyperparams)?;
        let mut kj = k;
        for i in 0..kj.nrows() {
            kj[(i, i)] += data.hyperparams.noise_var + data.jitter;
        }
        let chol = nalgebra::Cholesky::new(kj).ok_or(Error::FactorizationFailure {
            max_jitter: data.jitter,
        })?;
        Ok(Self {
            hyperparams: data.hyperparams,
            scaler: data.scaler,
            x_train: data.x_train,
            l_factor: chol.l(),
            alpha_weights: data.alpha_weights,
            jitter: data.jitter,
        })
    }
}

/// Serializable model state: hyperparameters, scaler, training inputs,
/// weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpModelData {
    pub hyperparams: Hyperparams,
    pub scaler: Scaler,
    pub x_train: DMatrix<f64>,
    pub alpha_weights: DVector<f64>,
    pub jitter: f64,
}
