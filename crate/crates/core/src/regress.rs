//! Weighted least squares, the two-stage importance-weighted IV fit, its
//! closed-form scalar counterpart, and the Fourier-basis Pro-WLS baseline.
//!
//! Plain fits go through [`weighted_least_squares`]. It picks a small ridge
//! proportional to the trace of the column-equilibrated normal equations
//! (escalating it until Cholesky succeeds) and then solves the ridge problem
//! by QR on the weighted design. Rank-deficient problems therefore return the
//! (approximately) smallest-norm solution and are flagged as degenerate.
//! The stage-2 regression can instead be shrunk with a cross-validated ridge
//! (see [`Shrinkage`]).

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::RegressionProblem;

/// Base ridge, relative to the trace of the equilibrated normal matrix.
pub const RIDGE_FACTOR: f64 = 1e-10;
/// Condition-number estimate above which a solve is reported as degenerate.
pub const DEGENERATE_CONDITION: f64 = 1e8;
/// Stage-1 weighted R² below which the instrument is reported as weak.
pub const WEAK_INSTRUMENT_R2: f64 = 0.01;

const MAX_RIDGE_ESCALATIONS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub coefficients: Vec<f64>,
    /// Ridge actually added to the equilibrated normal matrix.
    pub ridge: f64,
    /// Squared ratio of the extreme Cholesky pivots of the equilibrated system.
    pub condition_estimate: f64,
    pub degenerate: bool,
    /// Weighted coefficient of determination (zero for a constant target).
    pub r_squared: f64,
}

impl LeastSquaresFit {
    pub fn diagnostics(&self) -> StageDiagnostics {
        StageDiagnostics {
            condition_estimate: self.condition_estimate,
            ridge: self.ridge,
            degenerate: self.degenerate,
            r_squared: self.r_squared,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub condition_estimate: f64,
    pub ridge: f64,
    pub degenerate: bool,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub stage1: Option<StageDiagnostics>,
    pub stage2: StageDiagnostics,
}

impl FitDiagnostics {
    pub fn degenerate(&self) -> bool {
        self.stage2.degenerate || self.stage1.is_some_and(|s| s.degenerate)
    }

    /// The instrument explains almost none of the stage-1 target.
    pub fn weak_instrument(&self) -> bool {
        self.stage1.is_some_and(|s| s.r_squared < WEAK_INSTRUMENT_R2)
    }
}

/// `argmin_c Σ w_i (x_iᵀ c − y_i)²`.
pub fn weighted_least_squares(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<LeastSquaresFit> {
    let (rows, cols) = x.shape();
    if cols == 0 {
        return Err(Error::DimensionMismatch("design has no columns".into()));
    }
    check_inputs(x, y, w)?;

    // Weighted copies: A = XᵀWX, b = XᵀWy.
    let mut xw = x.clone();
    for (r, &wi) in w.iter().enumerate() {
        let s = wi.sqrt();
        xw.row_mut(r).scale_mut(s);
    }
    let yw = DVector::from_iterator(rows, y.iter().zip(w).map(|(v, wi)| v * wi.sqrt()));
    let a = xw.tr_mul(&xw);
    let b = xw.tr_mul(&yw);

    // Jacobi equilibration so column scale does not pollute the conditioning.
    let scale: Vec<f64> = (0..cols)
        .map(|j| {
            let d = a[(j, j)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let a_eq = DMatrix::from_fn(cols, cols, |i, j| a[(i, j)] * scale[i] * scale[j]);
    let b_eq = DVector::from_fn(cols, |i, _| b[i] * scale[i]);
    let trace = a_eq.trace().max(f64::MIN_POSITIVE);

    let mut ridge = RIDGE_FACTOR * trace;
    let mut escalated = false;
    for _ in 0..=MAX_RIDGE_ESCALATIONS {
        let mut reg = a_eq.clone();
        for i in 0..cols {
            reg[(i, i)] += ridge;
        }
        if let Some(chol) = reg.cholesky() {
            let diag = chol.l_dirty().diagonal();
            let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
            let condition_estimate = (hi / lo).powi(2);
            let sol = qr_solve(&xw, &yw, &scale, ridge).unwrap_or_else(|| chol.solve(&b_eq));
            let coefficients: Vec<f64> = sol.iter().zip(&scale).map(|(c, s)| c * s).collect();
            if coefficients.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite("least-squares solution".into()));
            }
            let r_squared = weighted_r_squared(x, y, w, &coefficients);
            return Ok(LeastSquaresFit {
                coefficients,
                ridge,
                condition_estimate,
                degenerate: escalated || condition_estimate > DEGENERATE_CONDITION,
                r_squared,
            });
        }
        ridge *= 100.0;
        escalated = true;
    }
    Err(Error::NonFinite("normal equations could not be factorized".into()))
}

/// Solves `min ‖[XD; √ridge I] c − [y; 0]‖` by Householder QR, which avoids
/// squaring the condition number of the design.
fn qr_solve(xw: &DMatrix<f64>, yw: &DVector<f64>, scale: &[f64], ridge: f64) -> Option<DVector<f64>> {
    let (rows, cols) = xw.shape();
    let root = ridge.sqrt();
    let aug = DMatrix::from_fn(rows + cols, cols, |i, j| {
        if i < rows {
            xw[(i, j)] * scale[j]
        } else if i - rows == j {
            root
        } else {
            0.0
        }
    });
    let mut rhs = DVector::from_fn(rows + cols, |i, _| if i < rows { yw[i] } else { 0.0 });
    let qr = aug.qr();
    qr.q_tr_mul(&mut rhs);
    qr.r().solve_upper_triangular(&rhs.rows(0, cols).into_owned())
}

fn weighted_r_squared(x: &DMatrix<f64>, y: &[f64], w: &[f64], c: &[f64]) -> f64 {
    let mass: f64 = w.iter().sum();
    let mean = y.iter().zip(w).map(|(v, wi)| v * wi).sum::<f64>() / mass;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (r, (&yi, &wi)) in y.iter().zip(w).enumerate() {
        let fitted: f64 = x.row(r).iter().zip(c).map(|(a, b)| a * b).sum();
        ss_res += wi * (yi - fitted).powi(2);
        ss_tot += wi * (yi - mean).powi(2);
    }
    if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        0.0
    }
}

/// Linear `p`-lag performance model `J_{i+1} ≈ Σ_k θ_k J_{i+1-k} + θ_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub p: usize,
    /// `p` lag coefficients (most recent lag first) followed by the intercept,
    /// which is zero when the model was fit without one.
    pub theta: Vec<f64>,
    /// Stage-1 coefficients: for each lag (most recent first) one entry per
    /// instrument component, then the intercept if present.
    pub phi: Vec<f64>,
    pub intercept: bool,
    pub diagnostics: FitDiagnostics,
}

impl ArModel {
    /// One-step prediction from lags ordered most recent first.
    pub fn predict_next(&self, lags: &[f64]) -> f64 {
        let linear: f64 = self.theta[..self.p].iter().zip(lags).map(|(t, l)| t * l).sum();
        linear + self.theta[self.p]
    }

    pub fn intercept_term(&self) -> f64 {
        self.theta[self.p]
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(&self.phi).all(|v| v.is_finite())
    }
}

/// A fitted two-stage model with the stage-1 denoised series.
#[derive(Debug, Clone, PartialEq)]
pub struct IvFit {
    pub model: ArModel,
    /// `J̄` for 0-based episodes `p..n` (the first `p` episodes have no lags).
    pub denoised: Vec<f64>,
}

impl IvFit {
    /// The last `p` denoised values, most recent first.
    pub fn seed_lags(&self) -> Vec<f64> {
        self.denoised.iter().rev().take(self.model.p).copied().collect()
    }
}

/// Shrinkage applied to the stage-2 regression of the two-stage fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shrinkage {
    /// Plain weighted least squares.
    None,
    /// Ridge on standardized lags with the penalty chosen by generalized
    /// cross-validation; the intercept is not penalized.
    #[default]
    Gcv,
}

/// Candidate penalties for the cross-validated ridge, relative to a
/// correlation-scaled Gram matrix.
const GCV_GRID: (f64, f64, usize) = (-8.0, 4.0, 61);

fn check_inputs(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<f64> {
    let rows = x.nrows();
    if y.len() != rows || w.len() != rows {
        return Err(Error::DimensionMismatch(format!(
            "design has {rows} rows, targets {}, weights {}",
            y.len(),
            w.len()
        )));
    }
    if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::ZeroWeightMass);
    }
    let mass: f64 = w.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroWeightMass);
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression inputs".into()));
    }
    Ok(mass)
}

/// Weighted ridge regression whose last column of `x` is an unpenalized
/// intercept. The other columns are weighted-centered and scaled to unit
/// weighted variance; the penalty minimizes the generalized cross-validation
/// score `RSS / (1 − df/m)²`, where `m` is the Kish effective sample size of
/// the weights.
pub fn gcv_ridge_least_squares(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<LeastSquaresFit> {
    let (rows, cols) = x.shape();
    if cols < 2 {
        return Err(Error::DimensionMismatch("ridge design needs a lag column and an intercept".into()));
    }
    let mass = check_inputs(x, y, w)?;
    let k = cols - 1;
    let wn: Vec<f64> = w.iter().map(|v| v / mass).collect();
    let ess = 1.0 / wn.iter().map(|v| v * v).sum::<f64>();
    let xm: Vec<f64> = (0..k).map(|j| (0..rows).map(|r| wn[r] * x[(r, j)]).sum()).collect();
    let ym: f64 = (0..rows).map(|r| wn[r] * y[r]).sum();
    let xc = DMatrix::from_fn(rows, k, |r, j| (x[(r, j)] - xm[j]) * wn[r].sqrt());
    let yc = DVector::from_fn(rows, |r, _| (y[r] - ym) * wn[r].sqrt());
    let gram = xc.tr_mul(&xc);
    let scale: Vec<f64> = (0..k).map(|j| if gram[(j, j)] > 0.0 { 1.0 / gram[(j, j)].sqrt() } else { 0.0 }).collect();
    let a = DMatrix::from_fn(k, k, |i, j| gram[(i, j)] * scale[i] * scale[j]);
    let b = xc.tr_mul(&yc);
    let bs = DVector::from_fn(k, |i, _| b[i] * scale[i]);
    let eig = a.symmetric_eigen();
    let lam: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let bt = eig.eigenvectors.tr_mul(&bs);
    let yy = yc.norm_squared();

    let (lo, hi, steps) = GCV_GRID;
    let mut best = (f64::INFINITY, 10f64.powf(hi));
    for s in 0..steps {
        let tau = 10f64.powf(lo + (hi - lo) * s as f64 / (steps - 1) as f64);
        let mut rss = yy;
        let mut df = 1.0;
        for (l, c) in lam.iter().zip(bt.iter()) {
            rss -= c * c * (2.0 / (l + tau) - l / ((l + tau) * (l + tau)));
            df += l / (l + tau);
        }
        if df >= ess {
            continue;
        }
        let score = rss.max(0.0) / (1.0 - df / ess).powi(2);
        if score < best.0 {
            best = (score, tau);
        }
    }
    let ridge = best.1;
    let rotated = DVector::from_iterator(k, lam.iter().zip(bt.iter()).map(|(l, c)| c / (l + ridge)));
    let sol = &eig.eigenvectors * rotated;
    let mut coefficients: Vec<f64> = (0..k).map(|j| sol[j] * scale[j]).collect();
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("ridge solution".into()));
    }
    let intercept = ym - coefficients.iter().zip(&xm).map(|(c, m)| c * m).sum::<f64>();
    coefficients.push(intercept);
    let (lmin, lmax) = lam.iter().fold((f64::INFINITY, 0.0f64), |(a, b), l| (a.min(*l), b.max(*l)));
    let condition_estimate = (lmax + ridge) / (lmin + ridge);
    let r_squared = weighted_r_squared(x, y, w, &coefficients);
    Ok(LeastSquaresFit {
        coefficients,
        ridge,
        condition_estimate,
        degenerate: condition_estimate > DEGENERATE_CONDITION,
        r_squared,
    })
}

/// Two-stage importance-weighted IV regression.
///
/// Stage 1 fits `g` mapping lagged instruments to the stage-1 target with
/// weights `ρ̄`, producing the denoised series `J̄`. Stage 2 fits `f` mapping
/// the lagged `J̄` to the stage-2 target with weights `ρ†`.
pub fn two_stage_iv_fit(problem: &RegressionProblem) -> Result<IvFit> {
    two_stage_iv_fit_with(problem, Shrinkage::None)
}

/// [`two_stage_iv_fit`] with the given stage-2 shrinkage. Shrinkage needs an
/// intercept; without one the plain solve is used.
pub fn two_stage_iv_fit_with(problem: &RegressionProblem, shrinkage: Shrinkage) -> Result<IvFit> {
    let p = problem.p;
    let n = problem.n_episodes();
    let dim = problem.instrument_dim();
    let icol = usize::from(problem.intercept);

    let s1_cols = p * dim + icol;
    let s1 = &problem.stage1;
    let x1 = DMatrix::from_fn(s1.episodes.len(), s1_cols, |r, c| {
        let e = s1.episodes[r];
        if c < p * dim {
            problem.instruments[e - 1 - c / dim][c % dim]
        } else {
            1.0
        }
    });
    let fit1 = weighted_least_squares(&x1, &s1.targets, &s1.weights)?;

    // J̄ for every episode that has p lagged instruments, not only weighted rows.
    let denoised: Vec<f64> =
        (p..n).map(|e| problem.stage1_features(e).iter().zip(&fit1.coefficients).map(|(a, b)| a * b).sum()).collect();
    let jbar = |e: usize| denoised[e - p];

    let s2 = &problem.stage2;
    let x2 = DMatrix::from_fn(s2.episodes.len(), p + icol, |r, c| if c < p { jbar(s2.episodes[r] - c) } else { 1.0 });
    let fit2 = match shrinkage {
        Shrinkage::Gcv if problem.intercept => gcv_ridge_least_squares(&x2, &s2.targets, &s2.weights)?,
        _ => weighted_least_squares(&x2, &s2.targets, &s2.weights)?,
    };

    let mut theta = fit2.coefficients.clone();
    if !problem.intercept {
        theta.push(0.0);
    }
    let model = ArModel {
        p,
        theta,
        phi: fit1.coefficients.clone(),
        intercept: problem.intercept,
        diagnostics: FitDiagnostics { stage1: Some(fit1.diagnostics()), stage2: fit2.diagnostics() },
    };
    if !model.is_finite() {
        return Err(Error::NonFinite("IV coefficients".into()));
    }
    Ok(IvFit { model, denoised })
}

/// Scalar closed-form IV estimate `(Z₁ᵀX₂)⁻¹ (Z₁ᵀ Λ₂ X₃)`.
///
/// `z1` are the instruments, `x2` the regressors, `lambda2` the
/// importance weights on the targets `x3`; all aligned row by row.
pub fn closed_form_iv(z1: &[f64], x2: &[f64], lambda2: &[f64], x3: &[f64]) -> Result<f64> {
    let m = z1.len();
    if x2.len() != m || lambda2.len() != m || x3.len() != m {
        return Err(Error::DimensionMismatch("closed-form IV inputs differ in length".into()));
    }
    let zx: f64 = z1.iter().zip(x2).map(|(z, x)| z * x).sum();
    if zx == 0.0 || !zx.is_finite() {
        return Err(Error::WeakInstrument);
    }
    let zly: f64 = z1.iter().zip(lambda2).zip(x3).map(|((z, l), y)| z * l * y).sum();
    Ok(zly / zx)
}

/// Weighted Fourier regression of the returns on the normalized episode index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierModel {
    pub d: usize,
    /// Number of episodes the basis was normalized over.
    pub n: usize,
    /// `[c_0, s_1, c_1, …, s_d, c_d]` for `{1, sin 2πkx, cos 2πkx}`.
    pub coefficients: Vec<f64>,
    pub diagnostics: StageDiagnostics,
}

/// Fourier features `{1, sin(2πkx), cos(2πkx)}_{k=1..d}` at `x`.
pub fn fourier_features(x: f64, d: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(2 * d + 1);
    row.push(1.0);
    for k in 1..=d {
        let arg = TAU * k as f64 * x;
        row.push(arg.sin());
        row.push(arg.cos());
    }
    row
}

impl FourierModel {
    pub fn evaluate(&self, x: f64) -> f64 {
        fourier_features(x, self.d).iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }
}

/// Fits `G_i` on Fourier features of `x = i/n` (1-based `i`) with weights
/// proportional to `weights` (typically the trajectory ratios).
pub fn prowls_fit(g: &[f64], weights: &[f64], d: usize) -> Result<FourierModel> {
    let n = g.len();
    let basis = 2 * d + 1;
    if basis >= n {
        return Err(Error::BasisTooLarge { basis, samples: n });
    }
    if weights.len() != n {
        return Err(Error::DimensionMismatch("Pro-WLS weights and returns differ in length".into()));
    }
    let mass: f64 = weights.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::IneffectiveSample("all importance ratios are zero".into()));
    }
    let w: Vec<f64> = weights.iter().map(|v| v / mass).collect();
    let x = DMatrix::from_fn(n, basis, |r, c| fourier_features((r + 1) as f64 / n as f64, d)[c]);
    let fit = weighted_least_squares(&x, g, &w)?;
    Ok(FourierModel { d, n, diagnostics: fit.diagnostics(), coefficients: fit.coefficients })
}

/// Evaluates the basis at `x = (n+k)/n` for `k = 1..=horizon`.
pub fn prowls_forecast(model: &FourierModel, n: usize, horizon: usize) -> Vec<f64> {
    (1..=horizon).map(|k| model.evaluate((n + k) as f64 / n as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ones(rows: usize) -> DMatrix<f64> {
        DMatrix::from_element(rows, 1, 1.0)
    }

    #[test]
    fn weighted_mean_examples() {
        let fit = weighted_least_squares(&ones(2), &[2.0, 4.0], &[1.0, 1.0]).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-9);
        let fit = weighted_least_squares(&ones(2), &[2.0, 4.0], &[1.0, 0.0]).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(weighted_least_squares(&ones(2), &[1.0], &[1.0, 1.0]), Err(Error::DimensionMismatch(_))));
        assert!(matches!(weighted_least_squares(&ones(2), &[1.0, 2.0], &[0.0, 0.0]), Err(Error::ZeroWeightMass)));
        assert!(matches!(weighted_least_squares(&ones(2), &[1.0, 2.0], &[-1.0, 2.0]), Err(Error::ZeroWeightMass)));
        assert!(matches!(weighted_least_squares(&ones(2), &[f64::NAN, 2.0], &[1.0, 1.0]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn gradient_vanishes_at_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_fn(50, 3, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..50).map(|_| rng.random_range(-5.0..5.0)).collect();
        let w: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..2.0)).collect();
        let fit = weighted_least_squares(&x, &y, &w).unwrap();
        let c = DVector::from_vec(fit.coefficients.clone());
        let resid = &x * &c - DVector::from_vec(y.clone());
        let grad = x.transpose() * DVector::from_fn(50, |i, _| w[i] * resid[i]);
        let scale = (x.transpose() * DVector::from_fn(50, |i, _| w[i] * y[i])).norm();
        assert!(grad.norm() / scale < 1e-8, "{}", grad.norm());
        assert!(!fit.degenerate);
    }

    #[test]
    fn rank_deficient_is_flagged_and_finite() {
        let x = DMatrix::from_fn(10, 2, |r, _| r as f64);
        let y: Vec<f64> = (0..10).map(|r| 2.0 * r as f64).collect();
        let fit = weighted_least_squares(&x, &y, &[1.0; 10]).unwrap();
        assert!(fit.degenerate, "{fit:?}");
        // minimum-norm split of the slope across the duplicated columns
        let c = &fit.coefficients;
        assert!((c[0] + c[1] - 2.0).abs() < 1e-9, "{fit:?}");
        assert!((c[0] - c[1]).abs() < 1e-4, "{fit:?}");
    }

    #[test]
    fn weight_scaling_is_invisible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(40, 4, |_, _| rng.random_range(-3.0..3.0));
        let y: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..1.0)).collect();
        let base = weighted_least_squares(&x, &y, &w).unwrap();
        for factor in [1e-6, 0.37, 3.0, 1e5] {
            let scaled: Vec<f64> = w.iter().map(|v| v * factor).collect();
            let fit = weighted_least_squares(&x, &y, &scaled).unwrap();
            for (a, b) in base.coefficients.iter().zip(&fit.coefficients) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(closed_form_iv(&[1.0], &[2.0], &[1.0], &[4.0]).unwrap(), 2.0);
        let xs: Vec<f64> = (0..20).map(|i| 10.0 * 0.9f64.powi(i)).collect();
        let theta = closed_form_iv(&xs[..18], &xs[1..19], &[1.0; 18], &xs[2..20]).unwrap();
        assert!((theta - 0.9).abs() < 1e-12);
        assert!(matches!(closed_form_iv(&[0.0], &[1.0], &[1.0], &[1.0]), Err(Error::WeakInstrument)));
    }

    #[test]
    fn prowls_constant_series() {
        let g = vec![4.25; 60];
        for d in [1, 3, 5] {
            let m = prowls_fit(&g, &[1.0; 60], d).unwrap();
            for v in prowls_forecast(&m, 60, 25) {
                assert!((v - 4.25).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn prowls_represents_basis_sinusoid() {
        let n = 80;
        let g: Vec<f64> = (1..=n).map(|i| 2.0 + (TAU * 3.0 * i as f64 / n as f64).sin()).collect();
        let m = prowls_fit(&g, &vec![1.0; n], 5).unwrap();
        for (i, gi) in g.iter().enumerate() {
            assert!((m.evaluate((i + 1) as f64 / n as f64) - gi).abs() < 1e-6);
        }
    }

    #[test]
    fn prowls_basis_must_fit_sample() {
        assert!(matches!(prowls_fit(&[1.0; 11], &[1.0; 11], 5), Err(Error::BasisTooLarge { .. })));
        assert!(prowls_fit(&[1.0; 12], &[1.0; 12], 5).is_ok());
    }

    #[test]
    fn gcv_ridge_keeps_strong_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(400, 3, |_, c| if c < 2 { rng.random_range(-1.0..1.0) } else { 1.0 });
        let y: Vec<f64> =
            (0..400).map(|r| 3.0 * x[(r, 0)] - 2.0 * x[(r, 1)] + 1.0 + 0.01 * rng.random_range(-1.0..1.0)).collect();
        let fit = gcv_ridge_least_squares(&x, &y, &vec![1.0; 400]).unwrap();
        for (c, want) in fit.coefficients.iter().zip([3.0, -2.0, 1.0]) {
            assert!((c - want).abs() < 1e-2, "{c} vs {want}");
        }
    }

    #[test]
    fn gcv_ridge_shrinks_noise_lags_to_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = DMatrix::from_fn(60, 41, |_, c| if c < 40 { rng.random_range(-1.0..1.0) } else { 1.0 });
        let y: Vec<f64> = (0..60).map(|_| 5.0 + rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..60).map(|_| rng.random_range(0.1..1.0)).collect();
        let ridge = gcv_ridge_least_squares(&x, &y, &w).unwrap();
        let plain = weighted_least_squares(&x, &y, &w).unwrap();
        let norm = |c: &[f64]| c[..40].iter().map(|v| v * v).sum::<f64>();
        assert!(norm(&ridge.coefficients) < 0.1 * norm(&plain.coefficients));
        assert!(ridge.ridge > 1.0);
        let wmean = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
        let xbar: Vec<f64> =
            (0..40).map(|j| (0..60).map(|r| w[r] * x[(r, j)]).sum::<f64>() / w.iter().sum::<f64>()).collect();
        let at_mean: f64 =
            xbar.iter().zip(&ridge.coefficients).map(|(a, b)| a * b).sum::<f64>() + ridge.coefficients[40];
        assert!((at_mean - wmean).abs() < 1e-9);
    }

    #[test]
    fn gcv_ridge_needs_an_intercept_column() {
        assert!(gcv_ridge_least_squares(&ones(3), &[1.0, 2.0, 3.0], &[1.0; 3]).is_err());
    }
}
