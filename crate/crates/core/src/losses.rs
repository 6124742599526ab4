//! The three training objectives as pure functions returning the loss value
//! and analytic gradients with respect to both projected view batches.
//!
//! Gradients are closed-form Jacobians through cosine normalization,
//! log-sum-exp, column standardization, and batch covariance; they are
//! checked against central finite differences in the test suite.

use thiserror::Error;

use crate::mathcore::{
    column_moments, MathError, RealMatrix, DEFAULT_EPS_STD, DEGENERATE_VAR_EPS, ZERO_NORM_EPS,
};

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("temperature must be > 0, got {0}")]
    BadTemperature(f64),
    #[error("loss coefficient must be >= 0, got {0}")]
    NegativeCoefficient(f64),
    #[error("epsilon must be > 0, got {0}")]
    BadEpsilon(f64),
}

/// Scalar loss plus gradients with respect to both view batches.
#[derive(Debug, Clone)]
pub struct LossResult {
    pub value: f64,
    pub grad_a: RealMatrix,
    pub grad_b: RealMatrix,
}

/// InfoNCE temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimCseConfig {
    pub temperature: f64,
}

impl Default for SimCseConfig {
    fn default() -> Self {
        Self { temperature: 0.05 }
    }
}

/// Off-diagonal weight of the redundancy-reduction objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarlowConfig {
    pub lambda_bt: f64,
}

impl Default for BarlowConfig {
    fn default() -> Self {
        Self { lambda_bt: 5e-3 }
    }
}

/// Invariance / variance / covariance weights plus the stabilizer inside
/// the standard-deviation square root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VicRegConfig {
    pub lambda_i: f64,
    pub lambda_v: f64,
    pub lambda_c: f64,
    pub eps: f64,
}

impl Default for VicRegConfig {
    fn default() -> Self {
        Self {
            lambda_i: 1.0,
            lambda_v: 25.0,
            lambda_c: 0.04,
            eps: 1e-4,
        }
    }
}

/// Hinge H(x) = max(0, 1 - x), with subgradient 0 at the kink.
pub fn hinge(x: f64) -> f64 {
    (1.0 - x).max(0.0)
}

fn hinge_grad(x: f64) -> f64 {
    if x < 1.0 {
        -1.0
    } else {
        0.0
    }
}

fn row_norms(z: &RealMatrix) -> Result<Vec<f64>, LossError> {
    let mut norms = Vec::with_capacity(z.rows());
    for r in 0..z.rows() {
        let n = z.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        if n < ZERO_NORM_EPS {
            return Err(MathError::ZeroNorm.into());
        }
        norms.push(n);
    }
    Ok(norms)
}

/// Temperature-scaled in-batch contrastive loss, summed over the batch.
///
/// L = sum_n -log( exp(sim(zA_n, zB_n)/tau) / sum_m exp(sim(zA_n, zB_m)/tau) )
/// with sim = cosine similarity and the denominator ranging over the B-view
/// rows only. The log-sum-exp is computed with max subtraction.
pub fn simcse_loss(
    za: &RealMatrix,
    zb: &RealMatrix,
    cfg: &SimCseConfig,
) -> Result<LossResult, LossError> {
    za.check_same_shape(zb)?;
    if cfg.temperature <= 0.0 {
        return Err(LossError::BadTemperature(cfg.temperature));
    }
    let n = za.rows();
    let d = za.cols();
    let tau = cfg.temperature;

    let norms_a = row_norms(za)?;
    let norms_b = row_norms(zb)?;

    // unit rows
    let unit = |z: &RealMatrix, norms: &[f64]| {
        let mut u = z.clone();
        for r in 0..n {
            let inv = 1.0 / norms[r];
            for v in u.row_mut(r) {
                *v *= inv;
            }
        }
        u
    };
    let ua = unit(za, &norms_a);
    let ub = unit(zb, &norms_b);

    // similarity matrix s[n][m] = <uA_n, uB_m>
    let mut sims = vec![0.0; n * n];
    for i in 0..n {
        let ra = ua.row(i);
        for j in 0..n {
            let rb = ub.row(j);
            sims[i * n + j] = ra.iter().zip(rb).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    // softmax over each row of sims / tau, and the loss
    let mut value = 0.0;
    let mut probs = vec![0.0; n * n];
    for i in 0..n {
        let row = &sims[i * n..(i + 1) * n];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for (j, &s) in row.iter().enumerate() {
            let e = ((s - max) / tau).exp();
            probs[i * n + j] = e;
            denom += e;
        }
        for j in 0..n {
            probs[i * n + j] /= denom;
        }
        value += -(row[i] - max) / tau + denom.ln();
    }

    // dL/ds_nm = (p_nm - delta_nm)/tau, then through cosine:
    // ds/dzA_n = (uB_m - s_nm uA_n)/|zA_n|, ds/dzB_m = (uA_n - s_nm uB_m)/|zB_m|
    let mut grad_a = RealMatrix::zeros(n, d);
    let mut grad_b = RealMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..n {
            let coeff = (probs[i * n + j] - if i == j { 1.0 } else { 0.0 }) / tau;
            if coeff == 0.0 {
                continue;
            }
            let s = sims[i * n + j];
            {
                let ga = grad_a.row_mut(i);
                let ub_j = ub.row(j);
                let ua_i = ua.row(i);
                let inv = 1.0 / norms_a[i];
                for k in 0..d {
                    ga[k] += coeff * (ub_j[k] - s * ua_i[k]) * inv;
                }
            }
            {
                let gb = grad_b.row_mut(j);
                let ua_i = ua.row(i);
                let ub_j = ub.row(j);
                let inv = 1.0 / norms_b[j];
                for k in 0..d {
                    gb[k] += coeff * (ua_i[k] - s * ub_j[k]) * inv;
                }
            }
        }
    }

    Ok(LossResult {
        value,
        grad_a,
        grad_b,
    })
}

/// Intermediate standardization state reused by the backward pass.
struct Standardized {
    hat: RealMatrix,
    denoms: Vec<f64>,
}

fn standardize_for_loss(z: &RealMatrix) -> Result<Standardized, LossError> {
    if z.rows() < 2 {
        return Err(MathError::BatchTooSmall { rows: z.rows() }.into());
    }
    let (means, vars) = column_moments(z);
    for (c, &v) in vars.iter().enumerate() {
        if v < DEGENERATE_VAR_EPS {
            return Err(MathError::DegenerateColumn { col: c, variance: v }.into());
        }
    }
    let denoms: Vec<f64> = vars.iter().map(|v| (v + DEFAULT_EPS_STD).sqrt()).collect();
    let mut hat = z.clone();
    for r in 0..hat.rows() {
        let row = hat.row_mut(r);
        for (c, v) in row.iter_mut().enumerate() {
            *v = (*v - means[c]) / denoms[c];
        }
    }
    Ok(Standardized { hat, denoms })
}

/// Backward through per-column standardization:
/// dL/dz_mi = (1/d_i) * [g_mi - mean_n(g_ni) - zhat_mi * mean_n(g_ni zhat_ni)].
fn standardize_backward(std: &Standardized, grad_hat: &RealMatrix) -> RealMatrix {
    let n = std.hat.rows();
    let d = std.hat.cols();
    let nf = n as f64;
    let mut g_mean = vec![0.0; d];
    let mut gh_mean = vec![0.0; d];
    for r in 0..n {
        let g = grad_hat.row(r);
        let h = std.hat.row(r);
        for c in 0..d {
            g_mean[c] += g[c];
            gh_mean[c] += g[c] * h[c];
        }
    }
    for c in 0..d {
        g_mean[c] /= nf;
        gh_mean[c] /= nf;
    }
    let mut out = RealMatrix::zeros(n, d);
    for r in 0..n {
        let g = grad_hat.row(r);
        let h = std.hat.row(r);
        let o = out.row_mut(r);
        for c in 0..d {
            o[c] = (g[c] - g_mean[c] - h[c] * gh_mean[c]) / std.denoms[c];
        }
    }
    out
}

/// Redundancy-reduction loss over the cross-correlation matrix:
/// L = sum_i (1 - rho_ii)^2 + lambda_bt * sum_{j != i} rho_ij^2.
///
/// Gradients flow through the column standardization of both views.
pub fn barlow_twins_loss(
    za: &RealMatrix,
    zb: &RealMatrix,
    cfg: &BarlowConfig,
) -> Result<LossResult, LossError> {
    za.check_same_shape(zb)?;
    if cfg.lambda_bt < 0.0 {
        return Err(LossError::NegativeCoefficient(cfg.lambda_bt));
    }
    let n = za.rows();
    let d = za.cols();
    let nf = n as f64;

    let sa = standardize_for_loss(za)?;
    let sb = standardize_for_loss(zb)?;

    // rho_ij = (1/N) sum_n ahat_ni bhat_nj (unclamped; the loss differentiates it)
    let mut rho = vec![0.0; d * d];
    for r in 0..n {
        let a = sa.hat.row(r);
        let b = sb.hat.row(r);
        for (i, &ai) in a.iter().enumerate() {
            let dst = &mut rho[i * d..(i + 1) * d];
            for (x, &bj) in dst.iter_mut().zip(b) {
                *x += ai * bj;
            }
        }
    }
    for v in &mut rho {
        *v /= nf;
    }

    let mut value = 0.0;
    // dL/drho
    let mut g_rho = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let r = rho[i * d + j];
            if i == j {
                value += (1.0 - r) * (1.0 - r);
                g_rho[i * d + j] = -2.0 * (1.0 - r);
            } else {
                value += cfg.lambda_bt * r * r;
                g_rho[i * d + j] = 2.0 * cfg.lambda_bt * r;
            }
        }
    }

    // dL/dahat_ni = (1/N) sum_j G_ij bhat_nj ; dL/dbhat_nj = (1/N) sum_i G_ij ahat_ni
    let mut grad_hat_a = RealMatrix::zeros(n, d);
    let mut grad_hat_b = RealMatrix::zeros(n, d);
    for r in 0..n {
        let a = sa.hat.row(r);
        let b = sb.hat.row(r);
        {
            let ga = grad_hat_a.row_mut(r);
            for i in 0..d {
                let grow = &g_rho[i * d..(i + 1) * d];
                let mut acc = 0.0;
                for (g, &bj) in grow.iter().zip(b) {
                    acc += g * bj;
                }
                ga[i] = acc / nf;
            }
        }
        {
            let gb = grad_hat_b.row_mut(r);
            for j in 0..d {
                let mut acc = 0.0;
                for i in 0..d {
                    acc += g_rho[i * d + j] * a[i];
                }
                gb[j] = acc / nf;
            }
        }
    }

    let grad_a = standardize_backward(&sa, &grad_hat_a);
    let grad_b = standardize_backward(&sb, &grad_hat_b);

    Ok(LossResult {
        value,
        grad_a,
        grad_b,
    })
}

/// Variance-invariance-covariance loss:
/// L = (lambda_i/N) sum_n |zA_n - zB_n|^2
///   + (lambda_v/D) sum_{i, I in {A,B}} H(sqrt(C^I_ii + eps))
///   + (lambda_c/D) sum_{i != j, I in {A,B}} (C^I_ij)^2
/// with C^I the sample covariance of branch I.
pub fn vicreg_loss(
    za: &RealMatrix,
    zb: &RealMatrix,
    cfg: &VicRegConfig,
) -> Result<LossResult, LossError> {
    za.check_same_shape(zb)?;
    if za.rows() < 2 {
        return Err(MathError::BatchTooSmall { rows: za.rows() }.into());
    }
    for coeff in [cfg.lambda_i, cfg.lambda_v, cfg.lambda_c] {
        if coeff < 0.0 {
            return Err(LossError::NegativeCoefficient(coeff));
        }
    }
    if cfg.eps <= 0.0 {
        return Err(LossError::BadEpsilon(cfg.eps));
    }
    let n = za.rows();
    let d = za.cols();
    let nf = n as f64;
    let df = d as f64;

    let mut value = 0.0;
    let mut grad_a = RealMatrix::zeros(n, d);
    let mut grad_b = RealMatrix::zeros(n, d);

    // invariance term
    let mut inv_term = 0.0;
    for r in 0..n {
        let a = za.row(r);
        let b = zb.row(r);
        for c in 0..d {
            let diff = a[c] - b[c];
            inv_term += diff * diff;
            grad_a.row_mut(r)[c] += 2.0 * cfg.lambda_i / nf * diff;
            grad_b.row_mut(r)[c] -= 2.0 * cfg.lambda_i / nf * diff;
        }
    }
    value += cfg.lambda_i / nf * inv_term;

    // variance + covariance terms for one branch; grads accumulate in place
    let branch = |z: &RealMatrix, grad: &mut RealMatrix| {
        let means = z.column_means();
        let denom = (n - 1) as f64;
        // covariance matrix, symmetric construction
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let mut acc = 0.0;
                for r in 0..n {
                    let row = z.row(r);
                    acc += (row[i] - means[i]) * (row[j] - means[j]);
                }
                let v = acc / denom;
                cov[i * d + j] = v;
                cov[j * d + i] = v;
            }
        }
        let mut term = 0.0;
        // variance hinge: (lambda_v/D) sum_i H(sqrt(C_ii + eps))
        for i in 0..d {
            let s = (cov[i * d + i] + cfg.eps).sqrt();
            term += cfg.lambda_v / df * hinge(s);
            let dh = hinge_grad(s);
            if dh != 0.0 {
                // d sqrt(C_ii+eps)/dC_ii = 1/(2s); dC_ii/dz_ri = 2(z_ri - mean_i)/(N-1)
                let coeff = cfg.lambda_v / df * dh / (2.0 * s) * 2.0 / denom;
                for r in 0..n {
                    let zri = z.get(r, i);
                    grad.row_mut(r)[i] += coeff * (zri - means[i]);
                }
            }
        }
        // covariance off-diagonals: (lambda_c/D) sum_{i != j} C_ij^2
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    term += cfg.lambda_c / df * cov[i * d + j] * cov[i * d + j];
                }
            }
        }
        // dL_C/dz_rk = (lambda_c/D) * (4/(N-1)) sum_{j != k} C_kj (z_rj - mean_j)
        for r in 0..n {
            let row = z.row(r);
            let mut updates = vec![0.0; d];
            for (k, u) in updates.iter_mut().enumerate() {
                let mut acc = 0.0;
                for j in 0..d {
                    if j != k {
                        acc += cov[k * d + j] * (row[j] - means[j]);
                    }
                }
                *u = cfg.lambda_c / df * 4.0 / denom * acc;
            }
            let g = grad.row_mut(r);
            for (gk, u) in g.iter_mut().zip(&updates) {
                *gk += u;
            }
        }
        term
    };

    value += branch(za, &mut grad_a);
    value += branch(zb, &mut grad_b);

    Ok(LossResult {
        value,
        grad_a,
        grad_b,
    })
}
