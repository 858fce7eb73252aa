//! Perron eigenpairs of Metzler matrices and the transverse-eigenvalue
//! surface `Λ(p) = λ_max(B*(p) − D)` over the infection-free set.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SiriError};
use crate::model::NetworkModel;
use crate::scc;

/// Iteration cap for power iteration.
pub const MAX_POWER_ITERATIONS: usize = 100_000;
/// Relative tolerance on successive Rayleigh quotients.
pub const EIG_TOL: f64 = 1e-12;
/// Residual bound relative to `‖K‖∞` required before accepting an eigenpair.
pub const RESIDUAL_TOL: f64 = 1e-11;

/// Leading eigenvalue of a Metzler matrix with its right and left
/// eigenvectors, normalized so that `‖v‖₁ = 1` and `wᵀv = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTriple {
    pub lambda_max: f64,
    pub right: DVector<f64>,
    pub left: DVector<f64>,
}

impl SpectralTriple {
    /// `(‖Kv − λv‖∞, ‖wᵀK − λwᵀ‖∞)`.
    pub fn residuals(&self, k: &DMatrix<f64>) -> (f64, f64) {
        let rv = (k * &self.right - &self.right * self.lambda_max).amax();
        let rw = (k.transpose() * &self.left - &self.left * self.lambda_max).amax();
        (rv, rw)
    }
}

/// Value of `Λ` at a point of the infection-free set together with the
/// eigenpair of `J_T(p) = B*(p) − D`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaValue {
    pub p: DVector<f64>,
    pub lambda: f64,
    pub triple: SpectralTriple,
}

fn check_metzler(k: &DMatrix<f64>) -> Result<()> {
    if k.nrows() != k.ncols() || k.nrows() == 0 {
        return Err(SiriError::Dimension(format!(
            "expected a non-empty square matrix, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    if k.iter().any(|x| !x.is_finite()) {
        return Err(SiriError::NonFinite);
    }
    for j in 0..k.nrows() {
        for c in 0..k.ncols() {
            if j != c && k[(j, c)] < 0.0 {
                return Err(SiriError::NotMetzler {
                    row: j,
                    col: c,
                    value: k[(j, c)],
                });
            }
        }
    }
    Ok(())
}

fn inf_norm(k: &DMatrix<f64>) -> f64 {
    k.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Power iteration on a nonnegative matrix with positive diagonal. Returns
/// the Perron root of `m` and its eigenvector with unit 1-norm.
fn perron_power(m: &DMatrix<f64>, residual_tol: f64) -> Result<(f64, DVector<f64>)> {
    let n = m.nrows();
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut prev = f64::NAN;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_POWER_ITERATIONS {
        let y = m * &x;
        let lambda = x.dot(&y) / x.dot(&x);
        residual = (&y - &x * lambda).amax();
        let settled = (lambda - prev).abs() <= EIG_TOL * (1.0 + lambda.abs());
        if settled && residual <= residual_tol {
            return Ok((lambda, x));
        }
        prev = lambda;
        let s = y.sum();
        x = y / s;
    }
    Err(SiriError::EigenNoConvergence {
        iterations: MAX_POWER_ITERATIONS,
        residual,
    })
}

/// Leading eigenvalue of one irreducible Metzler block by shifted power iteration.
fn irreducible_eig(
    k: &DMatrix<f64>,
    residual_tol: f64,
) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    let n = k.nrows();
    let sigma = 1.0 + (0..n).map(|j| k[(j, j)].abs()).fold(0.0, f64::max);
    let shifted = k + DMatrix::identity(n, n) * sigma;
    let (mu, v) = perron_power(&shifted, residual_tol)?;
    let (_, w) = perron_power(&shifted.transpose(), residual_tol)?;
    Ok((mu - sigma, v, w))
}

/// Inverse iteration for an eigenvector of `k` at a known real eigenvalue
/// that is the spectral abscissa; `(λ + ε)I − K` is then a nonsingular
/// M-matrix with a nonnegative inverse.
fn inverse_iteration(k: &DMatrix<f64>, lambda: f64, residual_tol: f64) -> Result<DVector<f64>> {
    let n = k.nrows();
    let eps = 1e-10 * (1.0 + lambda.abs());
    let shifted = DMatrix::identity(n, n) * (lambda + eps) - k;
    let lu = shifted.lu();
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut residual = f64::INFINITY;
    for _ in 0..200 {
        let y = lu.solve(&x).ok_or(SiriError::EigenNoConvergence {
            iterations: 0,
            residual: f64::INFINITY,
        })?;
        let s: f64 = y.iter().map(|v| v.abs()).sum();
        x = y / s;
        if x.sum() < 0.0 {
            x = -x;
        }
        residual = (k * &x - &x * lambda).amax();
        if residual <= residual_tol {
            return Ok(x);
        }
    }
    Err(SiriError::EigenNoConvergence {
        iterations: 200,
        residual,
    })
}

/// Leading eigenpair of a Metzler matrix.
///
/// With `irreducible` set, `K + σI` (σ = 1 + max |k_jj|) is nonnegative and
/// primitive and power iteration is run on it and its transpose. Otherwise
/// the leading eigenvalue is taken over the irreducible diagonal blocks of
/// the strongly connected decomposition and the eigenvectors are recovered by
/// inverse iteration; positivity of the eigenvectors is not guaranteed there.
pub fn leading_eig(k: &DMatrix<f64>, irreducible: bool) -> Result<SpectralTriple> {
    check_metzler(k)?;
    let n = k.nrows();
    let residual_tol = RESIDUAL_TOL * inf_norm(k).max(f64::MIN_POSITIVE);

    let (lambda, mut v, mut w) = if irreducible {
        irreducible_eig(k, residual_tol)?
    } else {
        let mut lambda = f64::NEG_INFINITY;
        for comp in scc::strongly_connected_components(k) {
            let l = if comp.len() == 1 {
                k[(comp[0], comp[0])]
            } else {
                let block = DMatrix::from_fn(comp.len(), comp.len(), |a, b| k[(comp[a], comp[b])]);
                irreducible_eig(&block, residual_tol)?.0
            };
            lambda = lambda.max(l);
        }
        let v = inverse_iteration(k, lambda, residual_tol)?;
        let w = inverse_iteration(&k.transpose(), lambda, residual_tol)?;
        (lambda, v, w)
    };

    v /= v.iter().map(|x| x.abs()).sum::<f64>();
    let wv = w.dot(&v);
    if wv.abs() > 1e-14 * w.amax().max(f64::MIN_POSITIVE) {
        w /= wv;
    } else {
        w /= w.iter().map(|x| x.abs()).sum::<f64>();
    }
    debug_assert_eq!(v.len(), n);
    Ok(SpectralTriple {
        lambda_max: lambda,
        right: v,
        left: w,
    })
}

/// Spectral radius of a nonnegative matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    for j in 0..m.nrows() {
        for c in 0..m.ncols() {
            if m[(j, c)] < 0.0 {
                return Err(SiriError::NegativeEntry {
                    row: j,
                    col: c,
                    value: m[(j, c)],
                });
            }
        }
    }
    Ok(leading_eig(m, scc::is_irreducible(m))?.lambda_max)
}

pub(crate) fn check_unit_box(p: &DVector<f64>, n: usize) -> Result<()> {
    if p.len() != n {
        return Err(SiriError::Dimension(format!(
            "point has length {}, model has {n} agents",
            p.len()
        )));
    }
    for (index, &value) in p.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(SiriError::OutOfRange { index, value });
        }
    }
    Ok(())
}

/// `B*(p) = (I − P)B̂ + PB`: row `j` interpolates between the reinfection and
/// infection rows with weight `p_j`.
pub fn effective_infection_matrix(model: &NetworkModel, p: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_unit_box(p, model.n())?;
    Ok(effective_unchecked(model, p))
}

pub(crate) fn effective_unchecked(model: &NetworkModel, p: &DVector<f64>) -> DMatrix<f64> {
    let b = model.infection();
    let bh = model.reinfection();
    DMatrix::from_fn(model.n(), model.n(), |j, k| {
        (1.0 - p[j]) * bh[(j, k)] + p[j] * b[(j, k)]
    })
}

/// `J_T(p) = B*(p) − D`.
pub fn transverse_jacobian(model: &NetworkModel, p: &DVector<f64>) -> Result<DMatrix<f64>> {
    let mut k = effective_infection_matrix(model, p)?;
    for j in 0..model.n() {
        k[(j, j)] -= model.recovery()[j];
    }
    Ok(k)
}

/// `Λ(p) = λ_max(B*(p) − D)`.
pub fn lambda_surface(model: &NetworkModel, p: &DVector<f64>) -> Result<LambdaValue> {
    let k = transverse_jacobian(model, p)?;
    let triple = leading_eig(&k, scc::is_irreducible(&k))?;
    Ok(LambdaValue {
        p: p.clone(),
        lambda: triple.lambda_max,
        triple,
    })
}

/// Analytic gradient `∇Λ(p) = diag(w)(B − B̂)v` with `wᵀv = 1`.
pub fn grad_lambda(model: &NetworkModel, p: &DVector<f64>) -> Result<DVector<f64>> {
    let lv = lambda_surface(model, p)?;
    Ok(gradient_from_triple(model, &lv.triple, None))
}

/// `diag(w)(B − B̂)Sv`, where `S` is an optional column scaling.
pub(crate) fn gradient_from_triple(
    model: &NetworkModel,
    triple: &SpectralTriple,
    column_scale: Option<&DVector<f64>>,
) -> DVector<f64> {
    let diff = model.infection() - model.reinfection();
    let v = match column_scale {
        Some(s) => triple.right.component_mul(s),
        None => triple.right.clone(),
    };
    (diff * v).component_mul(&triple.left)
}
