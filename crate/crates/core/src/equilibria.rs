//! Endemic equilibrium, its local stability, and the partition of the
//! infection-free set by the sign of `Λ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SiriError};
use crate::model::{classify_case, ImmunityCase, NetworkModel};
use crate::reproduction::{basic_numbers, extreme_numbers};
use crate::scc;
use crate::spectral;

pub const EE_TOL: f64 = 1e-12;
pub const EE_MAX_ITERATIONS: usize = 1_000_000;
/// Half-width of the band around 0 inside which an IFE point is a center.
pub const CENTER_BAND: f64 = 1e-9;
pub const M0_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndemicEquilibrium {
    pub p_i_star: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl EndemicEquilibrium {
    pub fn vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.p_i_star)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IfeLabel {
    Stable,
    Unstable,
    Center,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfeClassification {
    pub p_s: Vec<f64>,
    pub lambda: f64,
    pub label: IfeLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M0Sample {
    pub points: Vec<Vec<f64>>,
    pub lambdas: Vec<f64>,
    /// Corner the rays start from.
    pub anchor: Vec<f64>,
    /// Ray endpoints, one per ray cast (including rays without a crossing).
    pub endpoints: Vec<Vec<f64>>,
    pub tolerance: f64,
}

fn ee_map(bh: &DMatrix<f64>, delta: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
    let s = bh * p;
    DVector::from_fn(p.len(), |j, _| s[j] / (delta[j] + s[j]))
}

/// `‖F(p) − p‖∞` for the fixed-point map `F(p)_j = (B̂p)_j / (δ_j + (B̂p)_j)`.
pub fn ee_residual(model: &NetworkModel, p: &DVector<f64>) -> f64 {
    (ee_map(model.reinfection(), model.recovery(), p) - p).amax()
}

/// Unique endemic equilibrium, or `None` when `R₁ ≤ 1`. Iterates the
/// fixed-point map from `p = 1`; the iterates decrease monotonically.
pub fn solve_ee(model: &NetworkModel) -> Result<Option<EndemicEquilibrium>> {
    let (_, r1) = basic_numbers(model)?;
    if r1 <= 1.0 {
        return Ok(None);
    }
    let bh = model.reinfection();
    let delta = model.recovery();
    let mut p = DVector::from_element(model.n(), 1.0);
    let mut residual = f64::INFINITY;
    for it in 0..EE_MAX_ITERATIONS {
        let next = ee_map(bh, delta, &p);
        residual = (&next - &p).amax();
        if residual <= EE_TOL {
            return Ok(Some(EndemicEquilibrium {
                p_i_star: p.iter().copied().collect(),
                residual,
                iterations: it,
            }));
        }
        p = next;
    }
    Err(SiriError::EndemicNoConvergence {
        iterations: EE_MAX_ITERATIONS,
        residual,
    })
}

/// Linearization at the endemic equilibrium restricted to the infected
/// coordinates: `J_a = B̂ − D − P^{I*}B̂ − diag(B̂p^{I*})`.
pub fn ee_jacobian(model: &NetworkModel, p: &DVector<f64>) -> DMatrix<f64> {
    let bh = model.reinfection();
    let s = bh * p;
    let n = model.n();
    DMatrix::from_fn(n, n, |j, k| {
        let mut x = (1.0 - p[j]) * bh[(j, k)];
        if j == k {
            x -= model.recovery()[j] + s[j];
        }
        x
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EeStability {
    pub ja_lambda: f64,
    pub is_stable: bool,
    /// `‖J_a p* + diag(B̂p*) p*‖∞`.
    pub identity_defect: f64,
}

/// Leading eigenvalue of `J_a` at the equilibrium and the stability verdict.
pub fn ee_stability(model: &NetworkModel, ee: &EndemicEquilibrium) -> Result<EeStability> {
    let p = ee.vector();
    if p.len() != model.n() {
        return Err(SiriError::Dimension(format!(
            "equilibrium has {} components, model has {} agents",
            p.len(),
            model.n()
        )));
    }
    let residual = ee_residual(model, &p);
    if residual > 10.0 * EE_TOL {
        return Err(SiriError::EndemicResidual(residual));
    }
    let ja = ee_jacobian(model, &p);
    let s = model.reinfection() * &p;
    let identity_defect = (&ja * &p + s.component_mul(&p)).amax();
    if identity_defect > 1e-9 {
        return Err(SiriError::EndemicResidual(identity_defect));
    }
    let triple = spectral::leading_eig(&ja, scc::is_irreducible(&ja))?;
    Ok(EeStability {
        ja_lambda: triple.lambda_max,
        is_stable: triple.lambda_max < 0.0,
        identity_defect,
    })
}

fn label_for(lambda: f64) -> IfeLabel {
    if lambda < -CENTER_BAND {
        IfeLabel::Stable
    } else if lambda > CENTER_BAND {
        IfeLabel::Unstable
    } else {
        IfeLabel::Center
    }
}

/// Classifies the infection-free point with susceptible profile `p_s`.
pub fn classify_ife_point(model: &NetworkModel, p_s: &DVector<f64>) -> Result<IfeClassification> {
    let lambda = spectral::lambda_surface(model, p_s)?.lambda;
    Ok(IfeClassification {
        p_s: p_s.iter().copied().collect(),
        lambda,
        label: label_for(lambda),
    })
}

/// Kronecker lattice point `i` in `[0,1)^dim`, built from square roots of primes.
fn lattice_point(i: usize, dim: usize) -> Vec<f64> {
    const PRIMES: [f64; 24] = [
        2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0,
        59.0, 61.0, 67.0, 71.0, 73.0, 79.0, 83.0, 89.0,
    ];
    (0..dim)
        .map(|d| {
            let alpha = PRIMES[d % PRIMES.len()].sqrt().fract() + (d / PRIMES.len()) as f64 * 0.1;
            ((i as f64 + 0.5) * alpha).fract()
        })
        .collect()
}

/// Ray endpoints on the facets of the unit box opposite `anchor`. The first
/// endpoint is the opposite corner.
fn ray_endpoints(anchor: &DVector<f64>, m: usize) -> Vec<DVector<f64>> {
    let n = anchor.len();
    let opposite = anchor.map(|x| 1.0 - x);
    let mut out = Vec::with_capacity(m);
    if m == 0 {
        return out;
    }
    out.push(opposite.clone());
    for i in 1..m {
        let u = lattice_point(i, n);
        let facet = (i - 1) % n;
        let mut e = DVector::from_column_slice(&u);
        e[facet] = opposite[facet];
        out.push(e);
    }
    out
}

fn lambda_at(
    model: &NetworkModel,
    a: &DVector<f64>,
    b: &DVector<f64>,
    r: f64,
) -> Result<(DVector<f64>, f64)> {
    let p = (a * (1.0 - r) + b * r).map(|x| x.clamp(0.0, 1.0));
    let l = spectral::lambda_surface(model, &p)?.lambda;
    Ok((p, l))
}

/// Bisects `Λ` along the segment `a → b` for a point with `|Λ| ≤ M0_TOL`.
fn bisect_ray(
    model: &NetworkModel,
    a: &DVector<f64>,
    b: &DVector<f64>,
) -> Result<Option<(DVector<f64>, f64)>> {
    let (pa, la) = lambda_at(model, a, b, 0.0)?;
    if la.abs() <= M0_TOL {
        return Ok(Some((pa, la)));
    }
    let (pb, lb) = lambda_at(model, a, b, 1.0)?;
    if lb.abs() <= M0_TOL {
        return Ok(Some((pb, lb)));
    }
    if la.signum() == lb.signum() {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (p, l) = lambda_at(model, a, b, mid)?;
        if l.abs() <= M0_TOL {
            return Ok(Some((p, l)));
        }
        if l.signum() == la.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Ok(None)
}

/// Samples the center set `M₀` by casting `rays` rays from the minimizing
/// corner `p_min` towards the opposite facets and bisecting the sign change
/// of `Λ` on each. Rays with one-signed `Λ` contribute no point.
pub fn sample_m0(model: &NetworkModel, rays: usize) -> Result<M0Sample> {
    let case = classify_case(model)?;
    if case == ImmunityCase::MixedStrong {
        return Err(SiriError::UnsupportedCase(
            "strong mixed immunity has no certified minimizing corner; sample M0 by contouring Λ on a grid instead".into(),
        ));
    }
    let rs = extreme_numbers(model)?;
    let anchor = rs.p_min_vector();
    let endpoints = ray_endpoints(&anchor, rays);
    let mut points = Vec::new();
    let mut lambdas = Vec::new();
    for e in &endpoints {
        if let Some((p, l)) = bisect_ray(model, &anchor, e)? {
            points.push(p.iter().copied().collect());
            lambdas.push(l);
        }
    }
    Ok(M0Sample {
        points,
        lambdas,
        anchor: anchor.iter().copied().collect(),
        endpoints: endpoints
            .iter()
            .map(|e| e.iter().copied().collect())
            .collect(),
        tolerance: M0_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;

    #[test]
    fn two_agent_equilibrium_closed_form() {
        let ee = solve_ee(&two_agent_mixed()).unwrap().unwrap();
        assert!((ee.p_i_star[0] - 1.0 / 46.0).abs() < 1e-10);
        assert!((ee.p_i_star[1] - 2.0 / 117.0).abs() < 1e-10);
        assert!(ee.residual <= EE_TOL);
    }

    #[test]
    fn symmetric_sis_equilibrium() {
        let m = uniform(complete(2), 2.0, 2.0, 1.0);
        let ee = solve_ee(&m).unwrap().unwrap();
        assert!((ee.p_i_star[0] - 0.5).abs() < 1e-11 && (ee.p_i_star[1] - 0.5).abs() < 1e-11);
        let ja = ee_jacobian(&m, &ee.vector());
        let expected = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]);
        assert!((ja - expected).amax() < 1e-10);
        let st = ee_stability(&m, &ee).unwrap();
        assert!((st.ja_lambda + 1.0).abs() < 1e-9);
        assert!(st.is_stable);
    }

    #[test]
    fn no_equilibrium_below_threshold() {
        let m = uniform(bidirectional_ring(4), 0.6, 0.4, 1.0);
        assert!(solve_ee(&m).unwrap().is_none());
    }

    #[test]
    fn two_agent_equilibrium_is_stable() {
        let m = two_agent_mixed();
        let ee = solve_ee(&m).unwrap().unwrap();
        assert!(ee_stability(&m, &ee).unwrap().ja_lambda < 0.0);
    }

    #[test]
    fn perturbed_equilibrium_rejected() {
        let m = two_agent_mixed();
        let mut ee = solve_ee(&m).unwrap().unwrap();
        ee.p_i_star[0] += 1e-3;
        assert!(matches!(
            ee_stability(&m, &ee),
            Err(SiriError::EndemicResidual(_))
        ));
    }

    #[test]
    fn ife_labels() {
        let m = two_agent_mixed();
        let c = |a: f64, b: f64| classify_ife_point(&m, &DVector::from_vec(vec![a, b])).unwrap();
        assert_eq!(c(1.0, 0.0).label, IfeLabel::Stable);
        assert_eq!(c(0.0, 1.0).label, IfeLabel::Unstable);
        let centre = c(0.6, 0.4);
        assert_eq!(centre.label, IfeLabel::Center);
        assert!(centre.lambda.abs() < 1e-12);
    }

    #[test]
    fn m0_first_ray_hits_closed_form_point() {
        let s = sample_m0(&two_agent_mixed(), 16).unwrap();
        assert_eq!(s.anchor, vec![1.0, 0.0]);
        assert_eq!(s.endpoints[0], vec![0.0, 1.0]);
        assert!((s.points[0][0] - 0.6).abs() < 1e-7 && (s.points[0][1] - 0.4).abs() < 1e-7);
        assert!(s.lambdas.iter().all(|l| l.abs() <= M0_TOL));
    }

    #[test]
    fn m0_empty_when_infection_free() {
        let m = uniform(bidirectional_ring(4), 0.3, 0.2, 1.0);
        assert!(sample_m0(&m, 8).unwrap().points.is_empty());
    }

    #[test]
    fn m0_rejects_strong_mixed() {
        let base = uniform(complete(3), 1.0, 1.0, 2.0);
        let mut rates = base.rates().clone();
        rates.reinfection[(0, 1)] = 0.5;
        rates.reinfection[(0, 2)] = 1.5;
        let m = NetworkModel::new(base.graph().clone(), rates).unwrap();
        assert!(matches!(
            sample_m0(&m, 4),
            Err(SiriError::UnsupportedCase(_))
        ));
    }

    #[test]
    fn endpoints_lie_on_opposite_facets() {
        let anchor = DVector::from_vec(vec![1.0, 0.0, 1.0]);
        for e in ray_endpoints(&anchor, 20) {
            assert!((0..3).any(|j| e[j] == 1.0 - anchor[j]));
            assert!(e.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}
