//! Basic and extreme reproduction numbers and the behavioral regime they imply.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{classify_case, stubborn_agents, ImmunityCase, NetworkModel, RowOrder};
use crate::scc;
use crate::spectral::{self, check_unit_box, SpectralTriple};

/// Width of the band around 1 inside which a regime comparison is reported
/// as marginal.
pub const MARGINAL_BAND: f64 = 1e-9;

/// Corner starts are exhaustive up to this many agents.
const EXHAUSTIVE_CORNER_LIMIT: usize = 12;
const RANDOM_CORNER_STARTS: usize = 64;
const CORNER_SEED: u64 = 0x5151_2020;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproductionSet {
    pub r0: f64,
    pub r1: f64,
    pub rmin: f64,
    pub rmax: f64,
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
    pub rbar_min: f64,
    pub rbar_max: f64,
    /// Certified corner extremizers (false for the strong mixed case, where
    /// the extremes come from a multi-start local search).
    pub exact: bool,
}

impl ReproductionSet {
    pub fn p_min_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.p_min)
    }

    pub fn p_max_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.p_max)
    }

    pub fn quadruple(&self) -> [f64; 4] {
        [self.r0, self.r1, self.rmin, self.rmax]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    InfectionFree,
    Endemic,
    Epidemic,
    Bistable,
    Marginal,
}

/// Next-generation matrix `B*(p) D⁻¹`.
pub fn next_generation_matrix(model: &NetworkModel, p: &DVector<f64>) -> Result<DMatrix<f64>> {
    let mut k = spectral::effective_infection_matrix(model, p)?;
    scale_columns_by_inverse_recovery(model, &mut k);
    Ok(k)
}

fn scale_columns_by_inverse_recovery(model: &NetworkModel, k: &mut DMatrix<f64>) {
    for (c, &d) in model.recovery().iter().enumerate() {
        k.column_mut(c).scale_mut(1.0 / d);
    }
}

fn radius_of(model: &NetworkModel, b: &DMatrix<f64>) -> Result<f64> {
    let mut k = b.clone();
    scale_columns_by_inverse_recovery(model, &mut k);
    spectral::spectral_radius(&k)
}

/// `R(p) = ρ(B*(p) D⁻¹)`.
pub fn reproduction_number_at(model: &NetworkModel, p: &DVector<f64>) -> Result<f64> {
    model.ensure_valid()?;
    check_unit_box(p, model.n())?;
    spectral::spectral_radius(&next_generation_matrix(model, p)?)
}

/// `(R₀, R₁) = (ρ(BD⁻¹), ρ(B̂D⁻¹))`.
pub fn basic_numbers(model: &NetworkModel) -> Result<(f64, f64)> {
    model.ensure_valid()?;
    let r0 = radius_of(model, model.infection())?;
    let r1 = if model.reinfection_is_zero() {
        0.0
    } else {
        radius_of(model, model.reinfection())?
    };
    Ok((r0, r1))
}

/// Corner extremizers for every case except strong mixed immunity. Stubborn
/// coordinates are set to 0.
fn corner_extremizers(model: &NetworkModel) -> (DVector<f64>, DVector<f64>) {
    let n = model.n();
    let mut p_max = DVector::zeros(n);
    let mut p_min = DVector::zeros(n);
    for j in 0..n {
        match model.row_order(j) {
            RowOrder::InfectionDominant => p_max[j] = 1.0,
            RowOrder::ReinfectionDominant => p_min[j] = 1.0,
            RowOrder::Equal | RowOrder::Mixed => {}
        }
    }
    (p_min, p_max)
}

/// `R(p)` and its gradient `∂R/∂p_j = w_j ((B − B̂) D⁻¹ v)_j`.
fn value_and_gradient(model: &NetworkModel, p: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let k = next_generation_matrix(model, p)?;
    let triple: SpectralTriple = spectral::leading_eig(&k, scc::is_irreducible(&k))?;
    let inv_d = model.recovery().map(|d| 1.0 / d);
    let g = spectral::gradient_from_triple(model, &triple, Some(&inv_d));
    Ok((triple.lambda_max, g))
}

#[derive(Clone, Copy)]
enum Sense {
    Max,
    Min,
}

/// Projected gradient ascent (or descent) of `R(p)` over the unit box with
/// step `0.1/‖∇‖∞` and backtracking halving.
fn projected_search(
    model: &NetworkModel,
    start: DVector<f64>,
    sense: Sense,
) -> Result<(f64, DVector<f64>)> {
    let sign = match sense {
        Sense::Max => 1.0,
        Sense::Min => -1.0,
    };
    let mut p = start;
    let (mut f, mut g) = value_and_gradient(model, &p)?;
    for _ in 0..10_000 {
        let dir = &g * sign;
        let projected = (&p + &dir).map(|x| x.clamp(0.0, 1.0)) - &p;
        if projected.amax() <= 1e-10 {
            break;
        }
        let mut step = 0.1 / dir.amax();
        let mut accepted = None;
        for _ in 0..60 {
            let q = (&p + &dir * step).map(|x| x.clamp(0.0, 1.0));
            let (fq, gq) = value_and_gradient(model, &q)?;
            if sign * (fq - f) > 0.0 {
                accepted = Some((q, fq, gq));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((q, fq, gq)) => {
                p = q;
                f = fq;
                g = gq;
            }
            None => break,
        }
    }
    Ok((f, p))
}

fn corner_starts(n: usize) -> Vec<DVector<f64>> {
    if n <= EXHAUSTIVE_CORNER_LIMIT {
        (0..1usize << n)
            .map(|mask| DVector::from_fn(n, |j, _| ((mask >> j) & 1) as f64))
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(CORNER_SEED);
        (0..RANDOM_CORNER_STARTS)
            .map(|_| DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { 0.0 }))
            .collect()
    }
}

/// A reproduction number and the point attaining it.
type Extremum = (f64, DVector<f64>);

fn heuristic_extremes(model: &NetworkModel) -> Result<(Extremum, Extremum)> {
    let starts = corner_starts(model.n());
    let mut best_max: Option<(f64, DVector<f64>)> = None;
    let mut best_min: Option<(f64, DVector<f64>)> = None;
    for s in starts {
        let hi = projected_search(model, s.clone(), Sense::Max)?;
        if best_max.as_ref().is_none_or(|b| hi.0 > b.0) {
            best_max = Some(hi);
        }
        let lo = projected_search(model, s, Sense::Min)?;
        if best_min.as_ref().is_none_or(|b| lo.0 < b.0) {
            best_min = Some(lo);
        }
    }
    Ok((
        best_min.expect("at least one start"),
        best_max.expect("at least one start"),
    ))
}

/// `R₀, R₁, R_min, R_max` with extremizing points and the outer bounds
/// `ρ(B̄_min D⁻¹)`, `ρ(B̄_max D⁻¹)`.
pub fn extreme_numbers(model: &NetworkModel) -> Result<ReproductionSet> {
    let (r0, r1) = basic_numbers(model)?;
    let case = classify_case(model)?;
    let bounds = model.bounds();
    let rbar_max = radius_of(model, &bounds.max)?;
    let rbar_min = radius_of(model, &bounds.min)?;

    let (rmin, p_min, rmax, p_max, exact) = if case == ImmunityCase::MixedStrong {
        let ((rmin, p_min), (rmax, p_max)) = heuristic_extremes(model)?;
        (rmin, p_min, rmax, p_max, false)
    } else {
        let (p_min, p_max) = corner_extremizers(model);
        let rmin = spectral::spectral_radius(&next_generation_matrix(model, &p_min)?)?;
        let rmax = spectral::spectral_radius(&next_generation_matrix(model, &p_max)?)?;
        (rmin, p_min, rmax, p_max, true)
    };
    debug_assert!(stubborn_agents(model)
        .iter()
        .all(|&j| !exact || p_max[j] == 0.0));

    Ok(ReproductionSet {
        r0,
        r1,
        rmin,
        rmax,
        p_min: p_min.iter().copied().collect(),
        p_max: p_max.iter().copied().collect(),
        rbar_min,
        rbar_max,
        exact,
    })
}

/// Behavioral regime from the reproduction numbers. Any deciding comparison
/// within [`MARGINAL_BAND`] of 1 yields [`Regime::Marginal`].
pub fn classify_regime(rs: &ReproductionSet) -> Regime {
    let near_one = |x: f64| (x - 1.0).abs() <= MARGINAL_BAND;
    if near_one(rs.rmax) {
        return Regime::Marginal;
    }
    if rs.rmax < 1.0 {
        return Regime::InfectionFree;
    }
    if near_one(rs.rmin) {
        return Regime::Marginal;
    }
    if rs.rmin > 1.0 {
        return Regime::Endemic;
    }
    if near_one(rs.r1) {
        return Regime::Marginal;
    }
    if rs.r1 < 1.0 {
        Regime::Epidemic
    } else {
        Regime::Bistable
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;

    fn set(r0: f64, r1: f64, rmin: f64, rmax: f64) -> ReproductionSet {
        ReproductionSet {
            r0,
            r1,
            rmin,
            rmax,
            p_min: vec![],
            p_max: vec![],
            rbar_min: rmin,
            rbar_max: rmax,
            exact: true,
        }
    }

    #[test]
    fn two_agent_numbers() {
        let rs = extreme_numbers(&two_agent_mixed()).unwrap();
        let s = 1.04f64.sqrt();
        assert!((rs.r0 - s).abs() < 1e-10 && (rs.r1 - s).abs() < 1e-10);
        assert!((rs.rmin - 0.8).abs() < 1e-10);
        assert!((rs.rmax - 1.3).abs() < 1e-10);
        assert_eq!(rs.p_min, vec![1.0, 0.0]);
        assert_eq!(rs.p_max, vec![0.0, 1.0]);
        assert!(rs.exact);
        assert_eq!(classify_regime(&rs), Regime::Bistable);
    }

    #[test]
    fn four_agent_mixed_numbers() {
        let rs = extreme_numbers(&four_agent_mixed()).unwrap();
        let published = [1.32, 1.22, 1.13, 1.52];
        for (x, y) in rs.quadruple().iter().zip(published) {
            assert!((x - y).abs() <= 0.01, "{x} vs {y}");
        }
        assert_eq!(classify_regime(&rs), Regime::Endemic);
    }

    #[test]
    fn sir_has_zero_reinfection_number() {
        let rs = extreme_numbers(&uniform(bidirectional_ring(4), 0.4, 0.0, 1.0)).unwrap();
        assert_eq!(rs.r1, 0.0);
        assert!((rs.r0 - 0.8).abs() < 1e-12);
        assert_eq!(rs.rmin, 0.0);
    }

    #[test]
    fn sis_numbers_coincide() {
        let rs = extreme_numbers(&uniform(complete(4), 0.4, 0.4, 1.0)).unwrap();
        for x in [rs.r1, rs.rmin, rs.rmax] {
            assert!((x - rs.r0).abs() < 1e-12);
        }
    }

    #[test]
    fn published_regime_examples() {
        assert_eq!(
            classify_regime(&set(0.80, 0.72, 0.65, 0.94)),
            Regime::InfectionFree
        );
        assert_eq!(
            classify_regime(&set(1.32, 0.96, 0.82, 1.52)),
            Regime::Epidemic
        );
        assert_eq!(
            classify_regime(&set(1.06, 1.26, 0.76, 1.59)),
            Regime::Bistable
        );
        assert_eq!(
            classify_regime(&set(1.32, 1.22, 1.13, 1.52)),
            Regime::Endemic
        );
    }

    #[test]
    fn marginal_band() {
        assert_eq!(classify_regime(&set(1.0, 1.0, 1.0, 1.0)), Regime::Marginal);
        assert_eq!(
            classify_regime(&set(1.3, 0.9, 1.0 + 1e-10, 1.5)),
            Regime::Marginal
        );
        assert_eq!(classify_regime(&set(1.3, 1.0, 0.5, 1.5)), Regime::Marginal);
        assert_eq!(
            classify_regime(&set(1.3, 0.9, 1.0 + 1e-8, 1.5)),
            Regime::Endemic
        );
    }

    #[test]
    fn strong_mixed_uses_search() {
        let mut m = uniform(complete(3), 1.0, 1.0, 2.0);
        let mut rates = m.rates().clone();
        rates.reinfection[(0, 1)] = 0.5;
        rates.reinfection[(0, 2)] = 1.5;
        m = NetworkModel::new(m.graph().clone(), rates).unwrap();
        let rs = extreme_numbers(&m).unwrap();
        assert!(!rs.exact);
        assert!(rs.rbar_min <= rs.rmin + 1e-12 && rs.rmax <= rs.rbar_max + 1e-12);
        assert!(rs.rmin <= rs.r0.min(rs.r1) + 1e-12);
        assert!(rs.rmax >= rs.r0.max(rs.r1) - 1e-12);
    }
}
