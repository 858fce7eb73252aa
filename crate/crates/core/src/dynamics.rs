//! Mean-field dynamics on the product of 2-simplices: fixed-step RK4
//! integration, steady-state outcomes, resurgence, transversal crossings and
//! the critical uniform initial condition on d-regular networks.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::equilibria::{solve_ee, EndemicEquilibrium};
use crate::error::{Result, SiriError};
use crate::model::{dregular_check, NetworkModel};
use crate::reproduction::{classify_regime, extreme_numbers, Regime};
use crate::scc;
use crate::spectral::{self, effective_unchecked};

/// Distance outside the simplex that is silently clamped.
pub const CLAMP_TOL: f64 = 1e-12;
/// Distance outside the simplex reported as an integration failure.
pub const SIMPLEX_TOL: f64 = 1e-9;
pub const IFE_INFECTED_TOL: f64 = 1e-7;
pub const STATIONARY_TOL: f64 = 1e-9;
pub const EE_DISTANCE_TOL: f64 = 1e-6;
pub const CROSSING_TIME_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub p_s: DVector<f64>,
    pub p_i: DVector<f64>,
}

impl StateVector {
    pub fn new(p_s: DVector<f64>, p_i: DVector<f64>) -> Result<Self> {
        let s = StateVector { p_s, p_i };
        s.check(SIMPLEX_TOL)?;
        Ok(s)
    }

    /// `p^S = 1 − p^I`.
    pub fn from_infected(p_i: DVector<f64>) -> Result<Self> {
        let p_s = p_i.map(|x| 1.0 - x);
        Self::new(p_s, p_i)
    }

    pub fn n(&self) -> usize {
        self.p_s.len()
    }

    pub fn p_r(&self) -> DVector<f64> {
        DVector::from_fn(self.n(), |j, _| 1.0 - self.p_s[j] - self.p_i[j])
    }

    fn worst_violation(&self) -> Option<(usize, &'static str, f64)> {
        let mut worst: Option<(usize, &'static str, f64)> = None;
        for j in 0..self.n() {
            for (name, x) in [
                ("p_s", self.p_s[j]),
                ("p_i", self.p_i[j]),
                ("p_r", 1.0 - self.p_s[j] - self.p_i[j]),
            ] {
                if !x.is_finite() {
                    return Some((j, name, f64::NAN));
                }
                if x < 0.0 && worst.is_none_or(|w| x < w.2) {
                    worst = Some((j, name, x));
                }
            }
        }
        worst
    }

    fn check(&self, tol: f64) -> Result<()> {
        if self.p_i.len() != self.p_s.len() {
            return Err(SiriError::Dimension(format!(
                "p_s has {} components, p_i has {}",
                self.p_s.len(),
                self.p_i.len()
            )));
        }
        match self.worst_violation() {
            Some((j, name, x)) if x.is_nan() || x < -tol => Err(SiriError::InvalidState(format!(
                "{name} of agent {} is {x}, not on simplex",
                j + 1
            ))),
            _ => Ok(()),
        }
    }

    fn clamp(&mut self) {
        for j in 0..self.n() {
            if self.p_s[j] < 0.0 && self.p_s[j] >= -CLAMP_TOL {
                self.p_s[j] = 0.0;
            }
            if self.p_i[j] < 0.0 && self.p_i[j] >= -CLAMP_TOL {
                self.p_i[j] = 0.0;
            }
            let excess = self.p_s[j] + self.p_i[j] - 1.0;
            if excess > 0.0 && excess <= CLAMP_TOL {
                if self.p_i[j] >= excess {
                    self.p_i[j] -= excess;
                } else {
                    self.p_s[j] -= excess;
                }
            }
        }
    }

    fn stack(&self) -> DVector<f64> {
        let n = self.n();
        DVector::from_fn(
            2 * n,
            |r, _| if r < n { self.p_s[r] } else { self.p_i[r - n] },
        )
    }

    fn unstack(y: &DVector<f64>) -> Self {
        let n = y.len() / 2;
        StateVector {
            p_s: y.rows(0, n).into_owned(),
            p_i: y.rows(n, n).into_owned(),
        }
    }
}

/// Mean-field vector field:
/// `ṗ^S = −P^S B p^I`, `ṗ^I = (B*(p^S) − D)p^I − P^I B̂ p^I`.
pub fn rhs(model: &NetworkModel, state: &StateVector) -> StateVector {
    let b_pi = model.infection() * &state.p_i;
    let bh_pi = model.reinfection() * &state.p_i;
    let n = model.n();
    let delta = model.recovery();
    let ps = &state.p_s;
    let pi = &state.p_i;
    StateVector {
        p_s: DVector::from_fn(n, |j, _| -ps[j] * b_pi[j]),
        p_i: DVector::from_fn(n, |j, _| {
            ps[j] * b_pi[j] + (1.0 - ps[j]) * bh_pi[j] - delta[j] * pi[j] - pi[j] * bh_pi[j]
        }),
    }
}

fn stacked_rhs(model: &NetworkModel, y: &DVector<f64>) -> DVector<f64> {
    rhs(model, &StateVector::unstack(y)).stack()
}

/// One classical fourth-order Runge-Kutta step of `ẏ = f(y)`.
pub fn rk4_step<F>(f: F, y: &DVector<f64>, dt: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let k1 = f(y);
    rk4_step_with(f, y, k1, dt)
}

fn rk4_step_with<F>(f: F, y: &DVector<f64>, k1: DVector<f64>, dt: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let k2 = f(&(y + &k1 * (0.5 * dt)));
    let k3 = f(&(y + &k2 * (0.5 * dt)));
    let k4 = f(&(y + &k3 * dt));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationSettings {
    pub t_end: f64,
    pub dt: f64,
    /// Record every `output_stride`-th step.
    pub output_stride: usize,
    /// Stop once the outcome is decided: stationary and either at a stable
    /// infection-free point or at the endemic equilibrium.
    pub early_stop: bool,
    /// Record `Λ(p^S)` at every sample.
    pub track_lambda: bool,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        IntegrationSettings {
            t_end: 500.0,
            dt: 0.01,
            output_stride: 10,
            early_stop: true,
            track_lambda: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub weighted_avg: Vec<f64>,
    /// `Λ(p^S(t))`; empty when lambda tracking is off.
    pub lambda_track: Vec<f64>,
    /// True when integration ended before `t_end`.
    pub stopped_early: bool,
}

impl Trajectory {
    pub fn last(&self) -> &StateVector {
        self.states
            .last()
            .expect("trajectory has at least one sample")
    }

    pub fn final_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("trajectory has at least one sample")
    }

    pub fn max_infected(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.p_i.amax()).collect()
    }
}

/// Coefficients `c` with `p^I_avg = cᵀ p^I`: `c = D⁻¹ w_m`, where `w_m` is the
/// left Perron vector of `D⁻¹B*(p_max)` normalized to sum 1.
pub fn weighted_average_coefficients(model: &NetworkModel) -> Result<DVector<f64>> {
    let rs = extreme_numbers(model)?;
    let p_max = rs.p_max_vector();
    let mut k = effective_unchecked(model, &p_max);
    for (j, &d) in model.recovery().iter().enumerate() {
        k.row_mut(j).scale_mut(1.0 / d);
    }
    let t = spectral::leading_eig(&k, scc::is_irreducible(&k))?;
    let mut w = t.left;
    if w.sum() < 0.0 {
        w = -w;
    }
    w /= w.sum();
    Ok(w.component_div(model.recovery()))
}

/// `p^I_avg = w_mᵀ D⁻¹ p^I`.
pub fn weighted_average(model: &NetworkModel, p_i: &DVector<f64>) -> Result<f64> {
    Ok(weighted_average_coefficients(model)?.dot(p_i))
}

struct Recorder<'a> {
    model: &'a NetworkModel,
    coeffs: DVector<f64>,
    track_lambda: bool,
    traj: Trajectory,
}

impl Recorder<'_> {
    fn push(&mut self, t: f64, s: &StateVector) -> Result<()> {
        self.traj.times.push(t);
        self.traj.weighted_avg.push(self.coeffs.dot(&s.p_i));
        if self.track_lambda {
            self.traj
                .lambda_track
                .push(spectral::lambda_surface(self.model, &clamped_unit(&s.p_s))?.lambda);
        }
        self.traj.states.push(s.clone());
        Ok(())
    }
}

fn clamped_unit(p: &DVector<f64>) -> DVector<f64> {
    p.map(|x| x.clamp(0.0, 1.0))
}

fn lambda_of(model: &NetworkModel, p_s: &DVector<f64>) -> Result<f64> {
    Ok(spectral::lambda_surface(model, &clamped_unit(p_s))?.lambda)
}

/// Integrates the mean-field equations from `initial`.
pub fn integrate(
    model: &NetworkModel,
    initial: &StateVector,
    settings: &IntegrationSettings,
) -> Result<Trajectory> {
    let ee = if settings.early_stop {
        solve_ee(model)?
    } else {
        None
    };
    integrate_with(model, initial, settings, ee.as_ref())
}

fn check_settings(settings: &IntegrationSettings) -> Result<()> {
    if !(settings.dt > 0.0 && settings.dt.is_finite()) {
        return Err(SiriError::InvalidState(format!(
            "dt must be positive, got {}",
            settings.dt
        )));
    }
    if !(settings.t_end >= 0.0 && settings.t_end.is_finite()) {
        return Err(SiriError::InvalidState(format!(
            "t_end must be nonnegative, got {}",
            settings.t_end
        )));
    }
    if settings.output_stride == 0 {
        return Err(SiriError::InvalidState(
            "output stride must be at least 1".into(),
        ));
    }
    Ok(())
}

fn integrate_with(
    model: &NetworkModel,
    initial: &StateVector,
    settings: &IntegrationSettings,
    ee: Option<&EndemicEquilibrium>,
) -> Result<Trajectory> {
    model.ensure_valid()?;
    check_settings(settings)?;
    if initial.n() != model.n() {
        return Err(SiriError::Dimension(format!(
            "initial state has {} agents, model has {}",
            initial.n(),
            model.n()
        )));
    }
    initial.check(SIMPLEX_TOL)?;
    let mut rec = Recorder {
        model,
        coeffs: weighted_average_coefficients(model)?,
        track_lambda: settings.track_lambda,
        traj: Trajectory {
            times: vec![],
            states: vec![],
            weighted_avg: vec![],
            lambda_track: vec![],
            stopped_early: false,
        },
    };
    let ee_vec = ee.map(|e| e.vector());
    let f = |y: &DVector<f64>| stacked_rhs(model, y);

    let steps = (settings.t_end / settings.dt).round() as usize;
    let mut y = initial.stack();
    rec.push(0.0, initial)?;
    let mut last_recorded = 0usize;
    for step in 0..steps {
        let k1 = f(&y);
        if settings.early_stop && step > 0 && k1.amax() <= STATIONARY_TOL {
            let s = StateVector::unstack(&y);
            let at_ee = ee_vec
                .as_ref()
                .is_some_and(|e| (&s.p_i - e).amax() <= EE_DISTANCE_TOL);
            let at_stable_ife =
                s.p_i.amax() <= IFE_INFECTED_TOL && lambda_of(model, &s.p_s)? < -STATIONARY_TOL;
            if at_ee || at_stable_ife {
                if last_recorded != step {
                    rec.push(step as f64 * settings.dt, &s)?;
                }
                rec.traj.stopped_early = true;
                return Ok(rec.traj);
            }
        }
        y = rk4_step_with(f, &y, k1, settings.dt);
        let t = (step + 1) as f64 * settings.dt;
        let mut s = StateVector::unstack(&y);
        if let Some((j, name, x)) = s.worst_violation() {
            if x.is_nan() || x < -SIMPLEX_TOL {
                return Err(SiriError::SimplexViolation {
                    time: t,
                    detail: format!("{name} of agent {} is {x}", j + 1),
                });
            }
        }
        s.clamp();
        y = s.stack();
        if (step + 1) % settings.output_stride == 0 || step + 1 == steps {
            rec.push(t, &s)?;
            last_recorded = step + 1;
        }
    }
    Ok(rec.traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    ConvergedIfe { p_s_final: Vec<f64> },
    ConvergedEe { distance: f64 },
    Undecided { horizon: f64 },
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::ConvergedIfe { .. } => "ConvergedIFE",
            Outcome::ConvergedEe { .. } => "ConvergedEE",
            Outcome::Undecided { .. } => "Undecided",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResurgenceReport {
    /// `min_t max_j p^I_j(t)`.
    pub dip_value: f64,
    pub dip_time: f64,
    /// First time after the dip where `max_j p^I_j` exceeds ten times the dip value.
    pub resurge_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub outcome: Outcome,
    pub resurgence: Option<ResurgenceReport>,
    pub trajectory: Trajectory,
}

/// Outcome of the final sample of a trajectory.
pub fn classify_outcome(
    model: &NetworkModel,
    traj: &Trajectory,
    ee: Option<&EndemicEquilibrium>,
) -> Outcome {
    let s = traj.last();
    let stationary = rhs(model, s).p_s.amax().max(rhs(model, s).p_i.amax());
    if s.p_i.amax() <= IFE_INFECTED_TOL && stationary <= STATIONARY_TOL {
        return Outcome::ConvergedIfe {
            p_s_final: s.p_s.iter().copied().collect(),
        };
    }
    if let Some(e) = ee {
        let distance = (&s.p_i - e.vector()).amax();
        if distance <= EE_DISTANCE_TOL {
            return Outcome::ConvergedEe { distance };
        }
    }
    Outcome::Undecided {
        horizon: traj.final_time(),
    }
}

/// Resurgence report for a trajectory that converged to the endemic
/// equilibrium: the peak infection level dips below half its initial value
/// and later rebounds tenfold.
pub fn detect_resurgence(traj: &Trajectory, outcome: &Outcome) -> Option<ResurgenceReport> {
    if !matches!(outcome, Outcome::ConvergedEe { .. }) {
        return None;
    }
    let peaks = traj.max_infected();
    let (dip_idx, &dip_value) = peaks.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    if dip_value >= 0.5 * peaks[0] {
        return None;
    }
    let rebound = peaks[dip_idx..]
        .iter()
        .position(|&x| x > 10.0 * dip_value)?;
    Some(ResurgenceReport {
        dip_value,
        dip_time: traj.times[dip_idx],
        resurge_time: traj.times[dip_idx + rebound],
    })
}

/// Integrates and classifies the outcome.
pub fn simulate(
    model: &NetworkModel,
    initial: &StateVector,
    settings: &IntegrationSettings,
) -> Result<SimOutcome> {
    let ee = solve_ee(model)?;
    let trajectory = integrate_with(
        model,
        initial,
        settings,
        if settings.early_stop {
            ee.as_ref()
        } else {
            None
        },
    )?;
    let outcome = classify_outcome(model, &trajectory, ee.as_ref());
    let resurgence = detect_resurgence(&trajectory, &outcome);
    Ok(SimOutcome {
        outcome,
        resurgence,
        trajectory,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingDirection {
    NegToPos,
    PosToNeg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub time: f64,
    pub direction: CrossingDirection,
}

/// Advances `state` by `duration` with steps no longer than `dt`.
fn advance(model: &NetworkModel, state: &StateVector, duration: f64, dt: f64) -> StateVector {
    let f = |y: &DVector<f64>| stacked_rhs(model, y);
    let steps = (duration / dt).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    let mut y = state.stack();
    for _ in 0..steps {
        y = rk4_step(f, &y, h);
    }
    StateVector::unstack(&y)
}

/// Zero crossings of `Λ(p^S(t))` along a trajectory, refined by bisection in
/// time (re-integrating from the preceding sample) to `CROSSING_TIME_TOL`.
pub fn crossing_monitor(model: &NetworkModel, traj: &Trajectory, dt: f64) -> Result<Vec<Crossing>> {
    let track: Vec<f64> = if traj.lambda_track.len() == traj.states.len() {
        traj.lambda_track.clone()
    } else {
        traj.states
            .iter()
            .map(|s| lambda_of(model, &s.p_s))
            .collect::<Result<_>>()?
    };
    let mut out = Vec::new();
    // last sample with nonzero Λ
    let mut prev: Option<usize> = None;
    for (i, &l) in track.iter().enumerate() {
        if l == 0.0 {
            continue;
        }
        if let Some(a) = prev {
            if track[a].signum() != l.signum() {
                let direction = if l > 0.0 {
                    CrossingDirection::NegToPos
                } else {
                    CrossingDirection::PosToNeg
                };
                let start = &traj.states[a];
                let sign_a = track[a].signum();
                let (mut lo, mut hi) = (0.0, traj.times[i] - traj.times[a]);
                while hi - lo > CROSSING_TIME_TOL {
                    let mid = 0.5 * (lo + hi);
                    let s = advance(model, start, mid, dt);
                    if lambda_of(model, &s.p_s)?.signum() == sign_a {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(Crossing {
                    time: traj.times[a] + 0.5 * (lo + hi),
                    direction,
                });
            }
        }
        prev = Some(i);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `R₀ = β/δ`, `R₁ = β̂/δ`.
    PerContact,
    /// `R₀ = βd/δ`, `R₁ = β̂d/δ`.
    Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormCandidate {
    pub convention: Convention,
    pub r0: f64,
    pub r1: f64,
    pub xi: f64,
    /// `None` when `ξ` or the candidate falls outside `[0, 1]`.
    pub p_crit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DRegularCritical {
    pub degree: f64,
    pub candidates: Vec<ClosedFormCandidate>,
    pub p_crit_bisection: f64,
    /// Final bracket `[lo, hi]`: `lo` leads to the IFE, `hi` to the EE.
    pub bracket: (f64, f64),
    pub ee_level: f64,
    /// Conventions whose candidate lies within `1e-3` of the bisection value.
    pub matching: Vec<Convention>,
}

fn closed_form(
    convention: Convention,
    beta: f64,
    beta_hat: f64,
    delta: f64,
    d: f64,
) -> ClosedFormCandidate {
    let scale = match convention {
        Convention::PerContact => 1.0,
        Convention::Network => d,
    };
    let r0 = beta * scale / delta;
    let r1 = beta_hat * scale / delta;
    let xi = (r1 - 1.0 / d) / (r1 - r0);
    let p = 1.0 - xi * (r0 * d * xi).powf(-beta / beta_hat);
    let in_unit = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
    ClosedFormCandidate {
        convention,
        r0,
        r1,
        xi,
        p_crit: (in_unit(xi) && in_unit(p)).then_some(p),
    }
}

pub struct PcritSettings {
    pub bracket: (f64, f64),
    pub width: f64,
    pub horizon: f64,
    pub dt: f64,
}

impl Default for PcritSettings {
    fn default() -> Self {
        PcritSettings {
            bracket: (0.0, 1.0),
            width: 1e-6,
            horizon: 3000.0,
            dt: 0.01,
        }
    }
}

/// Critical uniform initial infection level on a d-regular network with
/// global rates, in the bistable regime. Returns the closed-form candidates
/// under both reproduction-number conventions and a bisection oracle on the
/// integrated outcome.
pub fn dregular_pcrit(model: &NetworkModel, settings: &PcritSettings) -> Result<DRegularCritical> {
    let params = dregular_check(model).ok_or(SiriError::NotRegular)?;
    let regime = classify_regime(&extreme_numbers(model)?);
    if regime != Regime::Bistable {
        return Err(SiriError::WrongRegime(regime));
    }
    let ee = solve_ee(model)?.ok_or(SiriError::WrongRegime(regime))?;
    let ee_level = ee.vector().amax();
    let candidates: Vec<_> = [Convention::PerContact, Convention::Network]
        .into_iter()
        .map(|c| closed_form(c, params.beta, params.beta_hat, params.delta, params.degree))
        .collect();

    let int = IntegrationSettings {
        t_end: settings.horizon,
        dt: settings.dt,
        output_stride: usize::MAX / 2,
        early_stop: true,
        track_lambda: false,
    };
    let ee_bound = |p_ic: f64| -> Result<bool> {
        let init = StateVector::from_infected(DVector::from_element(model.n(), p_ic))?;
        let traj = integrate_with(model, &init, &int, Some(&ee))?;
        Ok(traj.last().p_i.amax() > 0.5 * ee_level)
    };

    let (mut lo, mut hi) = settings.bracket;
    if ee_bound(lo)? || !ee_bound(hi)? {
        return Err(SiriError::Bracket(format!(
            "bracket [{lo}, {hi}] does not separate IFE-bound from EE-bound initial conditions"
        )));
    }
    while hi - lo > settings.width {
        let mid = 0.5 * (lo + hi);
        if ee_bound(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let p_crit_bisection = 0.5 * (lo + hi);
    let matching = candidates
        .iter()
        .filter(|c| {
            c.p_crit
                .is_some_and(|p| (p - p_crit_bisection).abs() <= 1e-3)
        })
        .map(|c| c.convention)
        .collect();
    Ok(DRegularCritical {
        degree: params.degree,
        candidates,
        p_crit_bisection,
        bracket: (lo, hi),
        ee_level,
        matching,
    })
}
