mod common;

use common::*;
use nalgebra::DVector;
use netsiri::dynamics::{crossing_monitor, dregular_pcrit, CrossingDirection, PcritSettings};
use netsiri::model::ImmunityCase;
use netsiri::reproduction::Regime;
use netsiri::spectral::lambda_surface;
use netsiri::{integrate, simulate, IntegrationSettings, Outcome, SiriError, StateVector};

fn lambda(m: &netsiri::NetworkModel, p: &DVector<f64>) -> f64 {
    lambda_surface(m, p).unwrap().lambda
}

fn fixed_horizon(t_end: f64, dt: f64) -> IntegrationSettings {
    IntegrationSettings {
        t_end,
        dt,
        output_stride: 10,
        early_stop: false,
        track_lambda: true,
    }
}

#[test]
fn step_halving_on_fig2_scenarios() {
    for name in ["fig2_decay.json", "fig2_resurgent.json"] {
        let s = load_scenario(name);
        let a = integrate(&s.model, &s.initial, &fixed_horizon(200.0, 0.01)).unwrap();
        let b = integrate(&s.model, &s.initial, &fixed_horizon(200.0, 0.005)).unwrap();
        let diff = (&a.last().p_i - &b.last().p_i).amax();
        assert!(diff <= 1e-6, "{name}: {diff}");
    }
}

#[test]
fn sir_models_converge_to_infection_free() {
    let mut r = rng(11);
    for n in 2..6 {
        let m = random_model(&mut r, n, ImmunityCase::Sir);
        let init = StateVector::from_infected(random_point(&mut r, n, 0.05, 0.6)).unwrap();
        let settings = IntegrationSettings {
            t_end: 2000.0,
            ..Default::default()
        };
        let o = simulate(&m, &init, &settings).unwrap();
        assert!(
            matches!(o.outcome, Outcome::ConvergedIfe { .. }),
            "{:?}",
            o.outcome
        );
        assert!(o.resurgence.is_none());
        check_trajectory(&o.trajectory).unwrap();
    }
}

#[test]
fn epidemic_partial_immunity_crosses_once_downward() {
    let mut r = rng(21);
    let mut checked = 0;
    for _ in 0..10 {
        let m = model_in_regime(&mut r, 4, ImmunityCase::Partial, Regime::Epidemic);
        let init = StateVector::from_infected(DVector::from_element(4, 0.01)).unwrap();
        assert!(lambda(&m, &init.p_s) > 0.0);
        let traj = integrate(&m, &init, &fixed_horizon(400.0, 0.01)).unwrap();
        let cs = crossing_monitor(&m, &traj, 0.01).unwrap();
        assert_eq!(cs.len(), 1, "{cs:?}");
        assert_eq!(cs[0].direction, CrossingDirection::PosToNeg);
        checked += 1;
    }
    assert_eq!(checked, 10);
}

#[test]
fn bistable_compromised_crosses_once_upward_into_endemic_state() {
    let mut r = rng(31);
    let mut checked = 0;
    for _ in 0..40 {
        let m = model_in_regime(&mut r, 3, ImmunityCase::Compromised, Regime::Bistable);
        // largest uniform infection whose susceptible level still has Λ < 0
        let Some(s) = (1..100)
            .rev()
            .map(|k| k as f64 / 100.0)
            .find(|&s| lambda(&m, &DVector::from_element(3, 1.0 - s)) < 0.0)
        else {
            continue;
        };
        let init = StateVector::from_infected(DVector::from_element(3, s)).unwrap();
        let settings = IntegrationSettings {
            t_end: 3000.0,
            ..Default::default()
        };
        let o = simulate(&m, &init, &settings).unwrap();
        if !matches!(o.outcome, Outcome::ConvergedEe { .. }) {
            continue;
        }
        let cs = crossing_monitor(&m, &o.trajectory, 0.01).unwrap();
        assert_eq!(cs.len(), 1, "{cs:?}");
        assert_eq!(cs[0].direction, CrossingDirection::NegToPos);
        checked += 1;
    }
    assert!(
        checked >= 3,
        "only {checked} endemic-bound bistable trajectories found"
    );
}

#[test]
fn no_infection_means_no_crossings() {
    let mut r = rng(41);
    let m = random_model(&mut r, 4, ImmunityCase::MixedWeak);
    let init = StateVector::new(random_point(&mut r, 4, 0.0, 1.0), DVector::zeros(4)).unwrap();
    let traj = integrate(&m, &init, &fixed_horizon(20.0, 0.01)).unwrap();
    assert!(traj.states.iter().all(|s| s.p_s == init.p_s));
    assert!(crossing_monitor(&m, &traj, 0.01).unwrap().is_empty());
}

#[test]
fn regular_network_components_stay_equal() {
    for (n, beta, beta_hat) in [(4, 0.3, 0.9), (6, 0.5, 0.2), (5, 0.4, 0.4)] {
        let m = uniform(bidirectional_ring(n), beta, beta_hat, 1.0);
        for p_ic in [0.05, 0.3, 0.8] {
            let init = StateVector::from_infected(DVector::from_element(n, p_ic)).unwrap();
            let traj = integrate(&m, &init, &fixed_horizon(100.0, 0.01)).unwrap();
            for s in &traj.states {
                for v in [&s.p_s, &s.p_i] {
                    let spread = v.max() - v.min();
                    assert!(spread <= 1e-10, "spread {spread}");
                }
            }
        }
    }
}

#[test]
fn endemic_monotone_approach_has_no_resurgence() {
    let m = uniform(bidirectional_ring(4), 1.0, 1.0, 1.0);
    let init = StateVector::from_infected(DVector::from_element(4, 0.05)).unwrap();
    let o = simulate(&m, &init, &Default::default()).unwrap();
    assert!(matches!(o.outcome, Outcome::ConvergedEe { .. }));
    assert!(o.resurgence.is_none());
}

#[test]
fn pcrit_requires_bistable_regular_model() {
    let ring = uniform(directed_ring(4), 0.3, 0.9, 1.0);
    assert!(matches!(
        dregular_pcrit(&ring, &PcritSettings::default()),
        Err(SiriError::WrongRegime(_))
    ));
    let mut r = rng(5);
    let irregular = random_model(&mut r, 4, ImmunityCase::Compromised);
    assert!(matches!(
        dregular_pcrit(&irregular, &PcritSettings::default()),
        Err(SiriError::NotRegular)
    ));
}

#[test]
fn large_steps_are_reported_as_simplex_violations() {
    let m = uniform(bidirectional_ring(4), 30.0, 30.0, 1.0);
    let init = StateVector::from_infected(DVector::from_element(4, 0.5)).unwrap();
    let err = integrate(&m, &init, &fixed_horizon(10.0, 0.5)).unwrap_err();
    assert!(matches!(err, SiriError::SimplexViolation { .. }), "{err}");
}
