#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use netsiri::dynamics::Trajectory;
use netsiri::model::{classify_case, DiGraph, ImmunityCase, NetworkModel, RateParams};
use netsiri::reproduction::{classify_regime, extreme_numbers, Regime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn scenario_path(name: &str) -> PathBuf {
    // shared with the acceptance package, hence the sibling-relative path
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(name)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Strongly connected digraph on `n` nodes: a random Hamiltonian cycle plus
/// extra edges with probability `density`, weights in `[0.5, 1.5]`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64) -> DiGraph {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(order[i], order[(i + 1) % n])] = 1.0;
    }
    for j in 0..n {
        for k in 0..n {
            if j != k && rng.random::<f64>() < density {
                a[(j, k)] = 1.0;
            }
        }
    }
    for x in a.iter_mut() {
        if *x > 0.0 {
            *x = rng.random_range(0.5..1.5);
        }
    }
    DiGraph::new(a).unwrap()
}

/// Random model of the requested case (SIR, SIS, partial, compromised, weak
/// or strong mixed immunity).
pub fn random_model(rng: &mut ChaCha8Rng, n: usize, case: ImmunityCase) -> NetworkModel {
    assert!(n >= 2);
    // strong mixed immunity needs a row with two incoming edges
    let n = if case == ImmunityCase::MixedStrong {
        n.max(3)
    } else {
        n
    };
    loop {
        let g = random_graph(rng, n, 0.35);
        let a = g.adjacency().clone();
        let b = a.map(|x| {
            if x > 0.0 {
                x * rng.random_range(0.3..1.5)
            } else {
                0.0
            }
        });
        let row_factor: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..3) {
                0 => rng.random_range(0.2..0.9),
                1 => rng.random_range(1.1..2.5),
                _ => 1.0,
            })
            .collect();
        let bh = DMatrix::from_fn(n, n, |j, k| {
            let x = b[(j, k)];
            if x == 0.0 {
                return 0.0;
            }
            match case {
                ImmunityCase::Sir | ImmunityCase::Si => 0.0,
                ImmunityCase::Sis => x,
                ImmunityCase::Partial => x * rng.random_range(0.2..0.95),
                ImmunityCase::Compromised => x * rng.random_range(1.05..2.5),
                ImmunityCase::MixedWeak => x * row_factor[j],
                ImmunityCase::MixedStrong => x * rng.random_range(0.3..2.5),
            }
        });
        let delta = DVector::from_fn(n, |_, _| {
            if case == ImmunityCase::Si {
                0.0
            } else {
                rng.random_range(0.5..1.5)
            }
        });
        let m = NetworkModel::new(
            g,
            RateParams {
                infection: b,
                reinfection: bh,
                recovery: delta,
            },
        )
        .unwrap();
        if case == ImmunityCase::Si || classify_case(&m).unwrap() == case {
            return m;
        }
    }
}

/// Same model with every rate multiplied by `c`.
pub fn scaled(m: &NetworkModel, c: f64) -> NetworkModel {
    NetworkModel::new(
        m.graph().clone(),
        RateParams {
            infection: m.infection() * c,
            reinfection: m.reinfection() * c,
            recovery: m.recovery().clone(),
        },
    )
    .unwrap()
}

/// Random model placed in `regime` by scaling its infection and reinfection
/// rates so that the deciding reproduction numbers sit at least 10% away from 1.
pub fn model_in_regime(
    rng: &mut ChaCha8Rng,
    n: usize,
    case: ImmunityCase,
    regime: Regime,
) -> NetworkModel {
    loop {
        let m = random_model(rng, n, case);
        let rs = extreme_numbers(&m).unwrap();
        let (lo, hi) = match regime {
            Regime::InfectionFree => (0.3 / rs.rmax, 0.9 / rs.rmax),
            Regime::Endemic => (1.1 / rs.rmin, 2.0 / rs.rmin),
            Regime::Epidemic => (1.1 / rs.rmax, (0.9 / rs.r1).min(3.0 / rs.rmax)),
            Regime::Bistable => (1.1 / rs.r1, 0.9 / rs.rmin),
            Regime::Marginal => unreachable!(),
        };
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            continue;
        }
        let c = rng.random_range(lo..hi);
        let s = scaled(&m, c);
        if classify_regime(&extreme_numbers(&s).unwrap()) == regime {
            return s;
        }
    }
}

pub fn random_point(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// Leading real part of the spectrum via nalgebra's Schur decomposition;
/// an oracle independent of the crate's power iteration.
pub fn schur_abscissa(k: &DMatrix<f64>) -> f64 {
    k.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `B*(p) − D` assembled directly from its definition.
pub fn transverse_oracle(m: &NetworkModel, p: &DVector<f64>) -> DMatrix<f64> {
    let n = m.n();
    let id = DMatrix::<f64>::identity(n, n);
    let pd = DMatrix::from_diagonal(p);
    (&id - &pd) * m.reinfection() + &pd * m.infection() - DMatrix::from_diagonal(m.recovery())
}

/// Simplex invariance and monotone susceptibles along a trajectory.
pub fn check_trajectory(traj: &Trajectory) -> Result<(), String> {
    for w in traj.times.windows(2) {
        if w[1] <= w[0] {
            return Err(format!("times not increasing at {}", w[0]));
        }
    }
    for (i, s) in traj.states.iter().enumerate() {
        for j in 0..s.n() {
            let r = 1.0 - s.p_s[j] - s.p_i[j];
            if s.p_s[j] < -1e-9 || s.p_i[j] < -1e-9 || r < -1e-9 {
                return Err(format!(
                    "off simplex at t = {}, agent {}",
                    traj.times[i],
                    j + 1
                ));
            }
        }
        if i > 0 {
            let prev = &traj.states[i - 1];
            if (0..s.n()).any(|j| s.p_s[j] > prev.p_s[j] + 1e-15) {
                return Err(format!("p_s increased at t = {}", traj.times[i]));
            }
        }
    }
    Ok(())
}

pub fn uniform(graph: DiGraph, beta: f64, beta_hat: f64, delta: f64) -> NetworkModel {
    let n = graph.n();
    NetworkModel::from_row_scales(graph, &vec![beta; n], &vec![beta_hat; n], &vec![delta; n])
        .unwrap()
}

pub fn bidirectional_ring(n: usize) -> DiGraph {
    let edges: Vec<_> = (0..n)
        .flat_map(|j| [(j, (j + 1) % n), (j, (j + n - 1) % n)])
        .collect();
    DiGraph::from_edges(n, &edges).unwrap()
}

pub fn directed_ring(n: usize) -> DiGraph {
    let edges: Vec<_> = (0..n).map(|j| (j, (j + 1) % n)).collect();
    DiGraph::from_edges(n, &edges).unwrap()
}

pub fn load_scenario(name: &str) -> netsiri::Scenario {
    netsiri::Scenario::load(scenario_path(name)).unwrap()
}

pub fn complete_graph(n: usize) -> DiGraph {
    let edges: Vec<_> = (0..n)
        .flat_map(|j| (0..n).filter(move |&k| k != j).map(move |k| (j, k)))
        .collect();
    DiGraph::from_edges(n, &edges).unwrap()
}
