//! Exact simulation of the underlying continuous-time Markov chain with the
//! direct (total-hazard) Gillespie method.
//!
//! Runs are driven by ChaCha8 seeded with `seed_from_u64`; trial `i` of a
//! Monte Carlo estimate uses seed `base + i`. Waiting times are drawn as
//! `−ln(1 − U)/h` with `U` uniform on `[0, 1)`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SiriError};
use crate::model::NetworkModel;

pub const GENERATOR: &str = "chacha8";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentState {
    S,
    I,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transition {
    #[serde(rename = "S->I")]
    Infection,
    #[serde(rename = "I->R")]
    Recovery,
    #[serde(rename = "R->I")]
    Reinfection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub agent: usize,
    pub transition: Transition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTrace {
    pub initial: Vec<AgentState>,
    pub events: Vec<Event>,
    pub seed: u64,
    pub t_end: f64,
    /// True when the run stopped because no agent was infected.
    pub absorbed: bool,
}

impl EventTrace {
    /// Agent states just after all events with time `≤ t`.
    pub fn states_at(&self, t: f64) -> Vec<AgentState> {
        let mut x = self.initial.clone();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            x[e.agent] = target(e.transition);
        }
        x
    }

    pub fn final_states(&self) -> Vec<AgentState> {
        self.states_at(f64::INFINITY)
    }
}

fn target(t: Transition) -> AgentState {
    match t {
        Transition::Infection | Transition::Reinfection => AgentState::I,
        Transition::Recovery => AgentState::R,
    }
}

fn hazards(model: &NetworkModel, x: &[AgentState], out: &mut [f64]) {
    let b = model.infection();
    let bh = model.reinfection();
    let delta = model.recovery();
    let infected: Vec<usize> = (0..x.len()).filter(|&k| x[k] == AgentState::I).collect();
    for (j, h) in out.iter_mut().enumerate() {
        *h = match x[j] {
            AgentState::S => infected.iter().map(|&k| b[(j, k)]).sum(),
            AgentState::I => delta[j],
            AgentState::R => infected.iter().map(|&k| bh[(j, k)]).sum(),
        };
    }
}

/// One exact trajectory of the Markov chain from `initial` until `t_end` or
/// until no agent is infected.
pub fn gillespie_run(
    model: &NetworkModel,
    initial: &[AgentState],
    t_end: f64,
    seed: u64,
) -> Result<EventTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gillespie_with(model, initial, t_end, seed, &mut rng)
}

fn gillespie_with(
    model: &NetworkModel,
    initial: &[AgentState],
    t_end: f64,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<EventTrace> {
    let n = model.n();
    if initial.len() != n {
        return Err(SiriError::Dimension(format!(
            "initial assignment has {} agents, model has {n}",
            initial.len()
        )));
    }
    let mut x = initial.to_vec();
    let mut h = vec![0.0; n];
    let mut t = 0.0;
    let mut events = Vec::new();
    let absorbed = loop {
        if !x.contains(&AgentState::I) {
            break true;
        }
        hazards(model, &x, &mut h);
        let total: f64 = h.iter().sum();
        if total <= 0.0 {
            break false;
        }
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / total;
        if t > t_end {
            break false;
        }
        let mut pick = rng.random::<f64>() * total;
        let mut j = 0;
        while j + 1 < n && (pick >= h[j] || h[j] == 0.0) {
            pick -= h[j];
            j += 1;
        }
        // guard against rounding leaving the pick on a zero-hazard tail agent
        while h[j] == 0.0 {
            j -= 1;
        }
        let transition = match x[j] {
            AgentState::S => Transition::Infection,
            AgentState::I => Transition::Recovery,
            AgentState::R => Transition::Reinfection,
        };
        x[j] = target(transition);
        events.push(Event {
            time: t,
            agent: j,
            transition,
        });
    };
    Ok(EventTrace {
        initial: initial.to_vec(),
        events,
        seed,
        t_end,
        absorbed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub times: Vec<f64>,
    /// `p_hat[t][j]`: fraction of trials with agent `j` infected at `times[t]`.
    pub p_hat: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub trials: usize,
    pub seed: u64,
}

/// Draws an initial assignment with agent `j` infected with probability
/// `p_i[j]`, susceptible with probability `p_s[j]`, recovered otherwise.
pub fn sample_initial<R: Rng>(
    p_s: &DVector<f64>,
    p_i: &DVector<f64>,
    rng: &mut R,
) -> Vec<AgentState> {
    (0..p_s.len())
        .map(|j| {
            let u: f64 = rng.random();
            if u < p_i[j] {
                AgentState::I
            } else if u < p_i[j] + p_s[j] {
                AgentState::S
            } else {
                AgentState::R
            }
        })
        .collect()
}

/// Empirical per-agent infection probabilities over independent trials.
pub fn monte_carlo_mean(
    model: &NetworkModel,
    p_s: &DVector<f64>,
    p_i: &DVector<f64>,
    t_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    let n = model.n();
    if p_s.len() != n || p_i.len() != n {
        return Err(SiriError::Dimension(format!(
            "initial probabilities have lengths {} and {}, model has {n} agents",
            p_s.len(),
            p_i.len()
        )));
    }
    for j in 0..n {
        let r = 1.0 - p_s[j] - p_i[j];
        if p_s[j] < 0.0 || p_i[j] < 0.0 || r < -1e-12 {
            return Err(SiriError::InvalidState(format!(
                "initial probabilities of agent {} are not on simplex",
                j + 1
            )));
        }
    }
    if trials == 0 {
        return Err(SiriError::InvalidState(
            "at least one trial is required".into(),
        ));
    }
    let t_end = t_grid.iter().copied().fold(0.0, f64::max);
    let mut counts = vec![vec![0usize; n]; t_grid.len()];
    for i in 0..trials {
        let s = seed.wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let init = sample_initial(p_s, p_i, &mut rng);
        let trace = gillespie_with(model, &init, t_end, s, &mut rng)?;
        for (ti, &t) in t_grid.iter().enumerate() {
            for (j, st) in trace.states_at(t).into_iter().enumerate() {
                if st == AgentState::I {
                    counts[ti][j] += 1;
                }
            }
        }
    }
    let m = trials as f64;
    let p_hat: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / m).collect())
        .collect();
    let stderr = p_hat
        .iter()
        .map(|row| row.iter().map(|&p| (p * (1.0 - p) / m).sqrt()).collect())
        .collect();
    Ok(McEstimate {
        times: t_grid.to_vec(),
        p_hat,
        stderr,
        trials,
        seed,
    })
}
