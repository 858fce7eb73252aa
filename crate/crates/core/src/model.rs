//! Weighted digraph, heterogeneous rates and the immunity-case taxonomy.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SiriError};
use crate::scc;

/// Absolute tolerance for comparing user-supplied rates.
pub const RATE_TOL: f64 = 1e-12;

/// Weighted digraph. `a_jk > 0` means agent `j` can be infected by agent `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiGraph {
    adjacency: DMatrix<f64>,
}

impl DiGraph {
    pub fn new(adjacency: DMatrix<f64>) -> Result<Self> {
        if adjacency.nrows() != adjacency.ncols() || adjacency.nrows() == 0 {
            return Err(SiriError::Dimension(format!(
                "adjacency must be a non-empty square matrix, got {}x{}",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        if adjacency.iter().any(|x| !x.is_finite()) {
            return Err(SiriError::NonFinite);
        }
        Ok(Self { adjacency })
    }

    /// Unweighted digraph from zero-based `(j, k)` edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = DMatrix::zeros(n, n);
        for &(j, k) in edges {
            if j >= n || k >= n {
                return Err(SiriError::Dimension(format!(
                    "edge ({j}, {k}) out of range for n = {n}"
                )));
            }
            a[(j, k)] = 1.0;
        }
        Self::new(a)
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn has_edge(&self, j: usize, k: usize) -> bool {
        self.adjacency[(j, k)] > 0.0
    }

    /// Neighbors `k` of `j`, i.e. agents that can infect `j`.
    pub fn neighbors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(move |&k| self.has_edge(j, k))
    }

    pub fn degree(&self, j: usize) -> f64 {
        self.adjacency.row(j).sum()
    }

    pub fn is_strongly_connected(&self) -> bool {
        scc::is_irreducible(&self.adjacency)
    }
}

/// Infection matrix `B`, reinfection matrix `B̂` and recovery rates `δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateParams {
    pub infection: DMatrix<f64>,
    pub reinfection: DMatrix<f64>,
    pub recovery: DVector<f64>,
}

/// Entrywise max / min of the infection and reinfection matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundMatrices {
    pub max: DMatrix<f64>,
    pub min: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NotStronglyConnected { components: usize },
    SelfLoop { agent: usize },
    NegativeWeight { row: usize, col: usize },
    InfectionPattern { row: usize, col: usize },
    ReinfectionPattern { row: usize, col: usize },
    ReducibleReinfection,
    NegativeRate { row: usize, col: usize },
    SingularRecovery { agent: usize },
    NegativeRecovery { agent: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // agent labels are one-based in messages
        match *self {
            Violation::NotStronglyConnected { components } => {
                write!(f, "not strongly connected ({components} components)")
            }
            Violation::SelfLoop { agent } => write!(f, "self-loop at agent {}", agent + 1),
            Violation::NegativeWeight { row, col } => {
                write!(f, "negative adjacency weight at ({}, {})", row + 1, col + 1)
            }
            Violation::InfectionPattern { row, col } => write!(
                f,
                "infection rate zero pattern differs from adjacency at ({}, {})",
                row + 1,
                col + 1
            ),
            Violation::ReinfectionPattern { row, col } => write!(
                f,
                "reinfection rate positive without an edge at ({}, {})",
                row + 1,
                col + 1
            ),
            Violation::ReducibleReinfection => {
                write!(f, "reinfection matrix is nonzero but reducible")
            }
            Violation::NegativeRate { row, col } => {
                write!(f, "negative rate at ({}, {})", row + 1, col + 1)
            }
            Violation::SingularRecovery { agent } => {
                write!(
                    f,
                    "D singular (recovery rate of agent {} is zero)",
                    agent + 1
                )
            }
            Violation::NegativeRecovery { agent } => {
                write!(f, "negative recovery rate at agent {}", agent + 1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// The six immunity cases, with mixed immunity split into weak and strong.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImmunityCase {
    Si,
    Sir,
    Sis,
    Partial,
    Compromised,
    MixedWeak,
    MixedStrong,
}

impl ImmunityCase {
    pub fn label(self) -> &'static str {
        match self {
            ImmunityCase::Si => "1 (SI)",
            ImmunityCase::Sir => "2 (SIR)",
            ImmunityCase::Sis => "3 (SIS)",
            ImmunityCase::Partial => "4 (partial immunity)",
            ImmunityCase::Compromised => "5 (compromised immunity)",
            ImmunityCase::MixedWeak => "6a (weak mixed immunity)",
            ImmunityCase::MixedStrong => "6b (strong mixed immunity)",
        }
    }

    /// Cases whose extreme reproduction numbers sit at a known corner.
    pub fn has_corner_extremizers(self) -> bool {
        !matches!(self, ImmunityCase::Si | ImmunityCase::MixedStrong)
    }
}

/// Sign of `β_jk − β̂_jk` over all neighbors of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowOrder {
    /// β = β̂ on every incoming edge (stubborn agent).
    Equal,
    /// β ≥ β̂ on every incoming edge, strictly on at least one.
    InfectionDominant,
    /// β ≤ β̂ on every incoming edge, strictly on at least one.
    ReinfectionDominant,
    /// Both strict signs occur.
    Mixed,
}

/// Global `(d, β, β̂, δ)` of a d-regular model with uniform rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularParams {
    pub degree: f64,
    pub beta: f64,
    pub beta_hat: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    graph: DiGraph,
    rates: RateParams,
}

impl NetworkModel {
    /// Checks dimensions only; structural assumptions are reported by
    /// [`NetworkModel::validate`].
    pub fn new(graph: DiGraph, rates: RateParams) -> Result<Self> {
        let n = graph.n();
        let dims_ok = rates.infection.shape() == (n, n)
            && rates.reinfection.shape() == (n, n)
            && rates.recovery.len() == n;
        if !dims_ok {
            return Err(SiriError::Dimension(format!(
                "rates must be {n}x{n}, {n}x{n} and length {n}"
            )));
        }
        let finite = rates.infection.iter().all(|x| x.is_finite())
            && rates.reinfection.iter().all(|x| x.is_finite())
            && rates.recovery.iter().all(|x| x.is_finite());
        if !finite {
            return Err(SiriError::NonFinite);
        }
        Ok(Self { graph, rates })
    }

    /// Builds `B = diag(infection_scale) A`, `B̂ = diag(reinfection_scale) A`
    /// and `D = diag(recovery)`.
    pub fn from_row_scales(
        graph: DiGraph,
        infection_scale: &[f64],
        reinfection_scale: &[f64],
        recovery: &[f64],
    ) -> Result<Self> {
        let n = graph.n();
        if infection_scale.len() != n || reinfection_scale.len() != n || recovery.len() != n {
            return Err(SiriError::Dimension(format!(
                "row scales must have length {n}"
            )));
        }
        let a = graph.adjacency().clone();
        let b = DMatrix::from_fn(n, n, |j, k| infection_scale[j] * a[(j, k)]);
        let bh = DMatrix::from_fn(n, n, |j, k| reinfection_scale[j] * a[(j, k)]);
        Self::new(
            graph,
            RateParams {
                infection: b,
                reinfection: bh,
                recovery: DVector::from_column_slice(recovery),
            },
        )
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn graph(&self) -> &DiGraph {
        &self.graph
    }

    pub fn rates(&self) -> &RateParams {
        &self.rates
    }

    pub fn infection(&self) -> &DMatrix<f64> {
        &self.rates.infection
    }

    pub fn reinfection(&self) -> &DMatrix<f64> {
        &self.rates.reinfection
    }

    pub fn recovery(&self) -> &DVector<f64> {
        &self.rates.recovery
    }

    pub fn reinfection_is_zero(&self) -> bool {
        self.rates.reinfection.iter().all(|&x| x.abs() <= RATE_TOL)
    }

    pub fn bounds(&self) -> BoundMatrices {
        let b = &self.rates.infection;
        let bh = &self.rates.reinfection;
        BoundMatrices {
            max: b.zip_map(bh, f64::max),
            min: b.zip_map(bh, f64::min),
        }
    }

    /// Checks every structural assumption and lists each violation.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = self.structural_violations();
        for (j, &d) in self.rates.recovery.iter().enumerate() {
            if d < 0.0 {
                violations.push(Violation::NegativeRecovery { agent: j });
            } else if d == 0.0 {
                violations.push(Violation::SingularRecovery { agent: j });
            }
        }
        ValidationReport { violations }
    }

    fn structural_violations(&self) -> Vec<Violation> {
        let n = self.n();
        let a = self.graph.adjacency();
        let b = &self.rates.infection;
        let bh = &self.rates.reinfection;
        let mut v = Vec::new();

        let comps = scc::strongly_connected_components(a).len();
        if comps > 1 {
            v.push(Violation::NotStronglyConnected { components: comps });
        }
        for j in 0..n {
            if a[(j, j)] != 0.0 {
                v.push(Violation::SelfLoop { agent: j });
            }
        }
        for j in 0..n {
            for k in 0..n {
                if a[(j, k)] < 0.0 {
                    v.push(Violation::NegativeWeight { row: j, col: k });
                }
                if b[(j, k)] < 0.0 || bh[(j, k)] < 0.0 {
                    v.push(Violation::NegativeRate { row: j, col: k });
                    continue;
                }
                let edge = a[(j, k)] > 0.0;
                if j != k && edge != (b[(j, k)] > 0.0) {
                    v.push(Violation::InfectionPattern { row: j, col: k });
                }
                if !edge && bh[(j, k)] > 0.0 {
                    v.push(Violation::ReinfectionPattern { row: j, col: k });
                }
            }
        }
        if !self.reinfection_is_zero() && !scc::is_irreducible(bh) {
            v.push(Violation::ReducibleReinfection);
        }
        v
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_ok() {
            Ok(())
        } else {
            Err(SiriError::InvalidModel(report.violations))
        }
    }

    /// Order of infection vs reinfection rates on the incoming edges of `j`.
    pub fn row_order(&self, j: usize) -> RowOrder {
        let mut pos = false;
        let mut neg = false;
        for k in self.graph.neighbors(j) {
            let diff = self.rates.infection[(j, k)] - self.rates.reinfection[(j, k)];
            if diff > RATE_TOL {
                pos = true;
            } else if diff < -RATE_TOL {
                neg = true;
            }
        }
        match (pos, neg) {
            (false, false) => RowOrder::Equal,
            (true, false) => RowOrder::InfectionDominant,
            (false, true) => RowOrder::ReinfectionDominant,
            (true, true) => RowOrder::Mixed,
        }
    }
}

/// Classifies a model into its immunity case. A zero recovery matrix is
/// accepted here (it identifies the SI case); every other structural
/// assumption must hold.
pub fn classify_case(model: &NetworkModel) -> Result<ImmunityCase> {
    let structural = model.structural_violations();
    let negative_recovery: Vec<_> = model
        .recovery()
        .iter()
        .enumerate()
        .filter(|(_, &d)| d < 0.0)
        .map(|(j, _)| Violation::NegativeRecovery { agent: j })
        .collect();
    if !structural.is_empty() || !negative_recovery.is_empty() {
        let mut all = structural;
        all.extend(negative_recovery);
        return Err(SiriError::InvalidModel(all));
    }

    if model.recovery().iter().all(|&d| d.abs() <= RATE_TOL) {
        return Ok(ImmunityCase::Si);
    }
    if model.reinfection_is_zero() {
        return Ok(ImmunityCase::Sir);
    }
    let b = model.infection();
    let bh = model.reinfection();
    let mut b_ge = true;
    let mut bh_ge = true;
    for (x, y) in b.iter().zip(bh.iter()) {
        if x - y < -RATE_TOL {
            b_ge = false;
        }
        if y - x < -RATE_TOL {
            bh_ge = false;
        }
    }
    match (b_ge, bh_ge) {
        (true, true) => return Ok(ImmunityCase::Sis),
        (true, false) => return Ok(ImmunityCase::Partial),
        (false, true) => return Ok(ImmunityCase::Compromised),
        (false, false) => {}
    }
    let weak = (0..model.n()).all(|j| model.row_order(j) != RowOrder::Mixed);
    Ok(if weak {
        ImmunityCase::MixedWeak
    } else {
        ImmunityCase::MixedStrong
    })
}

/// Agents whose infection and reinfection rates coincide on every incoming edge.
pub fn stubborn_agents(model: &NetworkModel) -> Vec<usize> {
    (0..model.n())
        .filter(|&j| model.row_order(j) == RowOrder::Equal)
        .collect()
}

/// Returns the global parameters when `D = δI`, `B = βA`, `B̂ = β̂A` and every
/// row of `A` sums to the same `d`.
pub fn dregular_check(model: &NetworkModel) -> Option<RegularParams> {
    let n = model.n();
    let a = model.graph().adjacency();
    let degree = model.graph().degree(0);
    if (1..n).any(|j| (model.graph().degree(j) - degree).abs() > RATE_TOL) {
        return None;
    }
    let delta = model.recovery()[0];
    if model
        .recovery()
        .iter()
        .any(|&d| (d - delta).abs() > RATE_TOL)
    {
        return None;
    }
    let scalar_multiple = |m: &DMatrix<f64>| -> Option<f64> {
        let mut factor: Option<f64> = None;
        for j in 0..n {
            for k in 0..n {
                let ajk = a[(j, k)];
                if ajk > 0.0 {
                    let r = m[(j, k)] / ajk;
                    match factor {
                        None => factor = Some(r),
                        Some(f) if (f - r).abs() > RATE_TOL => return None,
                        _ => {}
                    }
                } else if m[(j, k)].abs() > RATE_TOL {
                    return None;
                }
            }
        }
        factor
    };
    let beta = scalar_multiple(model.infection())?;
    let beta_hat = scalar_multiple(model.reinfection())?;
    Some(RegularParams {
        degree,
        beta,
        beta_hat,
        delta,
    })
}
