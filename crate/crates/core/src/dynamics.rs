//! Phase-space vector fields for the model variants.
//!
//! Every variant shares `ẋ_i = v_i`; they differ in `v̇_i`:
//!
//! * `Main`: radial term + flocking operator + cooperative control.
//! * `Boosted`: `Main` plus the speed-restoring boost `f_i^b v_i`.
//! * `TwoAgent`: a weighted pair with cooperative control only.
//! * `Ls`: damped cooperative control with radial feedback onto the sphere,
//!   over the complete graph with unit weights.
//!
//! Pair contributions are accumulated for each agent in ascending `j` order so
//! that runs are bitwise reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{FlockError, Result};
use crate::geometry::{transport, Vec3, EPS_ANTI};
use crate::kernels::{PsiKernel, SigmaKernel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: Vec3,
    pub v: Vec3,
}

impl AgentState {
    pub const fn new(x: Vec3, v: Vec3) -> Self {
        AgentState { x, v }
    }
}

/// Time derivative of one agent's phase point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentRate {
    pub dx: Vec3,
    pub dv: Vec3,
}

pub type PhaseDerivative = Vec<AgentRate>;

/// The full phase point: an ordered list of agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ensemble {
    agents: Vec<AgentState>,
}

impl Ensemble {
    pub fn new(agents: Vec<AgentState>) -> Result<Self> {
        if agents.is_empty() {
            return Err(FlockError::config(
                "ensemble must contain at least one agent",
            ));
        }
        if agents.iter().any(|a| !a.x.is_finite() || !a.v.is_finite()) {
            return Err(FlockError::domain("ensemble contains non-finite state"));
        }
        Ok(Ensemble { agents })
    }

    pub fn from_parts(xs: &[Vec3], vs: &[Vec3]) -> Result<Self> {
        if xs.len() != vs.len() {
            return Err(FlockError::config("position and velocity counts differ"));
        }
        Self::new(
            xs.iter()
                .zip(vs)
                .map(|(&x, &v)| AgentState::new(x, v))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub(crate) fn agents_mut(&mut self) -> &mut [AgentState] {
        &mut self.agents
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.agents.iter().map(|a| a.x)
    }

    pub fn velocities(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.agents.iter().map(|a| a.v)
    }

    /// Largest violation of `|x_i| = 1` or `⟨x_i, v_i⟩ = 0`.
    pub fn constraint_drift(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| (a.x.norm() - 1.0).abs().max(a.x.dot(a.v).abs()))
            .fold(0.0, f64::max)
    }

    pub fn min_pair_dist_sq(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.agents.iter().enumerate() {
            for b in &self.agents[i + 1..] {
                best = best.min((a.x - b.x).norm_sq());
            }
        }
        best
    }

    /// Applies the same linear map to every position and velocity.
    pub fn map(&self, f: impl Fn(Vec3) -> Vec3) -> Ensemble {
        Ensemble {
            agents: self
                .agents
                .iter()
                .map(|a| AgentState::new(f(a.x), f(a.v)))
                .collect(),
        }
    }

    /// `self + h·rate`, componentwise in ℝ^{6N}.
    pub(crate) fn advanced(&self, rate: &[AgentRate], h: f64) -> Ensemble {
        Ensemble {
            agents: self
                .agents
                .iter()
                .zip(rate)
                .map(|(a, r)| AgentState::new(a.x + r.dx * h, a.v + r.dv * h))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    /// Target speed below which agents are pushed.
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsParams {
    pub k_v: f64,
    pub k_a: f64,
    pub k_r: f64,
    pub k_0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoAgentWeights {
    pub n_total: u32,
    pub n: u32,
}

/// A dynamics variant together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Main {
        psi: PsiKernel,
        sigma: SigmaKernel,
    },
    Boosted {
        psi: PsiKernel,
        sigma: SigmaKernel,
        boost: BoostParams,
    },
    TwoAgent {
        sigma: SigmaKernel,
        weights: TwoAgentWeights,
    },
    Ls {
        ls: LsParams,
    },
}

impl Model {
    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Main { psi, sigma } => {
                psi.validate()?;
                sigma.validate()
            }
            Model::Boosted { psi, sigma, boost } => {
                psi.validate()?;
                sigma.validate()?;
                if !(boost.b > 0.0) {
                    return Err(FlockError::config(format!(
                        "boost target speed must be positive, got {}",
                        boost.b
                    )));
                }
                Ok(())
            }
            Model::TwoAgent { sigma, weights } => {
                sigma.validate()?;
                if weights.n_total < 2 || weights.n < 1 || weights.n > weights.n_total {
                    return Err(FlockError::config(format!(
                        "two-agent weights need 1 <= n <= n_total, n_total >= 2; got n={}, n_total={}",
                        weights.n, weights.n_total
                    )));
                }
                Ok(())
            }
            Model::Ls { ls } => {
                if [ls.k_v, ls.k_a, ls.k_r, ls.k_0]
                    .iter()
                    .any(|k| !(*k >= 0.0))
                {
                    return Err(FlockError::config("L-S gains must be nonnegative"));
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::Main { .. } => "main",
            Model::Boosted { .. } => "boosted",
            Model::TwoAgent { .. } => "two_agent",
            Model::Ls { .. } => "ls",
        }
    }

    pub fn psi(&self) -> Option<PsiKernel> {
        match *self {
            Model::Main { psi, .. } | Model::Boosted { psi, .. } => Some(psi),
            _ => None,
        }
    }

    /// Kernel defining the configuration energy reported in diagnostics.
    pub fn energy_kernel(&self) -> SigmaKernel {
        match *self {
            Model::Main { sigma, .. }
            | Model::Boosted { sigma, .. }
            | Model::TwoAgent { sigma, .. } => sigma,
            Model::Ls { ls } => SigmaKernel::new(ls.k_a, ls.k_r),
        }
    }

    /// Whether the energy functional is non-increasing along exact trajectories.
    pub fn is_dissipative(&self) -> bool {
        match self {
            Model::Main { .. } => true,
            Model::Boosted { .. } | Model::TwoAgent { .. } | Model::Ls { .. } => false,
        }
    }

    /// Whether positions are meant to stay on the sphere exactly.
    pub fn is_sphere_constrained(&self) -> bool {
        !matches!(self, Model::Ls { .. })
    }

    pub fn rhs(&self, ens: &Ensemble) -> Result<PhaseDerivative> {
        match *self {
            Model::Main { psi, sigma } => rhs_main(ens, psi, sigma),
            Model::Boosted { psi, sigma, boost } => rhs_boosted(ens, psi, sigma, boost),
            Model::TwoAgent { sigma, weights } => rhs_two_agent(ens, sigma, weights),
            Model::Ls { ls } => rhs_ls(ens, ls),
        }
    }
}

/// Cooperative control `Σ_{j≠i} (σ_ij/N)(|x_i|² x_j − ⟨x_i,x_j⟩ x_i)`.
pub fn coop_force(i: usize, ens: &Ensemble, sk: SigmaKernel) -> Result<Vec3> {
    let agents = ens.agents();
    let n = agents.len() as f64;
    let xi = agents[i].x;
    let xi_sq = xi.norm_sq();
    let mut acc = Vec3::ZERO;
    for (j, aj) in agents.iter().enumerate() {
        if j == i {
            continue;
        }
        let xj = aj.x;
        let s = sk.pair(i, j, (xi - xj).norm_sq())?;
        acc += (xj * xi_sq - xi * xi.dot(xj)) * (s / n);
    }
    Ok(acc)
}

/// Flocking operator `Σ_j (ψ_ij/N)(R_{x_j→x_i}(v_j) − v_i)`.
///
/// Positions enter through their directions, with the transported velocity
/// rescaled by `|x_j|/|x_i|`; on the sphere this is the plain operator. A
/// pair with `|x̂_i + x̂_j| ≤ eps_anti` keeps only its `−ψ_ij v_i / N` part.
pub fn flock_force(i: usize, ens: &Ensemble, pk: PsiKernel, eps_anti: f64) -> Vec3 {
    let agents = ens.agents();
    let n = agents.len() as f64;
    let xi = agents[i].x;
    let ni = xi.norm();
    let hi = xi / ni;
    let vi = agents[i].v;
    let mut acc = Vec3::ZERO;
    for (j, aj) in agents.iter().enumerate() {
        if j == i {
            continue;
        }
        let nj = aj.x.norm();
        let hj = aj.x / nj;
        let psi = pk.eval_clamped((hi - hj).norm());
        if psi == 0.0 {
            continue;
        }
        let carried = match transport(hj, hi, aj.v, eps_anti) {
            Some(t) => t * (nj / ni),
            None => Vec3::ZERO,
        };
        acc += (carried - vi) * (psi / n);
    }
    acc
}

/// `−(|v|²/|x|²) x`: keeps a unit-speed agent on its great circle.
pub fn radial_term(a: &AgentState) -> Result<Vec3> {
    let xn = a.x.norm_sq();
    if !(xn > 0.0) {
        return Err(FlockError::domain("radial term undefined at the origin"));
    }
    Ok(a.x * (-a.v.norm_sq() / xn))
}

/// `f^b = 2 − 2|v|/b` for `|v| ≤ b`, else 0.
pub fn boost_factor(v: Vec3, bp: BoostParams) -> f64 {
    let speed = v.norm();
    if speed <= bp.b {
        -2.0 / bp.b * speed + 2.0
    } else {
        0.0
    }
}

pub fn rhs_main(ens: &Ensemble, pk: PsiKernel, sk: SigmaKernel) -> Result<PhaseDerivative> {
    (0..ens.len())
        .map(|i| {
            let a = ens.agents()[i];
            let dv = radial_term(&a)? + flock_force(i, ens, pk, EPS_ANTI) + coop_force(i, ens, sk)?;
            Ok(AgentRate { dx: a.v, dv })
        })
        .collect()
}

pub fn rhs_boosted(
    ens: &Ensemble,
    pk: PsiKernel,
    sk: SigmaKernel,
    bp: BoostParams,
) -> Result<PhaseDerivative> {
    let mut rate = rhs_main(ens, pk, sk)?;
    for (r, a) in rate.iter_mut().zip(ens.agents()) {
        let f = boost_factor(a.v, bp);
        if f != 0.0 {
            r.dv += a.v * f;
        }
    }
    Ok(rate)
}

/// Weighted pair: agent 1 feels weight `n/N`, agent 2 weight `(N − n)/N`.
pub fn rhs_two_agent(
    ens: &Ensemble,
    sk: SigmaKernel,
    w: TwoAgentWeights,
) -> Result<PhaseDerivative> {
    let [a1, a2] = ens.agents() else {
        return Err(FlockError::config(format!(
            "two-agent model needs exactly 2 agents, got {}",
            ens.len()
        )));
    };
    let (x1, x2) = (a1.x, a2.x);
    let s = sk.pair(0, 1, (x1 - x2).norm_sq())?;
    let w1 = w.n as f64 / w.n_total as f64;
    let w2 = (w.n_total - w.n) as f64 / w.n_total as f64;
    let c = x1.dot(x2);
    let dv1 = radial_term(a1)? + (x2 * x1.norm_sq() - x1 * c) * (w1 * s);
    let dv2 = radial_term(a2)? + (x1 * x2.norm_sq() - x2 * c) * (w2 * s);
    Ok(vec![
        AgentRate { dx: a1.v, dv: dv1 },
        AgentRate { dx: a2.v, dv: dv2 },
    ])
}

/// Damped cooperative control with radial feedback `f^0 = −k_0 (x − x/|x|)`.
pub fn rhs_ls(ens: &Ensemble, ls: LsParams) -> Result<PhaseDerivative> {
    let sk = SigmaKernel::new(ls.k_a, ls.k_r);
    let agents = ens.agents();
    agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let xi = a.x;
            let xn = xi.norm();
            if !(xn > 0.0) {
                return Err(FlockError::domain("L-S feedback undefined at the origin"));
            }
            let mut u = Vec3::ZERO;
            for (j, aj) in agents.iter().enumerate() {
                if j == i {
                    continue;
                }
                let s = sk.pair(i, j, (xi - aj.x).norm_sq())?;
                u += (aj.x - xi * xi.dot(aj.x)) * s;
            }
            let f0 = (xi - xi / xn) * (-ls.k_0);
            let dv = xi * (-a.v.norm_sq()) - a.v * ls.k_v + u + f0;
            Ok(AgentRate { dx: a.v, dv })
        })
        .collect()
}
