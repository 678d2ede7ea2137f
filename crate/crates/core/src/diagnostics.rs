//! Scalar observables: energies, alignment, centroid, the configuration
//! measurement ρ, invariant-set residuals, and regime classification.

use serde::{Deserialize, Serialize};

use crate::dynamics::{coop_force, AgentRate, AgentState, Ensemble, Model};
use crate::error::{FlockError, Result};
use crate::geometry::{transport, Vec3, EPS_ANTI};
use crate::kernels::{PsiKernel, SigmaKernel};

/// ρ is reported only when `|x̄|` exceeds this.
pub const EPS_CENTROID: f64 = 1e-6;

/// `E_K = (1/2N) Σ |v_i|²`.
pub fn kinetic_energy(ens: &Ensemble) -> f64 {
    let n = ens.len() as f64;
    ens.velocities().map(Vec3::norm_sq).sum::<f64>() / (2.0 * n)
}

/// `E_C = (1/4N²) Σ_{i≠j} Φ(|x_i − x_j|²)` with `Φ' = σ`.
pub fn config_energy(ens: &Ensemble, sk: SigmaKernel) -> Result<f64> {
    let xs: Vec<Vec3> = ens.positions().collect();
    config_energy_of(&xs, sk)
}

pub(crate) fn config_energy_of(xs: &[Vec3], sk: SigmaKernel) -> Result<f64> {
    let n = xs.len() as f64;
    let mut acc = 0.0;
    for (i, &xi) in xs.iter().enumerate() {
        for (j, &xj) in xs.iter().enumerate().skip(i + 1) {
            let s = (xi - xj).norm_sq();
            sk.pair(i, j, s)?;
            acc += sk.potential(s);
        }
    }
    // Each unordered pair appears twice in the ordered double sum.
    Ok(2.0 * acc / (4.0 * n * n))
}

/// Euclidean gradient of `E_C` with respect to each position:
/// `(1/N²) Σ_{j≠i} σ_ij (x_i − x_j)`.
pub(crate) fn config_energy_euclidean_gradient(xs: &[Vec3], sk: SigmaKernel) -> Result<Vec<Vec3>> {
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &xi)| {
            let mut g = Vec3::ZERO;
            for (j, &xj) in xs.iter().enumerate() {
                if j != i {
                    g += (xi - xj) * sk.pair(i, j, (xi - xj).norm_sq())?;
                }
            }
            Ok(g / (n * n))
        })
        .collect()
}

/// `E = E_K + E_C − E_C^min`.
pub fn total_energy(ens: &Ensemble, sk: SigmaKernel, e_c_min: f64) -> Result<f64> {
    Ok(kinetic_energy(ens) + config_energy(ens, sk)? - e_c_min)
}

/// `max_{i,j} |x_i + x_j| · |R_{x_j→x_i}(v_j) − v_i|`; antipodal pairs contribute 0.
pub fn alignment_measure(ens: &Ensemble, eps_anti: f64) -> f64 {
    let agents = ens.agents();
    let mut worst: f64 = 0.0;
    for ai in agents {
        let hi = ai.x / ai.x.norm();
        for aj in agents {
            let hj = aj.x / aj.x.norm();
            let prefactor = (ai.x + aj.x).norm();
            if let Some(t) = transport(hj, hi, aj.v, eps_anti) {
                worst = worst.max(prefactor * (t - ai.v).norm());
            }
        }
    }
    worst
}

pub fn centroid(ens: &Ensemble) -> Vec3 {
    let mut acc = Vec3::ZERO;
    for x in ens.positions() {
        acc += x;
    }
    acc / ens.len() as f64
}

/// Total squared distance of the agents from the axis through the origin along `x̄`.
pub fn rho(ens: &Ensemble, eps_centroid: f64) -> Option<f64> {
    let c = centroid(ens);
    let c2 = c.norm_sq();
    if !(c.norm() > eps_centroid) {
        return None;
    }
    Some(
        ens.positions()
            .map(|x| (x - c * (c.dot(x) / c2)).norm_sq())
            .sum(),
    )
}

/// ρ through the identity `ρ = Σ|x_i|² − Σ⟨x_i, x̄⟩²/|x̄|²` (reduces to
/// `N − …` on the sphere).
pub fn rho_from_identity(ens: &Ensemble, eps_centroid: f64) -> Option<f64> {
    let c = centroid(ens);
    let c2 = c.norm_sq();
    if !(c.norm() > eps_centroid) {
        return None;
    }
    let norms: f64 = ens.positions().map(Vec3::norm_sq).sum();
    let proj: f64 = ens.positions().map(|x| x.dot(c).powi(2)).sum();
    Some(norms - proj / c2)
}

pub fn max_diameter(ens: &Ensemble) -> f64 {
    pair_distances(ens).fold(0.0, f64::max)
}

pub fn min_pair_dist(ens: &Ensemble) -> f64 {
    pair_distances(ens).fold(f64::INFINITY, f64::min)
}

fn pair_distances(ens: &Ensemble) -> impl Iterator<Item = f64> + '_ {
    let a = ens.agents();
    (0..a.len()).flat_map(move |i| ((i + 1)..a.len()).map(move |j| (a[i].x - a[j].x).norm()))
}

/// `dE/dt` by the chain rule, given the vector field at `ens`.
pub fn energy_rate(ens: &Ensemble, sk: SigmaKernel, rate: &[AgentRate]) -> Result<f64> {
    let n = ens.len() as f64;
    let xs: Vec<Vec3> = ens.positions().collect();
    let grad = config_energy_euclidean_gradient(&xs, sk)?;
    let kinetic: f64 = ens
        .agents()
        .iter()
        .zip(rate)
        .map(|(a, r)| a.v.dot(r.dv))
        .sum::<f64>()
        / n;
    let config: f64 = grad.iter().zip(rate).map(|(g, r)| g.dot(r.dx)).sum();
    Ok(kinetic + config)
}

/// `−Σ_{i,j} ψ_ij/(2N²) |R_{x_j→x_i}(v_j) − v_i|²`.
pub fn dissipation_rate(ens: &Ensemble, pk: PsiKernel) -> f64 {
    let agents = ens.agents();
    let n = agents.len() as f64;
    let mut acc = 0.0;
    for ai in agents {
        for aj in agents {
            let psi = pk.eval_clamped((ai.x - aj.x).norm());
            if psi == 0.0 {
                continue;
            }
            let carried = transport(aj.x, ai.x, aj.v, EPS_ANTI).unwrap_or(Vec3::ZERO);
            acc += psi * (carried - ai.v).norm_sq();
        }
    }
    -acc / (2.0 * n * n)
}

/// `|dE/dt − (−Σ ψ_ij/(2N²)|R v_j − v_i|²)|` for the unboosted main model.
pub fn dissipation_residual(
    ens: &Ensemble,
    pk: PsiKernel,
    sk: SigmaKernel,
    rate: &[AgentRate],
) -> Result<f64> {
    Ok((energy_rate(ens, sk, rate)? - dissipation_rate(ens, pk)).abs())
}

/// `max_i |coop_force(i)|`; zero exactly at equilibria of the cooperative control.
pub fn equilibrium_residual(ens: &Ensemble, sk: SigmaKernel) -> Result<f64> {
    (0..ens.len()).try_fold(0.0f64, |m, i| Ok(m.max(coop_force(i, ens, sk)?.norm())))
}

/// `|(Nσ_a − (N−1)σ_r/2)|x̄|² − σ_a Σ⟨x_i, x̄⟩²|`, which vanishes at every equilibrium.
pub fn centroid_identity_residual(ens: &Ensemble, sk: SigmaKernel) -> f64 {
    let n = ens.len() as f64;
    let c = centroid(ens);
    let lhs = (n * sk.sigma_a - (n - 1.0) * sk.sigma_r / 2.0) * c.norm_sq();
    let rhs = sk.sigma_a * ens.positions().map(|x| x.dot(c).powi(2)).sum::<f64>();
    (lhs - rhs).abs()
}

/// Pair on two parallel circles rotating rigidly with the relative-equilibrium speed
/// `b = √(−σ(1 + cos θ)/2)`, `σ` taken at `|x1 − x2|² = 2 − 2cos θ`.
pub fn two_agent_equilibrium_data(theta: f64, sk: SigmaKernel) -> Result<[AgentState; 2]> {
    if !(theta > 0.0 && theta <= std::f64::consts::PI) {
        return Err(FlockError::domain(format!(
            "theta must lie in (0, pi], got {theta}"
        )));
    }
    let (s, c) = theta.sin_cos();
    let x1 = Vec3::E1;
    let x2 = Vec3::new(c, s, 0.0);
    let sigma = sk.eval((x1 - x2).norm_sq())?;
    if sigma >= 0.0 {
        return Err(FlockError::domain(format!(
            "no parallel-circle equilibrium: sigma = {sigma} is not negative at theta = {theta}"
        )));
    }
    let b = (-sigma * (1.0 + c) / 2.0).max(0.0).sqrt();
    let v = Vec3::new(0.0, 0.0, b);
    Ok([AgentState::new(x1, v), AgentState::new(x2, v)])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub e_total: f64,
    pub e_kinetic: f64,
    pub e_config: f64,
    pub alignment: f64,
    pub centroid_norm: f64,
    pub rho: Option<f64>,
    pub max_diameter: f64,
    pub min_pair_dist: f64,
    pub max_constraint_drift: f64,
}

impl DiagnosticsRecord {
    pub fn compute(t: f64, ens: &Ensemble, model: &Model, e_c_min: f64) -> Result<Self> {
        let sk = model.energy_kernel();
        let e_kinetic = kinetic_energy(ens);
        let e_config = config_energy(ens, sk)?;
        Ok(DiagnosticsRecord {
            t,
            e_total: e_kinetic + e_config - e_c_min,
            e_kinetic,
            e_config,
            alignment: alignment_measure(ens, EPS_ANTI),
            centroid_norm: centroid(ens).norm(),
            rho: rho(ens, EPS_CENTROID),
            max_diameter: max_diameter(ens),
            min_pair_dist: min_pair_dist(ens),
            max_constraint_drift: ens.constraint_drift(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum RegimeLabel {
    Rendezvous,
    Formation { r0: f64 },
    UniformDeployment,
    GreatCircleMotion,
    Undecided,
}

impl std::fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegimeLabel::Rendezvous => write!(f, "rendezvous"),
            RegimeLabel::Formation { r0 } => write!(f, "formation({r0:.6})"),
            RegimeLabel::UniformDeployment => write!(f, "uniform_deployment"),
            RegimeLabel::GreatCircleMotion => write!(f, "great_circle_motion"),
            RegimeLabel::Undecided => write!(f, "undecided"),
        }
    }
}

/// Finite-horizon stand-ins for the asymptotic regime definitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyParams {
    /// Tail length as a fraction of the covered time span.
    pub tail_fraction: f64,
    pub tol_rendezvous: f64,
    pub tol_centroid: f64,
    pub tol_rho: f64,
    pub tol_align: f64,
    pub tol_plane: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams {
            tail_fraction: 0.2,
            tol_rendezvous: 1e-3,
            tol_centroid: 1e-3,
            tol_rho: 5e-2,
            tol_align: 1e-3,
            tol_plane: 1e-3,
        }
    }
}

/// Tail of a record series: everything at or after `t_end − fraction·span`.
pub fn tail(records: &[DiagnosticsRecord], fraction: f64) -> Result<&[DiagnosticsRecord]> {
    let (first, last) = match (records.first(), records.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => {
            return Err(FlockError::InsufficientData {
                covered: 0.0,
                required: 0.0,
            })
        }
    };
    let span = last - first;
    let window = fraction * span;
    if !(fraction > 0.0 && fraction <= 0.5) || span <= 0.0 {
        return Err(FlockError::InsufficientData {
            covered: span,
            required: 2.0 * window,
        });
    }
    let start = records.partition_point(|r| r.t < last - window);
    let tail = &records[start..];
    if tail.len() < 2 {
        return Err(FlockError::InsufficientData {
            covered: span,
            required: 2.0 * window,
        });
    }
    Ok(tail)
}

pub fn tail_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

/// Smallest eigenvalue of the second-moment matrix `(1/N) Σ x_i x_iᵀ`, i.e. the
/// mean squared distance to the best-fitting plane through the origin.
pub fn plane_fit_residual(ens: &Ensemble) -> f64 {
    let n = ens.len() as f64;
    let mut m = [[0.0; 3]; 3];
    for x in ens.positions() {
        for (r, row) in m.iter_mut().enumerate() {
            for (c, e) in row.iter_mut().enumerate() {
                *e += x[r] * x[c] / n;
            }
        }
    }
    min_symmetric_eigenvalue(m)
}

/// Closed-form smallest eigenvalue of a symmetric 3×3 matrix.
fn min_symmetric_eigenvalue(a: [[f64; 3]; 3]) -> f64 {
    let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    if p1 == 0.0 {
        return a[0][0].min(a[1][1]).min(a[2][2]);
    }
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b: [[f64; 3]; 3] = std::array::from_fn(|r| {
        std::array::from_fn(|c| (a[r][c] - if r == c { q } else { 0.0 }) / p)
    });
    let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let phi = (det_b / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let smallest = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    smallest.max(0.0)
}

/// Labels the asymptotic regime from the tail of a diagnostics series and the
/// matching snapshots.
pub fn classify(
    records: &[DiagnosticsRecord],
    snapshots: &[&Ensemble],
    params: &ClassifyParams,
) -> Result<RegimeLabel> {
    let tail_records = tail(records, params.tail_fraction)?;
    if tail_records
        .iter()
        .all(|r| r.max_diameter < params.tol_rendezvous)
    {
        return Ok(RegimeLabel::Rendezvous);
    }
    if tail_records
        .iter()
        .all(|r| r.centroid_norm < params.tol_centroid)
    {
        return Ok(RegimeLabel::UniformDeployment);
    }
    let rhos: Option<Vec<f64>> = tail_records.iter().map(|r| r.rho).collect();
    if let Some(rhos) = rhos {
        let lo = rhos.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = rhos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let r0 = tail_mean(rhos.iter().copied());
        if hi - lo < params.tol_rho && r0 > params.tol_rho {
            return Ok(RegimeLabel::Formation { r0 });
        }
    }
    let ke = tail_mean(tail_records.iter().map(|r| r.e_kinetic));
    let aligned = tail_records.iter().all(|r| r.alignment < params.tol_align);
    let tail_snaps = &snapshots[snapshots.len().saturating_sub(tail_records.len())..];
    let planar = !tail_snaps.is_empty()
        && tail_snaps
            .iter()
            .all(|e| plane_fit_residual(e) < params.tol_plane);
    if ke > 1e-8 && aligned && planar {
        return Ok(RegimeLabel::GreatCircleMotion);
    }
    Ok(RegimeLabel::Undecided)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::rhs_main;
    use crate::geometry::{normalize, tangent_project};
    use proptest::prelude::*;

    fn ens(pairs: &[(Vec3, Vec3)]) -> Ensemble {
        Ensemble::new(pairs.iter().map(|&(x, v)| AgentState::new(x, v)).collect()).unwrap()
    }

    fn at_rest(xs: &[Vec3]) -> Ensemble {
        Ensemble::from_parts(xs, &vec![Vec3::ZERO; xs.len()]).unwrap()
    }

    #[test]
    fn kinetic_energy_examples() {
        let e = ens(&[(Vec3::E1, Vec3::E2), (Vec3::E2, Vec3::E3)]);
        assert_eq!(kinetic_energy(&e), 0.5);
        assert_eq!(kinetic_energy(&at_rest(&[Vec3::E1, Vec3::E2])), 0.0);
        let e = ens(&[(Vec3::E1, Vec3::E2), (Vec3::E2, Vec3::E3 * 2.0)]);
        assert_eq!(kinetic_energy(&e), 1.25);
    }

    #[test]
    fn config_energy_examples() {
        let attract = SigmaKernel::new(1.0, 0.0);
        assert_eq!(
            config_energy(&at_rest(&[Vec3::E1; 4]), attract).unwrap(),
            0.0
        );
        assert_eq!(
            config_energy(&at_rest(&[Vec3::E1, -Vec3::E1]), attract).unwrap(),
            0.5
        );
        let repel = SigmaKernel::new(0.0, 1.0);
        let e = at_rest(&[Vec3::E1, Vec3::E2]);
        let d = 2f64.sqrt();
        assert!((config_energy(&e, repel).unwrap() + 0.25 * d.ln()).abs() < 1e-15);
        assert!(matches!(
            config_energy(&at_rest(&[Vec3::E1, Vec3::E1]), repel),
            Err(FlockError::Singularity { .. })
        ));
    }

    #[test]
    fn total_energy_zero_at_rendezvous() {
        let e = at_rest(&[Vec3::E3; 3]);
        assert_eq!(
            total_energy(&e, SigmaKernel::new(1.0, 0.0), 0.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn alignment_examples() {
        let x = normalize(Vec3::new(1.0, -1.0, 2.0)).unwrap();
        let v = tangent_project(x, Vec3::E1).unwrap();
        assert_eq!(alignment_measure(&ens(&[(x, v); 3]), EPS_ANTI), 0.0);
        let e = ens(&[(Vec3::E1, Vec3::E2), (-Vec3::E1, Vec3::E3)]);
        assert_eq!(alignment_measure(&e, EPS_ANTI), 0.0);
        let e = ens(&[(Vec3::E1, Vec3::E3), (Vec3::E2, Vec3::E3)]);
        assert!(alignment_measure(&e, EPS_ANTI) < 1e-15);
    }

    #[test]
    fn centroid_and_rho_examples() {
        assert_eq!(centroid(&at_rest(&[Vec3::E1; 3])), Vec3::E1);
        assert_eq!(centroid(&at_rest(&[Vec3::E1, -Vec3::E1])), Vec3::ZERO);
        let basis = at_rest(&[Vec3::E1, Vec3::E2, Vec3::E3]);
        let third = 1.0 / 3.0;
        assert!(centroid(&basis).max_abs_diff(Vec3::new(third, third, third)) < 1e-16);

        assert_eq!(rho(&at_rest(&[Vec3::E2; 4]), EPS_CENTROID), Some(0.0));
        assert!((rho(&basis, EPS_CENTROID).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(rho(&at_rest(&[Vec3::E1, -Vec3::E1]), EPS_CENTROID), None);
    }

    #[test]
    fn diameter_examples() {
        assert_eq!(max_diameter(&at_rest(&[Vec3::E1; 3])), 0.0);
        assert_eq!(
            max_diameter(&at_rest(&[Vec3::E1, Vec3::E2, -Vec3::E1])),
            2.0
        );
        assert_eq!(max_diameter(&at_rest(&[Vec3::E1, Vec3::E2])), 2f64.sqrt());
        assert_eq!(
            min_pair_dist(&at_rest(&[Vec3::E1, Vec3::E2, -Vec3::E1])),
            2f64.sqrt()
        );
    }

    #[test]
    fn dissipation_without_flocking_is_conservative() {
        let x2 = normalize(Vec3::new(0.3, 0.8, 0.1)).unwrap();
        let e = ens(&[
            (Vec3::E1, Vec3::new(0.0, 0.2, 0.9)),
            (x2, tangent_project(x2, Vec3::new(-1.0, 0.0, 0.4)).unwrap()),
        ]);
        let pk = PsiKernel::Constant { value: 0.0 };
        let sk = SigmaKernel::new(1.0, 0.5);
        let rate = rhs_main(&e, pk, sk).unwrap();
        assert_eq!(dissipation_rate(&e, pk), 0.0);
        assert!(dissipation_residual(&e, pk, sk, &rate).unwrap() < 1e-14);
    }

    #[test]
    fn dissipation_vanishes_when_aligned() {
        let x = normalize(Vec3::new(0.1, 0.2, 0.9)).unwrap();
        let v = tangent_project(x, Vec3::E1).unwrap();
        let e = ens(&[(x, v); 3]);
        let pk = PsiKernel::ExpDecay { scale: 2.0 };
        let sk = SigmaKernel::new(1.0, 0.0);
        let rate = rhs_main(&e, pk, sk).unwrap();
        assert_eq!(dissipation_rate(&e, pk), 0.0);
        assert!(dissipation_residual(&e, pk, sk, &rate).unwrap() < 1e-15);
    }

    #[test]
    fn equilibrium_residual_examples() {
        let attract = SigmaKernel::new(1.0, 0.0);
        assert_eq!(
            equilibrium_residual(&at_rest(&[Vec3::E2; 3]), attract).unwrap(),
            0.0
        );
        assert_eq!(
            equilibrium_residual(&at_rest(&[Vec3::E1, -Vec3::E1]), SigmaKernel::new(1.0, 0.5))
                .unwrap(),
            0.0
        );
        let third = 2.0 * std::f64::consts::PI / 3.0;
        let tri: Vec<Vec3> = (0..3)
            .map(|k| {
                let a = k as f64 * third;
                Vec3::new(a.cos(), a.sin(), 0.0)
            })
            .collect();
        let r = equilibrium_residual(&at_rest(&tri), SigmaKernel::new(0.0, 1.0)).unwrap();
        assert!(r < 1e-12, "{r}");
    }

    #[test]
    fn centroid_identity_examples() {
        let e = at_rest(&[Vec3::E1, Vec3::E2, Vec3::E3]);
        let sk = SigmaKernel::new(0.0, 2.0);
        let c2 = centroid(&e).norm_sq();
        assert!((centroid_identity_residual(&e, sk) - 2.0 * 2.0 / 2.0 * c2).abs() < 1e-15);
        let e = at_rest(&[Vec3::E3; 5]);
        assert!(centroid_identity_residual(&e, SigmaKernel::new(1.0, 0.0)) < 1e-14);
    }

    #[test]
    fn two_agent_equilibrium_examples() {
        let [a, b] =
            two_agent_equilibrium_data(std::f64::consts::FRAC_PI_2, SigmaKernel::new(0.0, 1.0))
                .unwrap();
        assert_eq!(a.x, Vec3::E1);
        assert!(b.x.max_abs_diff(Vec3::E2) < 1e-16);
        assert!((a.v[2] - 0.5).abs() < 1e-15 && a.v == b.v);

        let [a, _] =
            two_agent_equilibrium_data(std::f64::consts::PI, SigmaKernel::new(0.0, 1.0)).unwrap();
        assert!(a.v.norm() < 1e-7);

        assert!(matches!(
            two_agent_equilibrium_data(1.0, SigmaKernel::new(1.0, 0.0)),
            Err(FlockError::Domain(_))
        ));
    }

    #[test]
    fn plane_fit_detects_great_circle() {
        let ring: Vec<Vec3> = (0..5)
            .map(|k| {
                let a = k as f64 * 1.3;
                normalize(Vec3::new(a.cos(), a.sin(), a.cos())).unwrap()
            })
            .collect();
        assert!(plane_fit_residual(&at_rest(&ring)) < 1e-15);
        assert!(plane_fit_residual(&at_rest(&[Vec3::E1, Vec3::E2, Vec3::E3])) > 0.3);
    }

    fn record(t: f64, diam: f64, cnorm: f64, rho: Option<f64>) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            e_total: 0.0,
            e_kinetic: 0.0,
            e_config: 0.0,
            alignment: 0.0,
            centroid_norm: cnorm,
            rho,
            max_diameter: diam,
            min_pair_dist: 0.0,
            max_constraint_drift: 0.0,
        }
    }

    #[test]
    fn classify_labels() {
        let p = ClassifyParams::default();
        let e = at_rest(&[Vec3::E1, Vec3::E2, Vec3::E3]);
        let snaps: Vec<&Ensemble> = vec![&e; 11];
        let series = |f: &dyn Fn(f64) -> DiagnosticsRecord| -> Vec<DiagnosticsRecord> {
            (0..=10).map(|k| f(k as f64)).collect()
        };
        let r = series(&|t| record(t, (-t).exp(), 1.0, Some(0.0)));
        assert_eq!(classify(&r, &snaps, &p).unwrap(), RegimeLabel::Rendezvous);
        let r = series(&|t| record(t, 1.5, 1e-4 / (1.0 + t), None));
        assert_eq!(
            classify(&r, &snaps, &p).unwrap(),
            RegimeLabel::UniformDeployment
        );
        let r = series(&|t| record(t, 1.5, 0.5, Some(1.25 + 0.01 / (1.0 + t))));
        match classify(&r, &snaps, &p).unwrap() {
            RegimeLabel::Formation { r0 } => assert!((r0 - 1.25).abs() < 0.01),
            other => panic!("{other:?}"),
        }
        let r = series(&|t| record(t, 1.5, 0.5, Some(1.0 + (t * 3.0).sin())));
        assert_eq!(classify(&r, &snaps, &p).unwrap(), RegimeLabel::Undecided);
        assert!(matches!(
            classify(&r[..1], &snaps, &p),
            Err(FlockError::InsufficientData { .. })
        ));
    }

    fn random_ensemble(raw: &[(f64, f64, f64)]) -> Ensemble {
        at_rest(
            &raw.iter()
                .map(|&(a, b, c)| normalize(Vec3::new(a, b, c)).unwrap())
                .collect::<Vec<_>>(),
        )
    }

    proptest! {
        #[test]
        fn rho_formulas_agree(raw in prop::collection::vec(
            (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
                .prop_filter("nonzero", |t| t.0.abs() + t.1.abs() + t.2.abs() > 0.1),
            2..9,
        )) {
            let e = random_ensemble(&raw);
            prop_assume!(centroid(&e).norm() > 1e-3);
            let a = rho(&e, EPS_CENTROID).unwrap();
            let b = rho_from_identity(&e, EPS_CENTROID).unwrap();
            prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
        }
    }
}
