//! Projected gradient descent of the configuration energy on (S²)^N.
//!
//! Used to estimate `E_C^min`, which shifts the energy functional to be
//! nonnegative, and to sample equilibria of the cooperative control (critical
//! points of `E_C`, where every `coop_force` vanishes).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{config_energy_euclidean_gradient, config_energy_of};
use crate::dynamics::Ensemble;
use crate::error::{FlockError, Result};
use crate::geometry::Vec3;
use crate::kernels::SigmaKernel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step0: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        MinimizeConfig {
            max_iters: 50_000,
            grad_tol: 1e-10,
            step0: 0.1,
            restarts: 16,
            seed: 0,
        }
    }
}

impl MinimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) || self.restarts == 0 || !(self.step0 > 0.0) {
            return Err(FlockError::config(
                "minimizer needs grad_tol > 0, step0 > 0 and at least one restart",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub positions: Vec<Vec3>,
    pub e_c_min: f64,
    pub grad_norm: f64,
    pub restart: usize,
    pub iterations: usize,
}

impl Minimum {
    fn from_descent(d: Descent, restart: usize) -> Self {
        Minimum {
            positions: d.positions,
            e_c_min: d.energy,
            grad_norm: d.grad_norm,
            restart,
            iterations: d.iterations,
        }
    }
}

/// Riemannian gradient of `E_C`: the Euclidean gradient projected onto each tangent plane.
pub fn config_energy_gradient(xs: &[Vec3], sk: SigmaKernel) -> Result<Vec<Vec3>> {
    let g = config_energy_euclidean_gradient(xs, sk)?;
    Ok(g.into_iter()
        .zip(xs)
        .map(|(gi, &xi)| gi - xi * gi.dot(xi))
        .collect())
}

fn norm_of(g: &[Vec3]) -> f64 {
    g.iter().map(|v| v.norm_sq()).sum::<f64>().sqrt()
}

/// Uniform random point set on the sphere from normalized Gaussians.
pub fn random_configuration(n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| loop {
            let v = Vec3::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            );
            let len = v.norm();
            if len > 1e-6 {
                break v / len;
            }
        })
        .collect()
}

fn restart_seed(seed: u64, restart: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(restart as u64)
}

struct Descent {
    positions: Vec<Vec3>,
    energy: f64,
    grad_norm: f64,
    iterations: usize,
}

/// Gradient descent with normalization as retraction. Each line search starts
/// from the Barzilai-Borwein step and backtracks until Armijo holds. Stops once
/// the Riemannian gradient norm drops to `grad_tol`.
fn descend(mut xs: Vec<Vec3>, sk: SigmaKernel, cfg: &MinimizeConfig) -> Result<Descent> {
    const ARMIJO_C: f64 = 1e-4;
    const ENERGY_RESOLUTION: f64 = 1e-13;
    let mut energy = config_energy_of(&xs, sk)?;
    let mut grad = config_energy_gradient(&xs, sk)?;
    let mut gnorm = norm_of(&grad);
    let mut alpha = cfg.step0;
    let mut iterations = 0;
    while gnorm > cfg.grad_tol && iterations < cfg.max_iters {
        iterations += 1;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<Vec3> = xs
                .iter()
                .zip(&grad)
                .map(|(&x, &g)| {
                    let y = x - g * alpha;
                    y / y.norm()
                })
                .collect();
            // A collision is just a rejected step.
            if let Ok(e) = config_energy_of(&trial, sk) {
                if e < energy && e <= energy - ARMIJO_C * alpha * gnorm * gnorm {
                    let g = config_energy_gradient(&trial, sk)?;
                    accepted = Some((trial, e, g));
                    break;
                }
                // Close to a critical point the decrease falls below the
                // resolution of E; fall back to requiring a smaller gradient.
                if (e - energy).abs() <= ENERGY_RESOLUTION * energy.abs().max(1.0) {
                    let g = config_energy_gradient(&trial, sk)?;
                    if norm_of(&g) < gnorm {
                        accepted = Some((trial, e.min(energy), g));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some((trial, e, g)) = accepted else {
            break;
        };
        // BB1 step ⟨s,s⟩/⟨s,y⟩; plain doubling when the curvature estimate is unusable.
        let (ss, sy) = trial.iter().zip(&xs).zip(g.iter().zip(&grad)).fold(
            (0.0, 0.0),
            |(ss, sy), ((&x1, &x0), (&g1, &g0))| {
                let d = x1 - x0;
                (ss + d.norm_sq(), sy + d.dot(g1 - g0))
            },
        );
        alpha = if sy > 0.0 && (ss / sy).is_finite() {
            ss / sy
        } else {
            alpha * 2.0
        };
        xs = trial;
        energy = e;
        grad = g;
        gnorm = norm_of(&grad);
    }
    Ok(Descent {
        positions: xs,
        energy,
        grad_norm: gnorm,
        iterations,
    })
}

fn run_restarts(n: usize, sk: SigmaKernel, cfg: &MinimizeConfig) -> Vec<(usize, Result<Descent>)> {
    (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let start = random_configuration(n, restart_seed(cfg.seed, r));
            (r, descend(start, sk, cfg))
        })
        .collect()
}

/// σ constant and nonnegative: every pair potential is minimized at distance 0.
fn coincident_is_minimal(sk: SigmaKernel) -> bool {
    sk.sigma_r == 0.0 || (sk.beta == 0.0 && sk.sigma_a >= sk.sigma_r)
}

/// Estimates `E_C^min = min over (S²)^N of E_C` from `cfg.restarts` random starts.
///
/// When σ is a nonnegative constant (pure attraction, or β = 0 with σ_a ≥ σ_r) the
/// coincident configuration is an exact minimizer and is returned without iterating.
pub fn minimize_config_energy(n: usize, sk: SigmaKernel, cfg: &MinimizeConfig) -> Result<Minimum> {
    if n < 2 {
        return Err(FlockError::config("minimization needs at least two agents"));
    }
    sk.validate()?;
    cfg.validate()?;
    if coincident_is_minimal(sk) {
        return Ok(Minimum {
            positions: vec![Vec3::E1; n],
            e_c_min: 0.0,
            grad_norm: 0.0,
            restart: 0,
            iterations: 0,
        });
    }
    let mut best: Option<Minimum> = None;
    let mut best_grad = f64::INFINITY;
    for (r, res) in run_restarts(n, sk, cfg) {
        let d = res?;
        best_grad = best_grad.min(d.grad_norm);
        if d.grad_norm > cfg.grad_tol {
            continue;
        }
        if best.as_ref().is_none_or(|b| d.energy < b.e_c_min) {
            best = Some(Minimum::from_descent(d, r));
        }
    }
    best.ok_or(FlockError::NonConvergence {
        best_grad,
        grad_tol: cfg.grad_tol,
    })
}

/// Like [`minimize_config_energy`], but falls back to the lowest energy reached
/// when no restart meets the gradient tolerance. The second value reports
/// whether the returned point converged.
pub fn estimate_config_minimum(
    n: usize,
    sk: SigmaKernel,
    cfg: &MinimizeConfig,
) -> Result<(Minimum, bool)> {
    match minimize_config_energy(n, sk, cfg) {
        Ok(m) => Ok((m, true)),
        Err(FlockError::NonConvergence { .. }) => {
            let mut best: Option<Minimum> = None;
            for (r, res) in run_restarts(n, sk, cfg) {
                let d = res?;
                if best.as_ref().is_none_or(|b| d.energy < b.e_c_min) {
                    best = Some(Minimum::from_descent(d, r));
                }
            }
            // restarts >= 1 was validated above.
            Ok((best.expect("at least one restart"), false))
        }
        Err(e) => Err(e),
    }
}

/// Finds a configuration at which the cooperative control vanishes for every
/// agent, to `max_i |coop_force(i)| ≤ grad_tol`. Returns the lowest-index
/// restart that gets there.
pub fn find_equilibrium(n: usize, sk: SigmaKernel, cfg: &MinimizeConfig) -> Result<Vec<Vec3>> {
    if n < 2 {
        return Err(FlockError::config("equilibria need at least two agents"));
    }
    sk.validate()?;
    cfg.validate()?;
    // |coop_force(i)| = N |grad_i E_C|; tighten the descent accordingly.
    let inner = MinimizeConfig {
        grad_tol: cfg.grad_tol / n as f64,
        ..*cfg
    };
    let mut best_grad = f64::INFINITY;
    for (_, res) in run_restarts(n, sk, &inner) {
        let d = res?;
        let ens = Ensemble::from_parts(&d.positions, &vec![Vec3::ZERO; n])?;
        let residual = crate::diagnostics::equilibrium_residual(&ens, sk)?;
        if residual <= cfg.grad_tol {
            return Ok(d.positions);
        }
        best_grad = best_grad.min(residual);
    }
    Err(FlockError::NonConvergence {
        best_grad,
        grad_tol: cfg.grad_tol,
    })
}
