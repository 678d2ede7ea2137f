//! Communication weight ψ and inter-particle force parameter σ.

use serde::{Deserialize, Serialize};

use crate::error::{FlockError, Result};

/// Collision guard on squared pair distance.
pub const DIST_SQ_FLOOR: f64 = 1e-14;

/// Communication rate as a function of chordal distance on [0, 2].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsiKernel {
    /// `ψ(d) = scale·(e^{2−d} − 1)`; vanishes at the antipode.
    ExpDecay { scale: f64 },
    /// `ψ(d) = value`. Not admissible (ψ(2) ≠ 0) unless `value == 0`.
    Constant { value: f64 },
}

impl PsiKernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PsiKernel::ExpDecay { scale } if !(scale > 0.0) => Err(FlockError::config(format!(
                "exp_decay scale must be positive, got {scale}"
            ))),
            PsiKernel::Constant { value } if !(value >= 0.0) => Err(FlockError::config(format!(
                "constant psi must be nonnegative, got {value}"
            ))),
            _ => Ok(()),
        }
    }

    /// Whether the kernel vanishes at distance 2 (required for the convergence theory).
    pub fn is_admissible(&self) -> bool {
        match *self {
            PsiKernel::ExpDecay { .. } => true,
            PsiKernel::Constant { value } => value == 0.0,
        }
    }

    pub fn eval(&self, dist: f64) -> Result<f64> {
        if dist < 0.0 || dist.is_nan() {
            return Err(FlockError::domain(format!("negative distance {dist}")));
        }
        Ok(self.eval_clamped(dist))
    }

    /// Evaluation with the distance clamped into [0, 2]; used on hot paths.
    #[inline]
    pub(crate) fn eval_clamped(&self, dist: f64) -> f64 {
        match *self {
            PsiKernel::ExpDecay { scale } => {
                let d = dist.clamp(0.0, 2.0);
                if d == 2.0 {
                    0.0
                } else {
                    scale * (2.0 - d).exp_m1()
                }
            }
            PsiKernel::Constant { value } => value,
        }
    }
}

/// `σ(s) = σ_a − σ_r / s^β` evaluated at squared distance `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaKernel {
    pub sigma_a: f64,
    pub sigma_r: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_beta() -> f64 {
    1.0
}

impl SigmaKernel {
    pub const fn new(sigma_a: f64, sigma_r: f64) -> Self {
        SigmaKernel {
            sigma_a,
            sigma_r,
            beta: 1.0,
        }
    }

    pub const fn with_beta(sigma_a: f64, sigma_r: f64, beta: f64) -> Self {
        SigmaKernel {
            sigma_a,
            sigma_r,
            beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_a >= 0.0) || !(self.sigma_r >= 0.0) {
            return Err(FlockError::config(format!(
                "sigma_a and sigma_r must be nonnegative, got ({}, {})",
                self.sigma_a, self.sigma_r
            )));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(FlockError::config(format!(
                "beta must be finite and nonnegative, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    pub fn has_repulsion(&self) -> bool {
        self.sigma_r > 0.0
    }

    /// Whether σ blows up at zero distance; β = 0 makes the repulsion a constant.
    pub fn is_singular(&self) -> bool {
        self.sigma_r > 0.0 && self.beta > 0.0
    }

    pub fn eval(&self, dist_sq: f64) -> Result<f64> {
        if self.is_singular() && !(dist_sq > DIST_SQ_FLOOR) {
            return Err(FlockError::Singularity {
                i: 0,
                j: 0,
                dist_sq,
            });
        }
        Ok(self.eval_unchecked(dist_sq))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, dist_sq: f64) -> f64 {
        if self.sigma_r == 0.0 {
            return self.sigma_a;
        }
        let rep = if self.beta == 1.0 {
            self.sigma_r / dist_sq
        } else {
            self.sigma_r / dist_sq.powf(self.beta)
        };
        self.sigma_a - rep
    }

    /// Pair potential `Φ(s)` with `Φ'(s) = σ(s)`, defining the configuration energy.
    ///
    /// For β = 1 the repulsive part is `−σ_r log s`; otherwise
    /// `σ_r s^{1−β} / (β − 1)`.
    pub fn potential(&self, dist_sq: f64) -> f64 {
        let attr = self.sigma_a * dist_sq;
        if self.sigma_r == 0.0 {
            return attr;
        }
        if self.beta == 1.0 {
            attr - self.sigma_r * dist_sq.ln()
        } else {
            attr + self.sigma_r * dist_sq.powf(1.0 - self.beta) / (self.beta - 1.0)
        }
    }

    /// Checked pair evaluation; attaches agent indices to a collision.
    #[inline]
    pub(crate) fn pair(&self, i: usize, j: usize, dist_sq: f64) -> Result<f64> {
        if self.is_singular() && !(dist_sq > DIST_SQ_FLOOR) {
            return Err(FlockError::Singularity { i, j, dist_sq });
        }
        Ok(self.eval_unchecked(dist_sq))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_values() {
        let k = PsiKernel::ExpDecay { scale: 2.0 };
        assert_eq!(k.eval(2.0).unwrap(), 0.0);
        let expected = 2.0 * (2f64.exp() - 1.0);
        assert!((k.eval(0.0).unwrap() - expected).abs() < 1e-12);
        assert!((k.eval(0.0).unwrap() - 12.7781).abs() < 1e-4);
        assert_eq!(PsiKernel::Constant { value: 1.0 }.eval(1.7).unwrap(), 1.0);
        assert!(k.eval(-0.1).is_err());
        // Slight overshoot past the antipode clamps to zero.
        assert_eq!(k.eval(2.0 + 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn psi_strictly_decreasing() {
        let k = PsiKernel::ExpDecay { scale: 2.0 };
        let grid: Vec<f64> = (0..=200).map(|i| i as f64 * 0.01).collect();
        for w in grid.windows(2) {
            assert!(k.eval(w[1]).unwrap() < k.eval(w[0]).unwrap());
        }
    }

    #[test]
    fn admissibility_flag() {
        assert!(PsiKernel::ExpDecay { scale: 2.0 }.is_admissible());
        assert!(!PsiKernel::Constant { value: 1.0 }.is_admissible());
        assert!(PsiKernel::ExpDecay { scale: 0.0 }.validate().is_err());
        assert!(PsiKernel::Constant { value: -1.0 }.validate().is_err());
    }

    #[test]
    fn sigma_values() {
        let k = SigmaKernel::new(1.0, 0.5);
        assert_eq!(k.eval(0.5).unwrap(), 0.0);
        assert_eq!(k.eval(1.0).unwrap(), 0.5);
        assert_eq!(SigmaKernel::new(0.0, 1.0).eval(2.0).unwrap(), -0.5);
    }

    #[test]
    fn sigma_beta_one_matches_closed_form() {
        let k = SigmaKernel::with_beta(1.3, 0.7, 1.0);
        for s in [0.1, 0.5, 1.0, 2.0, 4.0] {
            assert_eq!(k.eval(s).unwrap(), 1.3 - 0.7 / s);
        }
    }

    #[test]
    fn sigma_monotone_in_distance() {
        for beta in [0.5, 1.0, 2.0] {
            let k = SigmaKernel::with_beta(1.0, 0.3, beta);
            let mut prev = f64::NEG_INFINITY;
            for i in 1..=400 {
                let s = i as f64 * 0.01;
                let val = k.eval(s).unwrap();
                assert!(val > prev);
                prev = val;
            }
        }
    }

    #[test]
    fn sigma_collision_guard() {
        let k = SigmaKernel::new(1.0, 0.5);
        assert!(matches!(k.eval(1e-15), Err(FlockError::Singularity { .. })));
        // Pure attraction and constant repulsion have no singularity.
        assert_eq!(SigmaKernel::new(1.0, 0.0).eval(0.0).unwrap(), 1.0);
        assert_eq!(
            SigmaKernel::with_beta(5.0, 0.5, 0.0).eval(0.0).unwrap(),
            4.5
        );
    }

    #[test]
    fn potential_derivative_is_sigma() {
        for beta in [0.0, 0.5, 1.0, 1.25, 2.0, 5.0] {
            let k = SigmaKernel::with_beta(5.0, 0.5, beta);
            for s in [0.3, 1.0, 2.5] {
                let h = 1e-6;
                let fd = (k.potential(s + h) - k.potential(s - h)) / (2.0 * h);
                let exact = k.eval(s).unwrap();
                assert!(
                    (fd - exact).abs() < 1e-6 * (1.0 + exact.abs()),
                    "beta={beta} s={s}"
                );
            }
        }
    }
}
