//! Vector algebra on the unit sphere S² ⊂ ℝ³.
//!
//! The central object is the rotation operator `R(x1, x2)`: the rotation that
//! carries `x1` onto `x2` about the axis `x1 × x2`. It maps the tangent plane
//! at `x1` isometrically onto the tangent plane at `x2`, which is how velocities
//! of different agents are compared.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{FlockError, Result};

/// Below this chordal distance `R(x1, x2)` is the identity.
pub const EPS_SAME: f64 = 1e-12;
/// Default threshold on `|x1 + x2|` below which a pair counts as antipodal.
pub const EPS_ANTI: f64 = 1e-8;
/// Tolerance of the unit-norm preconditions.
pub const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);
    pub const E1: Vec3 = Vec3([1.0, 0.0, 0.0]);
    pub const E2: Vec3 = Vec3([0.0, 1.0, 0.0]);
    pub const E3: Vec3 = Vec3([0.0, 0.0, 1.0]);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        let [a, b, c] = self.0;
        let [d, e, f] = o.0;
        Vec3([b * f - c * e, c * d - a * f, a * e - b * d])
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Largest absolute componentwise difference.
    pub fn max_abs_diff(self, o: Vec3) -> f64 {
        (0..3)
            .map(|k| (self.0[k] - o.0[k]).abs())
            .fold(0.0, f64::max)
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3(a)
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.0
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3([self.0[0] / s, self.0[1] / s, self.0[2] / s])
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn outer(a: Vec3, b: Vec3) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, e) in row.iter_mut().enumerate() {
                *e = a.0[r] * b.0[c];
            }
        }
        Mat3(m)
    }

    pub fn scaled(self, s: f64) -> Mat3 {
        let mut m = self.0;
        m.iter_mut().flatten().for_each(|e| *e *= s);
        Mat3(m)
    }

    pub fn transpose(self) -> Mat3 {
        let m = self.0;
        Mat3(std::array::from_fn(|r| std::array::from_fn(|c| m[c][r])))
    }

    pub fn mul_vec(self, v: Vec3) -> Vec3 {
        Vec3(std::array::from_fn(|r| {
            self.0[r][0] * v.0[0] + self.0[r][1] * v.0[1] + self.0[r][2] * v.0[2]
        }))
    }

    pub fn mul_mat(self, o: Mat3) -> Mat3 {
        Mat3(std::array::from_fn(|r| {
            std::array::from_fn(|c| (0..3).map(|k| self.0[r][k] * o.0[k][c]).sum())
        }))
    }

    pub fn max_abs_diff(self, o: Mat3) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(o.0.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, o: Mat3) -> Mat3 {
        Mat3(std::array::from_fn(|r| {
            std::array::from_fn(|c| self.0[r][c] + o.0[r][c])
        }))
    }
}

impl Sub for Mat3 {
    type Output = Mat3;
    fn sub(self, o: Mat3) -> Mat3 {
        self + o.scaled(-1.0)
    }
}

fn check_unit(x: Vec3, name: &str) -> Result<()> {
    let n = x.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
        return Err(FlockError::domain(format!(
            "{name} must be a unit vector, |{name}| = {n}"
        )));
    }
    Ok(())
}

/// The rotation matrix `R(x1, x2)` taking `x1` to `x2`.
///
/// ```text
/// R = ⟨x1,x2⟩ I − x1 x2ᵀ + x2 x1ᵀ + (1 − ⟨x1,x2⟩) u uᵀ,   u = x1×x2 / |x1×x2|
/// ```
pub fn rotation_matrix(x1: Vec3, x2: Vec3, eps_anti: f64) -> Result<Mat3> {
    check_unit(x1, "x1")?;
    check_unit(x2, "x2")?;
    let sum = (x1 + x2).norm();
    if sum <= eps_anti {
        return Err(FlockError::Antipodal(sum));
    }
    if (x1 - x2).norm() <= EPS_SAME {
        return Ok(Mat3::IDENTITY);
    }
    let c = x1.dot(x2);
    let w = x1.cross(x2);
    let wn = w.norm();
    let base = Mat3::IDENTITY.scaled(c) - Mat3::outer(x1, x2) + Mat3::outer(x2, x1);
    if wn == 0.0 {
        // Distinct but numerically parallel: the axis term vanishes with its weight.
        return Ok(base);
    }
    let u = w / wn;
    Ok(base + Mat3::outer(u, u).scaled(1.0 - c))
}

/// `R_{x1→x2}(v) = R(x1, x2)·v`.
pub fn rotate(x1: Vec3, x2: Vec3, v: Vec3) -> Result<Vec3> {
    check_unit(x1, "x1")?;
    check_unit(x2, "x2")?;
    transport(x1, x2, v, EPS_ANTI).ok_or_else(|| FlockError::Antipodal((x1 + x2).norm()))
}

/// Unchecked rotation for inputs already known to be unit length.
///
/// Uses `(1 − c) u uᵀ = w wᵀ / (1 + c)` with `w = x1 × x2`, which avoids the
/// 0/0 in `u` as `x1 → x2`. Near the antipode `1 + c` is below the resolution
/// of `c`, so it is taken as `|x1 + x2|²/2` instead. Returns `None` for an
/// antipodal pair.
#[inline]
pub(crate) fn transport(x1: Vec3, x2: Vec3, v: Vec3, eps_anti: f64) -> Option<Vec3> {
    let sum = x1 + x2;
    if sum.norm() <= eps_anti {
        return None;
    }
    if (x1 - x2).norm() <= EPS_SAME {
        return Some(v);
    }
    let c = x1.dot(x2);
    let w = x1.cross(x2);
    let one_plus_c = 0.5 * sum.norm_sq();
    Some(v * c - x1 * x2.dot(v) + x2 * x1.dot(v) + w * (w.dot(v) / one_plus_c))
}

/// Removes the normal component of `v` at `x`.
pub fn tangent_project(x: Vec3, v: Vec3) -> Result<Vec3> {
    check_unit(x, "x")?;
    Ok(v - x * v.dot(x))
}

pub fn normalize(x: Vec3) -> Result<Vec3> {
    let n = x.norm();
    if !(n > 1e-12) || !n.is_finite() {
        return Err(FlockError::domain(format!(
            "cannot normalize vector of norm {n:e}"
        )));
    }
    Ok(x / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> impl Strategy<Value = Vec3> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("nonzero", |(a, b, c)| a * a + b * b + c * c > 1e-3)
            .prop_map(|(a, b, c)| normalize(Vec3::new(a, b, c)).unwrap())
    }

    fn non_antipodal_pair() -> impl Strategy<Value = (Vec3, Vec3)> {
        (unit(), unit()).prop_filter("not antipodal", |(a, b)| (*a + *b).norm() > 1e-3)
    }

    #[test]
    fn identity_for_equal_points() {
        let x = normalize(Vec3::new(0.3, -0.2, 0.9)).unwrap();
        assert_eq!(rotation_matrix(x, x, EPS_ANTI).unwrap(), Mat3::IDENTITY);
    }

    #[test]
    fn quarter_turn_about_e3() {
        let r = rotation_matrix(Vec3::E1, Vec3::E2, EPS_ANTI).unwrap();
        let expected = Mat3([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(r.max_abs_diff(expected) < 1e-15);
    }

    #[test]
    fn antipodal_rejected() {
        assert!(matches!(
            rotation_matrix(Vec3::E1, -Vec3::E1, EPS_ANTI),
            Err(FlockError::Antipodal(_))
        ));
        assert!(matches!(
            rotate(Vec3::E1, -Vec3::E1, Vec3::E2),
            Err(FlockError::Antipodal(_))
        ));
    }

    #[test]
    fn near_antipodal_transport_stays_a_rotation() {
        // Just outside the antipodal cutoff, 1 + <x1,x2> is below the resolution of c.
        for gap in [2e-8f64, 5e-8, 1e-7, 1e-6] {
            let x1 = Vec3::E1;
            let x2 = Vec3::new(-gap.cos(), gap.sin(), 0.0);
            let exact = rotation_matrix(x1, x2, EPS_ANTI).unwrap();
            for v in [Vec3::E2, Vec3::E3, Vec3::new(0.0, 0.6, -0.8)] {
                let t = transport(x1, x2, v, EPS_ANTI).unwrap();
                assert!(t.is_finite());
                assert!((t.norm() - v.norm()).abs() < 1e-7, "gap={gap}");
                assert!(t.max_abs_diff(exact.mul_vec(v)) < 1e-7, "gap={gap}");
            }
        }
    }

    #[test]
    fn non_unit_rejected() {
        assert!(matches!(
            rotation_matrix(Vec3::new(2.0, 0.0, 0.0), Vec3::E2, EPS_ANTI),
            Err(FlockError::Domain(_))
        ));
        assert!(tangent_project(Vec3::new(0.5, 0.0, 0.0), Vec3::E2).is_err());
    }

    #[test]
    fn rotate_basis() {
        let close = |a: Vec3, b: Vec3| a.max_abs_diff(b) < 1e-15;
        assert!(close(
            rotate(Vec3::E1, Vec3::E2, Vec3::E1).unwrap(),
            Vec3::E2
        ));
        assert!(close(
            rotate(Vec3::E1, Vec3::E2, Vec3::E3).unwrap(),
            Vec3::E3
        ));
        assert!(close(
            rotate(Vec3::E1, Vec3::E2, Vec3::E2).unwrap(),
            -Vec3::E1
        ));
    }

    #[test]
    fn projection_and_normalization() {
        assert_eq!(tangent_project(Vec3::E1, Vec3::E2).unwrap(), Vec3::E2);
        assert_eq!(tangent_project(Vec3::E1, Vec3::E1).unwrap(), Vec3::ZERO);
        assert_eq!(
            tangent_project(Vec3::E1, Vec3::new(1.0, 1.0, 0.0)).unwrap(),
            Vec3::E2
        );
        assert_eq!(normalize(Vec3::new(2.0, 0.0, 0.0)).unwrap(), Vec3::E1);
        let s = 1.0 / 3f64.sqrt();
        assert!(
            normalize(Vec3::new(1.0, 1.0, 1.0))
                .unwrap()
                .max_abs_diff(Vec3::new(s, s, s))
                < 1e-16
        );
        assert!(normalize(Vec3::ZERO).is_err());
    }

    proptest! {
        #[test]
        fn rotation_is_orthogonal((a, b) in non_antipodal_pair()) {
            let r = rotation_matrix(a, b, EPS_ANTI).unwrap();
            prop_assert!(r.transpose().mul_mat(r).max_abs_diff(Mat3::IDENTITY) < 1e-12);
        }

        #[test]
        fn reverse_rotation_is_transpose((a, b) in non_antipodal_pair()) {
            let r = rotation_matrix(a, b, EPS_ANTI).unwrap();
            let back = rotation_matrix(b, a, EPS_ANTI).unwrap();
            prop_assert!(back.max_abs_diff(r.transpose()) < 1e-12);
        }

        #[test]
        fn rotate_matches_matrix_and_preserves_tangency(
            (a, b) in non_antipodal_pair(),
            raw in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
        ) {
            let v = tangent_project(a, Vec3::new(raw.0, raw.1, raw.2)).unwrap();
            let r = rotation_matrix(a, b, EPS_ANTI).unwrap();
            let rv = rotate(a, b, v).unwrap();
            prop_assert!(rv.max_abs_diff(r.mul_vec(v)) < 1e-12);
            prop_assert!(rv.dot(b).abs() < 1e-10);
            prop_assert!((rv.norm() - v.norm()).abs() < 1e-12);
        }

        #[test]
        fn normalize_gives_unit(raw in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0)) {
            let x = Vec3::new(raw.0, raw.1, raw.2);
            prop_assume!(x.norm() > 1e-6);
            prop_assert!((normalize(x).unwrap().norm() - 1.0).abs() < 1e-15);
        }
    }
}
