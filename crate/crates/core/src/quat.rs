//! Quaternion kernels for the Kustaanheimo-Stiefel map.
//!
//! Conventions used throughout the crate:
//!
//! * A quaternion `Q = w + i x + j y + k z` doubles as an ordinary 4-vector
//!   `(w, x, y, z)` wherever a matrix acts on it.
//! * `star` flips the sign of the `k` component only; `bar` is full
//!   quaternionic conjugation (flips `i`, `j`, `k`).
//! * A quaternion with vanishing `k` component is identified with the
//!   3-vector made of its `(w, i, j)` parts. The squaring map
//!   `q = Q * star(Q)` always lands in that subspace.
//! * `K` is the fixed antisymmetric 4x4 matrix of right multiplication by
//!   `k`; the bilinear constraint reads `Q^T K P = 0`.

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

pub type Vec3 = Vector3<f64>;

/// Real quaternion, also used as a plain phase-space 4-vector.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const ZERO: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    pub const ONE: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Quaternion = Quaternion::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Quaternion = Quaternion::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 1.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Embed a 3-vector as a k-free quaternion, `(v0, v1, v2, 0)`.
    pub fn embed(v: &Vec3) -> Self {
        Self::new(v.x, v.y, v.z, 0.0)
    }

    /// The `(w, i, j)` components as a 3-vector; inverse of [`Quaternion::embed`]
    /// on the k-free subspace.
    pub fn vector_part(&self) -> Vec3 {
        Vec3::new(self.w, self.x, self.y)
    }

    /// Flip the sign of the k component only.
    pub fn star(&self) -> Self {
        Self::new(self.w, self.x, self.y, -self.z)
    }

    /// Quaternionic conjugation: flip i, j, k.
    pub fn bar(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    /// Euclidean 4-vector dot product.
    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    /// Right multiplication by `k`; equals `K * Q` with `Q` read as a 4-vector.
    pub fn right_mul_k(&self) -> Self {
        Self::new(-self.z, self.y, -self.x, self.w)
    }

    pub fn to_vector4(&self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    pub fn from_vector4(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_array(a: &[f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl std::ops::Add for Quaternion {
    type Output = Quaternion;
    fn add(self, rhs: Self) -> Self {
        Self::new(
            self.w + rhs.w,
            self.x + rhs.x,
            self.y + rhs.y,
            self.z + rhs.z,
        )
    }
}

impl std::ops::Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, rhs: Self) -> Self {
        Self::new(
            self.w - rhs.w,
            self.x - rhs.x,
            self.y - rhs.y,
            self.z - rhs.z,
        )
    }
}

impl std::ops::Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Hamilton product, `i*j = k`.
impl std::ops::Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, b: Self) -> Self {
        let a = self;
        Self::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

impl std::ops::Mul<f64> for Quaternion {
    type Output = Quaternion;
    fn mul(self, s: f64) -> Self {
        self.scale(s)
    }
}

/// One difference vector in regularised coordinates `(Q, P)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairState {
    pub q: Quaternion,
    pub p: Quaternion,
}

impl PairState {
    pub const fn new(q: Quaternion, p: Quaternion) -> Self {
        Self { q, p }
    }
}

/// The fixed antisymmetric matrix of the bilinear relation.
/// `K^T = -K`, `K^2 = -I`.
pub fn k_matrix() -> Matrix4<f64> {
    Matrix4::new(
        0.0, 0.0, 0.0, -1.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, -1.0, 0.0, 0.0, //
        1.0, 0.0, 0.0, 0.0,
    )
}

/// `Q^T K P = -Q0 P3 + Q1 P2 - Q2 P1 + Q3 P0`.
///
/// Equals the k component of `Q * star(P)`; fused multiplies keep the
/// cancellation sharp at scale.
pub fn bilinear(q: &Quaternion, p: &Quaternion) -> f64 {
    q.x.mul_add(p.y, -q.w * p.z) + q.z.mul_add(p.w, -q.y * p.x)
}

/// The squaring map `q = Q * star(Q)`, returned as the `(w, i, j)` parts.
/// The k component vanishes identically; `|q| = |Q|^2`.
pub fn ks_pos(q: &Quaternion) -> Vec3 {
    let (q0, q1, q2, q3) = (q.w, q.x, q.y, q.z);
    Vec3::new(
        q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3,
        2.0 * (q0 * q1 - q2 * q3),
        2.0 * (q0 * q2 + q1 * q3),
    )
}

/// Momentum projection `p = Q * star(P) / (2 |Q|^2)`, identified 3-vector.
///
/// Off the bilinear constraint the dropped k part equals
/// `bilinear(Q, P) / (2 |Q|^2)`.
pub fn ks_mom(q: &Quaternion, p: &Quaternion) -> Result<Vec3> {
    let r = q.norm_sq();
    if r == 0.0 {
        return Err(Error::CollisionPoint("ks_mom at |Q|^2 = 0".into()));
    }
    let prod = *q * p.star();
    Ok(prod.vector_part() / (2.0 * r))
}

/// Inverse of the KS projection with a fixed gauge.
///
/// Chart A (`q0 >= 0`) puts `Q3 = 0`; chart B (`q0 < 0`) puts `Q0 = 0`, with
/// the stable form `(|q| + q0)/2 = (q1^2 + q2^2) / (2(|q| - q0))` near the
/// negative axis and the fallback `Q = (0, sqrt(|q|), 0, 0)` exactly on it.
/// The momentum lifts as `P = star(2 bar(Q) * p_hat)`, which makes
/// `bilinear(Q, P) = 0` identically and `ks_mom` exact.
pub fn ks_lift(q: &Vec3, p: &Vec3) -> Result<PairState> {
    let r = q.norm();
    if r == 0.0 {
        return Err(Error::CollisionPoint("ks_lift at |q| = 0".into()));
    }
    let lifted_q = if q.x >= 0.0 {
        let q0 = ((r + q.x) / 2.0).sqrt();
        Quaternion::new(q0, q.y / (2.0 * q0), q.z / (2.0 * q0), 0.0)
    } else {
        let s = q.y * q.y + q.z * q.z;
        if s == 0.0 {
            Quaternion::new(0.0, r.sqrt(), 0.0, 0.0)
        } else {
            let q3 = (s / (2.0 * (r - q.x))).sqrt();
            Quaternion::new(0.0, q.z / (2.0 * q3), -q.y / (2.0 * q3), q3)
        }
    };
    // P = star(2 bar(Q) * p_hat) expanded component-wise with fused
    // multiplies; the p2/p1/p0 cancellations in Q^T K P then stay at the
    // last-bit level instead of accumulating through intermediate products.
    let (q0, q1, q2, q3) = (lifted_q.w, lifted_q.x, lifted_q.y, lifted_q.z);
    let lifted_p = Quaternion::new(
        2.0 * q0.mul_add(p.x, q1.mul_add(p.y, q2 * p.z)),
        2.0 * q0.mul_add(p.y, q3.mul_add(p.z, -q1 * p.x)),
        2.0 * q0.mul_add(p.z, -q2.mul_add(p.x, q3 * p.y)),
        2.0 * q1.mul_add(p.z, q3.mul_add(p.x, -q2 * p.y)),
    );
    Ok(PairState::new(lifted_q, lifted_p))
}

/// Momenta of the diagonal group action:
/// `L = Im(1/2 Q * bar(P) * k)` and `L_tau = Q^T K P`.
///
/// On the bilinear constraint `L` equals the ordinary `q x p`.
pub fn momentum_map(q: &Quaternion, p: &Quaternion) -> (Vec3, f64) {
    let l = (*q * p.bar() * Quaternion::K).scale(0.5);
    (l.vector_part(), bilinear(q, p))
}

/// Hat map, `hat(a) v = a x v`.
pub fn hat(a: &Vec3) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -a.z, a.y, //
        a.z, 0.0, -a.x, //
        -a.y, a.x, 0.0,
    )
}

/// Isoclinic generator built from the hat matrix:
/// `[[hat(a), -a], [a^T, 0]]`. Satisfies `isoc(a)^2 = -|a|^2 I` and
/// `[isoc(a), isoc(b)] = 2 isoc(a x b)`.
pub fn isoc(a: &Vec3) -> Matrix4<f64> {
    Matrix4::new(
        0.0, -a.z, a.y, -a.x, //
        a.z, 0.0, -a.x, -a.y, //
        -a.y, a.x, 0.0, -a.z, //
        a.x, a.y, a.z, 0.0,
    )
}

/// Element of the symmetry group acting diagonally on all `(Q, P)` pairs.
#[derive(Debug, Clone)]
pub struct GroupElement {
    /// Orthogonal 4x4 action `exp(isoc(a)) * exp(K tau)`.
    pub matrix: Matrix4<f64>,
    /// Left-isoclinic generator vector.
    pub axis: Vec3,
    /// Angle of the right-isoclinic `exp(K tau)` factor.
    pub tau: f64,
}

/// `S = exp(isoc(a)) * exp(K tau)` via the closed forms
/// `cos w I + sin(w)/w isoc(a)` (w = |a|) and `cos(tau) I + sin(tau) K`.
/// The two factors commute.
pub fn group_element(a: &Vec3, tau: f64) -> GroupElement {
    let w = a.norm();
    let left = if w == 0.0 {
        Matrix4::identity()
    } else {
        Matrix4::identity() * w.cos() + isoc(a) * (w.sin() / w)
    };
    let right = Matrix4::identity() * tau.cos() + k_matrix() * tau.sin();
    GroupElement {
        matrix: left * right,
        axis: *a,
        tau,
    }
}

impl GroupElement {
    /// The SO(3) rotation this action projects to under the KS map:
    /// rotation about `axis` by twice its length (the `exp(K tau)` factor
    /// projects to the identity).
    pub fn projected_rotation(&self) -> Matrix3<f64> {
        let theta = 2.0 * self.axis.norm();
        if theta == 0.0 {
            return Matrix3::identity();
        }
        let n = self.axis / self.axis.norm();
        Matrix3::identity() * theta.cos()
            + n * n.transpose() * (1.0 - theta.cos())
            + hat(&n) * theta.sin()
    }
}

/// Diagonal action `(Q_i, P_i) -> (S Q_i, S P_i)` on every pair.
pub fn apply_action(g: &GroupElement, state: &[PairState]) -> Vec<PairState> {
    state
        .iter()
        .map(|pair| {
            PairState::new(
                Quaternion::from_vector4(&(g.matrix * pair.q.to_vector4())),
                Quaternion::from_vector4(&(g.matrix * pair.p.to_vector4())),
            )
        })
        .collect()
}
