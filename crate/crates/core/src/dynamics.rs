//! The regularised spatial 3-body problem.
//!
//! Pair ordering: pair 1 holds the difference vector of bodies (2,3),
//! pair 2 of (3,1), pair 3 of (1,2); all indices cyclic. With `R_i = |Q_i|^2`
//! the regularised Hamiltonian is
//!
//! ```text
//! H = 1/8 sum_i (R_j R_k / mu_i) |P_i|^2
//!   - 1/4 sum_i (R_i / m_i) (Q_j * P_j~)^T (Q_k * P_k~)
//!   - sum_i m_j m_k R_j R_k  -  h R_1 R_2 R_3
//! ```
//!
//! (`~` is the star involution, `(i, j, k)` cyclic). On its zero level set
//! it generates the physical flow in fictitious time `s` with
//! `dt/ds = R_1 R_2 R_3`. The same dynamics is carried by the 36 quadratic
//! invariants, either through the Lax pair `dL/ds = [P, L]` on
//! `L = J M(G, Omega)` or through the structure-tensor contraction of the
//! Lie-Poisson equations; all three routes are kept and cross-checked.

use crate::algebra::{
    casimirs, extract_invariants, j_block, GramPair, InvariantBasis, InvariantKind, StructureTensor,
};
use crate::error::{Error, Result};
use crate::quat::{bilinear, ks_lift, ks_pos, momentum_map, PairState, Quaternion, Vec3};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Masses (G = 1) and the energy constant of the time transformation.
#[derive(Debug, Clone, Copy)]
pub struct ThreeBodyParams {
    pub masses: [f64; 3],
    pub h: f64,
}

impl ThreeBodyParams {
    pub fn new(masses: [f64; 3], h: f64) -> Self {
        assert!(masses.iter().all(|&m| m > 0.0), "masses must be positive");
        Self { masses, h }
    }

    /// Reduced mass of pair i (the two bodies other than body i).
    pub fn mu(&self, pair: usize) -> f64 {
        let (_, j, k) = cyclic(pair);
        self.masses[j] * self.masses[k] / (self.masses[j] + self.masses[k])
    }
}

/// Cyclic index triple starting at i.
fn cyclic(i: usize) -> (usize, usize, usize) {
    (i, (i + 1) % 3, (i + 2) % 3)
}

/// Full regularised phase point: three KS pairs plus parameters.
#[derive(Debug, Clone, Copy)]
pub struct RegState {
    pub pairs: [PairState; 3],
    pub params: ThreeBodyParams,
}

impl RegState {
    pub fn new(pairs: [PairState; 3], params: ThreeBodyParams) -> Self {
        Self { pairs, params }
    }

    pub fn separations(&self) -> [f64; 3] {
        [
            self.pairs[0].q.norm_sq(),
            self.pairs[1].q.norm_sq(),
            self.pairs[2].q.norm_sq(),
        ]
    }

    fn to_flat(self) -> [f64; 24] {
        let mut y = [0.0; 24];
        for i in 0..3 {
            y[4 * i..4 * i + 4].copy_from_slice(&self.pairs[i].q.to_array());
            y[12 + 4 * i..16 + 4 * i].copy_from_slice(&self.pairs[i].p.to_array());
        }
        y
    }

    fn from_flat(y: &[f64; 24], params: ThreeBodyParams) -> Self {
        let mut pairs = [PairState::default(); 3];
        for i in 0..3 {
            pairs[i].q = Quaternion::from_array(y[4 * i..4 * i + 4].try_into().unwrap());
            pairs[i].p = Quaternion::from_array(y[12 + 4 * i..16 + 4 * i].try_into().unwrap());
        }
        Self { pairs, params }
    }
}

/// The regularised Hamiltonian, evaluated with raw quaternion arithmetic.
pub fn heggie_hamiltonian(state: &RegState) -> f64 {
    let m = state.params.masses;
    let r = state.separations();
    let v: Vec<Quaternion> = state.pairs.iter().map(|p| p.q * p.p.star()).collect();
    let mut total = -state.params.h * r[0] * r[1] * r[2];
    for i in 0..3 {
        let (i, j, k) = cyclic(i);
        total += r[j] * r[k] / state.params.mu(i) * state.pairs[i].p.norm_sq() / 8.0;
        total -= r[i] / m[i] * v[j].dot(&v[k]) / 4.0;
        total -= m[j] * m[k] * r[j] * r[k];
    }
    total
}

/// Partial of the Hamiltonian in `R_i` with everything else held fixed.
fn dh_dr(state: &RegState, i: usize) -> f64 {
    let m = state.params.masses;
    let r = state.separations();
    let (i, j, k) = cyclic(i);
    let v_j = state.pairs[j].q * state.pairs[j].p.star();
    let v_k = state.pairs[k].q * state.pairs[k].p.star();
    r[k] / state.params.mu(j) * state.pairs[j].p.norm_sq() / 8.0
        + r[j] / state.params.mu(k) * state.pairs[k].p.norm_sq() / 8.0
        - v_j.dot(&v_k) / (4.0 * m[i])
        - m[i] * (m[j] * r[j] + m[k] * r[k])
        - state.params.h * r[j] * r[k]
}

/// Canonical right-hand side `(dQ_i/ds, dP_i/ds) = (dH/dP_i, -dH/dQ_i)`,
/// from analytic partial derivatives.
pub fn heggie_rhs(state: &RegState) -> [(Quaternion, Quaternion); 3] {
    let m = state.params.masses;
    let r = state.separations();
    let v: Vec<Quaternion> = state.pairs.iter().map(|p| p.q * p.p.star()).collect();
    let mut out = [(Quaternion::ZERO, Quaternion::ZERO); 3];
    for i in 0..3 {
        let (i, j, k) = cyclic(i);
        // Weight of v_i inside the two cross terms it appears in.
        let w = (v[k].scale(r[j] / m[j]) + v[j].scale(r[k] / m[k])).scale(-0.25);
        // dH/dP_i: kinetic part plus d(v_i . w)/dP with v_i = Q_i * star(P_i).
        let dq = state.pairs[i]
            .p
            .scale(r[j] * r[k] / (4.0 * state.params.mu(i)))
            + (state.pairs[i].q.bar() * w).star();
        // dH/dQ_i: radial part plus d(v_i . w)/dQ.
        let dp = state.pairs[i].q.scale(2.0 * dh_dr(state, i)) + w * state.pairs[i].p.star().bar();
        out[i] = (dq, -dp);
    }
    out
}

/// The energy constant that puts the configuration on the zero level set of
/// the regularised Hamiltonian; equals the physical energy of the
/// configuration when the pairs are consistently lifted.
pub fn energy_constant(pairs: &[PairState; 3], masses: &[f64; 3]) -> Result<f64> {
    let r: Vec<f64> = pairs.iter().map(|p| p.q.norm_sq()).collect();
    if r.contains(&0.0) {
        return Err(Error::CollisionPoint(
            "energy constant undefined at a binary collision".into(),
        ));
    }
    let probe = RegState::new(*pairs, ThreeBodyParams::new(*masses, 0.0));
    Ok(heggie_hamiltonian(&probe) / (r[0] * r[1] * r[2]))
}

/// Newtonian Hamiltonian in difference coordinates, evaluated from the KS
/// projections: `sum |p_i|^2/(2 mu_i) - sum p_j . p_k / m_i - sum m_j m_k / R_i`.
pub fn difference_hamiltonian(pairs: &[PairState; 3], masses: &[f64; 3]) -> Result<f64> {
    let mut q = [Vec3::zeros(); 3];
    let mut p = [Vec3::zeros(); 3];
    for i in 0..3 {
        q[i] = ks_pos(&pairs[i].q);
        p[i] = crate::quat::ks_mom(&pairs[i].q, &pairs[i].p)?;
    }
    let params = ThreeBodyParams::new(*masses, 0.0);
    let mut total = 0.0;
    for i in 0..3 {
        let (i, j, k) = cyclic(i);
        total += p[i].norm_squared() / (2.0 * params.mu(i));
        total -= p[j].dot(&p[k]) / masses[i];
        total -= masses[j] * masses[k] / q[i].norm();
    }
    Ok(total)
}

/// Total angular momentum of the diagonal action, `sum_i L^i`.
pub fn total_angular_momentum(pairs: &[PairState; 3]) -> Vec3 {
    pairs
        .iter()
        .map(|p| momentum_map(&p.q, &p.p).0)
        .fold(Vec3::zeros(), |acc, l| acc + l)
}

/// The three bilinear forms `c_ii = Q_i^T K P_i`; each is a first integral.
pub fn bilinears(pairs: &[PairState; 3]) -> [f64; 3] {
    [
        bilinear(&pairs[0].q, &pairs[0].p),
        bilinear(&pairs[1].q, &pairs[1].p),
        bilinear(&pairs[2].q, &pairs[2].p),
    ]
}

/// Sum of the projected difference vectors; zero on consistently ingested
/// states and monitored as a diagnostic along the flow.
pub fn sum_ks_pos(pairs: &[PairState; 3]) -> Vec3 {
    pairs
        .iter()
        .map(|p| ks_pos(&p.q))
        .fold(Vec3::zeros(), |acc, q| acc + q)
}

/// One row of the canonical trajectory.
#[derive(Debug, Clone, Copy)]
pub struct CanonicalSample {
    pub s: f64,
    pub t: f64,
    pub state: RegState,
}

/// Worst drifts observed along a canonical run.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConservationDrift {
    pub h_reg: f64,
    pub bilinear: f64,
    pub angular_momentum: f64,
    pub sum_q: f64,
}

#[derive(Debug, Clone)]
pub struct CanonicalFlow {
    pub samples: Vec<CanonicalSample>,
    pub drift: ConservationDrift,
}

/// Fixed-step RK4 on the canonical equations with physical time recovered
/// from `dt/ds = R_1 R_2 R_3`. Fails with `StepTooLarge` when the absolute
/// drift of the regularised Hamiltonian exceeds `h_guard`.
pub fn canonical_flow(
    state0: &RegState,
    s_end: f64,
    ds: f64,
    h_guard: f64,
) -> Result<CanonicalFlow> {
    assert!(ds > 0.0 && s_end > 0.0, "need positive ds and s_end");
    let params = state0.params;
    let rhs = |y: &[f64; 25]| -> [f64; 25] {
        let state = RegState::from_flat(y[..24].try_into().unwrap(), params);
        let derivs = heggie_rhs(&state);
        let mut dy = [0.0; 25];
        for i in 0..3 {
            dy[4 * i..4 * i + 4].copy_from_slice(&derivs[i].0.to_array());
            dy[12 + 4 * i..16 + 4 * i].copy_from_slice(&derivs[i].1.to_array());
        }
        let r = state.separations();
        dy[24] = r[0] * r[1] * r[2];
        dy
    };

    let n_steps = (s_end / ds).round() as usize;
    let mut y = [0.0; 25];
    y[..24].copy_from_slice(&state0.to_flat());

    let h0 = heggie_hamiltonian(state0);
    let c0 = bilinears(&state0.pairs);
    let l0 = total_angular_momentum(&state0.pairs);
    let q0 = sum_ks_pos(&state0.pairs);

    let mut drift = ConservationDrift::default();
    let mut samples = Vec::with_capacity(n_steps + 1);
    samples.push(CanonicalSample {
        s: 0.0,
        t: 0.0,
        state: *state0,
    });
    for step in 1..=n_steps {
        y = rk4_step_25(&y, ds, &rhs);
        let s = step as f64 * ds;
        let state = RegState::from_flat(y[..24].try_into().unwrap(), params);
        let dh = (heggie_hamiltonian(&state) - h0).abs();
        drift.h_reg = drift.h_reg.max(dh);
        let c = bilinears(&state.pairs);
        for i in 0..3 {
            drift.bilinear = drift.bilinear.max((c[i] - c0[i]).abs());
        }
        drift.angular_momentum = drift
            .angular_momentum
            .max((total_angular_momentum(&state.pairs) - l0).norm());
        drift.sum_q = drift.sum_q.max((sum_ks_pos(&state.pairs) - q0).norm());
        if dh > h_guard {
            return Err(Error::StepTooLarge {
                quantity: "H_reg",
                drift: dh,
                guard: h_guard,
                s,
            });
        }
        samples.push(CanonicalSample { s, t: y[24], state });
    }
    Ok(CanonicalFlow { samples, drift })
}

fn rk4_step_25(y: &[f64; 25], ds: f64, rhs: &impl Fn(&[f64; 25]) -> [f64; 25]) -> [f64; 25] {
    let k1 = rhs(y);
    let mut tmp = [0.0; 25];
    for i in 0..25 {
        tmp[i] = y[i] + 0.5 * ds * k1[i];
    }
    let k2 = rhs(&tmp);
    for i in 0..25 {
        tmp[i] = y[i] + 0.5 * ds * k2[i];
    }
    let k3 = rhs(&tmp);
    for i in 0..25 {
        tmp[i] = y[i] + ds * k3[i];
    }
    let k4 = rhs(&tmp);
    let mut out = [0.0; 25];
    for i in 0..25 {
        out[i] = y[i] + ds / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// `f_ij = 4 (gamma_ij gamma_ji - gamma_ii gamma_jj + beta_ij alpha_ij
///          - c_ij c_ji + b_ij a_ij + c_ii c_jj)` in raw invariants;
/// equals `4 (Q_i * star(P_i))^T (Q_j * star(P_j))` identically.
///
/// The `c_ii c_jj` term vanishes on bilinear-constrained states but is
/// required for the identity (and hence Hamiltonian equivalence) to hold
/// on arbitrary phase points.
pub fn f_pair(gram: &GramPair, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return Err(Error::IndexError("f_pair needs i != j".into()));
    }
    let m = gram.m;
    if i >= m || j >= m {
        return Err(Error::IndexError(format!(
            "f_pair indices ({i}, {j}) out of range for m = {m}"
        )));
    }
    let g = &gram.g;
    let om = &gram.omega;
    let gamma = |a: usize, b: usize| g[(a, m + b)];
    let c = |a: usize, b: usize| om[(a, m + b)];
    Ok(4.0
        * (gamma(i, j) * gamma(j, i) - gamma(i, i) * gamma(j, j) + g[(m + i, m + j)] * g[(i, j)]
            - c(i, j) * c(j, i)
            + om[(m + i, m + j)] * om[(i, j)]
            + c(i, i) * c(j, j)))
}

/// The Hamiltonian written in the raw quadratic invariants; agrees with
/// [`heggie_hamiltonian`] on any preimage state.
pub fn invariant_hamiltonian(gram: &GramPair, params: &ThreeBodyParams) -> f64 {
    assert_eq!(gram.m, 3, "three-body Hamiltonian needs m = 3");
    let m = params.masses;
    let alpha = |i: usize| gram.g[(i, i)];
    let beta = |i: usize| gram.g[(3 + i, 3 + i)];
    let mut total = -params.h * alpha(0) * alpha(1) * alpha(2);
    for i in 0..3 {
        let (i, j, k) = cyclic(i);
        total += alpha(j) * alpha(k) / params.mu(i) * beta(i) / 8.0;
        total -= alpha(i) / m[i] * f_pair(gram, j, k).expect("distinct indices") / 16.0;
        total -= m[j] * m[k] * alpha(j) * alpha(k);
    }
    total
}

/// Hermitian gradient of the Hamiltonian in the self-dual convention:
/// off-diagonal entry `(u, v) = dH/dG[u][v] + i dH/dOmega[u][v]`, diagonal
/// entry `(u, u) = 2 dH/dG[u][u]`.
pub fn grad_dm(gram: &GramPair, params: &ThreeBodyParams) -> DMatrix<Complex64> {
    assert_eq!(gram.m, 3, "gradient implemented for m = 3");
    let m = params.masses;
    let g = &gram.g;
    let om = &gram.omega;
    let alpha = |i: usize| g[(i, i)];
    let beta = |i: usize| g[(3 + i, 3 + i)];
    let gamma = |a: usize, b: usize| g[(a, 3 + b)];
    let c = |a: usize, b: usize| om[(a, 3 + b)];
    let third = |a: usize, b: usize| 3 - a - b;

    let mut dm = DMatrix::<Complex64>::zeros(6, 6);
    for i in 0..3 {
        let (i, j, k) = cyclic(i);
        // 2 dH/d(alpha_ii)
        let dh_daii = alpha(k) / params.mu(j) * beta(j) / 8.0
            + alpha(j) / params.mu(k) * beta(k) / 8.0
            - f_pair(gram, j, k).expect("distinct indices") / (16.0 * m[i])
            - m[i] * (m[j] * alpha(j) + m[k] * alpha(k))
            - params.h * alpha(j) * alpha(k);
        dm[(i, i)] = Complex64::new(2.0 * dh_daii, 0.0);
        // 2 dH/d(beta_ii)
        dm[(3 + i, 3 + i)] = Complex64::new(alpha(j) * alpha(k) / (4.0 * params.mu(i)), 0.0);
    }
    for i in 0..3 {
        for j in (i + 1)..3 {
            let w = third(i, j);
            let scale = -alpha(w) / (4.0 * m[w]);
            // Q-Q block: alpha_ij and a_ij.
            dm[(i, j)] = Complex64::new(scale * g[(3 + i, 3 + j)], scale * om[(3 + i, 3 + j)]);
            dm[(j, i)] = dm[(i, j)].conj();
            // P-P block: beta_ij and b_ij.
            dm[(3 + i, 3 + j)] = Complex64::new(scale * g[(i, j)], scale * om[(i, j)]);
            dm[(3 + j, 3 + i)] = dm[(3 + i, 3 + j)].conj();
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            // Q-P block: gamma_ij and c_ij.
            let entry = if i == j {
                let mut re = 0.0;
                let mut im = 0.0;
                for l in 0..3 {
                    if l != i {
                        let w = third(i, l);
                        re += alpha(w) / (4.0 * m[w]) * gamma(l, l);
                        im -= alpha(w) / (4.0 * m[w]) * c(l, l);
                    }
                }
                Complex64::new(re, im)
            } else {
                let w = third(i, j);
                Complex64::new(
                    -alpha(w) / (4.0 * m[w]) * gamma(j, i),
                    alpha(w) / (4.0 * m[w]) * c(j, i),
                )
            };
            dm[(i, 3 + j)] = entry;
            dm[(3 + j, i)] = entry.conj();
        }
    }
    dm
}

/// Gradient of the Hamiltonian in the normalised basis coordinates, read
/// off the self-dual gradient matrix.
pub fn hamiltonian_gradient_coords(
    gram: &GramPair,
    params: &ThreeBodyParams,
    basis: &InvariantBasis,
) -> DVector<f64> {
    let dm = grad_dm(gram, params);
    let m = basis.m;
    DVector::from_fn(basis.len(), |k, _| {
        let e = &basis.elements[k];
        match e.kind {
            InvariantKind::Alpha => {
                if e.i == e.j {
                    dm[(e.i, e.i)].re / SQRT2
                } else {
                    dm[(e.i, e.j)].re
                }
            }
            InvariantKind::Beta => {
                if e.i == e.j {
                    dm[(m + e.i, m + e.i)].re / SQRT2
                } else {
                    dm[(m + e.i, m + e.j)].re
                }
            }
            InvariantKind::Gamma => dm[(e.i, m + e.j)].re,
            InvariantKind::A => dm[(e.i, e.j)].im,
            InvariantKind::B => dm[(m + e.i, m + e.j)].im,
            InvariantKind::C => dm[(e.i, m + e.j)].im,
        }
    })
}

/// Lax right-hand side `[P, L]` with `P = dM J`.
pub fn reduced_rhs(l: &DMatrix<Complex64>, dm: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if l.nrows() != dm.nrows() || !l.is_square() || !dm.is_square() || !l.nrows().is_multiple_of(2)
    {
        return Err(Error::DimensionMismatch(format!(
            "reduced_rhs needs equal even square matrices, got {}x{} and {}x{}",
            l.nrows(),
            l.ncols(),
            dm.nrows(),
            dm.ncols()
        )));
    }
    let m = l.nrows() / 2;
    let j = j_block(m);
    let jc = DMatrix::from_fn(l.nrows(), l.ncols(), |r, c| Complex64::new(j[(r, c)], 0.0));
    let p = dm * &jc;
    Ok(&p * l - l * p)
}

/// One row of the reduced (Lax) trajectory.
#[derive(Debug, Clone)]
pub struct ReducedSample {
    pub s: f64,
    pub t: f64,
    pub m: DMatrix<Complex64>,
    /// Characteristic coefficients `e_1..e_6` of `L = J M`.
    pub casimirs: Vec<Complex64>,
}

/// Integrate the reduced flow in Hermitian form,
/// `dM/ds = J dM_H M + (J dM_H M)^dagger` (which keeps M Hermitian by
/// construction and is equivalent to `dL/ds = [P, L]`), recording the six
/// characteristic coefficients each step. Fails with `StepTooLarge` when
/// any Casimir drifts beyond `casimir_guard` relative to its degree scale.
pub fn reduced_flow(
    m0: &DMatrix<Complex64>,
    params: &ThreeBodyParams,
    s_end: f64,
    ds: f64,
    casimir_guard: f64,
) -> Result<Vec<ReducedSample>> {
    assert!(ds > 0.0 && s_end > 0.0, "need positive ds and s_end");
    assert_eq!(m0.nrows(), 6, "three-body reduced flow needs a 6x6 M");
    let j = j_block(3);
    let jc = DMatrix::from_fn(6, 6, |r, c| Complex64::new(j[(r, c)], 0.0));

    let rhs = |m: &DMatrix<Complex64>| -> DMatrix<Complex64> {
        let gram = GramPair::from_hermitian(3, m);
        let dm = grad_dm(&gram, params);
        let half = &jc * dm * m;
        let adj = half.adjoint();
        half + adj
    };
    let dt_ds = |m: &DMatrix<Complex64>| m[(0, 0)].re * m[(1, 1)].re * m[(2, 2)].re;

    let l0 = &jc * m0;
    let cas0 = casimirs(&l0);
    let l_norm = l0.norm();
    let scales: Vec<f64> = cas0
        .iter()
        .enumerate()
        .map(|(k, e)| {
            e.norm()
                .max(l_norm.powi(k as i32 + 1))
                .max(f64::MIN_POSITIVE)
        })
        .collect();

    let n_steps = (s_end / ds).round() as usize;
    let mut m = m0.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(ReducedSample {
        s: 0.0,
        t,
        m: m.clone(),
        casimirs: cas0.clone(),
    });
    for step in 1..=n_steps {
        // RK4 on (M, t).
        let k1 = rhs(&m);
        let t1 = dt_ds(&m);
        let m2 = &m + &k1 * Complex64::new(0.5 * ds, 0.0);
        let k2 = rhs(&m2);
        let t2 = dt_ds(&m2);
        let m3 = &m + &k2 * Complex64::new(0.5 * ds, 0.0);
        let k3 = rhs(&m3);
        let t3 = dt_ds(&m3);
        let m4 = &m + &k3 * Complex64::new(ds, 0.0);
        let k4 = rhs(&m4);
        let t4 = dt_ds(&m4);
        m += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4)
            * Complex64::new(ds / 6.0, 0.0);
        t += ds / 6.0 * (t1 + 2.0 * t2 + 2.0 * t3 + t4);

        let s = step as f64 * ds;
        let cas = casimirs(&(&jc * &m));
        for (k, (e, e0)) in cas.iter().zip(cas0.iter()).enumerate() {
            let drift = (e - e0).norm() / scales[k];
            if drift > casimir_guard {
                return Err(Error::StepTooLarge {
                    quantity: "casimir",
                    drift,
                    guard: casimir_guard,
                    s,
                });
            }
        }
        out.push(ReducedSample {
            s,
            t,
            m: m.clone(),
            casimirs: cas,
        });
    }
    Ok(out)
}

/// The third representation: RK4 directly on the 4m^2 normalised basis
/// coordinates, `dx/ds = Pi(x) grad H(x)` with the structure tensor.
pub fn invariant_flow(
    x0: &DVector<f64>,
    params: &ThreeBodyParams,
    tensor: &StructureTensor,
    basis: &InvariantBasis,
    s_end: f64,
    ds: f64,
) -> Vec<(f64, f64, DVector<f64>)> {
    assert!(ds > 0.0 && s_end > 0.0, "need positive ds and s_end");
    assert_eq!(basis.m, 3);
    let rhs = |x: &DVector<f64>| -> DVector<f64> {
        let gram = basis.gram_from_coords(x);
        let grad = hamiltonian_gradient_coords(&gram, params, basis);
        tensor.poisson_matrix(x) * grad
    };
    let dt_ds = |x: &DVector<f64>| -> f64 {
        let gram = basis.gram_from_coords(x);
        gram.g[(0, 0)] * gram.g[(1, 1)] * gram.g[(2, 2)]
    };

    let n_steps = (s_end / ds).round() as usize;
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push((0.0, t, x.clone()));
    for step in 1..=n_steps {
        let k1 = rhs(&x);
        let t1 = dt_ds(&x);
        let x2 = &x + &k1 * (0.5 * ds);
        let k2 = rhs(&x2);
        let t2 = dt_ds(&x2);
        let x3 = &x + &k2 * (0.5 * ds);
        let k3 = rhs(&x3);
        let t3 = dt_ds(&x3);
        let x4 = &x + &k3 * ds;
        let k4 = rhs(&x4);
        let t4 = dt_ds(&x4);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (ds / 6.0);
        t += ds / 6.0 * (t1 + 2.0 * t2 + 2.0 * t3 + t4);
        out.push((step as f64 * ds, t, x.clone()));
    }
    out
}

/// Build a regularised state from body-frame initial data: shift to the
/// centre-of-mass frame, form difference vectors `q_jk = q_j - q_k` and
/// conjugate pair momenta `(p_j - p_k) / 3`, KS-lift every pair, and fix
/// the energy constant so the regularised Hamiltonian vanishes.
pub fn ingest_bodies(
    positions: &[Vec3; 3],
    velocities: &[Vec3; 3],
    masses: &[f64; 3],
) -> Result<RegState> {
    assert!(masses.iter().all(|&m| m > 0.0), "masses must be positive");
    let total_mass: f64 = masses.iter().sum();
    let v_com = (0..3)
        .map(|i| velocities[i] * masses[i])
        .fold(Vec3::zeros(), |a, b| a + b)
        / total_mass;
    let momenta: Vec<Vec3> = (0..3)
        .map(|i| (velocities[i] - v_com) * masses[i])
        .collect();

    let mut pairs = [PairState::default(); 3];
    for i in 0..3 {
        let (i, j, k) = cyclic(i);
        let dq = positions[j] - positions[k];
        if dq.norm() == 0.0 {
            return Err(Error::CollisionPoint(format!(
                "bodies {} and {} coincide",
                j + 1,
                k + 1
            )));
        }
        let dp = (momenta[j] - momenta[k]) / 3.0;
        pairs[i] = ks_lift(&dq, &dp)?;
    }
    let h = energy_constant(&pairs, masses)?;
    Ok(RegState::new(pairs, ThreeBodyParams::new(*masses, h)))
}

/// Reduced counterpart of a regularised state: Hermitian M, Lax L = J M.
#[derive(Debug, Clone)]
pub struct ReducedState {
    pub gram: GramPair,
    pub params: ThreeBodyParams,
}

impl ReducedState {
    pub fn from_reg(state: &RegState) -> Self {
        Self {
            gram: extract_invariants(&state.pairs),
            params: state.params,
        }
    }

    pub fn hermitian(&self) -> DMatrix<Complex64> {
        self.gram.hermitian()
    }

    pub fn lax(&self) -> DMatrix<Complex64> {
        let j = j_block(3);
        let jc = DMatrix::from_fn(6, 6, |r, c| Complex64::new(j[(r, c)], 0.0));
        jc * self.gram.hermitian()
    }
}
