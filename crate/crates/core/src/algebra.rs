//! Quadratic invariants of the diagonal group action for m difference
//! vectors, and the induced Lie-Poisson algebra.
//!
//! Every invariant quadratic form on the phase space
//! `(Q_1..Q_m, P_1..P_m)` is `X^T M X` with
//! `M = ([W]_sym ⊗ I4 + [W]_skew ⊗ K) / 2` for an arbitrary real
//! `2m x 2m` matrix `W`, so the invariant span is `Mat(2m, R)` and has
//! dimension `4 m^2`. The canonical Poisson bracket induces on `W` the
//! bracket
//!
//! ```text
//! [A, B]_m = 2 [A~ J B~ - A^ J B^]_sym + 2 [A^ J B~ + A~ J B^]_skew
//! ```
//!
//! (`~` symmetric part, `^` antisymmetric part, `J` the standard symplectic
//! matrix), and `h(A) = J (A~ + i A^)` identifies the result with `u(m, m)`.
//!
//! Raw Gram values are stored; the self-dual normalisation (diagonal dot
//! products divided by sqrt(2)) is applied only when basis coordinates are
//! produced.

use crate::error::{Error, Result};
use crate::quat::{bilinear, PairState};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// An arbitrary real 2m x 2m matrix standing for an invariant quadratic form.
pub type WMatrix = DMatrix<f64>;

/// An element of u(m, m): complex Z with `(H Z)^dagger + H Z = 0`, `H = i J`.
pub type UAlgebraElement = DMatrix<Complex64>;

pub fn sym_part(w: &WMatrix) -> WMatrix {
    (w + w.transpose()) * 0.5
}

pub fn skew_part(w: &WMatrix) -> WMatrix {
    (w - w.transpose()) * 0.5
}

/// Standard symplectic matrix `J = [[0, I_m], [-I_m, 0]]` of size 2m.
pub fn j_block(m: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        j[(i, m + i)] = 1.0;
        j[(m + i, i)] = -1.0;
    }
    j
}

/// The raw quadratic invariants of a list of pairs: `G[u][v] = U . V`
/// (symmetric, positive semidefinite Gram matrix) and
/// `Omega[u][v] = U^T K V` (antisymmetric) over the ordered list
/// `(Q_1..Q_m, P_1..P_m)`.
#[derive(Debug, Clone)]
pub struct GramPair {
    pub m: usize,
    pub g: DMatrix<f64>,
    pub omega: DMatrix<f64>,
}

impl GramPair {
    /// The Hermitian matrix `M = G + i Omega`.
    pub fn hermitian(&self) -> DMatrix<Complex64> {
        let n = 2 * self.m;
        DMatrix::from_fn(n, n, |r, c| {
            Complex64::new(self.g[(r, c)], self.omega[(r, c)])
        })
    }

    /// Split a Hermitian matrix back into raw Gram values.
    pub fn from_hermitian(m: usize, h: &DMatrix<Complex64>) -> Self {
        let n = 2 * m;
        assert_eq!(h.nrows(), n);
        let g = DMatrix::from_fn(n, n, |r, c| h[(r, c)].re);
        let omega = DMatrix::from_fn(n, n, |r, c| h[(r, c)].im);
        Self { m, g, omega }
    }
}

/// Dot and K-products of all pairs `(Q_1..Q_m, P_1..P_m)`.
pub fn extract_invariants(state: &[PairState]) -> GramPair {
    let m = state.len();
    let n = 2 * m;
    let vecs: Vec<crate::quat::Quaternion> = state
        .iter()
        .map(|s| s.q)
        .chain(state.iter().map(|s| s.p))
        .collect();
    let mut g = DMatrix::zeros(n, n);
    let mut omega = DMatrix::zeros(n, n);
    for u in 0..n {
        for v in 0..n {
            g[(u, v)] = vecs[u].dot(&vecs[v]);
            omega[(u, v)] = bilinear(&vecs[u], &vecs[v]);
        }
    }
    GramPair { m, g, omega }
}

/// The induced bracket on 2m x 2m matrices.
/// Bilinear, antisymmetric, and equal to the canonical Poisson bracket of
/// the corresponding quadratic forms.
pub fn bracket_m(a: &WMatrix, b: &WMatrix) -> Result<WMatrix> {
    if a.nrows() != b.nrows() || !a.is_square() || !b.is_square() || !a.nrows().is_multiple_of(2) {
        return Err(Error::DimensionMismatch(format!(
            "bracket_m needs equal even square matrices, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let m = a.nrows() / 2;
    let j = j_block(m);
    let (at, ac) = (sym_part(a), skew_part(a));
    let (bt, bc) = (sym_part(b), skew_part(b));
    let sym_term = &at * &j * &bt - &ac * &j * &bc;
    let skew_term = &ac * &j * &bt + &at * &j * &bc;
    Ok(sym_part(&sym_term) * 2.0 + skew_part(&skew_term) * 2.0)
}

/// Exact canonical bracket of two quadratic forms `X^T Mq X`, `X^T Nq X` on
/// the 8m-dimensional phase space: the result has symmetric matrix
/// `2 (Mq J Nq - Nq J Mq)` with `J = J_{2m} ⊗ I_4`. This is the
/// independent oracle for every bracket claim.
pub fn canonical_quadratic_bracket(mq: &DMatrix<f64>, nq: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = mq.nrows();
    if !mq.is_square() || !nq.is_square() || nq.nrows() != n || !n.is_multiple_of(8) {
        return Err(Error::DimensionMismatch(format!(
            "canonical bracket needs equal square 8m x 8m inputs, got {}x{} and {}x{}",
            mq.nrows(),
            mq.ncols(),
            nq.nrows(),
            nq.ncols()
        )));
    }
    let m = n / 8;
    let j = j_block(m).kronecker(&DMatrix::<f64>::identity(4, 4));
    let mjq = mq * &j * nq;
    let njq = nq * &j * mq;
    Ok((mjq - njq) * 2.0)
}

/// The Lie algebra isomorphism `h(A) = J (A_sym + i A_skew)` into u(m, m).
pub fn to_u(a: &WMatrix) -> UAlgebraElement {
    let m = a.nrows() / 2;
    let j = j_block(m);
    let at = sym_part(a);
    let ac = skew_part(a);
    let z = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| {
        Complex64::new(at[(r, c)], ac[(r, c)])
    });
    let jc = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| Complex64::new(j[(r, c)], 0.0));
    jc * z
}

/// `|| (H Z)^dagger + H Z ||_F` with `H = i J`; zero exactly on u(m, m).
pub fn u_membership_residual(z: &UAlgebraElement) -> f64 {
    let m = z.nrows() / 2;
    let j = j_block(m);
    let h = DMatrix::from_fn(z.nrows(), z.ncols(), |r, c| Complex64::new(0.0, j[(r, c)]));
    let hz = &h * z;
    (hz.adjoint() + hz).norm()
}

/// Which family a basis invariant belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvariantKind {
    /// `Q_i . Q_j`, diagonal normalised by 1/sqrt(2).
    Alpha,
    /// `P_i . P_j`, diagonal normalised by 1/sqrt(2).
    Beta,
    /// `Q_i . P_j`, all ordered pairs.
    Gamma,
    /// `Q_i^T K Q_j`, i < j.
    A,
    /// `P_i^T K P_j`, i < j.
    B,
    /// `Q_i^T K P_j`, all ordered pairs.
    C,
}

#[derive(Debug, Clone, Copy)]
pub struct BasisElement {
    pub kind: InvariantKind,
    pub i: usize,
    pub j: usize,
}

/// The ordered normalised basis of the 4m^2 quadratic invariants:
/// alpha (i <= j), beta (i <= j), gamma (all i, j), a (i < j), b (i < j),
/// c (all i, j). The same order fixes trajectory columns.
#[derive(Debug, Clone)]
pub struct InvariantBasis {
    pub m: usize,
    pub elements: Vec<BasisElement>,
}

impl InvariantBasis {
    pub fn new(m: usize) -> Self {
        assert!(m >= 1);
        let mut elements = Vec::with_capacity(4 * m * m);
        for kind in [InvariantKind::Alpha, InvariantKind::Beta] {
            for i in 0..m {
                for j in i..m {
                    elements.push(BasisElement { kind, i, j });
                }
            }
        }
        for i in 0..m {
            for j in 0..m {
                elements.push(BasisElement {
                    kind: InvariantKind::Gamma,
                    i,
                    j,
                });
            }
        }
        for kind in [InvariantKind::A, InvariantKind::B] {
            for i in 0..m {
                for j in (i + 1)..m {
                    elements.push(BasisElement { kind, i, j });
                }
            }
        }
        for i in 0..m {
            for j in 0..m {
                elements.push(BasisElement {
                    kind: InvariantKind::C,
                    i,
                    j,
                });
            }
        }
        debug_assert_eq!(elements.len(), 4 * m * m);
        Self { m, elements }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn label(&self, k: usize) -> String {
        let e = &self.elements[k];
        let name = match e.kind {
            InvariantKind::Alpha => "alpha",
            InvariantKind::Beta => "beta",
            InvariantKind::Gamma => "gamma",
            InvariantKind::A => "a",
            InvariantKind::B => "b",
            InvariantKind::C => "c",
        };
        format!("{}{}{}", name, e.i + 1, e.j + 1)
    }

    /// The W matrix of basis element k; all are normalised against
    /// `<A, B> = Tr(A^dagger B) / 2` after mapping by `h`.
    pub fn w_matrix(&self, k: usize) -> WMatrix {
        let m = self.m;
        let e = &self.elements[k];
        let mut w = DMatrix::zeros(2 * m, 2 * m);
        match e.kind {
            InvariantKind::Alpha => {
                if e.i == e.j {
                    w[(e.i, e.i)] = SQRT2;
                } else {
                    w[(e.i, e.j)] = 1.0;
                    w[(e.j, e.i)] = 1.0;
                }
            }
            InvariantKind::Beta => {
                if e.i == e.j {
                    w[(m + e.i, m + e.i)] = SQRT2;
                } else {
                    w[(m + e.i, m + e.j)] = 1.0;
                    w[(m + e.j, m + e.i)] = 1.0;
                }
            }
            InvariantKind::Gamma => {
                w[(e.i, m + e.j)] = 1.0;
                w[(m + e.j, e.i)] = 1.0;
            }
            InvariantKind::A => {
                w[(e.i, e.j)] = 1.0;
                w[(e.j, e.i)] = -1.0;
            }
            InvariantKind::B => {
                w[(m + e.i, m + e.j)] = 1.0;
                w[(m + e.j, m + e.i)] = -1.0;
            }
            InvariantKind::C => {
                w[(e.i, m + e.j)] = 1.0;
                w[(m + e.j, e.i)] = -1.0;
            }
        }
        w
    }

    /// The symmetric 8m x 8m matrix of the quadratic form of element k:
    /// `(W_sym ⊗ I4 + W_skew ⊗ K) / 2`.
    pub fn form_matrix(&self, k: usize) -> DMatrix<f64> {
        let w = self.w_matrix(k);
        let i4 = DMatrix::<f64>::identity(4, 4);
        let km = DMatrix::from_fn(4, 4, |r, c| crate::quat::k_matrix()[(r, c)]);
        (sym_part(&w).kronecker(&i4) + skew_part(&w).kronecker(&km)) * 0.5
    }

    /// Normalised value of element k read off raw Gram data.
    pub fn value_from_gram(&self, k: usize, gram: &GramPair) -> f64 {
        let m = self.m;
        let e = &self.elements[k];
        match e.kind {
            InvariantKind::Alpha => {
                let v = gram.g[(e.i, e.j)];
                if e.i == e.j {
                    v / SQRT2
                } else {
                    v
                }
            }
            InvariantKind::Beta => {
                let v = gram.g[(m + e.i, m + e.j)];
                if e.i == e.j {
                    v / SQRT2
                } else {
                    v
                }
            }
            InvariantKind::Gamma => gram.g[(e.i, m + e.j)],
            InvariantKind::A => gram.omega[(e.i, e.j)],
            InvariantKind::B => gram.omega[(m + e.i, m + e.j)],
            InvariantKind::C => gram.omega[(e.i, m + e.j)],
        }
    }

    /// All 4m^2 normalised coordinates.
    pub fn coords(&self, gram: &GramPair) -> DVector<f64> {
        DVector::from_fn(self.len(), |k, _| self.value_from_gram(k, gram))
    }

    /// Raw (un-normalised) value of element k: the plain Gram entry, with
    /// no 1/sqrt(2) on the diagonals. This is the trajectory-file
    /// convention.
    pub fn raw_value_from_gram(&self, k: usize, gram: &GramPair) -> f64 {
        let m = self.m;
        let e = &self.elements[k];
        match e.kind {
            InvariantKind::Alpha => gram.g[(e.i, e.j)],
            InvariantKind::Beta => gram.g[(m + e.i, m + e.j)],
            InvariantKind::Gamma => gram.g[(e.i, m + e.j)],
            InvariantKind::A => gram.omega[(e.i, e.j)],
            InvariantKind::B => gram.omega[(m + e.i, m + e.j)],
            InvariantKind::C => gram.omega[(e.i, m + e.j)],
        }
    }

    /// Rebuild raw Gram data from normalised coordinates.
    pub fn gram_from_coords(&self, x: &DVector<f64>) -> GramPair {
        let m = self.m;
        let n = 2 * m;
        let mut g = DMatrix::zeros(n, n);
        let mut omega = DMatrix::zeros(n, n);
        for (k, e) in self.elements.iter().enumerate() {
            let v = x[k];
            match e.kind {
                InvariantKind::Alpha => {
                    if e.i == e.j {
                        g[(e.i, e.i)] = v * SQRT2;
                    } else {
                        g[(e.i, e.j)] = v;
                        g[(e.j, e.i)] = v;
                    }
                }
                InvariantKind::Beta => {
                    if e.i == e.j {
                        g[(m + e.i, m + e.i)] = v * SQRT2;
                    } else {
                        g[(m + e.i, m + e.j)] = v;
                        g[(m + e.j, m + e.i)] = v;
                    }
                }
                InvariantKind::Gamma => {
                    g[(e.i, m + e.j)] = v;
                    g[(m + e.j, e.i)] = v;
                }
                InvariantKind::A => {
                    omega[(e.i, e.j)] = v;
                    omega[(e.j, e.i)] = -v;
                }
                InvariantKind::B => {
                    omega[(m + e.i, m + e.j)] = v;
                    omega[(m + e.j, m + e.i)] = -v;
                }
                InvariantKind::C => {
                    omega[(e.i, m + e.j)] = v;
                    omega[(m + e.j, e.i)] = -v;
                }
            }
        }
        GramPair { m, g, omega }
    }

    /// Exact expansion of a W matrix over the basis.
    pub fn expand_w(&self, w: &WMatrix) -> DVector<f64> {
        let m = self.m;
        let ws = sym_part(w);
        let wk = skew_part(w);
        DVector::from_fn(self.len(), |k, _| {
            let e = &self.elements[k];
            match e.kind {
                InvariantKind::Alpha => {
                    if e.i == e.j {
                        ws[(e.i, e.i)] / SQRT2
                    } else {
                        ws[(e.i, e.j)]
                    }
                }
                InvariantKind::Beta => {
                    if e.i == e.j {
                        ws[(m + e.i, m + e.i)] / SQRT2
                    } else {
                        ws[(m + e.i, m + e.j)]
                    }
                }
                InvariantKind::Gamma => ws[(e.i, m + e.j)],
                InvariantKind::A => wk[(e.i, e.j)],
                InvariantKind::B => wk[(m + e.i, m + e.j)],
                InvariantKind::C => wk[(e.i, m + e.j)],
            }
        })
    }
}

/// Snap a structure constant to the nearest element of Z or Z/sqrt(2);
/// guard 1e-9. The brackets of normalised basis elements only produce such
/// values, so anything further away is left untouched (and will trip the
/// Jacobi check).
fn snap_coefficient(c: f64) -> f64 {
    let n = c.round();
    if (c - n).abs() <= 1e-9 {
        return n;
    }
    let k = (c * SQRT2).round();
    if (c - k / SQRT2).abs() <= 1e-9 {
        return k / SQRT2;
    }
    c
}

/// Structure constants of the 4m^2 normalised basis, stored sparsely:
/// `bracket(i, j)` lists `(k, c)` with `{x_i, x_j} = sum_k c x_k`.
#[derive(Debug, Clone)]
pub struct StructureTensor {
    pub m: usize,
    n: usize,
    /// Entries for i < j at index `i * n + j`.
    upper: Vec<Vec<(usize, f64)>>,
}

/// Expand the brackets of all basis pairs over the basis. Coefficients are
/// exact integers and sqrt(2) multiples after snapping.
pub fn structure_tensor(m: usize) -> StructureTensor {
    let basis = InvariantBasis::new(m);
    let n = basis.len();
    let ws: Vec<WMatrix> = (0..n).map(|k| basis.w_matrix(k)).collect();
    let mut upper = vec![Vec::new(); n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let br = bracket_m(&ws[i], &ws[j]).expect("same dimension by construction");
            let coeffs = basis.expand_w(&br);
            let entries: Vec<(usize, f64)> = coeffs
                .iter()
                .enumerate()
                .filter_map(|(k, &c)| {
                    let s = snap_coefficient(c);
                    (s != 0.0).then_some((k, s))
                })
                .collect();
            upper[i * n + j] = entries;
        }
    }
    StructureTensor { m, n, upper }
}

impl StructureTensor {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// `{x_i, x_j}` as a sparse coefficient list; antisymmetric in (i, j).
    pub fn bracket(&self, i: usize, j: usize) -> Vec<(usize, f64)> {
        use std::cmp::Ordering;
        match i.cmp(&j) {
            Ordering::Less => self.upper[i * self.n + j].clone(),
            Ordering::Greater => self.upper[j * self.n + i]
                .iter()
                .map(|&(k, c)| (k, -c))
                .collect(),
            Ordering::Equal => Vec::new(),
        }
    }

    /// Dense coefficient `c[k][i][j]` of basis element k in `{x_i, x_j}`.
    pub fn coefficient(&self, k: usize, i: usize, j: usize) -> f64 {
        self.bracket(i, j)
            .iter()
            .find(|&&(kk, _)| kk == k)
            .map_or(0.0, |&(_, c)| c)
    }

    /// The Poisson matrix `Pi(x)[i][j] = {x_i, x_j}(x)`, linear in x.
    pub fn poisson_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut pi = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let v: f64 = self.upper[i * self.n + j]
                    .iter()
                    .map(|&(k, c)| c * x[k])
                    .sum();
                pi[(i, j)] = v;
                pi[(j, i)] = -v;
            }
        }
        pi
    }

    /// Largest coefficient of `[[x_i, x_j], x_k] + cyclic` over all triples.
    pub fn jacobi_residual(&self) -> f64 {
        let n = self.n;
        let mut acc = vec![0.0f64; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    for &(a, b, c) in &[(i, j, k), (j, k, i), (k, i, j)] {
                        for (mid, c1) in self.bracket(a, b) {
                            for &(l, c2) in &self.bracket(mid, c) {
                                if acc[l] == 0.0 {
                                    touched.push(l);
                                }
                                acc[l] += c1 * c2;
                            }
                        }
                    }
                    for &l in &touched {
                        worst = worst.max(acc[l].abs());
                        acc[l] = 0.0;
                    }
                    touched.clear();
                }
            }
        }
        worst
    }
}

/// Coefficients `e_1..e_{2m}` of the characteristic polynomial of L,
/// `det(lambda I - L) = sum_k (-1)^k e_k lambda^{2m-k}` (so `e_1 = Tr L`
/// and `e_{2m} = det L`), computed from power sums via Newton's identities.
/// These are the Casimirs of the reduced bracket.
pub fn casimirs(l: &DMatrix<Complex64>) -> Vec<Complex64> {
    let n = l.nrows();
    assert!(l.is_square());
    let mut pow = l.clone();
    let mut p = Vec::with_capacity(n);
    p.push(pow.trace());
    for _ in 1..n {
        pow *= l;
        p.push(pow.trace());
    }
    let mut e = vec![Complex64::new(0.0, 0.0); n + 1];
    e[0] = Complex64::new(1.0, 0.0);
    for k in 1..=n {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            acc += e[k - i] * p[i - 1] * sign;
        }
        e[k] = acc / (k as f64);
    }
    e.remove(0);
    e
}

/// Roots of the monic polynomial with Casimir coefficients
/// (`prod (lambda - lambda_i)`), by Durand-Kerner iteration. Used to check
/// isospectrality of the Lax flow.
pub fn char_poly_roots(e: &[Complex64]) -> Vec<Complex64> {
    let n = e.len();
    // Monic coefficients a_k of lambda^{n-k}: a_k = (-1)^k e_k.
    let mut a = vec![Complex64::new(1.0, 0.0)];
    for (k, &ek) in e.iter().enumerate() {
        let sign = if (k + 1) % 2 == 1 { -1.0 } else { 1.0 };
        a.push(ek * sign);
    }
    let eval = |z: Complex64| -> Complex64 {
        let mut v = Complex64::new(0.0, 0.0);
        for &c in &a {
            v = v * z + c;
        }
        v
    };
    let radius = 1.0 + a.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32 + 1) * radius).collect();
    for _ in 0..200 {
        let mut shift = 0.0f64;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if j != i {
                    denom *= roots[i] - roots[j];
                }
            }
            let delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            shift = shift.max(delta.norm());
        }
        if shift < 1e-14 * radius {
            break;
        }
    }
    roots
}

/// Least-squares certification of membership in the invariant span.
/// Construction factors the flattened basis once; `decompose` then returns
/// coefficients and the Frobenius residual of the best approximation.
pub struct SpanProjector {
    pub basis: InvariantBasis,
    flat: DMatrix<f64>,
    svd: nalgebra::linalg::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl SpanProjector {
    pub fn new(m: usize) -> Self {
        let basis = InvariantBasis::new(m);
        let dim = 8 * m;
        let flat = DMatrix::from_fn(dim * dim, basis.len(), |r, k| {
            let f = basis.form_matrix(k);
            f[(r % dim, r / dim)]
        });
        let svd = nalgebra::linalg::SVD::new(flat.clone(), true, true);
        Self { basis, flat, svd }
    }

    pub fn decompose(&self, form: &DMatrix<f64>) -> Result<(DVector<f64>, f64)> {
        let dim = 8 * self.basis.m;
        if form.nrows() != dim || form.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {dim}x{dim} form, got {}x{}",
                form.nrows(),
                form.ncols()
            )));
        }
        let v = DVector::from_fn(dim * dim, |r, _| form[(r % dim, r / dim)]);
        let coeffs = self
            .svd
            .solve(&v, 1e-12)
            .expect("SVD least squares cannot fail");
        let residual = (&self.flat * &coeffs - v).norm();
        Ok((coeffs.column(0).into_owned(), residual))
    }
}

/// One-shot version of [`SpanProjector::decompose`].
pub fn decompose_in_span(form: &DMatrix<f64>, m: usize) -> Result<(DVector<f64>, f64)> {
    SpanProjector::new(m).decompose(form)
}

/// Rank of the real-linear map `h` on `Mat(2m, R)`; full rank `4 m^2`
/// certifies that `h` is a bijection onto u(m, m).
pub fn h_map_rank(m: usize) -> usize {
    let basis = InvariantBasis::new(m);
    let n = basis.len();
    let dim = 2 * m;
    let mat = DMatrix::from_fn(2 * dim * dim, n, |r, k| {
        let z = to_u(&basis.w_matrix(k));
        let entry = z[(r % dim, (r / dim) % dim)];
        if r < dim * dim {
            entry.re
        } else {
            entry.im
        }
    });
    let sv = nalgebra::linalg::SVD::new(mat, false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-9 * max.max(1.0)).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quat::Quaternion;
    use approx::assert_abs_diff_eq;

    fn basis_index(basis: &InvariantBasis, kind: InvariantKind, i: usize, j: usize) -> usize {
        basis
            .elements
            .iter()
            .position(|e| e.kind == kind && e.i == i && e.j == j)
            .unwrap()
    }

    #[test]
    fn extract_examples() {
        let state = [PairState::new(Quaternion::ONE, Quaternion::ZERO)];
        let gram = extract_invariants(&state);
        assert_eq!(gram.g[(0, 0)], 1.0);
        assert_eq!(gram.g[(1, 1)], 0.0);
        assert_eq!(gram.g[(0, 1)], 0.0);
        assert_eq!(gram.omega.norm(), 0.0);

        let state = [PairState::new(Quaternion::ONE, Quaternion::ZERO); 3];
        let gram = extract_invariants(&state);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(gram.g[(i, j)], 1.0);
                assert_eq!(gram.g[(3 + i, 3 + j)], 0.0);
                assert_eq!(gram.g[(i, 3 + j)], 0.0);
            }
        }
        assert_eq!(gram.omega.norm(), 0.0);
    }

    #[test]
    fn hermitian_diag_matches_bilinear() {
        let state = [
            PairState::new(
                Quaternion::new(0.3, -0.2, 0.8, 0.1),
                Quaternion::new(0.5, 0.4, -0.7, 0.9),
            ),
            PairState::new(
                Quaternion::new(-0.6, 0.1, 0.2, -0.3),
                Quaternion::new(0.2, -0.8, 0.4, 0.6),
            ),
            PairState::new(
                Quaternion::new(0.9, 0.7, -0.1, 0.4),
                Quaternion::new(-0.4, 0.3, 0.6, -0.2),
            ),
        ];
        let gram = extract_invariants(&state);
        let h = gram.hermitian();
        assert_abs_diff_eq!((h.adjoint() - &h).norm(), 0.0, epsilon = 1e-15);
        for (i, pair) in state.iter().enumerate() {
            assert_abs_diff_eq!(
                gram.omega[(i, 3 + i)],
                bilinear(&pair.q, &pair.p),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn bracket_m_antisymmetric() {
        let a = DMatrix::from_fn(6, 6, |r, c| ((r * 7 + c * 3) % 5) as f64 - 2.0);
        let b = DMatrix::from_fn(6, 6, |r, c| ((r * 2 + c * 5) % 7) as f64 - 3.0);
        let ab = bracket_m(&a, &b).unwrap();
        let ba = bracket_m(&b, &a).unwrap();
        assert_abs_diff_eq!((&ab + &ba).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bracket_m(&a, &a).unwrap().norm(), 0.0, epsilon = 1e-12);
        let id = DMatrix::<f64>::identity(6, 6);
        assert_abs_diff_eq!(bracket_m(&id, &id).unwrap().norm(), 0.0, epsilon = 1e-15);
        assert!(bracket_m(&a, &DMatrix::zeros(4, 4)).is_err());
    }

    #[test]
    fn reference_bracket_values() {
        let basis = InvariantBasis::new(3);
        // {alpha11, beta11} = 2 gamma11
        let a = basis.w_matrix(basis_index(&basis, InvariantKind::Alpha, 0, 0));
        let b = basis.w_matrix(basis_index(&basis, InvariantKind::Beta, 0, 0));
        let coeffs = basis.expand_w(&bracket_m(&a, &b).unwrap());
        let g11 = basis_index(&basis, InvariantKind::Gamma, 0, 0);
        for k in 0..basis.len() {
            let expect = if k == g11 { 2.0 } else { 0.0 };
            assert_abs_diff_eq!(coeffs[k], expect, epsilon = 1e-12);
        }
        // {alpha11, c31} = -sqrt(2) a13
        let c31 = basis.w_matrix(basis_index(&basis, InvariantKind::C, 2, 0));
        let coeffs = basis.expand_w(&bracket_m(&a, &c31).unwrap());
        let a13 = basis_index(&basis, InvariantKind::A, 0, 2);
        for k in 0..basis.len() {
            let expect = if k == a13 { -SQRT2 } else { 0.0 };
            assert_abs_diff_eq!(coeffs[k], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn canonical_bracket_reproduces_kepler_table() {
        let basis = InvariantBasis::new(1);
        let x1 = basis.form_matrix(basis_index(&basis, InvariantKind::Alpha, 0, 0));
        let x2 = basis.form_matrix(basis_index(&basis, InvariantKind::Beta, 0, 0));
        let x3 = basis.form_matrix(basis_index(&basis, InvariantKind::Gamma, 0, 0));
        let br = canonical_quadratic_bracket(&x1, &x2).unwrap();
        assert_abs_diff_eq!((br - x3 * 2.0).norm(), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(
            canonical_quadratic_bracket(&x1, &x1).unwrap().norm(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn canonical_bracket_m3_spot_value() {
        let basis = InvariantBasis::new(3);
        let a11 = basis.form_matrix(basis_index(&basis, InvariantKind::Alpha, 0, 0));
        let c31 = basis.form_matrix(basis_index(&basis, InvariantKind::C, 2, 0));
        let a13 = basis.form_matrix(basis_index(&basis, InvariantKind::A, 0, 2));
        let br = canonical_quadratic_bracket(&a11, &c31).unwrap();
        assert_abs_diff_eq!((br + a13 * SQRT2).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn to_u_membership_and_examples() {
        let id = DMatrix::<f64>::identity(6, 6);
        let z = to_u(&id);
        let j = j_block(3);
        for r in 0..6 {
            for c in 0..6 {
                assert_eq!(z[(r, c)], Complex64::new(j[(r, c)], 0.0));
            }
        }
        assert_abs_diff_eq!(u_membership_residual(&z), 0.0, epsilon = 1e-15);

        let mut e11 = DMatrix::<f64>::zeros(6, 6);
        e11[(0, 0)] = 1.0;
        assert_abs_diff_eq!(u_membership_residual(&to_u(&e11)), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn homomorphism_sample() {
        let a = DMatrix::from_fn(6, 6, |r, c| ((r * 5 + c * 11) % 7) as f64 / 3.0 - 1.0);
        let b = DMatrix::from_fn(6, 6, |r, c| ((r * 3 + c * 13) % 11) as f64 / 5.0 - 1.0);
        let lhs = to_u(&bracket_m(&a, &b).unwrap());
        let (ha, hb) = (to_u(&a), to_u(&b));
        let rhs = &ha * &hb - &hb * &ha;
        assert_abs_diff_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn structure_tensor_m1_matches_kepler_matrix() {
        // Basis order for m = 1: (alpha11, beta11, gamma11, c11) with
        // c11 = Q^T K P = -X4; X4 is central so the sign never enters the
        // nonzero part of the table.
        let st = structure_tensor(1);
        assert_eq!(st.dim(), 4);
        let x = DVector::from_vec(vec![0.9, 1.7, -0.3, 0.4]);
        let pi = st.poisson_matrix(&x);
        let expected = crate::kepler::kepler_poisson_matrix(&crate::kepler::KeplerInvariants {
            x1: x[0],
            x2: x[1],
            x3: x[2],
            x4: -x[3],
        });
        for r in 0..4 {
            for c in 0..4 {
                assert_abs_diff_eq!(pi[(r, c)], expected[(r, c)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn structure_tensor_m3_spot_value() {
        let st = structure_tensor(3);
        let basis = InvariantBasis::new(3);
        let i = basis_index(&basis, InvariantKind::Alpha, 0, 0);
        let j = basis_index(&basis, InvariantKind::Beta, 0, 0);
        let g11 = basis_index(&basis, InvariantKind::Gamma, 0, 0);
        let entries = st.bracket(i, j);
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0], (g11, 2.0));
    }

    #[test]
    fn jacobi_small_m() {
        assert!(structure_tensor(1).jacobi_residual() <= 1e-12);
        assert!(structure_tensor(3).jacobi_residual() <= 1e-12);
    }

    #[test]
    fn dimension_count() {
        for m in [1, 3, 6] {
            assert_eq!(InvariantBasis::new(m).len(), 4 * m * m);
        }
    }

    #[test]
    fn basis_invariant_under_many_group_elements() {
        let residual = crate::verify::action_invariance_residual(3, 1000, 7);
        assert!(residual <= 1e-12, "worst invariant change {residual}");
    }

    #[test]
    fn casimir_examples() {
        let zero = DMatrix::<Complex64>::zeros(6, 6);
        for e in casimirs(&zero) {
            assert_eq!(e, Complex64::new(0.0, 0.0));
        }

        // m = 1 real case: e2 = det L = 2 X1 X2 - X3^2.
        let (x1, x2, x3, c11) = (0.8, 1.3, -0.4, 0.25);
        let basis = InvariantBasis::new(1);
        let gram = basis.gram_from_coords(&DVector::from_vec(vec![x1, x2, x3, c11]));
        let jc = DMatrix::from_fn(2, 2, |r, c| Complex64::new(j_block(1)[(r, c)], 0.0));
        let l = jc * gram.hermitian();
        let e = casimirs(&l);
        assert_abs_diff_eq!(e[0].im, -2.0 * c11, epsilon = 1e-14);
        // det of the complex L picks up the c11^2 part as well.
        assert_abs_diff_eq!(
            e[1].re,
            2.0 * x1 * x2 - x3 * x3 - c11 * c11,
            epsilon = 1e-13
        );
    }

    #[test]
    fn char_roots_match_casimirs() {
        let l = DMatrix::from_fn(4, 4, |r, c| {
            Complex64::new(
                ((r * 3 + c) % 5) as f64 - 2.0,
                ((r + c * 2) % 3) as f64 - 1.0,
            )
        });
        let e = casimirs(&l);
        let roots = char_poly_roots(&e);
        let sum: Complex64 = roots.iter().sum();
        assert_abs_diff_eq!((sum - e[0]).norm(), 0.0, epsilon = 1e-9);
        let prod: Complex64 = roots.iter().product();
        assert_abs_diff_eq!((prod - e[3]).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn decompose_examples() {
        let proj = SpanProjector::new(3);
        let basis = &proj.basis;
        let k = basis_index(basis, InvariantKind::Alpha, 0, 1);
        let (coeffs, residual) = proj.decompose(&basis.form_matrix(k)).unwrap();
        assert!(residual <= 1e-12);
        for i in 0..basis.len() {
            let expect = if i == k { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(coeffs[i], expect, epsilon = 1e-10);
        }

        // Deliberately non-invariant form: Q1^T diag(1,0,0,0) Q1.
        let mut bad = DMatrix::<f64>::zeros(24, 24);
        bad[(0, 0)] = 1.0;
        let (_, residual) = proj.decompose(&bad).unwrap();
        assert!(residual > 1e-6, "non-invariant form must not decompose");
    }

    #[test]
    fn h_map_full_rank_small() {
        assert_eq!(h_map_rank(1), 4);
        assert_eq!(h_map_rank(3), 36);
    }
}
