//! Labelled tensor-product Hilbert spaces and dense complex linear algebra.
//!
//! Factors are addressed by name, so operators can be embedded and subsystems
//! traced out without hand-tracking index positions. Everything is dense
//! `nalgebra` over `Complex64`: the spaces here are at most a few dozen
//! dimensions, where dense algebra is simpler and faster than sparse.
//!
//! Flat indexing is row-major: the first factor varies slowest.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};

use crate::C64;

/// Matrix exponential Taylor series is applied only below this norm; larger
/// arguments are scaled down by powers of two and squared back up.
const TAYLOR_RADIUS: f64 = 0.5;

/// One named finite-dimensional subsystem.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Factor {
    pub name: String,
    pub dim: usize,
}

/// An ordered list of named factors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Space {
    factors: Vec<Factor>,
}

impl Space {
    /// Panics on duplicate names or zero-dimensional factors.
    pub fn new(factors: &[(&str, usize)]) -> Space {
        let mut seen = std::collections::HashSet::new();
        for (name, dim) in factors {
            assert!(*dim >= 1, "factor `{name}` must have dimension >= 1");
            assert!(seen.insert(*name), "duplicate factor name `{name}`");
        }
        Space {
            factors: factors
                .iter()
                .map(|(name, dim)| Factor { name: (*name).to_owned(), dim: *dim })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factors.iter().any(|f| f.name == name)
    }

    /// Panics if `name` is not a factor of this space.
    pub fn position(&self, name: &str) -> usize {
        self.factors
            .iter()
            .position(|f| f.name == name)
            .unwrap_or_else(|| panic!("unknown factor `{name}` in space {self}"))
    }

    pub fn dim_of(&self, name: &str) -> usize {
        self.factors[self.position(name)].dim
    }

    /// Panics if the two spaces share a factor name.
    pub fn tensor(&self, other: &Space) -> Space {
        for f in &other.factors {
            assert!(!self.contains(&f.name), "factor `{}` present in both spaces", f.name);
        }
        Space { factors: self.factors.iter().chain(&other.factors).cloned().collect() }
    }

    /// Row-major strides: `strides[i]` is the flat-index step of factor `i`.
    pub fn strides(&self) -> Vec<usize> {
        let n = self.factors.len();
        let mut s = vec![1; n];
        for i in (0..n.saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.factors[i + 1].dim;
        }
        s
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        assert_eq!(multi.len(), self.factors.len());
        let strides = self.strides();
        multi
            .iter()
            .zip(&self.factors)
            .zip(&strides)
            .map(|((&m, f), &s)| {
                assert!(m < f.dim, "index {m} out of range for factor `{}`", f.name);
                m * s
            })
            .sum()
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let strides = self.strides();
        self.factors
            .iter()
            .zip(&strides)
            .map(|(f, &s)| (flat / s) % f.dim)
            .collect()
    }

    fn select(&self, positions: &[usize]) -> Space {
        Space { factors: positions.iter().map(|&p| self.factors[p].clone()).collect() }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.factors.iter().map(|x| x.name.as_str()).collect();
        write!(f, "{}", names.join("*"))
    }
}

/// For each flat index of the sub-space spanned by `positions`, the
/// contribution to the full-space flat index.
fn sub_offsets(space: &Space, positions: &[usize]) -> Vec<usize> {
    let strides = space.strides();
    let dims: Vec<usize> = positions.iter().map(|&p| space.factors()[p].dim).collect();
    let sub_dim: usize = dims.iter().product();
    let mut offsets = vec![0usize; sub_dim];
    for (flat, offset) in offsets.iter_mut().enumerate() {
        let mut rem = flat;
        let mut acc = 0;
        for idx in (0..positions.len()).rev() {
            acc += (rem % dims[idx]) * strides[positions[idx]];
            rem /= dims[idx];
        }
        *offset = acc;
    }
    offsets
}

/// A (generally unnormalized) state vector on a labelled space.
#[derive(Clone, Debug)]
pub struct PureState {
    pub(crate) space: Space,
    pub(crate) amp: DVector<C64>,
}

impl PureState {
    pub fn new(space: Space, amp: DVector<C64>) -> PureState {
        assert_eq!(space.dim(), amp.len(), "amplitude length does not match space {space}");
        PureState { space, amp }
    }

    /// Computational basis vector |multi>.
    pub fn basis(space: Space, multi: &[usize]) -> PureState {
        let mut amp = DVector::zeros(space.dim());
        amp[space.flat_index(multi)] = C64::new(1.0, 0.0);
        PureState { space, amp }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amp
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Panics on (numerically) zero vectors.
    pub fn normalized(&self) -> PureState {
        let n = self.norm_sqr().sqrt();
        assert!(n > 1e-150, "cannot normalize a zero state");
        self.scaled(C64::new(1.0 / n, 0.0))
    }

    pub fn scaled(&self, z: C64) -> PureState {
        PureState { space: self.space.clone(), amp: &self.amp * z }
    }

    /// <self|other>.
    pub fn inner(&self, other: &PureState) -> C64 {
        assert_eq!(self.space, other.space, "inner product across different spaces");
        self.amp.dotc(&other.amp)
    }

    /// |<self|other>| with both sides normalized.
    pub fn normalized_overlap(&self, other: &PureState) -> f64 {
        self.inner(other).norm() / (self.norm_sqr() * other.norm_sqr()).sqrt()
    }

    pub fn tensor(&self, other: &PureState) -> PureState {
        PureState {
            space: self.space.tensor(&other.space),
            amp: self.amp.kronecker(&other.amp),
        }
    }

    /// Same state with factors permuted into the order given by `names`.
    pub fn reordered(&self, names: &[&str]) -> PureState {
        assert_eq!(names.len(), self.space.num_factors(), "reorder must list every factor");
        let positions: Vec<usize> = names.iter().map(|n| self.space.position(n)).collect();
        let new_space = self.space.select(&positions);
        let offsets = sub_offsets(&self.space, &positions);
        let mut amp = DVector::zeros(self.amp.len());
        for (new_flat, &old_flat) in offsets.iter().enumerate() {
            amp[new_flat] = self.amp[old_flat];
        }
        PureState { space: new_space, amp }
    }

    /// Project factor `name` onto basis index `k` and drop it. Unnormalized:
    /// the squared norm of the result is the probability weight of `k`.
    pub fn slice_factor(&self, name: &str, k: usize) -> PureState {
        assert!(self.space.num_factors() > 1, "cannot remove the last factor");
        let pos = self.space.position(name);
        assert!(k < self.space.factors()[pos].dim);
        let rest: Vec<usize> =
            (0..self.space.num_factors()).filter(|&p| p != pos).collect();
        let rest_space = self.space.select(&rest);
        let rest_offsets = sub_offsets(&self.space, &rest);
        let base = k * self.space.strides()[pos];
        let mut amp = DVector::zeros(rest_space.dim());
        for (flat, &off) in rest_offsets.iter().enumerate() {
            amp[flat] = self.amp[base + off];
        }
        PureState { space: rest_space, amp }
    }

    /// Probability weight of basis index `k` of factor `name`.
    pub fn factor_population(&self, name: &str, k: usize) -> f64 {
        let pos = self.space.position(name);
        let stride = self.space.strides()[pos];
        let dim = self.space.factors()[pos].dim;
        self.amp
            .iter()
            .enumerate()
            .filter(|(i, _)| (i / stride) % dim == k)
            .map(|(_, z)| z.norm_sqr())
            .sum()
    }

    /// |psi><psi| of the amplitudes as stored (not renormalized).
    pub fn to_density(&self) -> DensityMatrix {
        let n = self.amp.len();
        let mut mat = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                mat[(i, j)] = self.amp[i] * self.amp[j].conj();
            }
        }
        DensityMatrix { space: self.space.clone(), mat }
    }
}

/// A linear operator on a labelled space.
#[derive(Clone, Debug)]
pub struct Operator {
    pub(crate) space: Space,
    pub(crate) mat: DMatrix<C64>,
}

impl Operator {
    pub fn new(space: Space, mat: DMatrix<C64>) -> Operator {
        assert!(mat.is_square() && mat.nrows() == space.dim());
        Operator { space, mat }
    }

    pub fn identity(space: &Space) -> Operator {
        Operator { space: space.clone(), mat: DMatrix::identity(space.dim(), space.dim()) }
    }

    pub fn zero(space: &Space) -> Operator {
        Operator { space: space.clone(), mat: DMatrix::zeros(space.dim(), space.dim()) }
    }

    /// Tensor product acting as `parts` on the named factors and as identity
    /// on every other factor. Each part must match its factor's dimension.
    pub fn product(space: &Space, parts: &[(&str, &DMatrix<C64>)]) -> Operator {
        for (name, m) in parts {
            assert!(
                m.is_square() && m.nrows() == space.dim_of(name),
                "operator part does not match dimension of factor `{name}`"
            );
        }
        let mut mat = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        for factor in space.factors() {
            let part = parts.iter().find(|(name, _)| *name == factor.name);
            mat = match part {
                Some((_, m)) => mat.kronecker(m),
                None => mat.kronecker(&DMatrix::identity(factor.dim, factor.dim)),
            };
        }
        Operator { space: space.clone(), mat }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn apply(&self, psi: &PureState) -> PureState {
        assert_eq!(self.space, psi.space, "operator and state live on different spaces");
        PureState { space: psi.space.clone(), amp: &self.mat * &psi.amp }
    }

    pub fn adjoint(&self) -> Operator {
        Operator { space: self.space.clone(), mat: self.mat.adjoint() }
    }

    pub fn scaled(&self, z: C64) -> Operator {
        Operator { space: self.space.clone(), mat: &self.mat * z }
    }

    /// L† L.
    pub fn gram(&self) -> Operator {
        Operator { space: self.space.clone(), mat: self.mat.adjoint() * &self.mat }
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space);
        Operator { space: self.space.clone(), mat: &self.mat + &rhs.mat }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space);
        Operator { space: self.space.clone(), mat: &self.mat - &rhs.mat }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space);
        Operator { space: self.space.clone(), mat: &self.mat * &rhs.mat }
    }
}

/// A density matrix on a labelled space. Not forced to unit trace: ensemble
/// accumulators hold weighted sums in the same type.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    pub(crate) space: Space,
    pub(crate) mat: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(space: Space, mat: DMatrix<C64>) -> DensityMatrix {
        assert!(mat.is_square() && mat.nrows() == space.dim());
        DensityMatrix { space, mat }
    }

    pub fn zeros(space: &Space) -> DensityMatrix {
        DensityMatrix { space: space.clone(), mat: DMatrix::zeros(space.dim(), space.dim()) }
    }

    pub fn maximally_mixed(space: &Space) -> DensityMatrix {
        let d = space.dim();
        DensityMatrix {
            space: space.clone(),
            mat: DMatrix::identity(d, d) * C64::new(1.0 / d as f64, 0.0),
        }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn scale(&mut self, w: f64) {
        self.mat *= C64::new(w, 0.0);
    }

    pub fn add_scaled(&mut self, w: f64, other: &DensityMatrix) {
        assert_eq!(self.space, other.space);
        self.mat += &other.mat * C64::new(w, 0.0);
    }

    /// tr(rho O).
    pub fn expectation(&self, op: &Operator) -> C64 {
        assert_eq!(self.space, op.space);
        (&self.mat * &op.mat).diagonal().iter().sum()
    }

    /// <psi|rho|psi> with |psi> normalized first.
    pub fn fidelity_pure(&self, psi: &PureState) -> f64 {
        assert_eq!(self.space, psi.space);
        let v = &psi.amp;
        let q = v.dotc(&(&self.mat * v)).re;
        q / psi.norm_sqr()
    }

    /// U rho U†.
    pub fn transformed(&self, u: &Operator) -> DensityMatrix {
        assert_eq!(self.space, u.space);
        DensityMatrix { space: self.space.clone(), mat: &u.mat * &self.mat * u.mat.adjoint() }
    }

    /// Trace out every factor not named in `keep`; kept factors stay in their
    /// original order.
    pub fn partial_trace(&self, keep: &[&str]) -> DensityMatrix {
        assert!(!keep.is_empty(), "partial trace must keep at least one factor");
        let keep_pos: Vec<usize> = (0..self.space.num_factors())
            .filter(|&p| keep.contains(&self.space.factors()[p].name.as_str()))
            .collect();
        assert_eq!(keep_pos.len(), keep.len(), "unknown or repeated factor in {keep:?}");
        let traced_pos: Vec<usize> =
            (0..self.space.num_factors()).filter(|p| !keep_pos.contains(p)).collect();
        let keep_space = self.space.select(&keep_pos);
        let keep_off = sub_offsets(&self.space, &keep_pos);
        let traced_off = if traced_pos.is_empty() {
            vec![0]
        } else {
            sub_offsets(&self.space, &traced_pos)
        };
        let kd = keep_space.dim();
        let mut mat = DMatrix::zeros(kd, kd);
        for r in 0..kd {
            for c in 0..kd {
                let mut acc = C64::new(0.0, 0.0);
                for &t in &traced_off {
                    acc += self.mat[(keep_off[r] + t, keep_off[c] + t)];
                }
                mat[(r, c)] = acc;
            }
        }
        DensityMatrix { space: keep_space, mat }
    }

    /// Transpose the indices of one factor (partial transpose).
    pub fn partial_transpose(&self, name: &str) -> DensityMatrix {
        let pos = self.space.position(name);
        let d = self.space.dim();
        let mut mat = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut mi = self.space.multi_index(i);
                let mut mj = self.space.multi_index(j);
                std::mem::swap(&mut mi[pos], &mut mj[pos]);
                mat[(self.space.flat_index(&mi), self.space.flat_index(&mj))] =
                    self.mat[(i, j)];
            }
        }
        DensityMatrix { space: self.space.clone(), mat }
    }

    /// Eigenvalues (ascending). The matrix must be Hermitian.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.mat)
    }
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// (1/2) tr |a - b|.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    assert_eq!(a.space, b.space);
    let diff = &a.mat - &b.mat;
    0.5 * hermitian_eigenvalues(&diff).iter().map(|l| l.abs()).sum::<f64>()
}

pub(crate) fn is_diagonal(a: &DMatrix<C64>) -> bool {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..n {
            if i != j && a[(i, j)] != C64::new(0.0, 0.0) {
                return false;
            }
        }
    }
    true
}

/// Matrix exponential by scaling and squaring on a Taylor series, with an
/// exact fast path for diagonal input.
pub fn expm(a: &DMatrix<C64>) -> DMatrix<C64> {
    assert!(a.is_square());
    let n = a.nrows();
    if is_diagonal(a) {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = a[(i, i)].exp();
        }
        return m;
    }
    let norm = a.norm();
    let squarings = if norm > TAYLOR_RADIUS {
        (norm / TAYLOR_RADIUS).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * C64::new(0.5f64.powi(squarings), 0.0);
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::<C64>::identity(n, n);
    for k in 1..=60 {
        term = (&term * &scaled) * C64::new(1.0 / k as f64, 0.0);
        sum += &term;
        if term.norm() <= 1e-16 * sum.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// exp(-i t G) for a (possibly non-Hermitian) generator G, with
/// d|psi>/dt = -i G |psi>.
pub fn propagator(generator: &Operator, t: f64) -> Operator {
    let arg = &generator.mat * C64::new(0.0, -t);
    Operator { space: generator.space.clone(), mat: expm(&arg) }
}

/// Evolve without renormalizing; norm loss is the no-decay probability when
/// G carries an anti-Hermitian damping part.
pub fn evolve(psi: &PureState, generator: &Operator, t: f64) -> PureState {
    propagator(generator, t).apply(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn two_qubits() -> Space {
        Space::new(&[("left", 2), ("right", 2)])
    }

    #[test]
    fn flat_index_round_trip() {
        let s = Space::new(&[("a", 2), ("b", 3), ("c", 2)]);
        for flat in 0..s.dim() {
            assert_eq!(s.flat_index(&s.multi_index(flat)), flat);
        }
        // First factor varies slowest.
        assert_eq!(s.flat_index(&[1, 0, 0]), 6);
        assert_eq!(s.flat_index(&[0, 1, 0]), 2);
        assert_eq!(s.flat_index(&[0, 0, 1]), 1);
    }

    #[test]
    fn tensor_and_reorder_are_consistent() {
        let a = PureState::new(
            Space::new(&[("a", 2)]),
            DVector::from_vec(vec![c(0.6, 0.1), c(0.0, 0.8)]),
        );
        let b = PureState::new(
            Space::new(&[("b", 2)]),
            DVector::from_vec(vec![c(0.3, -0.4), c(0.5, 0.2)]),
        );
        let ab = a.tensor(&b);
        let ba = b.tensor(&a);
        assert_relative_eq!(ab.norm_sqr(), a.norm_sqr() * b.norm_sqr(), epsilon = 1e-14);
        let ab_from_ba = ba.reordered(&["a", "b"]);
        for i in 0..4 {
            assert_relative_eq!(ab.amp[i].re, ab_from_ba.amp[i].re, epsilon = 1e-15);
            assert_relative_eq!(ab.amp[i].im, ab_from_ba.amp[i].im, epsilon = 1e-15);
        }
    }

    #[test]
    fn product_operator_embeds_on_named_factor() {
        let s = two_qubits();
        let sx = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let op = Operator::product(&s, &[("right", &sx)]);
        let psi = PureState::basis(s.clone(), &[1, 0]);
        let out = op.apply(&psi);
        assert_relative_eq!(out.amp[s.flat_index(&[1, 1])].re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(out.factor_population("left", 1), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn partial_trace_of_product_state_splits() {
        let a = PureState::new(
            Space::new(&[("a", 2)]),
            DVector::from_vec(vec![c(0.8, 0.0), c(0.0, 0.6)]),
        );
        let b = PureState::new(
            Space::new(&[("b", 2)]),
            DVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]).scale(std::f64::consts::FRAC_1_SQRT_2),
        );
        let rho = a.tensor(&b).to_density();
        let rho_a = rho.partial_trace(&["a"]);
        assert_relative_eq!(rho_a.trace(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(rho_a.mat[(0, 0)].re, 0.64, epsilon = 1e-14);
        assert_relative_eq!(rho_a.mat[(1, 1)].re, 0.36, epsilon = 1e-14);
        // Product state: off-diagonal coherence survives in full.
        assert_relative_eq!(rho_a.mat[(0, 1)].norm(), 0.48, epsilon = 1e-14);
    }

    #[test]
    fn partial_trace_of_bell_state_is_maximally_mixed() {
        let s = two_qubits();
        let mut amp = DVector::zeros(4);
        amp[s.flat_index(&[0, 0])] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        amp[s.flat_index(&[1, 1])] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let rho = PureState::new(s, amp).to_density();
        for name in ["left", "right"] {
            let red = rho.partial_trace(&[name]);
            assert_relative_eq!(red.mat[(0, 0)].re, 0.5, epsilon = 1e-14);
            assert_relative_eq!(red.mat[(1, 1)].re, 0.5, epsilon = 1e-14);
            assert_relative_eq!(red.mat[(0, 1)].norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn partial_trace_keeps_original_factor_order() {
        let s = Space::new(&[("a", 2), ("b", 2), ("c", 2)]);
        let psi = PureState::basis(s, &[1, 0, 1]);
        let rho = psi.to_density();
        let red = rho.partial_trace(&["c", "a"]);
        // Kept factors remain (a, c) regardless of the order asked for.
        assert_eq!(red.space.factors()[0].name, "a");
        assert_eq!(red.space.factors()[1].name, "c");
        assert_relative_eq!(red.mat[(red.space.flat_index(&[1, 1]), red.space.flat_index(&[1, 1]))].re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn slice_factor_extracts_component() {
        let s = two_qubits();
        let mut amp = DVector::zeros(4);
        amp[s.flat_index(&[0, 1])] = c(0.6, 0.0);
        amp[s.flat_index(&[1, 0])] = c(0.0, 0.8);
        let psi = PureState::new(s, amp);
        let left0 = psi.slice_factor("left", 0);
        assert_eq!(left0.space.num_factors(), 1);
        assert_relative_eq!(left0.norm_sqr(), 0.36, epsilon = 1e-14);
        assert_relative_eq!(left0.amp[1].re, 0.6, epsilon = 1e-15);
        assert_relative_eq!(psi.factor_population("left", 1), 0.64, epsilon = 1e-14);
    }

    #[test]
    fn expm_diagonal_is_exact() {
        let mut a = DMatrix::zeros(3, 3);
        a[(0, 0)] = c(0.0, -1.2);
        a[(1, 1)] = c(-0.3, 0.4);
        a[(2, 2)] = c(2.0, 0.0);
        let e = expm(&a);
        for i in 0..3 {
            let want = a[(i, i)].exp();
            assert_relative_eq!(e[(i, i)].re, want.re, epsilon = 1e-15);
            assert_relative_eq!(e[(i, i)].im, want.im, epsilon = 1e-15);
        }
    }

    #[test]
    fn expm_nilpotent_truncates() {
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 1)] = c(3.7, -1.1);
        let e = expm(&a);
        assert_relative_eq!(e[(0, 0)].re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(e[(1, 1)].re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(e[(0, 1)].re, 3.7, epsilon = 1e-13);
        assert_relative_eq!(e[(0, 1)].im, -1.1, epsilon = 1e-13);
    }

    /// Damped two-level closed form, the core analytic oracle used across the
    /// test suite.
    ///
    /// On span{|x>, |y>} with generator (as a Hamiltonian-like matrix)
    /// A = [[E, E], [E, E - i k]], write A = (E - i k/2) I + M with
    /// M = [[i k/2, E], [E, -i k/2]] and M^2 = mu^2 I, mu = sqrt(E^2 - k^2/4).
    /// Then exp(-i t A) = e^{-iEt} e^{-kt/2} [cos(mu t) I - i sin(mu t)/mu M].
    fn damped_two_level(e: f64, k: f64, t: f64) -> [[C64; 2]; 2] {
        let mu = (e * e - 0.25 * k * k).sqrt();
        let pref = (c(0.0, -e * t)).exp() * (-0.5 * k * t).exp();
        let cosv = (mu * t).cos();
        let sinc = (mu * t).sin() / mu;
        let m = [[c(0.0, 0.5 * k), c(e, 0.0)], [c(e, 0.0), c(0.0, -0.5 * k)]];
        let mut u = [[c(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let ident = if i == j { c(cosv, 0.0) } else { c(0.0, 0.0) };
                u[i][j] = pref * (ident - c(0.0, 1.0) * m[i][j] * sinc);
            }
        }
        u
    }

    #[test]
    fn expm_matches_damped_two_level_closed_form() {
        let (e, k, t) = (1.3, 0.21, 0.37);
        // Full 4-dim build: atom (x=|0>, decayed=|1>) and mode (0 or 1 quanta),
        // H = E (I + |0,0><1,1-swap| style coupling), damping k on the mode.
        let s = Space::new(&[("atom", 2), ("mode", 2)]);
        let flip = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let lower = flip.clone();
        let number = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let h = &(&Operator::identity(&s)
            + &Operator::product(&s, &[("atom", &flip), ("mode", &lower)]))
            + &Operator::product(&s, &[("atom", &flip.transpose()), ("mode", &lower.transpose())]);
        let h = h.scaled(c(e, 0.0));
        let damp = Operator::product(&s, &[("mode", &number)]).scaled(c(0.0, -k));
        let gen = &h + &damp;
        let u = propagator(&gen, t);

        let cf = damped_two_level(e, k, t);
        let x = s.flat_index(&[0, 0]); // |atom excited, 0 quanta>
        let y = s.flat_index(&[1, 1]); // |atom ground, 1 quantum>
        let pairs = [(x, x, cf[0][0]), (y, x, cf[1][0]), (x, y, cf[0][1]), (y, y, cf[1][1])];
        for (row, col, want) in pairs {
            let got = u.matrix()[(row, col)];
            assert_relative_eq!(got.re, want.re, epsilon = 1e-12);
            assert_relative_eq!(got.im, want.im, epsilon = 1e-12);
        }
        // |ground, 0>: eigenstate with phase E only.
        let g0 = s.flat_index(&[1, 0]);
        let want = (c(0.0, -e * t)).exp();
        assert_relative_eq!(u.matrix()[(g0, g0)].re, want.re, epsilon = 1e-12);
        assert_relative_eq!(u.matrix()[(g0, g0)].im, want.im, epsilon = 1e-12);
        // Column of |ground, 0> has no other support.
        let leak: f64 = (0..4).filter(|&i| i != g0).map(|i| u.matrix()[(i, g0)].norm_sqr()).sum();
        assert!(leak < 1e-24);
    }

    #[test]
    fn evolve_with_hermitian_generator_preserves_norm() {
        let s = two_qubits();
        let h = {
            let sx = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
            let sz = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
            &Operator::product(&s, &[("left", &sx)]) + &Operator::product(&s, &[("left", &sz), ("right", &sx)])
        };
        let psi = PureState::new(
            s,
            DVector::from_vec(vec![c(0.5, 0.0), c(0.0, 0.5), c(-0.5, 0.0), c(0.0, -0.5)]),
        );
        let out = evolve(&psi, &h, 0.83);
        assert_relative_eq!(out.norm_sqr(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn trace_distance_of_orthogonal_pure_states_is_one() {
        let s = Space::new(&[("q", 2)]);
        let a = PureState::basis(s.clone(), &[0]).to_density();
        let b = PureState::basis(s, &[1]).to_density();
        assert_relative_eq!(trace_distance(&a, &b), 1.0, epsilon = 1e-12);
        assert_relative_eq!(trace_distance(&a, &a), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn partial_transpose_of_bell_state_has_negative_eigenvalue() {
        let s = two_qubits();
        let mut amp = DVector::zeros(4);
        amp[s.flat_index(&[0, 0])] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        amp[s.flat_index(&[1, 1])] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let rho = PureState::new(s, amp).to_density();
        let pt = rho.partial_transpose("right");
        let ev = pt.eigenvalues();
        assert_relative_eq!(ev[0], -0.5, epsilon = 1e-12);
        assert_relative_eq!(ev[3], 0.5, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn tensor_norm_is_multiplicative(
            a in proptest::collection::vec(-1.0f64..1.0, 8),
            b in proptest::collection::vec(-1.0f64..1.0, 6),
        ) {
            let va = DVector::from_vec(a.chunks(2).map(|p| c(p[0], p[1])).collect::<Vec<_>>());
            let vb = DVector::from_vec(b.chunks(2).map(|p| c(p[0], p[1])).collect::<Vec<_>>());
            let sa = Space::new(&[("a", va.len())]);
            let sb = Space::new(&[("b", vb.len())]);
            let pa = PureState::new(sa, va);
            let pb = PureState::new(sb, vb);
            let t = pa.tensor(&pb);
            prop_assert!((t.norm_sqr() - pa.norm_sqr() * pb.norm_sqr()).abs() < 1e-12);
        }

        #[test]
        fn partial_trace_is_trace_preserving_and_positive(
            raw in proptest::collection::vec(-1.0f64..1.0, 16),
        ) {
            let amp = DVector::from_vec(raw.chunks(2).map(|p| c(p[0], p[1])).collect::<Vec<_>>());
            prop_assume!(amp.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3);
            let s = Space::new(&[("left", 2), ("right", 4)]);
            let rho = PureState::new(s, amp).normalized().to_density();
            for keep in [vec!["left"], vec!["right"], vec!["left", "right"]] {
                let red = rho.partial_trace(&keep);
                prop_assert!((red.trace() - 1.0).abs() < 1e-10);
                for ev in red.eigenvalues() {
                    prop_assert!(ev > -1e-10);
                }
            }
        }
    }
}
