//! Closed-form predictions for the protocols, and entanglement measures for
//! their outputs.
//!
//! Nothing here touches the trajectory engine, so every formula doubles as an
//! independent cross-check of the Monte Carlo results (and the tests hold the
//! two against each other).
//!
//! Two closed-form conventions are kept side by side where they genuinely
//! circulate in different write-ups of this protocol family. [`MapWeight`]
//! fixes how Alice's surviving no-photon branch is weighted (amplitude
//! `u alpha + 1 - u` versus squared-norm `u alpha^2 + 1 - u`); the trajectory
//! ensemble realizes the squared-norm weight. [`MixtureConvention`] fixes how
//! the post-selected two-atom mixture splits between the Bell branch and the
//! ground-ground contamination; the trajectory ensemble matches
//! [`MixtureConvention::UnnormalizedKet`].

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::hilbert::{DensityMatrix, PureState, Space};
use crate::model::{self, ModelError, PhysicalParams, StageTimes};
use crate::protocol::{self, FailureReason, InputQubit};
use crate::C64;

/// Weight of Alice's surviving no-photon branch in closed-form detection
/// formulas.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapWeight {
    /// u alpha + 1 - u, linear in the mapped amplitude.
    Amplitude,
    /// u alpha^2 + 1 - u, the squared-norm survival probability. This is the
    /// weight the trajectory ensemble realizes.
    Norm,
}

/// How the single-click branches combine into the post-selected two-atom
/// mixture of the entanglement protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixtureConvention {
    /// Bell weight eta (1 - x^2)/4: the conditional ket is normalized before
    /// mixing. Long-window Bell fraction 1/(3 - 2 eta).
    NormalizedKet,
    /// Bell weight eta (1 - x^2)/2: branches enter with their unnormalized
    /// amplitudes. Long-window Bell fraction 1/(2 - eta); this convention
    /// matches the trajectory ensemble.
    UnnormalizedKet,
}

/// Cached closed-form quantities for one parameter set.
#[derive(Clone, Debug)]
pub struct Formulas {
    kappa: f64,
    eta: f64,
    beta_sqr: f64,
    alpha: f64,
    times: StageTimes,
    /// Gauss-Legendre nodes and weights on [0, 1] for averages over the input
    /// population u.
    quad: Vec<(f64, f64)>,
}

impl Formulas {
    pub fn new(params: &PhysicalParams) -> Result<Formulas, ModelError> {
        params.check()?;
        let eff = model::EffectiveParams::new(params)?;
        let times = model::stage_times(params)?;
        let theta_map = 0.5 * eff.omega_kappa * times.t_map;
        // alpha = exp(-kappa t_map / 2) (2E / Omega_kappa) sin(theta_map):
        // the photon amplitude left on cavity A at the end of the mapping
        // pulse, starting from |e,0>.
        let alpha =
            (-0.5 * params.kappa * times.t_map).exp() * (2.0 * eff.coupling / eff.omega_kappa)
                * theta_map.sin();
        // beta^2 = 2E/(2E - kappa) exp(-kappa t_bell): survival probability
        // of one Bell-preparation pulse.
        let beta_sqr = 2.0 * eff.coupling / (2.0 * eff.coupling - params.kappa)
            * (-params.kappa * times.t_bell).exp();
        Ok(Formulas {
            kappa: params.kappa,
            eta: params.eta,
            beta_sqr,
            alpha,
            times,
            quad: gauss_legendre_01(64),
        })
    }

    pub fn times(&self) -> StageTimes {
        self.times
    }

    /// Photon amplitude retained by the mapping pulse.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Survival probability of one Bell-preparation pulse.
    pub fn beta_sqr(&self) -> f64 {
        self.beta_sqr
    }

    /// Survival probability of the mapping pulse for input population u:
    /// N^2 = u alpha^2 + 1 - u.
    pub fn map_survival(&self, u: f64) -> f64 {
        u * self.alpha * self.alpha + 1.0 - u
    }

    /// Probability that the whole preparation runs without a collapse.
    pub fn prep_survival(&self, u: f64) -> f64 {
        self.map_survival(u) * self.beta_sqr
    }

    /// x(t) = exp(-2 kappa t): probability that a stored photon is still in
    /// its cavity after a detection window of length t.
    pub fn photon_survival(&self, t_d: f64) -> f64 {
        (-2.0 * self.kappa * t_d).exp()
    }

    /// y(t) = x + (1 - eta)(1 - x): probability that a stored photon produces
    /// no observed click in the window (still stored, or leaked unseen).
    pub fn photon_unseen(&self, t_d: f64) -> f64 {
        let x = self.photon_survival(t_d);
        x + (1.0 - self.eta) * (1.0 - x)
    }

    /// Probability of no observed click, conditional on surviving
    /// preparation.
    pub fn p_no_click(&self, u: f64, t_d: f64) -> f64 {
        let (a2, y) = (self.alpha * self.alpha, self.photon_unseen(t_d));
        let n2 = self.map_survival(u);
        (u * a2 * y * y + n2 * y + 1.0 - u) / (2.0 * n2)
    }

    /// Probability of exactly one observed click (teleportation success),
    /// conditional on surviving preparation.
    pub fn p_success(&self, u: f64, t_d: f64) -> f64 {
        let x = self.photon_survival(t_d);
        let y = self.photon_unseen(t_d);
        let n2 = self.map_survival(u);
        self.eta * (1.0 - x) * (n2 + 2.0 * u * self.alpha * self.alpha * y) / (2.0 * n2)
    }

    /// Probability of two observed clicks, conditional on surviving
    /// preparation. Both clicks always land in the same detector.
    pub fn p_two_clicks(&self, u: f64, t_d: f64) -> f64 {
        let x = self.photon_survival(t_d);
        let n2 = self.map_survival(u);
        u * self.alpha * self.alpha * self.eta * self.eta * (1.0 - x) * (1.0 - x) / (2.0 * n2)
    }

    /// Unconditional success probability of one attempt.
    pub fn total_success(&self, u: f64, t_d: f64) -> f64 {
        self.prep_survival(u) * self.p_success(u, t_d)
    }

    /// Success-conditioned teleportation fidelity, from the post-selected
    /// state: [(u alpha + 1 - u)^2 + 2 u alpha^2 y (1 - u)] / (N^2 + 2 u alpha^2 y).
    pub fn fidelity(&self, u: f64, t_d: f64) -> f64 {
        let a = self.alpha;
        let y = self.photon_unseen(t_d);
        let lin = u * a + 1.0 - u;
        let fw = 2.0 * u * a * a * y;
        (lin * lin + fw * (1.0 - u)) / (self.map_survival(u) + fw)
    }

    /// The compact fidelity expression
    /// [P (u alpha + 1 - u) + 2 u alpha^2 x (1 - u)] / (P + 2 u alpha^2 x)
    /// with the no-photon weight P chosen by `weight`. It quotes photon
    /// survival x directly, so it describes ideal detectors; [`Self::fidelity`]
    /// is the efficiency-aware form.
    pub fn fidelity_with_weight(&self, u: f64, t_d: f64, weight: MapWeight) -> f64 {
        let a = self.alpha;
        let x = self.photon_survival(t_d);
        let p = match weight {
            MapWeight::Amplitude => u * a + 1.0 - u,
            MapWeight::Norm => self.map_survival(u),
        };
        let fw = 2.0 * u * a * a * x;
        (p * (u * a + 1.0 - u) + fw * (1.0 - u)) / (p + fw)
    }

    /// Success-conditioned state of Bob's atom after correction: the target
    /// superposition mixed with ground-state contamination from the branch
    /// whose second photon went unseen.
    pub fn teleported_state(&self, q: &InputQubit, t_d: f64, weight: MapWeight) -> DensityMatrix {
        let u = q.u();
        let a = self.alpha;
        let y = self.photon_unseen(t_d);
        let p = match weight {
            MapWeight::Amplitude => u * a + 1.0 - u,
            MapWeight::Norm => self.map_survival(u),
        };
        let fw = 2.0 * u * a * a * y;
        let space = Space::new(&[(model::ATOM_2, 2)]);
        let mut psi2 = DVector::zeros(2);
        psi2[model::EXCITED] = q.a() * a;
        psi2[model::GROUND] = q.b();
        let target = PureState::new(space.clone(), psi2).normalized().to_density();
        let ground = PureState::basis(space, &[model::GROUND]).to_density();
        let total = p + fw;
        let mut rho = target;
        rho.scale(p / total);
        rho.add_scaled(fw / total, &ground);
        rho
    }

    /// Bloch-sphere average of `fidelity` weighted by each input's success
    /// probability conditional on preparation.
    pub fn haar_average_fidelity(&self, t_d: f64) -> f64 {
        let y = self.photon_unseen(t_d);
        let a = self.alpha;
        let (mut num, mut den) = (0.0, 0.0);
        for &(u, w) in &self.quad {
            let n2 = self.map_survival(u);
            let lin = u * a + 1.0 - u;
            let fw = 2.0 * u * a * a * y;
            num += w * (lin * lin + fw * (1.0 - u)) / n2;
            den += w * (n2 + fw) / n2;
        }
        num / den
    }

    /// Bloch-sphere average weighted by the unconditional success rate,
    /// preparation survival included: the quantity a success-conditioned
    /// trajectory ensemble with random inputs estimates.
    pub fn mc_expected_haar_fidelity(&self, t_d: f64) -> f64 {
        let y = self.photon_unseen(t_d);
        let a = self.alpha;
        let (mut num, mut den) = (0.0, 0.0);
        for &(u, w) in &self.quad {
            let lin = u * a + 1.0 - u;
            let fw = 2.0 * u * a * a * y;
            num += w * (lin * lin + fw * (1.0 - u));
            den += w * (self.map_survival(u) + fw);
        }
        num / den
    }

    /// Bloch-sphere average of the unconditional success probability,
    /// in closed form: beta^2 eta (1 - x) [(1 + alpha^2)/2 + alpha^2 y] / 2.
    pub fn haar_average_success(&self, t_d: f64) -> f64 {
        let a2 = self.alpha * self.alpha;
        let x = self.photon_survival(t_d);
        let y = self.photon_unseen(t_d);
        self.beta_sqr * self.eta * (1.0 - x) * ((1.0 + a2) / 2.0 + a2 * y) / 2.0
    }

    /// Bell fraction of the post-selected two-atom mixture after a detection
    /// window of length t_w.
    pub fn lambda(&self, t_w: f64, convention: MixtureConvention) -> f64 {
        let x = self.photon_survival(t_w);
        let bell = match convention {
            MixtureConvention::NormalizedKet => self.eta * (1.0 - x * x) / 4.0,
            MixtureConvention::UnnormalizedKet => self.eta * (1.0 - x * x) / 2.0,
        };
        let gg = self.eta * (1.0 - self.eta) * (1.0 - x) * (1.0 - x) / 2.0;
        bell / (bell + gg)
    }

    /// The post-selected two-atom state of the entanglement protocol:
    /// lambda |psi+><psi+| + (1 - lambda) |gg><gg|.
    pub fn entangled_state(&self, t_w: f64, convention: MixtureConvention) -> DensityMatrix {
        let lambda = self.lambda(t_w, convention);
        let space = Space::new(&[(model::ATOM_1, 2), (model::ATOM_2, 2)]);
        let mut amp = DVector::zeros(4);
        let r = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        amp[space.flat_index(&[model::EXCITED, model::GROUND])] = r;
        amp[space.flat_index(&[model::GROUND, model::EXCITED])] = r;
        let bell = PureState::new(space.clone(), amp).to_density();
        let gg = PureState::basis(space, &[model::GROUND, model::GROUND]).to_density();
        let mut rho = bell;
        rho.scale(lambda);
        rho.add_scaled(1.0 - lambda, &gg);
        rho
    }

    /// The recovery-encoded state after the mapping pulse and calibration:
    /// [alpha |1>_A |s> + |0>_A |w>] / sqrt(1 + alpha^2) on (cavity A,
    /// reserve atom), with |s> = a|g> + b|e> and |w> = a|e> + b|g>.
    pub fn insured_map_state(&self, q: &InputQubit) -> PureState {
        let space = Space::new(&[(model::CAV_A, 2), (model::ATOM_R, 2)]);
        let norm = (1.0 + self.alpha * self.alpha).sqrt();
        let mut amp = DVector::zeros(4);
        amp[space.flat_index(&[0, model::EXCITED])] = q.a() / norm;
        amp[space.flat_index(&[0, model::GROUND])] = q.b() / norm;
        amp[space.flat_index(&[1, model::EXCITED])] = q.b() * self.alpha / norm;
        amp[space.flat_index(&[1, model::GROUND])] = q.a() * self.alpha / norm;
        PureState::new(space, amp)
    }

    /// Detection-window failure outcomes of a recovery-encoded attempt:
    /// probability (conditional on surviving preparation) and reserve-atom
    /// state for each. Preparation-time collapses are out of scope; they
    /// leave partially collapsed encodings that no fixed Pauli table covers.
    pub fn insurance_failure_branches(&self, q: &InputQubit, t_w: f64) -> Vec<FailureBranch> {
        let a2 = self.alpha * self.alpha;
        let x = self.photon_survival(t_w);
        let y = self.photon_unseen(t_w);
        let pref = 1.0 / (2.0 * (1.0 + a2));
        // No observed click: the zero-photon branch keeps |w>, every branch
        // that held a photon of Alice's has collapsed onto |s>.
        let w_weight = (1.0 + y) * pref;
        let s_weight = a2 * y * (1.0 + y) * pref;
        let total = w_weight + s_weight;
        let space = protocol::reserve_atom_space();
        let mut w_amp = DVector::zeros(2);
        w_amp[model::EXCITED] = q.a();
        w_amp[model::GROUND] = q.b();
        let w_state = PureState::new(space, w_amp).to_density();
        let s_state = protocol::insurance_target(q).to_density();
        let mut no_click = w_state;
        no_click.scale(w_weight / total);
        no_click.add_scaled(s_weight / total, &s_state);
        // Two observed clicks: both photons were present, which tags Alice's
        // branch as |s> exactly.
        let two_weight = self.eta * self.eta * a2 * (1.0 - x) * (1.0 - x) * pref;
        vec![
            FailureBranch { reason: FailureReason::NoClick, weight: total, state: no_click },
            FailureBranch { reason: FailureReason::TwoClicks, weight: two_weight, state: s_state },
        ]
    }
}

/// One failure outcome of a recovery-encoded attempt.
#[derive(Clone, Debug)]
pub struct FailureBranch {
    pub reason: FailureReason,
    /// Probability of the outcome, conditional on surviving preparation.
    pub weight: f64,
    /// Reserve-atom state conditional on the outcome.
    pub state: DensityMatrix,
}

/// Gauss-Legendre nodes and weights on [0, 1], by Newton iteration on the
/// Legendre recurrence.
fn gauss_legendre_01(n: usize) -> Vec<(f64, f64)> {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (0..n).map(|i| (0.5 * (nodes[i] + 1.0), 0.5 * weights[i])).collect()
}

const SUPPORT_TOL: f64 = 1e-12;

/// Von Neumann entropy in bits.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    rho.eigenvalues()
        .iter()
        .map(|&p| if p > 1e-15 { -p * p.log2() } else { 0.0 })
        .sum()
}

/// Relative entropy S(rho || sigma) in bits; infinite when rho has weight
/// outside the support of sigma.
pub fn relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    assert_eq!(rho.space(), sigma.space());
    let p_log_p: f64 = rho
        .eigenvalues()
        .iter()
        .map(|&p| if p > 1e-15 { p * p.log2() } else { 0.0 })
        .sum();
    match trace_rho_log2_sigma(rho.matrix(), sigma.matrix()) {
        Some(t) => p_log_p - t,
        None => f64::INFINITY,
    }
}

/// tr(rho log2 sigma), or None when rho leaks outside sigma's support.
fn trace_rho_log2_sigma(rho: &DMatrix<C64>, sigma: &DMatrix<C64>) -> Option<f64> {
    let eig = sigma.clone().symmetric_eigen();
    let mut acc = 0.0;
    for i in 0..sigma.nrows() {
        let s = eig.eigenvalues[i];
        let v = eig.eigenvectors.column(i);
        let overlap = (v.adjoint() * rho * v)[(0, 0)].re;
        if s <= SUPPORT_TOL {
            if overlap > 1e-10 {
                return None;
            }
            continue;
        }
        acc += overlap * s.log2();
    }
    Some(acc)
}

/// Relative entropy of entanglement of lambda |psi+><psi+| + (1-lambda)
/// |gg><gg|, in closed form:
/// (lambda - 2) log2(1 - lambda/2) + (1 - lambda) log2(1 - lambda).
pub fn entanglement_of_bell_gg_mixture(lambda: f64) -> f64 {
    assert!((0.0..=1.0).contains(&lambda));
    let first = (lambda - 2.0) * (1.0 - lambda / 2.0).log2();
    let second = if lambda < 1.0 { (1.0 - lambda) * (1.0 - lambda).log2() } else { 0.0 };
    first + second
}

/// A computed entanglement value with a rigorous bracket: `value` is the
/// relative entropy to the best separable state found (an upper bound), and
/// `lower_bound` combines the optimizer's duality gap with the hashing bound
/// max(0, S(rho_A) - S(rho), S(rho_B) - S(rho)).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntanglementMeasure {
    pub value: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

/// Relative entropy of entanglement of a two-qubit state, by Frank-Wolfe
/// minimization of S(rho || sigma) over separable sigma (mixtures of product
/// pure states). For two qubits positivity of the partial transpose is exact
/// separability, so PPT inputs return exactly zero.
pub fn relative_entropy_of_entanglement(rho: &DensityMatrix) -> EntanglementMeasure {
    let space = rho.space();
    assert_eq!(space.num_factors(), 2, "two-factor states only");
    for f in space.factors() {
        assert_eq!(f.dim, 2, "two-qubit states only");
    }
    assert!((rho.trace() - 1.0).abs() < 1e-9, "state must be normalized");
    let second = space.factors()[1].name.clone();
    let pt_min = rho.partial_transpose(&second).eigenvalues()[0];
    if pt_min >= -1e-10 {
        return EntanglementMeasure { value: 0.0, lower_bound: 0.0, upper_bound: 0.0 };
    }
    let s_rho = von_neumann_entropy(rho);
    let names: Vec<&str> = space.factors().iter().map(|f| f.name.as_str()).collect();
    let hashing = (von_neumann_entropy(&rho.partial_trace(&[names[0]])) - s_rho)
        .max(von_neumann_entropy(&rho.partial_trace(&[names[1]])) - s_rho)
        .max(0.0);

    let mat = rho.matrix();
    let mut rng = ChaCha12Rng::seed_from_u64(0x0E17_AC7E_D513_B0B1);
    let mut best_value = f64::INFINITY;
    let mut best_certified = 0.0f64;
    for restart in 0..8 {
        let atoms = initial_atoms(restart, &mut rng);
        let (value, gap) = frank_wolfe(mat, -s_rho, atoms, &mut rng);
        best_value = best_value.min(value);
        best_certified = best_certified.max(value - gap);
    }
    let lower = hashing.max(best_certified).max(0.0).min(best_value);
    EntanglementMeasure { value: best_value, lower_bound: lower, upper_bound: best_value }
}

struct ProductAtom {
    weight: f64,
    ket: DVector<C64>,
}

fn basis2(k: usize) -> DVector<C64> {
    let mut v = DVector::zeros(2);
    v[k] = C64::new(1.0, 0.0);
    v
}

fn random_ket2(rng: &mut ChaCha12Rng) -> DVector<C64> {
    let (z1, z2) = protocol::gaussian_pair(rng);
    let (z3, z4) = protocol::gaussian_pair(rng);
    let mut v = DVector::from_vec(vec![C64::new(z1, z2), C64::new(z3, z4)]);
    let n = v.norm();
    v /= C64::new(n, 0.0);
    v
}

fn product_ket(a: &DVector<C64>, b: &DVector<C64>) -> DVector<C64> {
    DVector::from_fn(4, |k, _| a[k / 2] * b[k % 2])
}

/// Every start includes the four computational products, so sigma is always
/// full rank and the objective stays finite.
fn initial_atoms(restart: usize, rng: &mut ChaCha12Rng) -> Vec<ProductAtom> {
    let mut atoms = Vec::new();
    let base = if restart == 0 { 0.25 } else { 0.05 };
    for i in 0..2 {
        for j in 0..2 {
            atoms.push(ProductAtom { weight: base, ket: product_ket(&basis2(i), &basis2(j)) });
        }
    }
    if restart > 0 {
        for _ in 0..4 {
            atoms.push(ProductAtom {
                weight: 0.2,
                ket: product_ket(&random_ket2(rng), &random_ket2(rng)),
            });
        }
    }
    atoms
}

fn sigma_of(atoms: &[ProductAtom]) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(4, 4);
    for a in atoms {
        m += (&a.ket * a.ket.adjoint()) * C64::new(a.weight, 0.0);
    }
    m
}

fn quad_form(m: &DMatrix<C64>, v: &DVector<C64>) -> f64 {
    (v.adjoint() * m * v)[(0, 0)].re
}

/// Objective f(sigma) = S(rho || sigma) given p_log_p = sum p log2 p.
fn objective(rho: &DMatrix<C64>, p_log_p: f64, sigma: &DMatrix<C64>) -> f64 {
    match trace_rho_log2_sigma(rho, sigma) {
        Some(t) => p_log_p - t,
        None => f64::INFINITY,
    }
}

/// Gradient of sigma -> S(rho || sigma) at full-rank sigma, using the
/// divided-difference (Daleckii-Krein) derivative of the matrix logarithm:
/// grad = -(1/ln 2) sum_ij phi(s_i, s_j) <v_i|rho|v_j> |v_i><v_j|,
/// phi(a, b) = (ln a - ln b)/(a - b), phi(a, a) = 1/a.
fn gradient(rho: &DMatrix<C64>, sigma: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = sigma.clone().symmetric_eigen();
    let s: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(1e-15)).collect();
    let v = &eig.eigenvectors;
    let rho_in_basis = v.adjoint() * rho * v;
    let mut g = DMatrix::<C64>::zeros(4, 4);
    for i in 0..4 {
        for j in 0..4 {
            let phi = if (s[i] - s[j]).abs() > 1e-12 * s[i].max(s[j]) {
                (s[i].ln() - s[j].ln()) / (s[i] - s[j])
            } else {
                2.0 / (s[i] + s[j])
            };
            let coef = rho_in_basis[(i, j)] * phi;
            g += (v.column(i) * v.column(j).adjoint()) * coef;
        }
    }
    g * C64::new(-1.0 / std::f64::consts::LN_2, 0.0)
}

/// Smallest eigenpair of a 2x2 Hermitian matrix.
fn min_eig_2x2(h: &DMatrix<C64>) -> (f64, DVector<C64>) {
    let p = h[(0, 0)].re;
    let q = h[(1, 1)].re;
    let c = h[(0, 1)];
    let mid = 0.5 * (p + q);
    let rad = (0.25 * (p - q) * (p - q) + c.norm_sqr()).sqrt();
    let lambda = mid - rad;
    if c.norm() < 1e-18 {
        return (lambda, basis2(if p <= q { 0 } else { 1 }));
    }
    let mut v = DVector::from_vec(vec![c, C64::new(lambda - p, 0.0)]);
    let n = v.norm();
    v /= C64::new(n, 0.0);
    (lambda, v)
}

/// Minimize <a b| G |a b> over product kets by alternating exact 2x2
/// eigenproblems from several starts.
fn min_product_expectation(g: &DMatrix<C64>, rng: &mut ChaCha12Rng) -> (DVector<C64>, f64) {
    let mut inits: Vec<(DVector<C64>, DVector<C64>)> = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            inits.push((basis2(i), basis2(j)));
        }
    }
    for _ in 0..2 {
        inits.push((random_ket2(rng), random_ket2(rng)));
    }
    let mut best: Option<(DVector<C64>, f64)> = None;
    for (mut a, mut b) in inits {
        let mut val = f64::INFINITY;
        for _ in 0..40 {
            let m_a = DMatrix::from_fn(2, 2, |i, i2| {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..2 {
                    for j2 in 0..2 {
                        acc += b[j].conj() * g[(2 * i + j, 2 * i2 + j2)] * b[j2];
                    }
                }
                acc
            });
            let (_, a_new) = min_eig_2x2(&m_a);
            a = a_new;
            let m_b = DMatrix::from_fn(2, 2, |j, j2| {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..2 {
                    for i2 in 0..2 {
                        acc += a[i].conj() * g[(2 * i + j, 2 * i2 + j2)] * a[i2];
                    }
                }
                acc
            });
            let (lb, b_new) = min_eig_2x2(&m_b);
            b = b_new;
            if (val - lb).abs() < 1e-14 {
                val = lb;
                break;
            }
            val = lb;
        }
        if best.as_ref().map_or(true, |(_, bv)| val < *bv) {
            best = Some((product_ket(&a, &b), val));
        }
    }
    best.unwrap()
}

/// Golden-section search for convex f on [0, 1]; returns (argmin, min).
fn golden_min(f: impl Fn(f64) -> f64) -> (f64, f64) {
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..48 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

const MAX_ATOMS: usize = 32;

/// One Frank-Wolfe run; returns (objective, final duality gap).
fn frank_wolfe(
    rho: &DMatrix<C64>,
    p_log_p: f64,
    mut atoms: Vec<ProductAtom>,
    rng: &mut ChaCha12Rng,
) -> (f64, f64) {
    let mut sigma = sigma_of(&atoms);
    let mut f = objective(rho, p_log_p, &sigma);
    let mut best_trace: Vec<f64> = vec![f];
    for iter in 0..2000 {
        let g = gradient(rho, &sigma);
        let (dir, dir_val) = min_product_expectation(&g, rng);
        let tr_gs: f64 = atoms.iter().map(|a| a.weight * quad_form(&g, &a.ket)).sum();
        let gap = (tr_gs - dir_val).max(0.0);
        if gap < 1e-5 {
            return (f, gap);
        }
        let dir_mat = &dir * dir.adjoint();
        let (gamma, f_new) = golden_min(|gamma| {
            let mixed = &sigma * C64::new(1.0 - gamma, 0.0) + &dir_mat * C64::new(gamma, 0.0);
            objective(rho, p_log_p, &mixed)
        });
        if f_new < f {
            for a in &mut atoms {
                a.weight *= 1.0 - gamma;
            }
            atoms.push(ProductAtom { weight: gamma, ket: dir.clone() });
            atoms.retain(|a| a.weight > 1e-12);
            if atoms.len() > MAX_ATOMS {
                atoms.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap());
                atoms.truncate(MAX_ATOMS);
            }
            let total: f64 = atoms.iter().map(|a| a.weight).sum();
            for a in &mut atoms {
                a.weight /= total;
            }
            sigma = sigma_of(&atoms);
            f = objective(rho, p_log_p, &sigma);
        }
        let best = best_trace.last().unwrap().min(f);
        best_trace.push(best);
        if iter >= 200 && best_trace[iter - 200] - best < 1e-6 {
            break;
        }
    }
    let g = gradient(rho, &sigma);
    let (_, dir_val) = min_product_expectation(&g, rng);
    let tr_gs: f64 = atoms.iter().map(|a| a.weight * quad_form(&g, &a.ket)).sum();
    (f, (tr_gs - dir_val).max(0.0))
}
