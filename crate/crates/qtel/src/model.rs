//! Physical model: parameters, effective Hamiltonians, and decay channels.
//!
//! Two distant atoms sit in single-mode cavities A and B. A Raman pair
//! (classical drive Omega plus cavity coupling g, both detuned by Delta from
//! the excited level) reduces each atom-cavity pair to an effective two-level
//! exchange |e,0> <-> |g,1> at rate E = g*Omega/Delta, with an extra uniform
//! level shift of the same size. Cavity photons leak at rate kappa through
//! the front mirrors; the two leakage paths interfere on a beam splitter
//! whose output ports are watched by two photodetectors.
//!
//! Internally every rate is angular frequency in rad/us; constructors take
//! plain MHz and multiply by 2*pi.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::hilbert::{Operator, Space};
use crate::C64;

/// Factor names used by every protocol space.
pub const ATOM_1: &str = "atom1";
pub const CAV_A: &str = "cavA";
pub const ATOM_2: &str = "atom2";
pub const CAV_B: &str = "cavB";
/// Alice's reserve atom used by the failure-recovery encoding.
pub const ATOM_R: &str = "atom_r";

/// Atomic basis: index 0 is |e>, index 1 is |g>.
pub const EXCITED: usize = 0;
pub const GROUND: usize = 1;

/// Cavity basis: photon number, truncated at one photon. The exchange
/// conserves excitation per pair and every protocol starts with at most one
/// excitation per pair, so the truncation is exact (asserted in tests).
pub const CAVITY_DIM: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    /// 2E <= kappa: photon leaks faster than the exchange can supply it, so
    /// the pulse-time equations have no real solution.
    #[error("overdamped regime: 2E = {two_e:.6} rad/us <= kappa = {kappa:.6} rad/us")]
    Overdamped { two_e: f64, kappa: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Raw physical rates, all in rad/us (angular), plus the detector efficiency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalParams {
    /// Atom-cavity coupling.
    pub g: f64,
    /// Classical drive Rabi frequency.
    pub omega: f64,
    /// Cavity field decay rate.
    pub kappa: f64,
    /// Atomic spontaneous emission rate (validation only; the effective
    /// dynamics neglect it, which `validate_regime` checks is justified).
    pub gamma: f64,
    /// Detuning of drive and cavity from the upper atomic level.
    pub delta: f64,
    /// Level splitting used for the conditional phase correction on Bob's
    /// atom. Any positive value works; it only sets how long the correction
    /// takes.
    pub delta_e: f64,
    /// Photodetector efficiency in [0, 1].
    pub eta: f64,
}

const TWO_PI: f64 = std::f64::consts::TAU;

impl PhysicalParams {
    /// All frequencies in plain MHz (converted to rad/us internally).
    pub fn from_mhz(g: f64, omega: f64, kappa: f64, gamma: f64, delta: f64, delta_e: f64, eta: f64) -> PhysicalParams {
        PhysicalParams {
            g: TWO_PI * g,
            omega: TWO_PI * omega,
            kappa: TWO_PI * kappa,
            gamma: TWO_PI * gamma,
            delta: TWO_PI * delta,
            delta_e: TWO_PI * delta_e,
            eta,
        }
    }

    /// Hard validity checks (soft regime checks live in `validate_regime`).
    pub fn check(&self) -> Result<(), ModelError> {
        let positive = [("g", self.g), ("omega", self.omega), ("delta", self.delta), ("delta_e", self.delta_e)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ModelError::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let nonneg = [("kappa", self.kappa), ("gamma", self.gamma)];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ModelError::InvalidParameter(format!("{name} must be nonnegative and finite, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(ModelError::InvalidParameter(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        Ok(())
    }

    /// Soft regime warnings: conditions under which the effective model is a
    /// poor approximation of the underlying three-level dynamics.
    pub fn validate_regime(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        let perturbative = self.g * self.omega / (self.delta * self.delta);
        if perturbative > 0.05 {
            warnings.push(format!(
                "adiabatic elimination is marginal: g*Omega/Delta^2 = {perturbative:.4} exceeds 0.05"
            ));
        }
        let detuning_ratio = self.delta / self.gamma;
        if detuning_ratio < 20.0 {
            warnings.push(format!(
                "spontaneous emission is not negligible: Delta/gamma = {detuning_ratio:.2} is below 20"
            ));
        }
        if let Ok(eff) = EffectiveParams::new(self) {
            if self.kappa > 0.0 {
                let oscillation_ratio = eff.omega_kappa / self.kappa;
                if oscillation_ratio < 50.0 {
                    warnings.push(format!(
                        "cavity decay competes with the coherent exchange: Omega_kappa/kappa = {oscillation_ratio:.2} is below 50"
                    ));
                }
            }
        } else {
            warnings.push("overdamped: 2E <= kappa, pulse times are undefined".to_owned());
        }
        warnings
    }
}

impl Default for PhysicalParams {
    /// Reference parameter set: (g, Omega, kappa, gamma, Delta) =
    /// 2*pi x (10, 10, 0.01, 1, 100) MHz, delta_e = 2*pi x 1 MHz, ideal
    /// detectors.
    fn default() -> PhysicalParams {
        PhysicalParams::from_mhz(10.0, 10.0, 0.01, 1.0, 100.0, 1.0, 1.0)
    }
}

/// Parameters of the effective damped exchange.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveParams {
    /// E = g*Omega/Delta.
    pub coupling: f64,
    /// Omega_kappa = sqrt(4E^2 - kappa^2), the decay-shifted exchange
    /// frequency. Real only in the underdamped regime 2E > kappa.
    pub omega_kappa: f64,
}

impl EffectiveParams {
    pub fn new(p: &PhysicalParams) -> Result<EffectiveParams, ModelError> {
        let coupling = p.g * p.omega / p.delta;
        let disc = 4.0 * coupling * coupling - p.kappa * p.kappa;
        if disc <= 0.0 {
            return Err(ModelError::Overdamped { two_e: 2.0 * coupling, kappa: p.kappa });
        }
        Ok(EffectiveParams { coupling, omega_kappa: disc.sqrt() })
    }
}

/// Durations of the two preparation pulses, in us.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageTimes {
    /// Mapping pulse: transfers the atomic qubit onto the cavity field.
    pub t_map: f64,
    /// Equal-superposition pulse: prepares the atom-photon Bell pair.
    pub t_bell: f64,
}

/// Closed-form pulse durations. With theta = Omega_kappa * t / 2, the mapping
/// pulse ends at the first zero of the excited-state amplitude,
/// theta_map = pi - arctan(Omega_kappa / kappa), and the Bell pulse at the
/// first time the two amplitudes reach equal weight,
/// theta_bell = arctan(Omega_kappa / (2E - kappa)). The two angles satisfy
/// tan(2 theta_bell) = tan(theta_map) on the same branch, so t_map = 2 t_bell.
pub fn stage_times(p: &PhysicalParams) -> Result<StageTimes, ModelError> {
    let eff = EffectiveParams::new(p)?;
    let theta_map = std::f64::consts::PI - (eff.omega_kappa / p.kappa).atan();
    let theta_bell = (eff.omega_kappa / (2.0 * eff.coupling - p.kappa)).atan();
    let times = StageTimes {
        t_map: 2.0 * theta_map / eff.omega_kappa,
        t_bell: 2.0 * theta_bell / eff.omega_kappa,
    };
    assert!(times.t_bell < times.t_map);
    Ok(times)
}

fn cplx(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// |e><g| on the atomic basis (e first).
pub fn sigma_eg() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[cplx(0.0, 0.0), cplx(1.0, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0)])
}

/// |g><e|.
pub fn sigma_ge() -> DMatrix<C64> {
    sigma_eg().transpose()
}

/// |e><e|.
pub fn excited_projector() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[cplx(1.0, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0)])
}

/// Photon annihilation on the truncated cavity basis.
pub fn lowering() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[cplx(0.0, 0.0), cplx(1.0, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0)])
}

/// Photon number.
pub fn number() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[cplx(0.0, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0), cplx(1.0, 0.0)])
}

/// The teleportation space (atom1, cavA, atom2, cavB).
pub fn teleport_space() -> Space {
    Space::new(&[(ATOM_1, 2), (CAV_A, CAVITY_DIM), (ATOM_2, 2), (CAV_B, CAVITY_DIM)])
}

/// Alice's side extended by the reserve atom, (atom1, cavA, atom_r).
pub fn reserve_space() -> Space {
    Space::new(&[(ATOM_1, 2), (CAV_A, CAVITY_DIM), (ATOM_R, 2)])
}

/// Effective Raman exchange on one atom-cavity pair:
/// H = E (I + sigma_eg c + sigma_ge c†), embedded into `space`.
/// The uniform E I term is the level shift left over after adiabatic
/// elimination; it matters only as a global phase per driven pair.
pub fn hamiltonian_raman(space: &Space, coupling: f64, atom: &str, cav: &str) -> Operator {
    let ident = Operator::identity(space);
    let up = Operator::product(space, &[(atom, &sigma_eg()), (cav, &lowering())]);
    let down = Operator::product(space, &[(atom, &sigma_ge()), (cav, &lowering().transpose())]);
    (&(&ident + &up) + &down).scaled(cplx(coupling, 0.0))
}

/// Level-shift Hamiltonian delta_e |e><e| on one atom, used for the timed
/// phase correction after a detection.
pub fn hamiltonian_level_shift(space: &Space, delta_e: f64, atom: &str) -> Operator {
    Operator::product(space, &[(atom, &excited_projector())]).scaled(cplx(delta_e, 0.0))
}

/// Collapse operators for the two beam-splitter output ports:
/// L_± = sqrt(kappa) (c_A ± c_B). Channel 0 is the "+" port, channel 1 the
/// "-" port. Their gram sum is 2 kappa (n_A + n_B), i.e. each cavity decays
/// at field rate kappa.
pub fn beam_splitter_channels(space: &Space, kappa: f64) -> Vec<Operator> {
    let ca = Operator::product(space, &[(CAV_A, &lowering())]);
    let cb = Operator::product(space, &[(CAV_B, &lowering())]);
    let root = cplx(kappa.sqrt(), 0.0);
    vec![(&ca + &cb).scaled(root), (&ca - &cb).scaled(root)]
}

/// Single-cavity collapse operator sqrt(2 kappa) c, for spaces holding only
/// cavity A (the reserve-atom analysis): intensity decay rate 2 kappa, the
/// same as under the beam-splitter pair.
pub fn single_cavity_channel(space: &Space, kappa: f64, cav: &str) -> Operator {
    Operator::product(space, &[(cav, &lowering())]).scaled(cplx((2.0 * kappa).sqrt(), 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::PureState;
    use approx::assert_relative_eq;

    #[test]
    fn default_params_match_reference_set() {
        let p = PhysicalParams::default();
        assert_relative_eq!(p.g, TWO_PI * 10.0, epsilon = 1e-12);
        assert_relative_eq!(p.omega, TWO_PI * 10.0, epsilon = 1e-12);
        assert_relative_eq!(p.kappa, TWO_PI * 0.01, epsilon = 1e-12);
        assert_relative_eq!(p.gamma, TWO_PI * 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.delta, TWO_PI * 100.0, epsilon = 1e-12);
        assert_eq!(p.eta, 1.0);
        assert!(p.check().is_ok());
        assert!(p.validate_regime().is_empty());
    }

    #[test]
    fn effective_params_reference_values() {
        let eff = EffectiveParams::new(&PhysicalParams::default()).unwrap();
        // E = g Omega / Delta = 2 pi x 1 MHz.
        assert_relative_eq!(eff.coupling, TWO_PI, epsilon = 1e-12);
        // Omega_kappa = sqrt(4 E^2 - kappa^2).
        assert_relative_eq!(eff.omega_kappa, 12.566213533744733, epsilon = 1e-9);
    }

    #[test]
    fn stage_times_reference_values() {
        let t = stage_times(&PhysicalParams::default()).unwrap();
        assert_relative_eq!(t.t_map, 0.2507989130372316, epsilon = 1e-12);
        assert_relative_eq!(t.t_bell, 0.1253994565186158, epsilon = 1e-12);
        assert_relative_eq!(t.t_map, 2.0 * t.t_bell, epsilon = 1e-12);
    }

    #[test]
    fn stage_times_lossless_limits() {
        // kappa -> 0: theta_map -> pi/2 and theta_bell -> pi/4.
        let mut p = PhysicalParams::default();
        p.kappa = 0.0;
        let eff = EffectiveParams::new(&p).unwrap();
        let t = stage_times(&p).unwrap();
        assert_relative_eq!(t.t_map, std::f64::consts::PI / eff.omega_kappa, epsilon = 1e-12);
        assert_relative_eq!(t.t_bell, std::f64::consts::FRAC_PI_2 / eff.omega_kappa, epsilon = 1e-12);
    }

    #[test]
    fn overdamped_is_rejected() {
        let mut p = PhysicalParams::default();
        p.kappa = 3.0 * p.g * p.omega / p.delta;
        assert!(matches!(EffectiveParams::new(&p), Err(ModelError::Overdamped { .. })));
        assert!(!p.validate_regime().is_empty());
    }

    #[test]
    fn raman_hamiltonian_couples_e0_and_g1() {
        let s = Space::new(&[(ATOM_1, 2), (CAV_A, 2)]);
        let e = 2.7;
        let h = hamiltonian_raman(&s, e, ATOM_1, CAV_A);
        let e0 = s.flat_index(&[EXCITED, 0]);
        let g1 = s.flat_index(&[GROUND, 1]);
        let g0 = s.flat_index(&[GROUND, 0]);
        assert_relative_eq!(h.matrix()[(g1, e0)].re, e, epsilon = 1e-14);
        assert_relative_eq!(h.matrix()[(e0, g1)].re, e, epsilon = 1e-14);
        assert_relative_eq!(h.matrix()[(e0, e0)].re, e, epsilon = 1e-14);
        assert_relative_eq!(h.matrix()[(g0, g0)].re, e, epsilon = 1e-14);
        assert_relative_eq!(h.matrix()[(g0, e0)].norm(), 0.0, epsilon = 1e-14);
        // Hermitian.
        assert!((h.matrix() - h.matrix().adjoint()).norm() < 1e-14);
    }

    #[test]
    fn beam_splitter_channels_have_correct_gram_sum() {
        let s = teleport_space();
        let kappa = 0.35;
        let channels = beam_splitter_channels(&s, kappa);
        let mut gram = channels[0].gram().matrix().clone();
        gram += channels[1].gram().matrix();
        let want = Operator::product(&s, &[(CAV_A, &number())]).matrix()
            + Operator::product(&s, &[(CAV_B, &number())]).matrix();
        assert!((gram - want * cplx(2.0 * kappa, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn minus_port_is_dark_for_symmetric_one_photon_state() {
        let s = teleport_space();
        let channels = beam_splitter_channels(&s, 0.1);
        let mut amp = nalgebra::DVector::zeros(s.dim());
        let i01 = s.flat_index(&[GROUND, 0, GROUND, 1]);
        let i10 = s.flat_index(&[GROUND, 1, GROUND, 0]);
        amp[i01] = cplx(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        amp[i10] = cplx(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let psi = PureState::new(s, amp);
        assert!(channels[1].apply(&psi).norm_sqr() < 1e-28);
        assert!(channels[0].apply(&psi).norm_sqr() > 0.19);
    }
}
