//! The teleportation and entanglement protocols as stage plans plus
//! trajectory bookkeeping.
//!
//! Teleportation: Alice holds the input qubit on atom 1, Bob's atom 2 starts
//! excited. Alice's mapping pulse (duration `t_map`) transfers her qubit onto
//! the cavity-A field; Bob's Bell pulse (duration `t_bell`) runs during the
//! final `t_bell` of it, so both pulses end together. A deterministic phase
//! calibration then aligns the prepared state with the detection convention.
//! During the detection window the leaked fields interfere on the beam
//! splitter; exactly one observed click teleports the qubit onto atom 2 up to
//! a detector-dependent phase, removed by a timed level-shift pulse.
//!
//! Any collapse during preparation aborts the attempt, observed or not: a
//! preparation-time photon is gone regardless of whether a detector fired.
//!
//! The entanglement variant runs both Bell pulses from the doubly excited
//! state and post-selects the same single-click window, leaving the two atoms
//! in a Bell state up to a sign canonicalized away on atom 2.
//!
//! The recovery encoding spreads the input over atom 1 and a reserve atom
//! before the attempt, so the detection-window failure outcomes leave the
//! qubit on the reserve atom up to a known Pauli correction.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::dynamics::{run_trajectory, trajectory_rng, JumpEvent, JumpPolicy, Stage};
use crate::hilbert::{DensityMatrix, Operator, PureState, Space};
use crate::model::{self, ModelError, PhysicalParams, StageTimes};
use crate::C64;

/// Normalized single-qubit input a|e> + b|g>.
#[derive(Clone, Copy, Debug)]
pub struct InputQubit {
    a: C64,
    b: C64,
}

impl InputQubit {
    pub fn new(a: C64, b: C64) -> InputQubit {
        let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
        assert!(norm.is_finite() && norm > 1e-150, "input qubit must have nonzero finite norm");
        InputQubit { a: a / norm, b: b / norm }
    }

    /// Uniform draw from the Bloch sphere: two complex Gaussian amplitudes,
    /// normalized.
    pub fn haar<R: Rng + ?Sized>(rng: &mut R) -> InputQubit {
        let (z1, z2) = gaussian_pair(rng);
        let (z3, z4) = gaussian_pair(rng);
        InputQubit::new(C64::new(z1, z2), C64::new(z3, z4))
    }

    /// Excited-state amplitude.
    pub fn a(&self) -> C64 {
        self.a
    }

    /// Ground-state amplitude.
    pub fn b(&self) -> C64 {
        self.b
    }

    /// Excited-state population u = |a|^2.
    pub fn u(&self) -> f64 {
        self.a.norm_sqr()
    }
}

pub(crate) fn gaussian_pair<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let angle = std::f64::consts::TAU * u2;
    (r * angle.cos(), r * angle.sin())
}

/// Which beam-splitter port fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Detector {
    Plus,
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureReason {
    /// No observed click in the detection window.
    NoClick,
    /// Both photons observed: the input was projected out.
    TwoClicks,
    /// A collapse during preparation, observed or not.
    PrepDecay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success(Detector),
    Failure(FailureReason),
}

/// Classify a detection window from its observed clicks only.
pub fn classify_detection(events: &[JumpEvent]) -> Outcome {
    let mut observed = events.iter().filter(|e| e.observed).map(|e| e.channel);
    match (observed.next(), observed.next()) {
        (None, _) => Outcome::Failure(FailureReason::NoClick),
        (Some(ch), None) => {
            Outcome::Success(if ch == 0 { Detector::Plus } else { Detector::Minus })
        }
        _ => Outcome::Failure(FailureReason::TwoClicks),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OutcomeCounts {
    pub success_plus: u64,
    pub success_minus: u64,
    pub no_click: u64,
    pub two_clicks: u64,
    pub prep_decay: u64,
}

impl OutcomeCounts {
    pub fn record(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::Success(Detector::Plus) => self.success_plus += 1,
            Outcome::Success(Detector::Minus) => self.success_minus += 1,
            Outcome::Failure(FailureReason::NoClick) => self.no_click += 1,
            Outcome::Failure(FailureReason::TwoClicks) => self.two_clicks += 1,
            Outcome::Failure(FailureReason::PrepDecay) => self.prep_decay += 1,
        }
    }

    pub fn successes(&self) -> u64 {
        self.success_plus + self.success_minus
    }

    pub fn total(&self) -> u64 {
        self.successes() + self.no_click + self.two_clicks + self.prep_decay
    }
}

fn coupling(params: &PhysicalParams) -> f64 {
    params.g * params.omega / params.delta
}

/// Input qubit on atom 1, cavities empty, Bob's atom excited.
pub fn teleport_initial_state(q: &InputQubit) -> PureState {
    let space = model::teleport_space();
    let mut amp = DVector::zeros(space.dim());
    amp[space.flat_index(&[model::EXCITED, 0, model::EXCITED, 0])] = q.a;
    amp[space.flat_index(&[model::GROUND, 0, model::EXCITED, 0])] = q.b;
    PureState::new(space, amp)
}

/// Both atoms excited, cavities empty.
pub fn entangle_initial_state() -> PureState {
    PureState::basis(model::teleport_space(), &[model::EXCITED, 0, model::EXCITED, 0])
}

/// The input qubit written on Bob's atom, the teleportation target.
pub fn target_state(q: &InputQubit) -> PureState {
    let space = Space::new(&[(model::ATOM_2, 2)]);
    let mut amp = DVector::zeros(2);
    amp[model::EXCITED] = q.a;
    amp[model::GROUND] = q.b;
    PureState::new(space, amp)
}

/// Preparation as two end-aligned stages: Alice's mapping pulse runs alone
/// for `t_map - t_bell`, then both pulses run together for `t_bell`. The
/// beam-splitter ports stay open throughout.
pub fn teleport_stages(params: &PhysicalParams, times: &StageTimes) -> Vec<Stage> {
    let space = model::teleport_space();
    let e = coupling(params);
    let h_a = model::hamiltonian_raman(&space, e, model::ATOM_1, model::CAV_A);
    let h_b = model::hamiltonian_raman(&space, e, model::ATOM_2, model::CAV_B);
    let channels = model::beam_splitter_channels(&space, params.kappa);
    vec![
        Stage::new("mapping pulse alone", h_a.clone(), channels.clone(), times.t_map - times.t_bell),
        Stage::new("joint pulses", &h_a + &h_b, channels, times.t_bell),
    ]
}

/// Simultaneous Bell pulses on both pairs, for the entanglement protocol.
pub fn entangle_stage(params: &PhysicalParams, times: &StageTimes) -> Stage {
    let space = model::teleport_space();
    let e = coupling(params);
    let h = &model::hamiltonian_raman(&space, e, model::ATOM_1, model::CAV_A)
        + &model::hamiltonian_raman(&space, e, model::ATOM_2, model::CAV_B);
    Stage::new("joint pulses", h, model::beam_splitter_channels(&space, params.kappa), times.t_bell)
}

/// Detection window: drives off, beam-splitter ports open.
pub fn detection_stage(params: &PhysicalParams, duration: f64) -> Stage {
    let space = model::teleport_space();
    Stage::new(
        "detection window",
        Operator::zero(&space),
        model::beam_splitter_channels(&space, params.kappa),
        duration,
    )
}

fn cavity_phase(z: C64) -> DMatrix<C64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(1.0, 0.0), z]))
}

/// Deterministic phase calibration applied between preparation and detection.
/// It removes the accumulated drive phases (the uniform E I terms) and turns
/// the exact no-collapse preparation output into the convention
/// (a alpha |1> + b |0>)_A (|e,0> + i |g,1>)_B used by the detection
/// analysis. It acts only on the cavities plus a global phase, so click
/// statistics are unchanged; the conditional states and hence the correction
/// table depend on it.
pub fn teleport_calibration(params: &PhysicalParams, times: &StageTimes) -> Operator {
    let space = model::teleport_space();
    let phase = C64::from_polar(1.0, coupling(params) * (times.t_map + times.t_bell));
    Operator::product(
        &space,
        &[
            (model::CAV_A, &cavity_phase(C64::new(0.0, 1.0))),
            (model::CAV_B, &cavity_phase(C64::new(-1.0, 0.0))),
        ],
    )
    .scaled(phase)
}

/// Calibration for the entanglement protocol: both prepared pairs become
/// (|e,0> + i |g,1>)/sqrt(2).
pub fn entangle_calibration(params: &PhysicalParams, times: &StageTimes) -> Operator {
    let space = model::teleport_space();
    let phase = C64::from_polar(1.0, 2.0 * coupling(params) * times.t_bell);
    Operator::product(
        &space,
        &[
            (model::CAV_A, &cavity_phase(C64::new(-1.0, 0.0))),
            (model::CAV_B, &cavity_phase(C64::new(-1.0, 0.0))),
        ],
    )
    .scaled(phase)
}

/// How long the level-shift pulse exp(-i delta_e t |e><e|) must run on Bob's
/// atom: phase i after a "+" click (t = 3 pi / 2 delta_e), phase -i after a
/// "-" click (t = pi / 2 delta_e).
pub fn correction_duration(params: &PhysicalParams, detector: Detector) -> f64 {
    match detector {
        Detector::Plus => 1.5 * std::f64::consts::PI / params.delta_e,
        Detector::Minus => 0.5 * std::f64::consts::PI / params.delta_e,
    }
}

/// The finished correction unitary on Bob's atom.
pub fn correction_unitary(params: &PhysicalParams, detector: Detector) -> Operator {
    let t = correction_duration(params, detector);
    let phase = C64::from_polar(1.0, -params.delta_e * t);
    let m = DMatrix::from_diagonal(&DVector::from_vec(vec![phase, C64::new(1.0, 0.0)]));
    Operator::product(&model::teleport_space(), &[(model::ATOM_2, &m)])
}

/// Per-trajectory record of one teleportation attempt.
#[derive(Clone, Copy, Debug)]
pub struct TrajectoryRecord {
    pub outcome: Outcome,
    /// Time of the observed click within the detection window, on success.
    pub t_click: Option<f64>,
    /// Fidelity of Bob's corrected atom against the input, on success.
    pub fidelity: Option<f64>,
}

/// One full teleportation ensemble.
#[derive(Clone, Debug)]
pub struct TeleportationRun {
    pub trajectories: u64,
    pub counts: OutcomeCounts,
    pub success_probability: f64,
    pub success_stderr: f64,
    /// Mean and standard error of the teleportation fidelity over successful
    /// trajectories; `None` when nothing succeeded.
    pub fidelity_mean: Option<f64>,
    pub fidelity_stderr: Option<f64>,
    /// Success-averaged corrected state of Bob's atom.
    pub average_state: Option<DensityMatrix>,
    /// One record per trajectory, in trajectory order.
    pub records: Vec<TrajectoryRecord>,
}

/// One full entanglement-distribution ensemble.
#[derive(Clone, Debug)]
pub struct EntanglementRun {
    pub trajectories: u64,
    pub counts: OutcomeCounts,
    pub success_probability: f64,
    pub success_stderr: f64,
    /// Success-averaged two-atom state, "-" clicks canonicalized so every
    /// success targets (|eg> + |ge>)/sqrt(2).
    pub average_state: Option<DensityMatrix>,
}

struct TeleTraj {
    record: TrajectoryRecord,
    state: Option<DMatrix<C64>>,
}

fn teleport_core(
    params: &PhysicalParams,
    t_d: f64,
    trajectories: u64,
    master_seed: u64,
    sample: &(impl Fn(&mut ChaCha12Rng) -> InputQubit + Sync),
) -> Result<TeleportationRun, ModelError> {
    params.check()?;
    assert!(t_d.is_finite() && t_d >= 0.0);
    let times = model::stage_times(params)?;
    let prep = teleport_stages(params, &times);
    let detect = detection_stage(params, t_d);
    let calibration = teleport_calibration(params, &times);
    let corrections = [
        correction_unitary(params, Detector::Plus),
        correction_unitary(params, Detector::Minus),
    ];
    let per: Vec<TeleTraj> = (0..trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(master_seed, i);
            let q = sample(&mut rng);
            let psi0 = teleport_initial_state(&q);
            let prep_run = run_trajectory(&psi0, &prep, params.eta, JumpPolicy::HaltOnJump, &mut rng);
            if !prep_run.events.is_empty() {
                return TeleTraj {
                    record: TrajectoryRecord {
                        outcome: Outcome::Failure(FailureReason::PrepDecay),
                        t_click: None,
                        fidelity: None,
                    },
                    state: None,
                };
            }
            let calibrated = calibration.apply(&prep_run.final_state);
            let det_run = run_trajectory(
                &calibrated,
                std::slice::from_ref(&detect),
                params.eta,
                JumpPolicy::Continue,
                &mut rng,
            );
            let outcome = classify_detection(&det_run.events);
            match outcome {
                Outcome::Success(which) => {
                    let correction = match which {
                        Detector::Plus => &corrections[0],
                        Detector::Minus => &corrections[1],
                    };
                    let corrected = correction.apply(&det_run.final_state);
                    let rho2 = corrected.to_density().partial_trace(&[model::ATOM_2]);
                    let fidelity = rho2.fidelity_pure(&target_state(&q));
                    let t_click = det_run.events.iter().find(|e| e.observed).map(|e| e.time);
                    TeleTraj {
                        record: TrajectoryRecord { outcome, t_click, fidelity: Some(fidelity) },
                        state: Some(rho2.matrix().clone()),
                    }
                }
                _ => TeleTraj {
                    record: TrajectoryRecord { outcome, t_click: None, fidelity: None },
                    state: None,
                },
            }
        })
        .collect();

    let mut counts = OutcomeCounts::default();
    let mut fid_sum = 0.0;
    let mut fid_sq = 0.0;
    let mut state_sum = DMatrix::<C64>::zeros(2, 2);
    for t in &per {
        counts.record(t.record.outcome);
        if let Some(m) = &t.state {
            state_sum += m;
            let f = t.record.fidelity.unwrap();
            fid_sum += f;
            fid_sq += f * f;
        }
    }
    let total = trajectories as f64;
    let p = counts.successes() as f64 / total;
    let n_succ = counts.successes();
    let (fidelity_mean, fidelity_stderr, average_state) = if n_succ > 0 {
        let n = n_succ as f64;
        let mean = fid_sum / n;
        let var = ((fid_sq - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
        state_sum /= C64::new(n, 0.0);
        let space = Space::new(&[(model::ATOM_2, 2)]);
        (Some(mean), Some((var / n).sqrt()), Some(DensityMatrix::new(space, state_sum)))
    } else {
        (None, None, None)
    };
    Ok(TeleportationRun {
        trajectories,
        counts,
        success_probability: p,
        success_stderr: (p * (1.0 - p) / total).sqrt(),
        fidelity_mean,
        fidelity_stderr,
        average_state,
        records: per.iter().map(|t| t.record).collect(),
    })
}

/// Teleport a fixed input qubit `trajectories` times.
pub fn run_teleportation(
    params: &PhysicalParams,
    q: &InputQubit,
    t_d: f64,
    trajectories: u64,
    master_seed: u64,
) -> Result<TeleportationRun, ModelError> {
    let fixed = *q;
    teleport_core(params, t_d, trajectories, master_seed, &move |_| fixed)
}

/// Teleport an independent uniformly random input per trajectory; each
/// trajectory's fidelity is measured against its own input.
pub fn run_teleportation_haar(
    params: &PhysicalParams,
    t_d: f64,
    trajectories: u64,
    master_seed: u64,
) -> Result<TeleportationRun, ModelError> {
    teleport_core(params, t_d, trajectories, master_seed, &InputQubit::haar)
}

/// Run the entanglement-distribution protocol with detection window `t_w`.
pub fn run_entanglement(
    params: &PhysicalParams,
    t_w: f64,
    trajectories: u64,
    master_seed: u64,
) -> Result<EntanglementRun, ModelError> {
    params.check()?;
    assert!(t_w.is_finite() && t_w >= 0.0);
    let times = model::stage_times(params)?;
    let space = model::teleport_space();
    let prep = [entangle_stage(params, &times)];
    let detect = detection_stage(params, t_w);
    let calibration = entangle_calibration(params, &times);
    // A "-" click prepares (|eg> - |ge>)/sqrt(2); a sign flip on Bob's ground
    // state folds it onto the "+" target.
    let canonicalize = Operator::product(&space, &[(model::ATOM_2, &cavity_phase(C64::new(-1.0, 0.0)))]);
    let psi0 = entangle_initial_state();

    struct EntTraj {
        outcome: Outcome,
        state: Option<DMatrix<C64>>,
    }
    let per: Vec<EntTraj> = (0..trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(master_seed, i);
            let prep_run = run_trajectory(&psi0, &prep, params.eta, JumpPolicy::HaltOnJump, &mut rng);
            if !prep_run.events.is_empty() {
                return EntTraj { outcome: Outcome::Failure(FailureReason::PrepDecay), state: None };
            }
            let calibrated = calibration.apply(&prep_run.final_state);
            let det_run = run_trajectory(
                &calibrated,
                std::slice::from_ref(&detect),
                params.eta,
                JumpPolicy::Continue,
                &mut rng,
            );
            let outcome = classify_detection(&det_run.events);
            match outcome {
                Outcome::Success(which) => {
                    let final_state = match which {
                        Detector::Plus => det_run.final_state,
                        Detector::Minus => canonicalize.apply(&det_run.final_state),
                    };
                    let atoms = final_state
                        .to_density()
                        .partial_trace(&[model::ATOM_1, model::ATOM_2]);
                    EntTraj { outcome, state: Some(atoms.matrix().clone()) }
                }
                _ => EntTraj { outcome, state: None },
            }
        })
        .collect();

    let mut counts = OutcomeCounts::default();
    let mut state_sum = DMatrix::<C64>::zeros(4, 4);
    for t in &per {
        counts.record(t.outcome);
        if let Some(m) = &t.state {
            state_sum += m;
        }
    }
    let total = trajectories as f64;
    let p = counts.successes() as f64 / total;
    let average_state = if counts.successes() > 0 {
        state_sum /= C64::new(counts.successes() as f64, 0.0);
        let atoms_space = Space::new(&[(model::ATOM_1, 2), (model::ATOM_2, 2)]);
        Some(DensityMatrix::new(atoms_space, state_sum))
    } else {
        None
    };
    Ok(EntanglementRun {
        trajectories,
        counts,
        success_probability: p,
        success_stderr: (p * (1.0 - p) / total).sqrt(),
        average_state,
    })
}

/// Pauli corrections available for recovery on the reserve atom, tried in
/// this order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorrectionLabel {
    Identity,
    PhaseFlip,
    BitFlip,
    BitPhaseFlip,
}

impl CorrectionLabel {
    pub const ALL: [CorrectionLabel; 4] = [
        CorrectionLabel::Identity,
        CorrectionLabel::PhaseFlip,
        CorrectionLabel::BitFlip,
        CorrectionLabel::BitPhaseFlip,
    ];

    fn matrix(self) -> DMatrix<C64> {
        let (one, zero) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        match self {
            CorrectionLabel::Identity => DMatrix::identity(2, 2),
            CorrectionLabel::PhaseFlip => {
                DMatrix::from_diagonal(&DVector::from_vec(vec![one, -one]))
            }
            CorrectionLabel::BitFlip => DMatrix::from_row_slice(2, 2, &[zero, one, one, zero]),
            CorrectionLabel::BitPhaseFlip => {
                DMatrix::from_row_slice(2, 2, &[zero, -one, one, zero])
            }
        }
    }
}

/// The best single-Pauli recovery found for a reserve-atom state.
#[derive(Clone, Copy, Debug)]
pub struct Recovery {
    pub label: CorrectionLabel,
    pub fidelity: f64,
    /// True when no single Pauli restores the input exactly (within 1e-9),
    /// as happens for lossy-detector failure mixtures.
    pub degraded: bool,
}

/// The reserve-atom space used by the recovery encoding.
pub fn reserve_atom_space() -> Space {
    Space::new(&[(model::ATOM_R, 2)])
}

/// Recovery target: the input qubit written on the reserve atom with the
/// roles of |e> and |g> exchanged, |s> = a|g> + b|e>. Both detection-window
/// failure branches land on |s> up to one Pauli.
pub fn insurance_target(q: &InputQubit) -> PureState {
    let mut amp = DVector::zeros(2);
    amp[model::EXCITED] = q.b;
    amp[model::GROUND] = q.a;
    PureState::new(reserve_atom_space(), amp)
}

/// Pre-attempt encoding of the input across atom 1 and the reserve atom:
/// [a(|eg> + |ge>) + b(|gg> + |ee>)] / sqrt(2)
///   = [|e>_1 (a|g> + b|e>)_r + |g>_1 (a|e> + b|g>)_r] / sqrt(2),
/// so atom 1 carries one full copy of the amplitudes in each branch.
pub fn insurance_encode(q: &InputQubit) -> PureState {
    let space = Space::new(&[(model::ATOM_1, 2), (model::ATOM_R, 2)]);
    let mut amp = DVector::zeros(4);
    let root_half = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    amp[space.flat_index(&[model::EXCITED, model::EXCITED])] = q.b * root_half;
    amp[space.flat_index(&[model::EXCITED, model::GROUND])] = q.a * root_half;
    amp[space.flat_index(&[model::GROUND, model::EXCITED])] = q.a * root_half;
    amp[space.flat_index(&[model::GROUND, model::GROUND])] = q.b * root_half;
    PureState::new(space, amp)
}

/// Search the four Pauli corrections for the one that best restores the
/// input from a reserve-atom failure state. Ties keep the earliest label.
pub fn insurance_recover(q: &InputQubit, state: &DensityMatrix) -> Recovery {
    assert_eq!(state.space(), &reserve_atom_space(), "recovery acts on the reserve atom");
    let target = insurance_target(q);
    let mut best = Recovery { label: CorrectionLabel::Identity, fidelity: -1.0, degraded: true };
    for label in CorrectionLabel::ALL {
        let op = Operator::new(reserve_atom_space(), label.matrix());
        let fidelity = state.transformed(&op).fidelity_pure(&target);
        if fidelity > best.fidelity {
            best = Recovery { label, fidelity, degraded: fidelity < 1.0 - 1e-9 };
        }
    }
    best
}
