//! Monte Carlo wave-function engine and a master-equation cross-check.
//!
//! A protocol run is a sequence of [`Stage`]s. Within a stage the state obeys
//! d|psi>/dt = A |psi> with the non-Hermitian generator
//! A = -i H - (1/2) sum_j L_j† L_j, interrupted by collapses |psi> -> L_j|psi>
//! at jump times sampled from the exact waiting-time distribution: draw
//! r in (0, 1] and find the time where the decaying squared norm crosses r.
//!
//! Propagation is never step-integrated. Each stage precomputes a ladder of
//! exact propagators exp(A T / 2^k), so any dyadic fraction of the stage is a
//! handful of cached matrix-vector products and the crossing search is a
//! binary walk on that grid. Diagonal generators (detection windows, where
//! the drives are off) skip the ladder entirely and use the closed form at
//! arbitrary times.
//!
//! Every random decision per segment draws in a fixed order: waiting-time
//! threshold, then collapse channel, then detector thinning. Trajectories are
//! seeded independently of thread scheduling, so ensembles are reproducible
//! and order-independent under `rayon`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::hilbert::{expm, is_diagonal, DensityMatrix, Operator, PureState, Space};
use crate::C64;

/// Jump times are resolved to this accuracy (microseconds).
pub const TIME_TOL: f64 = 1e-9;

/// What to do when a collapse happens.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JumpPolicy {
    /// Collapse and keep evolving (unconditional ensembles, detection windows).
    Continue,
    /// Return immediately after the first collapse (preparation stages, where
    /// any leak aborts the protocol regardless of whether it was seen).
    HaltOnJump,
}

/// One collapse event. `time` is measured from the start of the stage.
#[derive(Clone, Debug)]
pub struct JumpEvent {
    pub stage: usize,
    pub time: f64,
    pub channel: usize,
    pub observed: bool,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Normalized state at the end of the last stage run.
    pub final_state: PureState,
    pub events: Vec<JumpEvent>,
}

enum Ladder {
    /// Diagonal generator entries; closed-form advance at arbitrary dt.
    Diagonal(DVector<C64>),
    /// levels[k] = exp(A * duration / 2^k), k = 0..=depth.
    Dense { levels: Vec<DMatrix<C64>>, depth: u32 },
}

impl Ladder {
    fn build(a: &DMatrix<C64>, duration: f64) -> Ladder {
        if is_diagonal(a) {
            return Ladder::Diagonal(a.diagonal());
        }
        let depth = if duration <= TIME_TOL {
            1
        } else {
            ((duration / TIME_TOL).log2().ceil() as u32).clamp(1, 46)
        };
        let levels = (0..=depth)
            .map(|k| expm(&(a * C64::new(duration / (1u64 << k) as f64, 0.0))))
            .collect();
        Ladder::Dense { levels, depth }
    }
}

/// A finite interval of fixed Hamiltonian and collapse channels.
pub struct Stage {
    label: String,
    duration: f64,
    hamiltonian: Operator,
    channels: Vec<Operator>,
    ladder: Ladder,
}

impl Stage {
    pub fn new(
        label: impl Into<String>,
        hamiltonian: Operator,
        channels: Vec<Operator>,
        duration: f64,
    ) -> Stage {
        assert!(duration.is_finite() && duration >= 0.0);
        for l in &channels {
            assert_eq!(l.space(), hamiltonian.space(), "channel space mismatch");
        }
        let mut a = hamiltonian.matrix() * C64::new(0.0, -1.0);
        for l in &channels {
            a -= l.gram().matrix() * C64::new(0.5, 0.0);
        }
        let ladder = Ladder::build(&a, duration);
        Stage { label: label.into(), duration, hamiltonian, channels, ladder }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[Operator] {
        &self.channels
    }

    pub fn space(&self) -> &Space {
        self.hamiltonian.space()
    }

    /// No-collapse propagation of `psi` across the whole stage, unnormalized:
    /// the squared norm it loses is the no-jump probability.
    pub fn propagate_full(&self, psi: &PureState) -> PureState {
        assert_eq!(psi.space(), self.space());
        let amp = match &self.ladder {
            Ladder::Diagonal(g) => advance_diagonal(g, psi.amplitudes(), self.duration),
            Ladder::Dense { levels, .. } => &levels[0] * psi.amplitudes(),
        };
        PureState::new(self.space().clone(), amp)
    }

    fn collapse<R: Rng + ?Sized>(&self, v_pre: &DVector<C64>, rng: &mut R) -> (usize, DVector<C64>) {
        let weights: Vec<f64> = self
            .channels
            .iter()
            .map(|l| (l.matrix() * v_pre).iter().map(|z| z.norm_sqr()).sum())
            .collect();
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0, "collapse reached with no open channel in stage `{}`", self.label);
        let mut pick = rng.gen::<f64>() * total;
        let mut channel = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if pick < *w {
                channel = i;
                break;
            }
            pick -= w;
        }
        let mut v = self.channels[channel].matrix() * v_pre;
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v /= C64::new(norm, 0.0);
        (channel, v)
    }

    /// Runs the stage in place on a normalized `v`. Returns true if a collapse
    /// halted the stage under [`JumpPolicy::HaltOnJump`].
    fn run<R: Rng + ?Sized>(
        &self,
        stage_idx: usize,
        v: &mut DVector<C64>,
        eta: f64,
        policy: JumpPolicy,
        rng: &mut R,
        events: &mut Vec<JumpEvent>,
    ) -> bool {
        match &self.ladder {
            Ladder::Diagonal(g) => self.run_diagonal(g, stage_idx, v, eta, policy, rng, events),
            Ladder::Dense { levels, depth } => {
                self.run_dense(levels, *depth, stage_idx, v, eta, policy, rng, events)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn run_diagonal<R: Rng + ?Sized>(
        &self,
        g: &DVector<C64>,
        stage_idx: usize,
        v: &mut DVector<C64>,
        eta: f64,
        policy: JumpPolicy,
        rng: &mut R,
        events: &mut Vec<JumpEvent>,
    ) -> bool {
        let mut t = 0.0;
        loop {
            let r = 1.0 - rng.gen::<f64>();
            let rest = self.duration - t;
            if survival_diagonal(g, v, rest) >= r {
                *v = advance_diagonal(g, v, rest);
                normalize(v);
                return false;
            }
            // The squared norm decays monotonically; bisect the crossing.
            let (mut lo, mut hi) = (0.0, rest);
            for _ in 0..200 {
                if hi - lo <= 1e-12 {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if survival_diagonal(g, v, mid) >= r {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let v_pre = advance_diagonal(g, v, hi);
            let (channel, v_new) = self.collapse(&v_pre, rng);
            let observed = rng.gen::<f64>() < eta;
            t += hi;
            events.push(JumpEvent { stage: stage_idx, time: t, channel, observed });
            *v = v_new;
            if policy == JumpPolicy::HaltOnJump {
                return true;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn run_dense<R: Rng + ?Sized>(
        &self,
        levels: &[DMatrix<C64>],
        depth: u32,
        stage_idx: usize,
        v: &mut DVector<C64>,
        eta: f64,
        policy: JumpPolicy,
        rng: &mut R,
        events: &mut Vec<JumpEvent>,
    ) -> bool {
        let grid = 1u64 << depth;
        let dt_grid = self.duration / grid as f64;
        let mut pos = 0u64;
        loop {
            let r = 1.0 - rng.gen::<f64>();
            let v_end = apply_units(levels, depth, v, grid - pos);
            if norm_sqr(&v_end) >= r {
                *v = v_end;
                normalize(v);
                return false;
            }
            // Binary walk: keep the latest grid point still above threshold.
            let (mut lo, mut hi) = (pos, grid);
            let mut v_lo = v.clone();
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                let v_mid = apply_units(levels, depth, &v_lo, mid - lo);
                if norm_sqr(&v_mid) >= r {
                    lo = mid;
                    v_lo = v_mid;
                } else {
                    hi = mid;
                }
            }
            let v_pre = apply_units(levels, depth, &v_lo, hi - lo);
            let (channel, v_new) = self.collapse(&v_pre, rng);
            let observed = rng.gen::<f64>() < eta;
            pos = hi;
            events.push(JumpEvent { stage: stage_idx, time: pos as f64 * dt_grid, channel, observed });
            *v = v_new;
            if policy == JumpPolicy::HaltOnJump {
                return true;
            }
        }
    }
}

fn norm_sqr(v: &DVector<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn normalize(v: &mut DVector<C64>) {
    let n = norm_sqr(v).sqrt();
    assert!(n > 1e-150, "state vector collapsed to zero");
    *v /= C64::new(n, 0.0);
}

fn advance_diagonal(g: &DVector<C64>, v: &DVector<C64>, dt: f64) -> DVector<C64> {
    DVector::from_iterator(v.len(), v.iter().zip(g.iter()).map(|(a, gi)| a * (gi * dt).exp()))
}

fn survival_diagonal(g: &DVector<C64>, v: &DVector<C64>, dt: f64) -> f64 {
    v.iter()
        .zip(g.iter())
        .map(|(a, gi)| a.norm_sqr() * (2.0 * gi.re * dt).exp())
        .sum()
}

/// Apply `units` grid steps (each duration/2^depth) by binary decomposition.
fn apply_units(levels: &[DMatrix<C64>], depth: u32, v: &DVector<C64>, units: u64) -> DVector<C64> {
    let mut out = v.clone();
    for k in 0..=depth {
        if units & (1u64 << (depth - k)) != 0 {
            out = &levels[k as usize] * &out;
        }
    }
    out
}

/// Propagate one trajectory through `stages`. The initial state is normalized
/// defensively; the returned state is normalized.
pub fn run_trajectory<R: Rng + ?Sized>(
    initial: &PureState,
    stages: &[Stage],
    eta: f64,
    policy: JumpPolicy,
    rng: &mut R,
) -> Trajectory {
    let mut v = initial.normalized().amplitudes().clone();
    let mut events = Vec::new();
    for (idx, stage) in stages.iter().enumerate() {
        assert_eq!(stage.space(), initial.space(), "stage {idx} runs on a different space");
        if stage.duration == 0.0 {
            continue;
        }
        if stage.run(idx, &mut v, eta, policy, rng, &mut events) {
            break;
        }
    }
    Trajectory { final_state: PureState::new(initial.space().clone(), v), events }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent per-trajectory stream: a fixed mix of the master seed and the
/// trajectory index. Stable across versions and thread schedules.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(splitmix64(master_seed ^ splitmix64(index)))
}

/// Unconditional ensemble average of trajectory projectors, for comparison
/// against the master equation. Detector efficiency is irrelevant here since
/// unobserved collapses affect the state identically.
pub fn ensemble_average(
    initial: &PureState,
    stages: &[Stage],
    trajectories: u64,
    master_seed: u64,
) -> DensityMatrix {
    let per: Vec<DMatrix<C64>> = (0..trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(master_seed, i);
            let t = run_trajectory(initial, stages, 1.0, JumpPolicy::Continue, &mut rng);
            t.final_state.to_density().matrix().clone()
        })
        .collect();
    let dim = initial.space().dim();
    let mut acc = DMatrix::<C64>::zeros(dim, dim);
    for m in &per {
        acc += m;
    }
    acc /= C64::new(trajectories as f64, 0.0);
    DensityMatrix::new(initial.space().clone(), acc)
}

/// Fixed-step RK4 integration of the master equation
/// d rho/dt = -i[H, rho] + sum_j (L_j rho L_j† - (1/2){L_j† L_j, rho}).
/// The step is bounded by the largest generator norm, so stiffness cannot
/// silently degrade accuracy.
pub fn lindblad_evolve(
    rho: &DensityMatrix,
    hamiltonian: &Operator,
    channels: &[Operator],
    duration: f64,
) -> DensityMatrix {
    assert_eq!(rho.space(), hamiltonian.space());
    if duration == 0.0 {
        return rho.clone();
    }
    let h = hamiltonian.matrix();
    let pairs: Vec<(DMatrix<C64>, DMatrix<C64>)> = channels
        .iter()
        .map(|l| (l.matrix().clone(), l.gram().matrix().clone()))
        .collect();
    let scale = pairs
        .iter()
        .map(|(_, ll)| ll.norm())
        .fold(h.norm(), f64::max);
    let steps = ((duration * scale * 100.0).ceil() as usize).max(50);
    let dt = duration / steps as f64;
    let deriv = |r: &DMatrix<C64>| -> DMatrix<C64> {
        let mut d = (h * r - r * h) * C64::new(0.0, -1.0);
        for (l, ll) in &pairs {
            d += l * r * l.adjoint();
            d -= (ll * r + r * ll) * C64::new(0.5, 0.0);
        }
        d
    };
    let mut r = rho.matrix().clone();
    for _ in 0..steps {
        let k1 = deriv(&r);
        let k2 = deriv(&(&r + &k1 * C64::new(0.5 * dt, 0.0)));
        let k3 = deriv(&(&r + &k2 * C64::new(0.5 * dt, 0.0)));
        let k4 = deriv(&(&r + &k3 * C64::new(dt, 0.0)));
        r += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
    }
    DensityMatrix::new(rho.space().clone(), r)
}

/// Chain [`lindblad_evolve`] across a stage sequence.
pub fn lindblad_through_stages(rho: &DensityMatrix, stages: &[Stage]) -> DensityMatrix {
    let mut out = rho.clone();
    for s in stages {
        out = lindblad_evolve(&out, s.hamiltonian(), s.channels(), s.duration());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::trace_distance;
    use crate::model;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn single_cavity() -> (Space, Stage, f64) {
        let s = Space::new(&[(model::CAV_A, 2)]);
        let kappa = 0.4;
        let rate = 2.0 * kappa;
        let stage = Stage::new(
            "free decay",
            Operator::zero(&s),
            vec![model::single_cavity_channel(&s, kappa, model::CAV_A)],
            10.0 / rate,
        );
        (s, stage, rate)
    }

    fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len() as f64;
        samples
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn waiting_times_are_exponential_for_free_decay() {
        let (s, stage, rate) = single_cavity();
        let psi = PureState::basis(s, &[1]);
        let stages = [stage];
        let n = 4000;
        let mut times = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = trajectory_rng(0xD11A_57A6, i as u64);
            let t = run_trajectory(&psi, &stages, 1.0, JumpPolicy::Continue, &mut rng);
            if let Some(e) = t.events.first() {
                times.push(e.time);
            }
        }
        assert!(times.len() >= n - 5, "decay within 10 lifetimes is near-certain");
        let horizon = stages[0].duration();
        let norm = 1.0 - (-rate * horizon).exp();
        let d = ks_statistic(&mut times, |t| (1.0 - (-rate * t).exp()) / norm);
        // 1% critical value of the Kolmogorov-Smirnov statistic.
        assert!(d < 1.63 / (times.len() as f64).sqrt(), "KS statistic {d} too large");
    }

    #[test]
    fn dense_stage_waiting_times_match_exchange_survival() {
        // Driven exchange with decay: survival from |e,0> follows the damped
        // two-level closed form, exercising the dyadic crossing search.
        let s = Space::new(&[(model::ATOM_1, 2), (model::CAV_A, 2)]);
        let (e, kappa) = (3.1, 0.9);
        let h = model::hamiltonian_raman(&s, e, model::ATOM_1, model::CAV_A);
        let channel = model::single_cavity_channel(&s, kappa, model::CAV_A);
        let duration = 4.0;
        let stage = Stage::new("driven pair", h, vec![channel], duration);
        let psi = PureState::basis(s, &[model::EXCITED, 0]);
        let mu = (e * e - 0.25 * kappa * kappa).sqrt();
        let survival = |t: f64| {
            let (cv, sv) = ((mu * t).cos(), (mu * t).sin());
            let ce = cv + 0.5 * kappa / mu * sv;
            let cg = e / mu * sv;
            (-kappa * t).exp() * (ce * ce + cg * cg)
        };
        let stages = [stage];
        let n = 3000;
        let mut times = Vec::new();
        for i in 0..n {
            let mut rng = trajectory_rng(0x5EED_0002, i as u64);
            let t = run_trajectory(&psi, &stages, 1.0, JumpPolicy::HaltOnJump, &mut rng);
            if let Some(ev) = t.events.first() {
                times.push(ev.time);
            }
        }
        let p_jump = 1.0 - survival(duration);
        let frac = times.len() as f64 / n as f64;
        assert!((frac - p_jump).abs() < 3.0 * (p_jump * (1.0 - p_jump) / n as f64).sqrt());
        let d = ks_statistic(&mut times, |t| (1.0 - survival(t)) / p_jump);
        assert!(d < 1.63 / (times.len() as f64).sqrt(), "KS statistic {d} too large");
    }

    #[test]
    fn symmetric_photon_state_never_fires_minus_port() {
        let s = model::teleport_space();
        let channels = model::beam_splitter_channels(&s, 0.3);
        let h = Operator::zero(&s);
        let stage = Stage::new("detection", h, channels, 20.0);
        let mut amp = nalgebra::DVector::zeros(s.dim());
        amp[s.flat_index(&[model::GROUND, 0, model::GROUND, 1])] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        amp[s.flat_index(&[model::GROUND, 1, model::GROUND, 0])] = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let psi = PureState::new(s, amp);
        let stages = [stage];
        for i in 0..200 {
            let mut rng = trajectory_rng(3, i);
            let t = run_trajectory(&psi, &stages, 1.0, JumpPolicy::Continue, &mut rng);
            assert_eq!(t.events.len(), 1);
            assert_eq!(t.events[0].channel, 0, "minus port is dark for the symmetric state");
        }
    }

    #[test]
    fn thinning_marks_roughly_eta_of_collapses_observed() {
        let (s, stage, _) = single_cavity();
        let psi = PureState::basis(s, &[1]);
        let stages = [stage];
        let eta = 0.3;
        let (mut seen, mut total) = (0u32, 0u32);
        for i in 0..2000 {
            let mut rng = trajectory_rng(11, i);
            let t = run_trajectory(&psi, &stages, eta, JumpPolicy::Continue, &mut rng);
            for e in &t.events {
                total += 1;
                seen += e.observed as u32;
            }
        }
        let frac = seen as f64 / total as f64;
        assert!((frac - eta).abs() < 3.0 * (eta * (1.0 - eta) / total as f64).sqrt());
    }

    #[test]
    fn ladder_advance_matches_direct_exponential() {
        let s = Space::new(&[(model::ATOM_1, 2), (model::CAV_A, 2)]);
        let h = model::hamiltonian_raman(&s, 2.2, model::ATOM_1, model::CAV_A);
        let channel = model::single_cavity_channel(&s, 0.15, model::CAV_A);
        let duration = 0.7;
        let stage = Stage::new("pair", h.clone(), vec![channel.clone()], duration);
        let psi = PureState::basis(s.clone(), &[model::EXCITED, 0]);
        let full = stage.propagate_full(&psi);
        let gen = &h + &channel.gram().scaled(c(0.0, -0.5));
        let direct = crate::hilbert::evolve(&psi, &gen, duration);
        for i in 0..s.dim() {
            assert_relative_eq!(full.amplitudes()[i].re, direct.amplitudes()[i].re, epsilon = 1e-11);
            assert_relative_eq!(full.amplitudes()[i].im, direct.amplitudes()[i].im, epsilon = 1e-11);
        }
    }

    #[test]
    fn ensemble_average_matches_master_equation() {
        let s = Space::new(&[(model::ATOM_1, 2), (model::CAV_A, 2)]);
        let h = model::hamiltonian_raman(&s, std::f64::consts::TAU, model::ATOM_1, model::CAV_A);
        let channel = model::single_cavity_channel(&s, 0.8, model::CAV_A);
        let stage = Stage::new("pair", h, vec![channel], 1.2);
        let psi = PureState::basis(s, &[model::EXCITED, 0]);
        let stages = [stage];
        let mc = ensemble_average(&psi, &stages, 3000, 0xA55E);
        let me = lindblad_through_stages(&psi.to_density(), &stages);
        assert!((me.trace() - 1.0).abs() < 1e-8, "master equation trace drift");
        assert!(trace_distance(&mc, &me) < 0.03);
    }

    #[test]
    fn trajectories_are_reproducible() {
        let (s, stage, _) = single_cavity();
        let psi = PureState::basis(s, &[1]);
        let stages = [stage];
        let run = |seed, idx| {
            let mut rng = trajectory_rng(seed, idx);
            run_trajectory(&psi, &stages, 0.7, JumpPolicy::Continue, &mut rng)
        };
        let (a, b) = (run(42, 7), run(42, 7));
        assert_eq!(a.events.len(), b.events.len());
        for (x, y) in a.events.iter().zip(&b.events) {
            assert_eq!(x.time, y.time);
            assert_eq!(x.channel, y.channel);
            assert_eq!(x.observed, y.observed);
        }
        let d = run(43, 7);
        assert!(a.events.len() != d.events.len() || a.events[0].time != d.events[0].time);
    }

    #[test]
    fn halt_on_jump_stops_at_first_collapse() {
        let s = model::teleport_space();
        let channels = model::beam_splitter_channels(&s, 0.3);
        let stage = Stage::new("detection", Operator::zero(&s), channels, 50.0);
        // Two photons present: Continue would record two collapses.
        let psi = PureState::basis(s.clone(), &[model::GROUND, 1, model::GROUND, 1]);
        let stages = [stage];
        let mut rng = trajectory_rng(5, 0);
        let halted = run_trajectory(&psi, &stages, 1.0, JumpPolicy::HaltOnJump, &mut rng);
        assert_eq!(halted.events.len(), 1);
        let mut rng = trajectory_rng(5, 0);
        let full = run_trajectory(&psi, &stages, 1.0, JumpPolicy::Continue, &mut rng);
        assert_eq!(full.events.len(), 2);
        assert!(full.final_state.factor_population(model::CAV_A, 0) > 0.999_999);
        assert!(full.final_state.factor_population(model::CAV_B, 0) > 0.999_999);
    }
}
