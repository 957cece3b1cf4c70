//! The six experiment commands. Each emits `<out>/summary.json` (echoed to
//! stdout) plus command-specific CSV and SVG files, and returns its exit
//! code.

use serde_json::{json, Value};

use qtel::analytics::{
    entanglement_of_bell_gg_mixture, relative_entropy_of_entanglement, Formulas, MixtureConvention,
};
use qtel::hilbert::{trace_distance, DensityMatrix};
use qtel::model::{EffectiveParams, ModelError, PhysicalParams};
use qtel::protocol::{
    self, CorrectionLabel, Detector, FailureReason, Outcome, OutcomeCounts, TeleportationRun,
};

use crate::config::RunConfig;
use crate::output::{ensure_out_dir, full, opt_full, Csv, Summary};
use crate::svg::{BarPlot, Series, XyPlot};
use crate::CliError;

fn model_err(e: ModelError) -> CliError {
    match e {
        ModelError::Overdamped { .. } => CliError::Regime(e.to_string()),
        ModelError::InvalidParameter(_) => CliError::Config(e.to_string()),
    }
}

/// Distinct deterministic master seed for sweep point `k`.
fn point_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add((k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn config_echo(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn counts_json(c: &OutcomeCounts) -> Value {
    json!({
        "success_plus": c.success_plus,
        "success_minus": c.success_minus,
        "no_click": c.no_click,
        "two_clicks": c.two_clicks,
        "prep_decay": c.prep_decay,
    })
}

fn matrix_json(rho: &DensityMatrix) -> Value {
    let m = rho.matrix();
    let rows: Vec<Value> = (0..m.nrows())
        .map(|i| {
            let row: Vec<Value> = (0..m.ncols()).map(|j| json!([m[(i, j)].re, m[(i, j)].im])).collect();
            Value::Array(row)
        })
        .collect();
    Value::Array(rows)
}

fn outcome_strings(outcome: Outcome) -> (&'static str, &'static str) {
    match outcome {
        Outcome::Success(Detector::Plus) => ("success", "plus"),
        Outcome::Success(Detector::Minus) => ("success", "minus"),
        Outcome::Failure(FailureReason::NoClick) => ("no_click", ""),
        Outcome::Failure(FailureReason::TwoClicks) => ("two_clicks", ""),
        Outcome::Failure(FailureReason::PrepDecay) => ("prep_decay", ""),
    }
}

fn reason_str(reason: FailureReason) -> &'static str {
    match reason {
        FailureReason::NoClick => "no_click",
        FailureReason::TwoClicks => "two_clicks",
        FailureReason::PrepDecay => "prep_decay",
    }
}

fn label_str(label: CorrectionLabel) -> &'static str {
    match label {
        CorrectionLabel::Identity => "identity",
        CorrectionLabel::PhaseFlip => "phase_flip",
        CorrectionLabel::BitFlip => "bit_flip",
        CorrectionLabel::BitPhaseFlip => "bit_phase_flip",
    }
}

pub fn validate(cfg: &RunConfig, mut warnings: Vec<String>) -> Result<u8, CliError> {
    let params = cfg.params();
    params.check().map_err(model_err)?;
    let eff = EffectiveParams::new(&params).map_err(model_err)?;
    let formulas = Formulas::new(&params).map_err(model_err)?;
    let times = formulas.times();
    warnings.extend(params.validate_regime());

    let quantities: [(&str, f64); 7] = [
        ("e_rad_per_us", eff.coupling),
        ("omega_kappa_rad_per_us", eff.omega_kappa),
        ("t_map_us", times.t_map),
        ("t_bell_us", times.t_bell),
        ("alpha", formulas.alpha()),
        ("beta", formulas.beta_sqr().sqrt()),
        ("beta_sqr", formulas.beta_sqr()),
    ];
    ensure_out_dir(&cfg.out)?;
    let mut csv = Csv::new(&["quantity", "value"]);
    for (name, value) in quantities {
        csv.row(&[name.to_string(), full(value)]);
    }
    csv.write(&cfg.out.join("validate.csv"))?;

    let results: Value = quantities.iter().map(|&(k, v)| (k.to_string(), json!(v))).collect::<serde_json::Map<_, _>>().into();
    let exit = if warnings.is_empty() { 0 } else { 2 };
    Summary { command: "validate", config_echo: config_echo(cfg), results, warnings }.emit(&cfg.out)?;
    Ok(exit)
}

fn write_teleport_csv(cfg: &RunConfig, run: &TeleportationRun) -> Result<(), CliError> {
    let mut csv = Csv::new(&["trajectory", "outcome", "detector", "t_click_us", "fidelity"]);
    for (i, rec) in run.records.iter().enumerate() {
        let (outcome, detector) = outcome_strings(rec.outcome);
        csv.row(&[
            i.to_string(),
            outcome.to_string(),
            detector.to_string(),
            opt_full(rec.t_click),
            opt_full(rec.fidelity),
        ]);
    }
    csv.write(&cfg.out.join("teleport.csv"))
}

fn click_histogram(run: &TeleportationRun, t_d: f64) -> Vec<(f64, f64)> {
    let bins = 30usize;
    let width = if t_d > 0.0 { t_d / bins as f64 } else { return Vec::new() };
    let mut counts = vec![0u64; bins];
    for rec in &run.records {
        if let Some(t) = rec.t_click {
            counts[((t / width) as usize).min(bins - 1)] += 1;
        }
    }
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| ((i as f64 + 0.5) * width, c as f64))
        .collect()
}

pub fn teleport(cfg: &RunConfig, warnings: Vec<String>) -> Result<u8, CliError> {
    let params = cfg.params();
    let q = cfg.qubit();
    let formulas = Formulas::new(&params).map_err(model_err)?;
    let run = protocol::run_teleportation(&params, &q, cfg.t_d_us, cfg.trajectories, cfg.seed)
        .map_err(model_err)?;

    let u = q.u();
    let analytic_p = formulas.total_success(u, cfg.t_d_us);
    let analytic_f = formulas.fidelity(u, cfg.t_d_us);
    let p_sigma = (run.success_stderr > 0.0)
        .then(|| (run.success_probability - analytic_p) / run.success_stderr);
    let f_sigma = match (run.fidelity_mean, run.fidelity_stderr) {
        (Some(m), Some(s)) if s > 0.0 => Some((m - analytic_f) / s),
        _ => None,
    };

    ensure_out_dir(&cfg.out)?;
    write_teleport_csv(cfg, &run)?;
    let plot = XyPlot {
        title: format!("observed click times over {} trajectories", run.trajectories),
        x_label: "click time (us)".into(),
        y_label: "successful trajectories".into(),
        series: vec![Series {
            name: "clicks".into(),
            color: "steelblue",
            points: click_histogram(&run, cfg.t_d_us),
            y_err: None,
            line: true,
        }],
        v_lines: vec![],
    };
    crate::output::write_file(&cfg.out.join("teleport.svg"), plot.render().as_bytes())?;

    let results = json!({
        "mc": {
            "trajectories": run.trajectories,
            "counts": counts_json(&run.counts),
            "success_probability": run.success_probability,
            "success_stderr": run.success_stderr,
            "fidelity_mean": run.fidelity_mean,
            "fidelity_stderr": run.fidelity_stderr,
        },
        "analytic": {
            "success_probability": analytic_p,
            "fidelity": analytic_f,
            "prep_survival": formulas.prep_survival(u),
        },
        "deviation_sigma": {
            "success_probability": p_sigma,
            "fidelity": f_sigma,
        },
        "average_state": run.average_state.as_ref().map(matrix_json),
    });
    Summary { command: "teleport", config_echo: config_echo(cfg), results, warnings }.emit(&cfg.out)?;
    Ok(0)
}

pub fn fig3(cfg: &RunConfig, mut warnings: Vec<String>) -> Result<u8, CliError> {
    let params = cfg.params();
    let formulas = Formulas::new(&params).map_err(model_err)?;
    let grid = &cfg.t_d_grid_us;

    let mut csv = Csv::new(&["t_d_us", "f_avg_analytic", "f_avg_mc", "f_mc_stderr"]);
    let mut analytic = Vec::new();
    let mut mc_points = Vec::new();
    let mut mc_errs = Vec::new();
    let mut max_sigma: Option<f64> = None;
    for (k, &t) in grid.iter().enumerate() {
        let f_an = formulas.haar_average_fidelity(t);
        analytic.push((t, f_an));
        let mc = if t > 0.0 {
            let run = protocol::run_teleportation_haar(&params, t, cfg.trajectories, point_seed(cfg.seed, k))
                .map_err(model_err)?;
            run.fidelity_mean.zip(run.fidelity_stderr)
        } else {
            // An empty window never clicks, so there is nothing to
            // post-select on.
            None
        };
        if let Some((m, s)) = mc {
            mc_points.push((t, m));
            mc_errs.push(s);
            if s > 0.0 {
                let sigma = ((m - formulas.mc_expected_haar_fidelity(t)) / s).abs();
                max_sigma = Some(max_sigma.map_or(sigma, |v: f64| v.max(sigma)));
            }
        }
        csv.row(&[
            full(t),
            full(f_an),
            opt_full(mc.map(|(m, _)| m)),
            opt_full(mc.map(|(_, s)| s)),
        ]);
    }
    let monotone = analytic.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-15);
    if !monotone {
        warnings.push("analytic average fidelity is not monotone over the sweep".into());
    }

    ensure_out_dir(&cfg.out)?;
    csv.write(&cfg.out.join("fig3.csv"))?;
    let plot = XyPlot {
        title: "average teleportation fidelity vs detection window".into(),
        x_label: "t_D (us)".into(),
        y_label: "average fidelity".into(),
        series: vec![
            Series {
                name: "analytic".into(),
                color: "darkorange",
                points: analytic.clone(),
                y_err: None,
                line: true,
            },
            Series {
                name: "monte carlo".into(),
                color: "steelblue",
                points: mc_points,
                y_err: Some(mc_errs),
                line: false,
            },
        ],
        v_lines: vec![],
    };
    crate::output::write_file(&cfg.out.join("fig3.svg"), plot.render().as_bytes())?;

    let results = json!({
        "grid_points": grid.len(),
        "trajectories_per_point": cfg.trajectories,
        "f_first_analytic": analytic.first().map(|p| p.1),
        "f_final_analytic": analytic.last().map(|p| p.1),
        "monotone_nondecreasing": monotone,
        "max_mc_deviation_sigma": max_sigma,
    });
    Summary { command: "fig3", config_echo: config_echo(cfg), results, warnings }.emit(&cfg.out)?;
    Ok(0)
}

pub fn efficiency(cfg: &RunConfig, warnings: Vec<String>) -> Result<u8, CliError> {
    let with_eta = |eta: f64| {
        PhysicalParams::from_mhz(
            cfg.g_mhz,
            cfg.omega_mhz,
            cfg.kappa_mhz,
            cfg.gamma_mhz,
            cfg.delta_mhz,
            cfg.delta_e_mhz,
            eta,
        )
    };
    let mut csv = Csv::new(&["eta", "f_avg_analytic", "p_success_analytic"]);
    let mut f_curve = Vec::new();
    let mut p_curve = Vec::new();
    for &eta in &cfg.eta_grid {
        let formulas = Formulas::new(&with_eta(eta)).map_err(model_err)?;
        let f = formulas.haar_average_fidelity(cfg.t_d_us);
        let p = formulas.haar_average_success(cfg.t_d_us);
        f_curve.push((eta, f));
        p_curve.push((eta, p));
        csv.row(&[full(eta), full(f), full(p)]);
    }
    let at = |eta: f64| Formulas::new(&with_eta(eta)).map_err(model_err);
    let reference = at(0.6)?;
    let ideal = at(1.0)?;

    ensure_out_dir(&cfg.out)?;
    csv.write(&cfg.out.join("efficiency.csv"))?;
    let plot = XyPlot {
        title: "teleportation quality vs detector efficiency".into(),
        x_label: "eta".into(),
        y_label: "Haar average at t_D".into(),
        series: vec![
            Series {
                name: "fidelity".into(),
                color: "darkorange",
                points: f_curve.clone(),
                y_err: None,
                line: true,
            },
            Series {
                name: "success probability".into(),
                color: "steelblue",
                points: p_curve,
                y_err: None,
                line: true,
            },
        ],
        v_lines: vec![(0.6, "eta = 0.6".into())],
    };
    crate::output::write_file(&cfg.out.join("efficiency.svg"), plot.render().as_bytes())?;

    let results = json!({
        "t_d_us": cfg.t_d_us,
        "f_at_eta_0_6": reference.haar_average_fidelity(cfg.t_d_us),
        "p_at_eta_0_6": reference.haar_average_success(cfg.t_d_us),
        "f_at_eta_1": ideal.haar_average_fidelity(cfg.t_d_us),
        "p_at_eta_1": ideal.haar_average_success(cfg.t_d_us),
        "monotone_increasing_f": f_curve.windows(2).all(|w| w[1].1 > w[0].1),
    });
    Summary { command: "efficiency", config_echo: config_echo(cfg), results, warnings }.emit(&cfg.out)?;
    Ok(0)
}

pub fn entangle(cfg: &RunConfig, mut warnings: Vec<String>) -> Result<u8, CliError> {
    if cfg.t_d_us <= 0.0 {
        return Err(CliError::Config(format!(
            "t_d_us must be positive for entangle, got {}",
            cfg.t_d_us
        )));
    }
    let params = cfg.params();
    let t_w = cfg.t_d_us;
    let formulas = Formulas::new(&params).map_err(model_err)?;
    let run = protocol::run_entanglement(&params, t_w, cfg.trajectories, cfg.seed).map_err(model_err)?;

    let lam_norm = formulas.lambda(t_w, MixtureConvention::NormalizedKet);
    let lam_unnorm = formulas.lambda(t_w, MixtureConvention::UnnormalizedKet);
    let rho_norm = formulas.entangled_state(t_w, MixtureConvention::NormalizedKet);
    let rho_unnorm = formulas.entangled_state(t_w, MixtureConvention::UnnormalizedKet);
    let er = relative_entropy_of_entanglement(&rho_norm);
    let er_unnorm = relative_entropy_of_entanglement(&rho_unnorm);
    if er.upper_bound - er.lower_bound > 0.1 {
        warnings.push(format!(
            "entanglement optimizer bracket is loose: [{:.4}, {:.4}]",
            er.lower_bound, er.upper_bound
        ));
    }
    let td_norm = run.average_state.as_ref().map(|rho| trace_distance(rho, &rho_norm));
    let td_unnorm = run.average_state.as_ref().map(|rho| trace_distance(rho, &rho_unnorm));
    // <psi+|rho|psi+> from the flat layout (|eg> = 1, |ge> = 2).
    let bell_fid = run.average_state.as_ref().map(|rho| {
        let m = rho.matrix();
        0.5 * (m[(1, 1)].re + m[(2, 2)].re + 2.0 * m[(1, 2)].re)
    });

    ensure_out_dir(&cfg.out)?;
    let mut csv = Csv::new(&["row", "col", "analytic_re", "analytic_im", "mc_re", "mc_im"]);
    let a = rho_unnorm.matrix();
    for i in 0..4 {
        for j in 0..4 {
            let (mc_re, mc_im) = match &run.average_state {
                Some(rho) => {
                    let v = rho.matrix()[(i, j)];
                    (full(v.re), full(v.im))
                }
                None => (String::new(), String::new()),
            };
            csv.row(&[i.to_string(), j.to_string(), full(a[(i, j)].re), full(a[(i, j)].im), mc_re, mc_im]);
        }
    }
    csv.write(&cfg.out.join("entangle.csv"))?;

    let diag = |rho: &DensityMatrix| (0..4).map(|i| rho.matrix()[(i, i)].re).collect::<Vec<_>>();
    let plot = BarPlot {
        title: "two-atom populations after one observed click".into(),
        y_label: "population".into(),
        categories: vec!["ee".into(), "eg".into(), "ge".into(), "gg".into()],
        groups: vec![
            ("monte carlo".into(), "steelblue", run.average_state.as_ref().map(&diag).unwrap_or(vec![0.0; 4])),
            ("analytic".into(), "darkorange", diag(&rho_unnorm)),
        ],
    };
    crate::output::write_file(&cfg.out.join("entangle.svg"), plot.render().as_bytes())?;

    let results = json!({
        "t_w_us": t_w,
        "mc": {
            "trajectories": run.trajectories,
            "counts": counts_json(&run.counts),
            "success_probability": run.success_probability,
            "success_stderr": run.success_stderr,
            "bell_fidelity": bell_fid,
            "average_state": run.average_state.as_ref().map(matrix_json),
        },
        "analytic": {
            "lambda_normalized_ket": lam_norm,
            "lambda_unnormalized_ket": lam_unnorm,
            "lambda_long_window_normalized_ket": 1.0 / (3.0 - 2.0 * cfg.eta),
            "lambda_long_window_unnormalized_ket": 1.0 / (2.0 - cfg.eta),
        },
        "trace_distance_mc_vs_normalized_ket": td_norm,
        "trace_distance_mc_vs_unnormalized_ket": td_unnorm,
        "relative_entropy_of_entanglement": {
            "value": er.value,
            "lower_bound": er.lower_bound,
            "upper_bound": er.upper_bound,
            "closed_form": entanglement_of_bell_gg_mixture(lam_norm),
        },
        "relative_entropy_of_entanglement_unnormalized_ket": {
            "value": er_unnorm.value,
            "lower_bound": er_unnorm.lower_bound,
            "upper_bound": er_unnorm.upper_bound,
            "closed_form": entanglement_of_bell_gg_mixture(lam_unnorm),
        },
    });
    Summary { command: "entangle", config_echo: config_echo(cfg), results, warnings }.emit(&cfg.out)?;
    Ok(0)
}

pub fn insurance(cfg: &RunConfig, mut warnings: Vec<String>) -> Result<u8, CliError> {
    let params = cfg.params();
    let q = cfg.qubit();
    let formulas = Formulas::new(&params).map_err(model_err)?;
    // Branches in the exhausted-window limit, where the Pauli recovery
    // table is exact: any photon still stored at the window's end would
    // leave partially collapsed superpositions outside the table.
    let branches = formulas.insurance_failure_branches(&q, f64::INFINITY);

    let mut rows = Vec::new();
    let mut failure_weight = 0.0;
    let mut all_recoverable = true;
    for b in &branches {
        let rec = protocol::insurance_recover(&q, &b.state);
        failure_weight += b.weight;
        all_recoverable &= rec.fidelity > 1.0 - 1e-9 && !rec.degraded;
        rows.push((reason_str(b.reason), b.weight, rec));
    }
    if !all_recoverable {
        warnings.push(format!(
            "recovery is degraded at eta = {}: an unobserved click leaves a mixed reserve atom",
            cfg.eta
        ));
    }

    ensure_out_dir(&cfg.out)?;
    let mut csv = Csv::new(&["branch", "weight", "correction", "fidelity", "degraded"]);
    for (reason, weight, rec) in &rows {
        csv.row(&[
            reason.to_string(),
            full(*weight),
            label_str(rec.label).to_string(),
            full(rec.fidelity),
            rec.degraded.to_string(),
        ]);
    }
    csv.write(&cfg.out.join("insurance.csv"))?;

    let plot = BarPlot {
        title: "failure branches of the recovery-encoded protocol".into(),
        y_label: "value".into(),
        categories: rows.iter().map(|(r, _, _)| r.to_string()).collect(),
        groups: vec![
            ("branch weight".into(), "steelblue", rows.iter().map(|(_, w, _)| *w).collect()),
            ("recovered fidelity".into(), "darkorange", rows.iter().map(|(_, _, r)| r.fidelity).collect()),
        ],
    };
    crate::output::write_file(&cfg.out.join("insurance.svg"), plot.render().as_bytes())?;

    let results = json!({
        "window": "asymptotic",
        "branches": rows.iter().map(|(reason, weight, rec)| json!({
            "reason": reason,
            "weight": weight,
            "correction": label_str(rec.label),
            "fidelity": rec.fidelity,
            "degraded": rec.degraded,
        })).collect::<Vec<_>>(),
        "success_weight": 1.0 - failure_weight,
        "all_recoverable": all_recoverable,
    });
    Summary { command: "insurance", config_echo: config_echo(cfg), results, warnings }.emit(&cfg.out)?;
    Ok(0)
}
