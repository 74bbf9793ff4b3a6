use std::path::Path;

use cvgauss::correction::{infer_nu, CorrectionReport};
use cvgauss::dynamics::{
    calibrate_couplings, independent_evolution_reference, run_sequence, Calibration, Couplings,
    DeviceParams, Matrix6, PulseSegment, PulseSequence, RunOptions,
};
use cvgauss::estimation::{tomography, write_sweep_csv, Moments, SweepRow, TomographyResult};
use cvgauss::gaussian::{entanglement_margin_db, occupancy_raw, simon_duan_nu, CovarianceMatrix};
use cvgauss::measurement::{
    loss_channel, predicted_nu_meas, readout_frame, sample_record, EfficiencyModel,
    MeasurementRecord,
};
use cvgauss::rng::{stream_rng, Domain};
use cvgauss::statistics::{
    bootstrap_ci, builtin_statistics, entanglement_claim, systematic_scan, BootstrapOptions,
    UncertaintyBudget, DEFAULT_EFFICIENCY_FLOOR,
};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const RECORD_FILE: &str = "record.csv";
pub const TOMOGRAPHY_FILE: &str = "tomography.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SIMULATION_FILE: &str = "simulation.json";
pub const ANALYSIS_FILE: &str = "analysis.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_DETAIL_FILE: &str = "sweep_detail.csv";
pub const SWEEP_SUMMARY_FILE: &str = "sweep.json";

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))
}

/// Couplings from the config, or fitted to the calibration targets.
pub fn resolve_couplings(cfg: &RunConfig) -> CliResult<(Couplings, Option<Calibration>)> {
    match cfg.couplings {
        Some(c) => Ok((c, None)),
        None => {
            let cal =
                calibrate_couplings(&cfg.device, &cfg.calibration).map_err(CliError::config)?;
            Ok((cal.couplings, Some(cal)))
        }
    }
}

fn cooling_segments(couplings: &Couplings, cool_duration: f64) -> Vec<PulseSegment> {
    vec![
        PulseSegment::cooling(cool_duration, couplings.g_cool1, 0.0),
        PulseSegment::cooling(cool_duration, 0.0, couplings.g_cool2),
    ]
}

/// Sequential cooling of both drums followed by an entangling pulse of
/// `entangle` seconds (omitted when zero).
pub fn protocol_sequence(
    couplings: &Couplings,
    cool_duration: f64,
    entangle: f64,
) -> CliResult<PulseSequence> {
    let mut segments = cooling_segments(couplings, cool_duration);
    if entangle > 0.0 {
        segments.push(PulseSegment::entangling(
            entangle,
            couplings.g_bsb1,
            couplings.g_rsb2,
        ));
    }
    PulseSequence::new(segments).map_err(CliError::config)
}

fn bootstrap_opts(cfg: &RunConfig, seed: u64) -> BootstrapOptions {
    BootstrapOptions {
        replicates: cfg.bootstrap,
        seed,
        ..Default::default()
    }
}

/// Bootstrap interval plus efficiency scan of a registered statistic.
pub fn budget(
    shots: &[cvgauss::measurement::Shot],
    statistic: &str,
    eff: &EfficiencyModel,
    opts: &BootstrapOptions,
) -> CliResult<UncertaintyBudget> {
    let registry = builtin_statistics();
    let stat = registry.get(statistic).map_err(CliError::config)?;
    let ci = bootstrap_ci(shots, stat, eff, opts).map_err(CliError::data)?;
    let moments = Moments::from_shots(shots).map_err(CliError::data)?;
    let sys =
        systematic_scan(&moments, eff, stat, DEFAULT_EFFICIENCY_FLOOR).map_err(CliError::data)?;
    Ok(UncertaintyBudget::new(&ci, &sys))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    /// Pre-loss drum covariance in the readout frame.
    pub drums: CovarianceMatrix,
    /// Covariance of the measured variables.
    pub measured: CovarianceMatrix,
    pub occupancies: [f64; 2],
    pub nu: f64,
    pub nu_meas: f64,
    /// `η ν + (1 - η)/2` with the geometric-mean efficiency.
    pub nu_meas_predicted: f64,
}

impl ModelState {
    /// `drums` is in the drive frame and is rotated to the readout frame.
    pub fn new(
        drums: CovarianceMatrix,
        eff: &EfficiencyModel,
        phases: [f64; 2],
    ) -> CliResult<Self> {
        let drums = readout_frame(&drums, phases).map_err(CliError::data)?;
        let measured = loss_channel(&drums, eff).map_err(CliError::data)?;
        let nu = simon_duan_nu(&drums).map_err(CliError::data)?;
        let m = drums.as_two_mode().map_err(CliError::data)?;
        Ok(ModelState {
            occupancies: [occupancy_raw(&m, 0), occupancy_raw(&m, 1)],
            nu,
            nu_meas: simon_duan_nu(&measured).map_err(CliError::data)?,
            nu_meas_predicted: predicted_nu_meas(nu, eff).map_err(CliError::data)?,
            drums,
            measured,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub shots: usize,
    pub efficiencies: EfficiencyModel,
    pub eta_geometric_mean: f64,
    pub warnings: Vec<String>,
    pub couplings: Option<Couplings>,
    pub calibration: Option<Calibration>,
    pub sequence: PulseSequence,
    pub model: ModelState,
    /// Measured from the sampled record, never loss-corrected.
    pub nu_meas: UncertaintyBudget,
    /// See [`cvgauss::statistics::entanglement_claim`].
    pub entanglement_claim: bool,
    pub files: Vec<String>,
}

/// Cool, entangle, read out with loss, sample a record and write the record,
/// its tomography, the drum trajectory and a summary.
pub fn cmd_simulate(cfg: &RunConfig) -> CliResult<SimulationReport> {
    let seed = cfg.seed();
    let (couplings, calibration) = match &cfg.sequence {
        Some(_) => (None, None),
        None => {
            let (c, cal) = resolve_couplings(cfg)?;
            (Some(c), cal)
        }
    };
    let sequence = match (&cfg.sequence, &couplings) {
        (Some(seq), _) => seq.clone(),
        (None, Some(c)) => {
            protocol_sequence(c, cfg.calibration.cool_duration, cfg.entangle_duration)?
        }
        (None, None) => unreachable!("couplings are resolved whenever no sequence is given"),
    };
    let traj = run_sequence(&cfg.device, &sequence, None, &cfg.run).map_err(CliError::config)?;
    let model = ModelState::new(
        traj.final_drums().clone(),
        &cfg.efficiencies,
        cfg.readout_phases,
    )?;
    let record = sample_record(&model.measured, cfg.shots, seed).map_err(CliError::data)?;
    let tomo = tomography(&record).map_err(CliError::data)?;
    let nu_meas = budget(
        &record.shots,
        "nu_meas",
        &cfg.efficiencies,
        &bootstrap_opts(cfg, seed),
    )?;

    let dir = cfg.output_dir();
    create_dir(&dir)?;
    record
        .save(&dir.join(RECORD_FILE))
        .map_err(CliError::data)?;
    write_json(&dir.join(TOMOGRAPHY_FILE), &tomo)?;
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).map_err(CliError::data)?;
    std::fs::write(dir.join(TRAJECTORY_FILE), buf).map_err(|e| CliError::Data(e.to_string()))?;

    let report = SimulationReport {
        seed,
        shots: cfg.shots,
        efficiencies: cfg.efficiencies,
        eta_geometric_mean: cfg.efficiencies.geometric_mean(),
        warnings: cfg.efficiencies.warnings(),
        couplings,
        calibration,
        sequence,
        model,
        entanglement_claim: entanglement_claim(&nu_meas),
        nu_meas,
        files: [RECORD_FILE, TOMOGRAPHY_FILE, TRAJECTORY_FILE]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    write_json(&dir.join(SIMULATION_FILE), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredSection {
    pub nu_meas: UncertaintyBudget,
    pub angle_deg: UncertaintyBudget,
    pub entanglement_claim: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSection {
    pub report: CorrectionReport,
    pub nu: UncertaintyBudget,
    pub occupancy1: UncertaintyBudget,
    pub occupancy2: UncertaintyBudget,
    /// `10 log10(½ / ν)`, present when ν < ½.
    pub entanglement_margin_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub record: String,
    pub n_shots: usize,
    pub bootstrap_seed: u64,
    pub bootstrap_replicates: usize,
    pub efficiencies: EfficiencyModel,
    pub eta_geometric_mean: f64,
    pub warnings: Vec<String>,
    pub tomography: TomographyResult,
    /// Raw measured covariance, no noise subtraction.
    pub measured: MeasuredSection,
    /// Loss-corrected inference, absent with `--no-correction`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub correction: Option<CorrectionSection>,
}

/// Tomography, budgets and (optionally) loss correction of a record file.
/// The report is written before a projection non-convergence is reported.
pub fn cmd_analyze(
    record_path: &Path,
    cfg: &RunConfig,
    no_correction: bool,
) -> CliResult<AnalysisReport> {
    let record = MeasurementRecord::load(record_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", record_path.display())))?;
    let report = analyze_record(
        &record,
        &record_path.display().to_string(),
        cfg,
        no_correction,
    )?;
    let dir = cfg.output_dir();
    create_dir(&dir)?;
    write_json(&dir.join(ANALYSIS_FILE), &report)?;
    if let Some(c) = &report.correction {
        if !c.report.converged {
            return Err(CliError::NotConverged(format!(
                "physical projection stopped after {} iterations; report written to {}",
                c.report.iterations,
                dir.join(ANALYSIS_FILE).display()
            )));
        }
    }
    Ok(report)
}

pub fn analyze_record(
    record: &MeasurementRecord,
    label: &str,
    cfg: &RunConfig,
    no_correction: bool,
) -> CliResult<AnalysisReport> {
    let seed = cfg.seed();
    let eff = &cfg.efficiencies;
    let opts = bootstrap_opts(cfg, seed);
    let tomo = tomography(record).map_err(CliError::data)?;
    let nu_meas = budget(&record.shots, "nu_meas", eff, &opts)?;
    let measured = MeasuredSection {
        entanglement_claim: entanglement_claim(&nu_meas),
        nu_meas,
        angle_deg: budget(&record.shots, "angle", eff, &opts)?,
    };
    let correction = if no_correction {
        None
    } else {
        let report = infer_nu(&tomo.covariance, eff).map_err(CliError::data)?;
        let nu = budget(&record.shots, "nu", eff, &opts)?;
        Some(CorrectionSection {
            entanglement_margin_db: (report.nu < 0.5)
                .then(|| entanglement_margin_db(report.nu).ok())
                .flatten(),
            report,
            nu,
            occupancy1: budget(&record.shots, "occupancy1", eff, &opts)?,
            occupancy2: budget(&record.shots, "occupancy2", eff, &opts)?,
        })
    };
    Ok(AnalysisReport {
        record: label.to_string(),
        n_shots: record.len(),
        bootstrap_seed: seed,
        bootstrap_replicates: cfg.bootstrap,
        efficiencies: *eff,
        eta_geometric_mean: eff.geometric_mean(),
        warnings: eff.warnings(),
        tomography: tomo,
        measured,
        correction,
    })
}

/// Noiseless model values at one entangling-pulse duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPoint {
    pub duration_s: f64,
    pub state: ModelState,
    /// Drums driven separately, no drum-drum correlations.
    pub reference: CovarianceMatrix,
}

fn to_matrix6(c: &CovarianceMatrix) -> Matrix6 {
    Matrix6::from_iterator(c.entries().iter().copied())
}

/// Full-state covariance after the cooling pulses.
pub fn cooled_state(
    device: &DeviceParams,
    couplings: &Couplings,
    cool_duration: f64,
    run: &RunOptions,
) -> CliResult<Matrix6> {
    let seq =
        PulseSequence::new(cooling_segments(couplings, cool_duration)).map_err(CliError::config)?;
    let opts = RunOptions {
        keep_full: true,
        sample_interval: None,
        ..run.clone()
    };
    let traj = run_sequence(device, &seq, None, &opts).map_err(CliError::config)?;
    let full = traj
        .full_covariances
        .as_ref()
        .and_then(|f| f.last())
        .expect("keep_full is set");
    Ok(to_matrix6(full))
}

/// Model states for each entangling duration, starting from the cooled state.
pub fn model_sweep(
    device: &DeviceParams,
    couplings: &Couplings,
    cooled: &Matrix6,
    durations: &[f64],
    run: &RunOptions,
    eff: &EfficiencyModel,
    phases: [f64; 2],
) -> CliResult<Vec<ModelPoint>> {
    let opts = RunOptions {
        sample_interval: None,
        ..run.clone()
    };
    durations
        .par_iter()
        .map(|&d| {
            let (drums, reference) = if d == 0.0 {
                let c = CovarianceMatrix::from_two_mode(&cvgauss::dynamics::drum_block(cooled))
                    .map_err(CliError::data)?;
                (c.clone(), c)
            } else {
                let seq = PulseSequence::new(vec![PulseSegment::entangling(
                    d,
                    couplings.g_bsb1,
                    couplings.g_rsb2,
                )])
                .map_err(CliError::config)?;
                let full =
                    run_sequence(device, &seq, Some(cooled), &opts).map_err(CliError::data)?;
                let reference = independent_evolution_reference(device, &seq, Some(cooled), &opts)
                    .map_err(CliError::data)?;
                (full.final_drums().clone(), reference.final_drums().clone())
            };
            Ok(ModelPoint {
                duration_s: d,
                state: ModelState::new(drums, eff, phases)?,
                reference: readout_frame(&reference, phases).map_err(CliError::data)?,
            })
        })
        .collect()
}

/// First duration at which `values` falls below ½, linearly interpolated
/// between neighbouring sweep points.
pub fn threshold_crossing(durations: &[f64], values: &[f64]) -> Option<f64> {
    durations
        .windows(2)
        .zip(values.windows(2))
        .find(|(_, v)| v[0] >= 0.5 && v[1] < 0.5)
        .map(|(d, v)| d[0] + (d[1] - d[0]) * (v[0] - 0.5) / (v[0] - v[1]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDetailRow {
    pub duration_s: f64,
    pub var_x1: f64,
    pub var_p1: f64,
    pub var_x2: f64,
    pub var_p2: f64,
    pub ref_var_x1: f64,
    pub ref_var_p1: f64,
    pub ref_var_x2: f64,
    pub ref_var_p2: f64,
    pub cov_x1x2: f64,
    pub cov_p1p2: f64,
    pub model_n1: f64,
    pub model_n2: f64,
    pub model_nu: f64,
    pub model_nu_meas: f64,
    pub angle_deg: f64,
    pub angle_stat_lo: f64,
    pub angle_stat_hi: f64,
    pub nu_meas: f64,
    pub nu_meas_stat_lo: f64,
    pub nu_meas_stat_hi: f64,
    pub nu_meas_sys_lo: f64,
    pub nu_meas_sys_hi: f64,
    pub nu: Option<f64>,
    pub nu_stat_lo: Option<f64>,
    pub nu_stat_hi: Option<f64>,
    pub nu_sys_lo: Option<f64>,
    pub nu_sys_hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub seed: u64,
    pub shots: usize,
    pub couplings: Couplings,
    pub calibration: Option<Calibration>,
    pub durations_s: Vec<f64>,
    /// Where the noiseless model ν_meas first drops below ½.
    pub model_crossing_s: Option<f64>,
    /// Same, from the per-duration record estimates.
    pub record_crossing_s: Option<f64>,
    pub rows: Vec<SweepDetailRow>,
}

/// Entangling-duration sweep: model values, independent-evolution
/// reference, and a sampled record with budgets per duration.
pub fn cmd_sweep(cfg: &RunConfig, no_correction: bool) -> CliResult<SweepSummary> {
    let durations = &cfg.sweep_durations;
    if durations.len() < 2 {
        return Err(CliError::Config(format!(
            "a sweep needs at least 2 durations, got {}",
            durations.len()
        )));
    }
    if durations.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config(
            "sweep durations must be strictly increasing".into(),
        ));
    }
    let seed = cfg.seed();
    let eff = &cfg.efficiencies;
    let (couplings, calibration) = resolve_couplings(cfg)?;
    let cooled = cooled_state(
        &cfg.device,
        &couplings,
        cfg.calibration.cool_duration,
        &cfg.run,
    )?;
    let points = model_sweep(
        &cfg.device,
        &couplings,
        &cooled,
        durations,
        &cfg.run,
        eff,
        cfg.readout_phases,
    )?;

    let analysed: Vec<(SweepDetailRow, SweepRow)> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let record_seed: u64 = stream_rng(seed, Domain::Experiment, i as u64).random();
            let record =
                sample_record(&p.state.measured, cfg.shots, record_seed).map_err(CliError::data)?;
            let report = analyze_record(
                &record,
                "sweep",
                &RunConfig {
                    seed: Some(record_seed),
                    ..cfg.clone()
                },
                no_correction,
            )?;
            Ok(sweep_rows(p, &report))
        })
        .collect::<CliResult<_>>()?;
    let (rows, plain): (Vec<_>, Vec<_>) = analysed.into_iter().unzip();

    let dir = cfg.output_dir();
    create_dir(&dir)?;
    let mut buf = Vec::new();
    write_sweep_csv(&plain, &mut buf).map_err(CliError::data)?;
    std::fs::write(dir.join(SWEEP_FILE), buf).map_err(|e| CliError::Data(e.to_string()))?;
    let mut w = csv::Writer::from_path(dir.join(SWEEP_DETAIL_FILE))
        .map_err(|e| CliError::Data(e.to_string()))?;
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))?;

    let model_nu_meas: Vec<f64> = points.iter().map(|p| p.state.nu_meas).collect();
    let record_nu_meas: Vec<f64> = rows.iter().map(|r| r.nu_meas).collect();
    let summary = SweepSummary {
        seed,
        shots: cfg.shots,
        couplings,
        calibration,
        durations_s: durations.clone(),
        model_crossing_s: threshold_crossing(durations, &model_nu_meas),
        record_crossing_s: threshold_crossing(durations, &record_nu_meas),
        rows,
    };
    write_json(&dir.join(SWEEP_SUMMARY_FILE), &summary)?;
    Ok(summary)
}

fn sweep_rows(p: &ModelPoint, a: &AnalysisReport) -> (SweepDetailRow, SweepRow) {
    let m = p.state.drums.entries();
    let r = p.reference.entries();
    let corr = a.correction.as_ref();
    let detail = SweepDetailRow {
        duration_s: p.duration_s,
        var_x1: m[(0, 0)],
        var_p1: m[(1, 1)],
        var_x2: m[(2, 2)],
        var_p2: m[(3, 3)],
        ref_var_x1: r[(0, 0)],
        ref_var_p1: r[(1, 1)],
        ref_var_x2: r[(2, 2)],
        ref_var_p2: r[(3, 3)],
        cov_x1x2: m[(0, 2)],
        cov_p1p2: m[(1, 3)],
        model_n1: p.state.occupancies[0],
        model_n2: p.state.occupancies[1],
        model_nu: p.state.nu,
        model_nu_meas: p.state.nu_meas,
        angle_deg: a.measured.angle_deg.point,
        angle_stat_lo: a.measured.angle_deg.stat_lo,
        angle_stat_hi: a.measured.angle_deg.stat_hi,
        nu_meas: a.measured.nu_meas.point,
        nu_meas_stat_lo: a.measured.nu_meas.stat_lo,
        nu_meas_stat_hi: a.measured.nu_meas.stat_hi,
        nu_meas_sys_lo: a.measured.nu_meas.sys_lo,
        nu_meas_sys_hi: a.measured.nu_meas.sys_hi,
        nu: corr.map(|c| c.nu.point),
        nu_stat_lo: corr.map(|c| c.nu.stat_lo),
        nu_stat_hi: corr.map(|c| c.nu.stat_hi),
        nu_sys_lo: corr.map(|c| c.nu.sys_lo),
        nu_sys_hi: corr.map(|c| c.nu.sys_hi),
    };
    let plain = SweepRow {
        duration_s: p.duration_s,
        nu_meas: a.measured.nu_meas.point,
        nu: corr.map_or(f64::NAN, |c| c.nu.point),
        angle_deg: a.measured.angle_deg.point,
        n1: corr.map_or(a.tomography.occupancies[0], |c| c.occupancy1.point),
        n2: corr.map_or(a.tomography.occupancies[1], |c| c.occupancy2.point),
    };
    (detail, plain)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_interpolates() {
        let d = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(threshold_crossing(&d, &[0.6, 0.55, 0.45, 0.4]), Some(2.5));
        assert_eq!(threshold_crossing(&d, &[0.6, 0.55, 0.52, 0.51]), None);
        assert_eq!(threshold_crossing(&d, &[0.5, 0.4, 0.3, 0.2]), Some(1.0));
    }

    #[test]
    fn protocol_sequence_shape() {
        let c = Couplings {
            g_cool1: 1.0,
            g_cool2: 2.0,
            g_bsb1: 3.0,
            g_rsb2: 4.0,
        };
        assert_eq!(protocol_sequence(&c, 1e-6, 0.0).unwrap().segments.len(), 2);
        let s = protocol_sequence(&c, 1e-6, 2e-6).unwrap();
        assert_eq!(s.segments[2], PulseSegment::entangling(2e-6, 3.0, 4.0));
        assert!((s.total_duration() - 4e-6).abs() < 1e-18);
    }
}
