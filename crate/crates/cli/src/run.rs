//! One function per subcommand: validate, simulate, collect outputs.

use std::path::{Path, PathBuf};

use afc_core::analysis::{
    fit_echo_decay, fit_fringe, optimal_od, theoretical_efficiency, FringeModel,
};
use afc_core::detection::derive_seed;
use afc_core::propagation::{
    make_gaussian_pulse, spectral_fwhm, transform_limited_bandwidth, TimeGrid,
};
use afc_core::protocols::{
    afc_storage, broadband_storage, ideal_echo_efficiency, mode_capacity, multimode_storage,
    time_bin_qubit, time_bin_trace, validate_broadband, validate_multimode, validate_storage,
    validate_time_bin, CombSource,
};
use afc_core::table::{Cell, Table};
use afc_core::AfcError;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{
    AfcConfig, BroadbandConfig, ConfigFile, EfficiencyTableConfig, FitDecayConfig, FitFringeConfig,
    MultimodeSection, QubitConfig, SweepConfig, SweepTarget,
};
use crate::error::CliError;
use crate::output::{OutputDir, SeedEntry};

/// Everything a run produces, in write order.
#[derive(Debug, Default)]
pub struct Outcome {
    pub tables: Vec<(String, Table)>,
    pub documents: Vec<(String, serde_json::Value)>,
    /// One or more rows of headline numbers; sweeps stack these.
    pub summary: Table,
    pub seeds: Vec<SeedEntry>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn write(&self, out: &mut OutputDir) -> Result<(), CliError> {
        for (stem, table) in &self.tables {
            out.write_table(stem, table)?;
        }
        for (name, doc) in &self.documents {
            out.write_json(name, doc)?;
        }
        Ok(())
    }
}

fn invalid(e: AfcError) -> CliError {
    CliError::Invalid(e)
}

fn physics(e: AfcError) -> CliError {
    CliError::Physics(e)
}

fn nanos(t: f64) -> i64 {
    (t * 1e9).round() as i64
}

fn or_nan(v: Option<f64>) -> Cell {
    Cell::Float(v.unwrap_or(f64::NAN))
}

fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?
        .clone();
    let idx = names
        .iter()
        .map(|n| {
            headers.iter().position(|h| h.trim() == *n).ok_or_else(|| {
                CliError::config(
                    &format!("{}", path.display()),
                    &format!("no column named `{n}`"),
                )
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        for (c, &i) in idx.iter().enumerate() {
            let field = rec.get(i).unwrap_or("").trim();
            let v: f64 = field.parse().map_err(|_| {
                CliError::config(
                    &format!("{}:{}", path.display(), line + 2),
                    &format!("`{field}` in column `{}` is not a number", names[c]),
                )
            })?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

fn resolve(config_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_dir.join(p)
    }
}

// ---- afc ----

fn validate_afc(cfg: &AfcConfig) -> Result<Vec<String>, CliError> {
    cfg.check()?;
    let mut warnings = Vec::new();
    for &tau in &cfg.storage_times_s {
        for w in validate_storage(&cfg.storage(tau, 0)?).map_err(invalid)? {
            warnings.push(format!("τ = {} ns: {w}", nanos(tau)));
        }
    }
    Ok(warnings)
}

pub fn afc(cfg: &AfcConfig, seed: u64) -> Result<Outcome, CliError> {
    let warnings = validate_afc(cfg)?;
    let runs = cfg
        .storage_times_s
        .iter()
        .enumerate()
        .map(|(i, &tau)| cfg.storage(tau, derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let records = runs
        .par_iter()
        .map(|s| afc_storage(s).map_err(physics))
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Outcome {
        warnings,
        ..Outcome::default()
    };
    let mut table = Table::new([
        "storage_time_s",
        "finesse",
        "efficiency",
        "theory_efficiency",
        "echo_centroid_s",
        "leakage_fraction",
        "echo_counts",
        "noise_per_retrieved_photon",
    ]);
    let mut docs = Vec::new();
    for (i, (run, rec)) in runs.iter().zip(&records).enumerate() {
        let tau = cfg.storage_times_s[i];
        let finesse = match &run.comb {
            CombSource::Analytic(spec) => Some(spec.finesse),
            CombSource::Burned { .. } => None,
        };
        let theory = finesse
            .map(|f| theoretical_efficiency(cfg.peak_depth, f))
            .transpose()
            .map_err(physics)?;
        let w = rec.windows[0];
        let (counts, mu) = match &rec.detection {
            Some(d) => (
                Some(d.histogram.counts[1] as f64),
                d.noise_per_retrieved_photon[0],
            ),
            None => (None, None),
        };
        table.push(vec![
            tau.into(),
            or_nan(finesse),
            w.efficiency.into(),
            or_nan(theory),
            w.centroid.into(),
            rec.leakage_fraction.into(),
            or_nan(counts),
            or_nan(mu),
        ]);
        if let Some(d) = &run.detection {
            out.seeds.push(SeedEntry {
                run: format!("afc τ = {} ns", nanos(tau)),
                seed: d.rng_seed,
            });
        }
        let trace = &rec.trace;
        out.tables.push((
            format!("traces/trace_tau_{:04}ns", nanos(tau)),
            trace.to_table(trace.t0(), trace.end()),
        ));
        docs.push(json!({ "storage_time_s": tau, "finesse": finesse, "record": rec }));
        for f in &rec.flags {
            out.warnings.push(format!("τ = {} ns: {f}", nanos(tau)));
        }
    }
    out.tables
        .insert(0, ("efficiency_vs_storage_time".into(), table.clone()));
    out.documents
        .push(("records.json".into(), serde_json::Value::Array(docs)));
    out.summary = table;
    Ok(out)
}

// ---- qubit ----

pub fn qubit(cfg: &QubitConfig, seed: u64) -> Result<Outcome, CliError> {
    let core = cfg.to_core(seed);
    let warnings = validate_time_bin(&core).map_err(invalid)?;
    let data = time_bin_qubit(&core).map_err(physics)?;
    let phi0 = data.fit.fit.value("phi0");
    let phi0 = if phi0.is_finite() { phi0 } else { 0.0 };
    let bright = time_bin_trace(&core, data.weights, phi0).map_err(physics)?;
    let dark = time_bin_trace(&core, data.weights, phi0 + std::f64::consts::PI).map_err(physics)?;

    let mut out = Outcome {
        warnings,
        ..Outcome::default()
    };
    out.warnings.extend(data.flags.iter().cloned());
    if core.detection.is_some() {
        for k in 0..core.phases.len() {
            out.seeds.push(SeedEntry {
                run: format!("qubit phase {k}"),
                seed: derive_seed(seed, k as u64),
            });
        }
    }
    let mut summary = Table::new([
        "visibility",
        "visibility_sigma",
        "visibility_from_extrema",
        "two_path_visibility",
        "early_path_efficiency",
        "late_path_efficiency",
        "max_outer_bin_variation",
        "count_visibility",
    ]);
    summary.push(vec![
        data.fit.visibility.into(),
        data.fit.visibility_sigma.into(),
        data.visibility_from_extrema.into(),
        data.two_path_visibility.into(),
        data.path_efficiencies[0].into(),
        data.path_efficiencies[1].into(),
        data.outer_bin_variation[0]
            .max(data.outer_bin_variation[1])
            .into(),
        or_nan(data.count_fit.as_ref().map(|f| f.visibility)),
    ]);
    out.tables.push(("fringe".into(), data.to_table()));
    out.tables.push((
        "traces/constructive".into(),
        bright.to_table(bright.t0(), bright.end()),
    ));
    out.tables.push((
        "traces/destructive".into(),
        dark.to_table(dark.t0(), dark.end()),
    ));
    out.documents.push((
        "qubit.json".into(),
        serde_json::to_value(&data).expect("dataset serializes"),
    ));
    out.summary = summary;
    Ok(out)
}

// ---- multimode ----

pub fn multimode(cfg: &MultimodeSection, seed: u64) -> Result<Outcome, CliError> {
    let core = cfg.to_core(seed)?;
    let warnings = validate_multimode(&core).map_err(invalid)?;
    let rec = multimode_storage(&core).map_err(physics)?;
    let capacity = mode_capacity(core.storage.comb.storage_time(), core.storage.pulse.fwhm)
        .map_err(physics)?;

    let mut out = Outcome {
        warnings,
        ..Outcome::default()
    };
    out.warnings.extend(rec.record.flags.iter().cloned());
    if core.storage.detection.is_some() {
        out.seeds.push(SeedEntry {
            run: "multimode".into(),
            seed,
        });
    }
    let mut modes = Table::new([
        "mode",
        "input_center_s",
        "echo_center_s",
        "echo_centroid_s",
        "energy",
        "efficiency",
    ]);
    for (k, (w, l)) in rec
        .record
        .windows
        .iter()
        .zip(&rec.record.leakage)
        .enumerate()
    {
        modes.push(vec![
            k.into(),
            l.center.into(),
            w.center.into(),
            w.centroid.into(),
            w.energy.into(),
            w.efficiency.into(),
        ]);
    }
    let mut summary = Table::new([
        "mean_efficiency",
        "efficiency_spread",
        "max_valley_ratio",
        "resolved",
    ]);
    summary.push(vec![
        rec.mean_efficiency.into(),
        rec.efficiency_spread.into(),
        rec.max_valley_ratio.into(),
        rec.resolved.into(),
    ]);
    let trace = &rec.record.trace;
    out.tables.push(("modes".into(), modes));
    out.tables
        .push(("trace".into(), trace.to_table(trace.t0(), trace.end())));
    out.documents.push((
        "multimode.json".into(),
        json!({ "record": rec, "mode_capacity": capacity }),
    ));
    out.summary = summary;
    Ok(out)
}

// ---- broadband ----

pub fn broadband(cfg: &BroadbandConfig, seed: u64) -> Result<Outcome, CliError> {
    let core = cfg.to_core(seed);
    let warnings = validate_broadband(&core).map_err(invalid)?;
    let fwhm = cfg.pulse.fwhm_s;
    let grid = TimeGrid::covering(-6.0 * fwhm, 6.0 * fwhm, fwhm / 10.0).map_err(physics)?;
    let pulse = make_gaussian_pulse(fwhm, 0.0, 1.0, 0.0, &grid).map_err(physics)?;
    let measured_bw = spectral_fwhm(&pulse).map_err(physics)?;
    let ideal = ideal_echo_efficiency(&cfg.comb()).map_err(physics)?;
    let capacity = mode_capacity(cfg.max_storage_time_s, fwhm).map_err(physics)?;
    let rec = broadband_storage(&core).map_err(physics)?;

    let mut out = Outcome {
        warnings,
        ..Outcome::default()
    };
    out.warnings.extend(rec.flags.iter().cloned());
    if core.detection.is_some() {
        out.seeds.push(SeedEntry {
            run: "broadband".into(),
            seed,
        });
    }
    let w = rec.windows[0];
    let mut summary = Table::new([
        "efficiency",
        "ideal_efficiency",
        "echo_centroid_s",
        "leakage_fraction",
        "pulse_spectral_fwhm_hz",
    ]);
    summary.push(vec![
        w.efficiency.into(),
        ideal.into(),
        w.centroid.into(),
        rec.leakage_fraction.into(),
        measured_bw.into(),
    ]);
    let trace = &rec.trace;
    out.tables
        .push(("trace".into(), trace.to_table(trace.t0(), trace.end())));
    out.documents.push((
        "broadband.json".into(),
        json!({
            "record": rec,
            "pulse_spectral_fwhm_hz": measured_bw,
            "transform_limited_bandwidth_hz": transform_limited_bandwidth(fwhm),
            "comb_to_pulse_bandwidth_ratio": cfg.comb_bandwidth_hz / measured_bw,
            "ideal_efficiency": ideal,
            "mode_capacity": capacity,
        }),
    ));
    out.summary = summary;
    Ok(out)
}

// ---- efficiency table ----

pub fn efficiency_table(cfg: &EfficiencyTableConfig) -> Result<Outcome, CliError> {
    cfg.check()?;
    let mut grid = Table::new(["od", "finesse", "efficiency"]);
    let mut optimum = Table::new(["finesse", "optimal_od", "max_efficiency"]);
    for &f in &cfg.finesse_values {
        for &od in &cfg.od_values {
            grid.push(vec![
                od.into(),
                f.into(),
                theoretical_efficiency(od, f).map_err(invalid)?.into(),
            ]);
        }
        let od = optimal_od(f);
        optimum.push(vec![
            f.into(),
            od.into(),
            theoretical_efficiency(od, f).map_err(invalid)?.into(),
        ]);
    }
    Ok(Outcome {
        tables: vec![
            ("efficiency_table".into(), grid),
            ("optimum".into(), optimum.clone()),
        ],
        summary: optimum,
        ..Outcome::default()
    })
}

// ---- fits ----

fn decay_data(cfg: &FitDecayConfig, config_dir: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let path = resolve(config_dir, &cfg.data_csv);
    let mut cols = read_columns(&path, &[&cfg.delay_column, &cfg.intensity_column])?;
    let intensity = cols.pop().expect("two columns");
    Ok((cols.pop().expect("two columns"), intensity))
}

pub fn fit_decay(cfg: Option<&FitDecayConfig>, config_dir: &Path) -> Result<Outcome, CliError> {
    let cfg =
        cfg.ok_or_else(|| CliError::config("fit_decay", "section is required for fit-decay"))?;
    let (delays, intensities) = decay_data(cfg, config_dir)?;
    let fit = fit_echo_decay(&delays, &intensities).map_err(physics)?;
    let (i0, t2, x) = (fit.fit.value("I0"), fit.t2(), fit.fit.value("x"));
    let mut model = Table::new(["delay_s", "intensity", "model_intensity"]);
    for (&t, &i) in delays.iter().zip(&intensities) {
        model.push(vec![
            t.into(),
            i.into(),
            (i0 * (-2.0 * (2.0 * t / t2).powf(x)).exp()).into(),
        ]);
    }
    let mut summary = Table::new(["I0", "T2_s", "T2_sigma_s", "x", "homogeneous_linewidth_hz"]);
    summary.push(vec![
        i0.into(),
        t2.into(),
        fit.fit.sigma("T2_s").into(),
        x.into(),
        fit.homogeneous_linewidth_hz.into(),
    ]);
    Ok(Outcome {
        tables: vec![("decay_model".into(), model)],
        documents: vec![(
            "decay_fit.json".into(),
            serde_json::to_value(&fit).expect("fit serializes"),
        )],
        summary,
        warnings: fit.fit.flags.clone(),
        ..Outcome::default()
    })
}

fn fringe_data(cfg: &FitFringeConfig, config_dir: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let path = resolve(config_dir, &cfg.data_csv);
    let mut names = vec![cfg.phase_column.as_str(), cfg.counts_column.as_str()];
    if let Some(u) = &cfg.uncertainty_column {
        names.push(u);
    }
    read_columns(&path, &names)
}

pub fn fit_fringe_data(
    cfg: Option<&FitFringeConfig>,
    config_dir: &Path,
) -> Result<Outcome, CliError> {
    let cfg =
        cfg.ok_or_else(|| CliError::config("fit_fringe", "section is required for fit-fringe"))?;
    let cols = fringe_data(cfg, config_dir)?;
    let fit = fit_fringe(&cols[0], &cols[1], cols.get(2).map(|v| v.as_slice())).map_err(physics)?;
    let p: Vec<f64> = ["A", "B", "phi0"]
        .iter()
        .map(|n| fit.fit.value(n))
        .collect();
    let mut model = Table::new(["phase_rad", "counts", "model_counts"]);
    for (&phi, &c) in cols[0].iter().zip(&cols[1]) {
        model.push(vec![
            phi.into(),
            c.into(),
            FringeModel::eval(&p, phi).into(),
        ]);
    }
    let mut summary = Table::new(["A", "B", "phi0_rad", "visibility", "visibility_sigma"]);
    summary.push(vec![
        p[0].into(),
        p[1].into(),
        p[2].into(),
        fit.visibility.into(),
        fit.visibility_sigma.into(),
    ]);
    Ok(Outcome {
        tables: vec![("fringe_model".into(), model)],
        documents: vec![(
            "fringe_fit.json".into(),
            serde_json::to_value(&fit).expect("fit serializes"),
        )],
        summary,
        warnings: fit.fit.flags.clone(),
        ..Outcome::default()
    })
}

// ---- sweep ----

/// Seeds used by one run of `target`, so sweep points get disjoint ranges.
fn seeds_per_run(cfg: &ConfigFile, target: SweepTarget) -> u64 {
    match target {
        SweepTarget::Afc => cfg.afc.storage_times_s.len().max(1) as u64,
        SweepTarget::Qubit => cfg.qubit.phases_rad.len().max(1) as u64,
        SweepTarget::Multimode | SweepTarget::Broadband => 1,
    }
}

fn point_configs(cfg: &ConfigFile, sweep: &SweepConfig) -> Result<Vec<ConfigFile>, CliError> {
    if sweep.values.is_empty() {
        return Err(CliError::config("sweep.values", "list is empty"));
    }
    sweep
        .values
        .iter()
        .map(|&v| {
            crate::config::with_parameter(cfg, sweep.experiment.section(), &sweep.parameter, v)
        })
        .collect()
}

fn run_target(cfg: &ConfigFile, target: SweepTarget, seed: u64) -> Result<Outcome, CliError> {
    match target {
        SweepTarget::Afc => afc(&cfg.afc, seed),
        SweepTarget::Qubit => qubit(&cfg.qubit, seed),
        SweepTarget::Multimode => multimode(&cfg.multimode, seed),
        SweepTarget::Broadband => broadband(&cfg.broadband, seed),
    }
}

fn validate_target(cfg: &ConfigFile, target: SweepTarget) -> Result<Vec<String>, CliError> {
    match target {
        SweepTarget::Afc => validate_afc(&cfg.afc),
        SweepTarget::Qubit => validate_time_bin(&cfg.qubit.to_core(0)).map_err(invalid),
        SweepTarget::Multimode => validate_multimode(&cfg.multimode.to_core(0)?).map_err(invalid),
        SweepTarget::Broadband => validate_broadband(&cfg.broadband.to_core(0)).map_err(invalid),
    }
}

pub fn sweep(cfg: &ConfigFile, seed: u64) -> Result<Outcome, CliError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::config("sweep", "section is required for sweep"))?;
    let points = point_configs(cfg, sweep)?;
    for p in &points {
        validate_target(p, sweep.experiment)?;
    }
    let stride = seeds_per_run(cfg, sweep.experiment);
    let outcomes = points
        .par_iter()
        .enumerate()
        .map(|(j, p)| run_target(p, sweep.experiment, derive_seed(seed, j as u64 * stride)))
        .collect::<Result<Vec<_>, _>>()?;

    let first = &outcomes[0].summary;
    let mut columns = vec![sweep.parameter.clone()];
    columns.extend(first.columns.iter().cloned());
    let mut table = Table::new(columns);
    let mut out = Outcome::default();
    for (&v, o) in sweep.values.iter().zip(&outcomes) {
        for row in &o.summary.rows {
            let mut r = vec![Cell::Float(v)];
            r.extend(row.iter().copied());
            table.push(r);
        }
        let label = format!("{} = {v}", sweep.parameter);
        out.seeds.extend(o.seeds.iter().map(|s| SeedEntry {
            run: format!("{label}: {}", s.run),
            seed: s.seed,
        }));
        out.warnings
            .extend(o.warnings.iter().map(|w| format!("{label}: {w}")));
    }
    out.tables.push(("sweep".into(), table.clone()));
    out.summary = table;
    Ok(out)
}

// ---- validate ----

/// Every schema and cross-field check without simulating; returns warnings.
pub fn validate(cfg: &ConfigFile, config_dir: &Path) -> Result<Vec<String>, CliError> {
    let mut warnings = Vec::new();
    for (name, target) in [
        ("afc", SweepTarget::Afc),
        ("qubit", SweepTarget::Qubit),
        ("multimode", SweepTarget::Multimode),
        ("broadband", SweepTarget::Broadband),
    ] {
        warnings.extend(
            validate_target(cfg, target)?
                .into_iter()
                .map(|w| format!("{name}: {w}")),
        );
    }
    cfg.efficiency_table.check()?;
    if let Some(fd) = &cfg.fit_decay {
        let (t, i) = decay_data(fd, config_dir)?;
        if t.len() < 6 {
            return Err(invalid(AfcError::Analysis(format!(
                "need at least 6 delay points, got {}",
                t.len()
            ))));
        }
        if t.iter().chain(&i).any(|v| !(*v > 0.0)) {
            return Err(invalid(AfcError::Analysis(
                "delays and intensities must be positive".into(),
            )));
        }
    }
    if let Some(ff) = &cfg.fit_fringe {
        let cols = fringe_data(ff, config_dir)?;
        if cols[0].len() < 5 {
            return Err(invalid(AfcError::Analysis(format!(
                "need at least 5 phase points, got {}",
                cols[0].len()
            ))));
        }
    }
    if let Some(sw) = &cfg.sweep {
        for p in point_configs(cfg, sw)? {
            warnings.extend(
                validate_target(&p, sw.experiment)?
                    .into_iter()
                    .map(|w| format!("sweep {}: {w}", sw.parameter)),
            );
        }
    }
    Ok(warnings)
}
