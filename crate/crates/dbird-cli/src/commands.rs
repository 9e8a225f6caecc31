//! Subcommand implementations. Each artifact-producing command writes its
//! outputs atomically and finishes with a manifest recording the resolved
//! configuration, seed, inputs, wall time, and artifact hashes.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use serde::Serialize;

use dbird::metrics::quantile_type7;
use dbird::rasch::{map_ability, AssessmentSlice};
use dbird::sim::{simulate_cohort, SimConfig};
use dbird::{
    run_chain_with, ChainOptions, McmcConfig, ModelSpec, ModelVariant, PosteriorDraws,
    StudyConfig,
};

use crate::io::{
    atomic_write, dense_ids, read_dataset, write_dataset, CliError, IdMaps, TimeEncoding,
    ITEMS_FILE, RESPONSES_FILE,
};
use crate::manifest::RunManifest;

/// Production mapping of the engine's degenerate-variance refusal: floor the
/// increment sum of squares here and warn, instead of aborting the run.
pub const SS_FLOOR: f64 = 1e-10;

pub const THETA_SUMMARY_FILE: &str = "theta_summary.csv";
pub const MU_SUMMARY_FILE: &str = "mu_summary.csv";
pub const VARIANCES_SUMMARY_FILE: &str = "variances_summary.csv";
pub const DRAWS_FILE: &str = "draws.jsonl";
pub const ID_MAP_FILE: &str = "id_map.json";
pub const TRUTH_THETA_FILE: &str = "truth_theta.csv";
pub const TRUTH_MU_FILE: &str = "truth_mu.csv";
pub const STATIC_MAP_FILE: &str = "static_map.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const REPLICATE_REPORT_FILE: &str = "replicate_report.json";
pub const REPLICATE_TABLE_FILE: &str = "replicate_table.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimPreset {
    /// 150 students × 100 weeks × 10 items per session.
    PaperSim,
    /// 40 students × 40 weeks × 5 items per session.
    DeskScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Dbird,
    GlobalRw,
    HeteroRw,
}

impl From<ModelArg> for ModelVariant {
    fn from(arg: ModelArg) -> Self {
        match arg {
            ModelArg::Dbird => ModelVariant::DBird,
            ModelArg::GlobalRw => ModelVariant::GlobalRw,
            ModelArg::HeteroRw => ModelVariant::HeteroRw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplicatePreset {
    /// 40×40×5, 20 replications, 2,000 + 2,000 sweeps.
    DeskScale,
    /// 150×100×10, 250 replications, 10,000 + 10,000 sweeps.
    PaperSim,
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Built-in cohort design to start from.
    #[arg(long, value_enum, default_value_t = SimPreset::PaperSim)]
    pub preset: SimPreset,
    /// Override the number of students (stable/volatile split defaults to half).
    #[arg(long)]
    pub students: Option<usize>,
    /// Override the number of time points.
    #[arg(long)]
    pub times: Option<usize>,
    /// Override the number of fresh items per (student, time) cell.
    #[arg(long = "items-per-session")]
    pub items_per_session: Option<usize>,
    /// Override the stable/volatile split index.
    #[arg(long)]
    pub group_split: Option<usize>,
    #[arg(long, env = "DBIRD_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let mut config = match args.preset {
        SimPreset::PaperSim => SimConfig::default(),
        SimPreset::DeskScale => SimConfig::desk_scale(),
    };
    if let Some(n) = args.students {
        config.n_students = n;
        config.group_split = n / 2;
    }
    if let Some(t) = args.times {
        config.n_times = t;
    }
    if let Some(k) = args.items_per_session {
        config.items_per_time = k;
    }
    if let Some(split) = args.group_split {
        config.group_split = split;
    }
    config.seed = args.seed;

    let (latents, data) = simulate_cohort(&config)?;
    let ids = dense_ids(data.n_students(), data.item_bank().len());
    write_dataset(&args.out, &data, &ids)?;

    let mut truth_theta = String::from("student_id,time,theta\n");
    for i in 0..data.n_students() {
        for t in 0..data.n_times() {
            truth_theta.push_str(&format!(
                "{},{},{}\n",
                ids.students[i],
                t,
                latents.theta[[i, t]]
            ));
        }
    }
    atomic_write(&args.out.join(TRUTH_THETA_FILE), truth_theta.as_bytes())?;

    let mut truth_mu = String::from("time,mu\n");
    for (t, m) in latents.mu.iter().enumerate() {
        truth_mu.push_str(&format!("{t},{m}\n"));
    }
    atomic_write(&args.out.join(TRUTH_MU_FILE), truth_mu.as_bytes())?;

    let mut manifest = RunManifest::new(
        "simulate",
        args.seed,
        serde_json::json!({ "args": args, "resolved": config }),
    );
    for name in [RESPONSES_FILE, ITEMS_FILE, TRUTH_THETA_FILE, TRUTH_MU_FILE] {
        manifest.record_artifact(&args.out.join(name))?;
    }
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    manifest.write(&args.out)?;

    println!(
        "simulated {} students × {} times × {} items/session ({} responses) → {}",
        config.n_students,
        config.n_times,
        config.items_per_time,
        data.observations().len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fit

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Model variant to fit.
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Burn-in sweeps to discard.
    #[arg(long, default_value_t = 10_000)]
    pub burn: usize,
    /// Posterior draws to keep.
    #[arg(long, default_value_t = 10_000)]
    pub keep: usize,
    /// Keep every thin-th sweep after burn-in.
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, env = "DBIRD_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Also write every kept draw as JSON lines (large at full scale).
    #[arg(long)]
    pub emit_draws: bool,
    /// Interpret the time column as ISO dates (YYYY-MM-DD) and bin into
    /// weeks counted from the earliest date.
    #[arg(long)]
    pub bin_weeks: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory containing responses.csv and items.csv.
    pub data: PathBuf,
}

pub fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let encoding = if args.bin_weeks { TimeEncoding::IsoWeekBinned } else { TimeEncoding::Index };
    let (data, ids) = read_dataset(&args.data, encoding)?;
    let spec = ModelSpec::for_variant(args.model.into());
    let mcmc = McmcConfig { n_burn: args.burn, n_keep: args.keep, thin: args.thin, seed: args.seed };
    let options = ChainOptions { fixed_variances: None, ss_floor: Some(SS_FLOOR) };
    let draws = run_chain_with(&data, &spec, &mcmc, &options)?;
    if draws.ss_floor_events() > 0 {
        eprintln!(
            "warning: degenerate increment sum of squares floored at {SS_FLOOR:e} \
             in {} update(s); the affected innovation variances are not informative",
            draws.ss_floor_events()
        );
    }

    let summary = dbird::summarize_draws(&draws, 0.95)?;
    let mut theta = String::from("student,time,mean,sd,q025,q975\n");
    for i in 0..data.n_students() {
        for t in 0..data.n_times() {
            theta.push_str(&format!(
                "{},{},{},{},{},{}\n",
                ids.students[i],
                t,
                summary.mean[[i, t]],
                summary.sd[[i, t]],
                summary.lower[[i, t]],
                summary.upper[[i, t]]
            ));
        }
    }
    atomic_write(&args.out.join(THETA_SUMMARY_FILE), theta.as_bytes())?;

    let mut artifact_names = vec![THETA_SUMMARY_FILE, VARIANCES_SUMMARY_FILE, ID_MAP_FILE];
    if let Some(mu_draws) = draws.mu_draws() {
        let mut mu = String::from("time,mean,sd,q025,q975\n");
        let mut column = Vec::with_capacity(draws.n_kept());
        for t in 0..data.n_times() {
            column.clear();
            column.extend(mu_draws.column(t).iter().copied());
            let row = column_summary(&mut column);
            mu.push_str(&format!("{t},{},{},{},{}\n", row.mean, row.sd, row.q025, row.q975));
        }
        atomic_write(&args.out.join(MU_SUMMARY_FILE), mu.as_bytes())?;
        artifact_names.push(MU_SUMMARY_FILE);
    }

    atomic_write(
        &args.out.join(VARIANCES_SUMMARY_FILE),
        variance_summary_csv(&draws, &ids).as_bytes(),
    )?;

    let id_map = serde_json::to_string_pretty(&ids)
        .map_err(|e| CliError::Schema(format!("cannot serialize id map: {e}")))?;
    atomic_write(&args.out.join(ID_MAP_FILE), id_map.as_bytes())?;

    if args.emit_draws {
        write_draws_jsonl(&args.out.join(DRAWS_FILE), &draws)?;
        artifact_names.push(DRAWS_FILE);
    }

    let mut manifest = RunManifest::new(
        "fit",
        args.seed,
        serde_json::json!({ "args": args, "mcmc": mcmc, "ss_floor": SS_FLOOR }),
    );
    manifest.record_input(&args.data.join(RESPONSES_FILE));
    manifest.record_input(&args.data.join(ITEMS_FILE));
    for name in artifact_names {
        manifest.record_artifact(&args.out.join(name))?;
    }
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    manifest.write(&args.out)?;

    println!(
        "fit {} to {} students × {} times ({} responses), {} kept draws → {}",
        ModelVariant::from(args.model).label(),
        data.n_students(),
        data.n_times(),
        data.observations().len(),
        draws.n_kept(),
        args.out.display()
    );
    Ok(())
}

struct ColumnSummary {
    mean: f64,
    sd: f64,
    q025: f64,
    q975: f64,
}

/// Mean, sample SD, and 95% interval of one scalar's draws (sorts in place).
fn column_summary(values: &mut [f64]) -> ColumnSummary {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    values.sort_unstable_by(f64::total_cmp);
    let q025 = quantile_type7(values, 0.025).expect("non-empty draws");
    let q975 = quantile_type7(values, 0.975).expect("non-empty draws");
    ColumnSummary { mean, sd, q025, q975 }
}

fn variance_summary_csv(draws: &PosteriorDraws, ids: &IdMaps) -> String {
    let mut out = String::from("parameter,student,mean,sd,q025,q975\n");
    let mut push = |parameter: &str, student: &str, values: &mut [f64]| {
        let row = column_summary(values);
        out.push_str(&format!(
            "{parameter},{student},{},{},{},{}\n",
            row.mean, row.sd, row.q025, row.q975
        ));
    };
    if let Some(dmu) = draws.sigma2_dmu_draws() {
        push("sigma2_dmu", "", &mut dmu.to_vec());
    }
    if let Some(mu_init) = draws.sigma2_mu_init_draws() {
        push("sigma2_mu_init", "", &mut mu_init.to_vec());
    }
    let slots = draws.sigma2_dbeta_draws().ncols();
    let slot_label = |slot: usize| -> &str {
        if slots == 1 && draws.n_students() > 1 {
            "shared"
        } else {
            &ids.students[slot]
        }
    };
    for slot in 0..slots {
        push(
            "sigma2_dbeta",
            slot_label(slot),
            &mut draws.sigma2_dbeta_draws().column(slot).to_vec(),
        );
    }
    for slot in 0..slots {
        push(
            "sigma2_beta_init",
            slot_label(slot),
            &mut draws.sigma2_beta_init_draws().column(slot).to_vec(),
        );
    }
    out
}

#[derive(Serialize)]
struct DrawRecord {
    draw: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma2_dmu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma2_mu_init: Option<f64>,
    sigma2_dbeta: Vec<f64>,
    sigma2_beta_init: Vec<f64>,
}

fn write_draws_jsonl(path: &Path, draws: &PosteriorDraws) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)
        .map_err(|e| CliError::io(format!("cannot create {}", dir.display()), &e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::io(format!("cannot create temp file in {}", dir.display()), &e))?;
    {
        let mut writer = BufWriter::new(tmp.as_file());
        for k in 0..draws.n_kept() {
            let record = DrawRecord {
                draw: k,
                mu: draws.mu_draws().map(|m| m.row(k).to_vec()),
                beta: draws
                    .beta_draws()
                    .index_axis(ndarray::Axis(0), k)
                    .rows()
                    .into_iter()
                    .map(|row| row.to_vec())
                    .collect(),
                sigma2_dmu: draws.sigma2_dmu_draws().map(|v| v[k]),
                sigma2_mu_init: draws.sigma2_mu_init_draws().map(|v| v[k]),
                sigma2_dbeta: draws.sigma2_dbeta_draws().row(k).to_vec(),
                sigma2_beta_init: draws.sigma2_beta_init_draws().row(k).to_vec(),
            };
            let line = serde_json::to_string(&record)
                .map_err(|e| CliError::Schema(format!("cannot serialize draw {k}: {e}")))?;
            writer
                .write_all(line.as_bytes())
                .and_then(|()| writer.write_all(b"\n"))
                .map_err(|e| CliError::io(format!("cannot write {}", path.display()), &e))?;
        }
        writer
            .flush()
            .map_err(|e| CliError::io(format!("cannot write {}", path.display()), &e))?;
    }
    tmp.persist(path)
        .map_err(|e| CliError::io(format!("cannot rename into {}", path.display()), &e.error))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Simulation truth (student_id,time,theta).
    #[arg(long)]
    pub truth: PathBuf,
    /// Posterior summary written by `fit` (student,time,mean,sd,q025,q975).
    #[arg(long)]
    pub summary: PathBuf,
    /// Optional directory for metrics.json + manifest; metrics always print.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let truth = read_keyed_csv(&args.truth, &["student_id", "time", "theta"])?;
    let summary = read_keyed_csv(&args.summary, &["student", "time", "mean", "sd", "q025", "q975"])?;

    if truth.len() != summary.len() || truth.keys().any(|k| !summary.contains_key(k)) {
        let missing = truth
            .keys()
            .find(|k| !summary.contains_key(*k))
            .or_else(|| summary.keys().find(|k| !truth.contains_key(*k)));
        return Err(CliError::Schema(format!(
            "truth and summary cover different cells: {} truth cells vs {} summary cells{}",
            truth.len(),
            summary.len(),
            missing.map_or(String::new(), |(s, t)| format!(
                " (e.g. student '{s}' time {t} is only in one file)"
            ))
        )));
    }

    let n = truth.len() as f64;
    let mut sq_err = 0.0;
    let mut covered = 0usize;
    let mut width = 0.0;
    for (key, row) in &truth {
        let theta = row[0];
        let s = &summary[key];
        let (mean, q025, q975) = (s[0], s[2], s[3]);
        sq_err += (mean - theta).powi(2);
        if q025 <= theta && theta <= q975 {
            covered += 1;
        }
        width += q975 - q025;
    }
    let metrics = serde_json::json!({
        "n_cells": truth.len(),
        "level": 0.95,
        "mse": sq_err / n,
        "empirical_coverage": covered as f64 / n,
        "mean_interval_width": width / n,
    });

    println!("cells {}", truth.len());
    println!("MSE   {:.6}", metrics["mse"].as_f64().unwrap());
    println!("EC    {:.4}", metrics["empirical_coverage"].as_f64().unwrap());
    println!("MCIW  {:.4}", metrics["mean_interval_width"].as_f64().unwrap());

    if let Some(out) = &args.out {
        let json = serde_json::to_string_pretty(&metrics)
            .map_err(|e| CliError::Schema(format!("cannot serialize metrics: {e}")))?;
        atomic_write(&out.join(METRICS_FILE), json.as_bytes())?;
        let mut manifest =
            RunManifest::new("evaluate", 0, serde_json::json!({ "args": args }));
        manifest.record_input(&args.truth);
        manifest.record_input(&args.summary);
        manifest.record_artifact(&out.join(METRICS_FILE))?;
        manifest.wall_time_seconds = start.elapsed().as_secs_f64();
        manifest.write(out)?;
    }
    Ok(())
}

/// Reads a CSV keyed by its first two columns (ID string, time index); the
/// remaining columns parse as numbers. Header must match exactly.
fn read_keyed_csv(
    path: &Path,
    header: &[&str],
) -> Result<HashMap<(String, usize), Vec<f64>>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot open {}", path.display()), &e))?;
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| CliError::Schema(format!("{}: file is empty", path.display())))?;
    if first.split(',').collect::<Vec<_>>() != header {
        return Err(CliError::Schema(format!(
            "{} line 1: expected header '{}', found '{first}'",
            path.display(),
            header.join(",")
        )));
    }
    let mut rows = HashMap::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(CliError::Schema(format!(
                "{} line {line_no}: expected {} fields, found {}",
                path.display(),
                header.len(),
                fields.len()
            )));
        }
        let time: usize = fields[1].parse().map_err(|_| {
            CliError::Schema(format!(
                "{} line {line_no}: time '{}' is not a non-negative integer",
                path.display(),
                fields[1]
            ))
        })?;
        let values: Vec<f64> = fields[2..]
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    CliError::Schema(format!(
                        "{} line {line_no}: '{f}' is not a number",
                        path.display()
                    ))
                })
            })
            .collect::<Result<_, _>>()?;
        if rows.insert((fields[0].to_string(), time), values).is_some() {
            return Err(CliError::Schema(format!(
                "{} line {line_no}: duplicate cell (student '{}', time {time})",
                path.display(),
                fields[0]
            )));
        }
    }
    if rows.is_empty() {
        return Err(CliError::Schema(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// static-map

#[derive(Debug, Args, Serialize)]
pub struct StaticMapArgs {
    /// Assessment grouping; per-time grouping is the only built-in.
    #[arg(long, value_parser = ["time"], default_value = "time")]
    pub group_by: String,
    /// Standard deviation of the N(0, s²) ability prior.
    #[arg(long, default_value_t = 5.0)]
    pub prior_sd: f64,
    /// Interpret the time column as ISO dates (YYYY-MM-DD) binned into weeks.
    #[arg(long)]
    pub bin_weeks: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory containing responses.csv and items.csv.
    pub data: PathBuf,
}

pub fn cmd_static_map(args: &StaticMapArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let encoding = if args.bin_weeks { TimeEncoding::IsoWeekBinned } else { TimeEncoding::Index };
    let (data, ids) = read_dataset(&args.data, encoding)?;
    let (n, t_len) = (data.n_students(), data.n_times());
    let bank = data.item_bank();

    let mut groups: Vec<Vec<(f64, u8)>> = vec![Vec::new(); n * t_len];
    for obs in data.observations() {
        groups[obs.student * t_len + obs.time].push((bank.difficulty(obs.item), obs.correct));
    }

    let mut out = String::from("student,time,theta_map,n_items\n");
    for i in 0..n {
        for t in 0..t_len {
            let items = std::mem::take(&mut groups[i * t_len + t]);
            let n_items = items.len();
            let slice = AssessmentSlice::with_prior_sd(items, args.prior_sd)?;
            let fit = map_ability(&slice)?;
            out.push_str(&format!("{},{t},{},{n_items}\n", ids.students[i], fit.theta));
        }
    }
    atomic_write(&args.out.join(STATIC_MAP_FILE), out.as_bytes())?;

    let mut manifest = RunManifest::new("static-map", 0, serde_json::json!({ "args": args }));
    manifest.record_input(&args.data.join(RESPONSES_FILE));
    manifest.record_input(&args.data.join(ITEMS_FILE));
    manifest.record_artifact(&args.out.join(STATIC_MAP_FILE))?;
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    manifest.write(&args.out)?;

    println!(
        "static MAP estimates for {n} students × {t_len} times → {}",
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// replicate

#[derive(Debug, Args, Serialize)]
pub struct ReplicateArgs {
    /// Built-in study design to start from.
    #[arg(long, value_enum, default_value_t = ReplicatePreset::DeskScale)]
    pub preset: ReplicatePreset,
    /// Override the number of replications.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Override the number of students per replication.
    #[arg(long)]
    pub students: Option<usize>,
    /// Override the number of time points.
    #[arg(long)]
    pub times: Option<usize>,
    /// Override the number of items per (student, time) cell.
    #[arg(long = "items-per-session")]
    pub items_per_session: Option<usize>,
    /// Override burn-in sweeps.
    #[arg(long)]
    pub burn: Option<usize>,
    /// Override kept draws.
    #[arg(long)]
    pub keep: Option<usize>,
    #[arg(long, env = "DBIRD_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_replicate(args: &ReplicateArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let (mut sim, mut mcmc, mut n_reps) = match args.preset {
        ReplicatePreset::DeskScale => (
            SimConfig::desk_scale(),
            McmcConfig { n_burn: 2_000, n_keep: 2_000, thin: 1, seed: 0 },
            20,
        ),
        ReplicatePreset::PaperSim => (SimConfig::default(), McmcConfig::default(), 250),
    };
    if let Some(n) = args.students {
        sim.n_students = n;
        sim.group_split = n / 2;
    }
    if let Some(t) = args.times {
        sim.n_times = t;
    }
    if let Some(k) = args.items_per_session {
        sim.items_per_time = k;
    }
    if let Some(b) = args.burn {
        mcmc.n_burn = b;
    }
    if let Some(k) = args.keep {
        mcmc.n_keep = k;
    }
    if let Some(r) = args.reps {
        n_reps = r;
    }
    let mut study = StudyConfig::new(sim, mcmc, n_reps, args.seed);
    study.chain_options.ss_floor = Some(SS_FLOOR);

    let result = dbird::replicate_study(&study)?;
    let table = result.text_table();
    print!("{table}");
    if result.single_replication {
        eprintln!("warning: single replication — SD columns are zeros, not estimates");
    }

    let report = serde_json::to_string_pretty(&result)
        .map_err(|e| CliError::Schema(format!("cannot serialize report: {e}")))?;
    atomic_write(&args.out.join(REPLICATE_REPORT_FILE), report.as_bytes())?;
    atomic_write(&args.out.join(REPLICATE_TABLE_FILE), table.as_bytes())?;

    let mut manifest = RunManifest::new(
        "replicate",
        args.seed,
        serde_json::json!({ "args": args, "resolved": study }),
    );
    manifest.record_artifact(&args.out.join(REPLICATE_REPORT_FILE))?;
    manifest.record_artifact(&args.out.join(REPLICATE_TABLE_FILE))?;
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    manifest.write(&args.out)?;
    Ok(())
}
