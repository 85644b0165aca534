//! Multi-seed experiment orchestration and CSV emission.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::ExperimentSpec;
use crate::engine::{fmt_sig, run, LoadProfile, RunTrace, ScenarioConfig, TRACE_HEADER};
use crate::error::{invalid, Result};
use crate::genome::FitnessKind;
use crate::stats::{i95_from, settling_time, summary, wilcoxon_rank_sum, Alternative};

pub const REPORT_HEADER: &str = "variable,mu_a,sigma_a,mu_b,sigma_b,i95_a_lo,i95_a_hi,i95_b_lo,i95_b_hi,p_value";
pub const SETTLING_HEADER: &str = "variant,ta,t_s";
pub const SETTLING_BAND: f64 = 0.05;

/// Runs `scenario` under fitness `variant` for each seed. Results come back
/// in seed order whatever the scheduling.
pub fn run_batch(scenario: &ScenarioConfig, variant: FitnessKind, seeds: &[u64], jobs: usize) -> Result<Vec<RunTrace>> {
    let configs: Vec<ScenarioConfig> =
        seeds.iter().map(|&s| scenario.clone().with_fitness(variant).with_seed(s)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| invalid(format!("worker pool: {e}")))?;
    pool.install(|| configs.par_iter().map(run).collect())
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Pointwise mean and sample-free spread (population std) of the trace
/// columns across runs. Row `i` aggregates row `i` of every trace.
pub fn average_traces(traces: &[RunTrace]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let first = traces.first().ok_or_else(|| invalid("no traces to average"))?;
    let rows = first.samples.len();
    if traces.iter().any(|t| t.samples.len() != rows) {
        return Err(invalid("traces have different sample counts"));
    }
    let k = traces.len() as f64;
    let mut out = Vec::with_capacity(rows);
    for i in 0..rows {
        let cols: Vec<[f64; 15]> = traces.iter().map(|t| t.samples[i].columns()).collect();
        let mean: Vec<f64> = (0..15).map(|c| cols.iter().map(|r| r[c]).sum::<f64>() / k).collect();
        let sd: Vec<f64> = (0..15)
            .map(|c| (cols.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / k).sqrt())
            .collect();
        out.push((mean, sd));
    }
    Ok(out)
}

pub fn averaged_header() -> String {
    let sd: Vec<String> = TRACE_HEADER.split(',').skip(1).map(|c| format!("{c}_sd")).collect();
    format!("{TRACE_HEADER},{}", sd.join(","))
}

fn write_averaged(path: &Path, rows: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", averaged_header())?;
    for (mean, sd) in rows {
        let cells: Vec<String> = mean.iter().chain(&sd[1..]).map(|v| fmt_sig(*v)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn write_trace(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    trace.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

/// One report line comparing `a` and `b`.
pub fn report_row(variable: &str, a: &[f64], b: &[f64], alternative: Alternative) -> String {
    let stats = |v: &[f64]| -> [String; 4] {
        match summary(v).and_then(|s| Ok((s, i95_from(s.mean, s.std, s.n)?))) {
            Ok((s, i)) => [fmt_sig(s.mean), fmt_sig(s.std), fmt_sig(i.lo), fmt_sig(i.hi)],
            Err(_) => std::array::from_fn(|_| "nan".to_string()),
        }
    };
    let [mu_a, sd_a, lo_a, hi_a] = stats(a);
    let [mu_b, sd_b, lo_b, hi_b] = stats(b);
    let p = wilcoxon_rank_sum(a, b, alternative).map_or("nan".to_string(), fmt_sig);
    format!("{variable},{mu_a},{sd_a},{mu_b},{sd_b},{lo_a},{hi_a},{lo_b},{hi_b},{p}")
}

#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub traces: Vec<(FitnessKind, Vec<RunTrace>)>,
    pub files: Vec<PathBuf>,
}

/// Runs every variant over every seed and writes per-run traces, averaged
/// traces and `report.csv` into `out_dir`.
pub fn cmd_run(spec: &ExperimentSpec, out_dir: &Path, jobs: usize, alternative: Alternative) -> Result<RunOutputs> {
    spec.validate()?;
    fs::create_dir_all(out_dir)?;
    let seeds: Vec<u64> = spec.seeds().collect();
    let mut traces = Vec::new();
    let mut files = Vec::new();
    for &variant in &spec.variants {
        let batch = run_batch(&spec.scenario, variant, &seeds, jobs)?;
        for (seed, trace) in seeds.iter().zip(&batch) {
            let path = out_dir.join(format!("{variant}_seed{seed}.csv"));
            write_trace(&path, trace)?;
            files.push(path);
        }
        let path = out_dir.join(format!("{variant}_avg.csv"));
        write_averaged(&path, &average_traces(&batch)?)?;
        files.push(path);
        traces.push((variant, batch));
    }

    let path = out_dir.join("report.csv");
    let mut out = BufWriter::new(File::create(&path)?);
    writeln!(out, "{REPORT_HEADER}")?;
    for i in 0..traces.len() {
        for j in i + 1..traces.len() {
            let (va, ta) = &traces[i];
            let (vb, tb) = &traces[j];
            let finals = |t: &[RunTrace], f: fn(&RunTrace) -> f64| t.iter().map(f).collect::<Vec<f64>>();
            let avg = |t: &RunTrace| t.final_sample().qhr.mean;
            let std = |t: &RunTrace| t.final_sample().qhr.std;
            writeln!(out, "{}", report_row(&format!("avg_global_qhr:{va}:{vb}"), &finals(ta, avg), &finals(tb, avg), alternative))?;
            writeln!(out, "{}", report_row(&format!("std_global_qhr:{va}:{vb}"), &finals(ta, std), &finals(tb, std), alternative))?;
        }
    }
    out.flush()?;
    files.push(path);
    Ok(RunOutputs { traces, files })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettlingRow {
    pub variant: FitnessKind,
    pub ta: f64,
    pub settling_time: f64,
}

/// Settling time of the run-averaged global QHR for each `(variant, Ta)`
/// under static load. Writes `settling.csv` when `out_dir` is given.
pub fn cmd_settling(
    spec: &ExperimentSpec,
    ta_values: &[f64],
    out_dir: Option<&Path>,
    jobs: usize,
) -> Result<Vec<SettlingRow>> {
    spec.validate()?;
    if ta_values.is_empty() {
        return Err(invalid("at least one adaptation period is required"));
    }
    let seeds: Vec<u64> = spec.seeds().collect();
    let mut rows = Vec::new();
    for &variant in &spec.variants {
        for &ta in ta_values {
            let mut scenario = spec.scenario.clone();
            scenario.load_profile = LoadProfile::Static;
            scenario.adaptation.period = ta;
            scenario.validate()?;
            let batch = run_batch(&scenario, variant, &seeds, jobs)?;
            let averaged = average_traces(&batch)?;
            let series: Vec<(f64, f64)> = averaged.iter().map(|(m, _)| (m[0], m[1])).collect();
            rows.push(SettlingRow { variant, ta, settling_time: settling_time(&series, SETTLING_BAND)? });
        }
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let mut out = BufWriter::new(File::create(dir.join("settling.csv"))?);
        writeln!(out, "{SETTLING_HEADER}")?;
        for r in &rows {
            writeln!(out, "{},{},{}", r.variant, fmt_sig(r.ta), fmt_sig(r.settling_time))?;
        }
        out.flush()?;
    }
    Ok(rows)
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|v| !v.trim().is_empty())
        .map(|v| v.trim().parse::<T>().map_err(|_| invalid(format!("cannot parse '{v}'"))))
        .collect()
}
