//! Acceptance suite. Prints one `PASS` or `FAIL` line per criterion and exits
//! non-zero when any criterion fails.
//!
//! Simulation criteria run at 1000 nodes with workload and churn rates scaled
//! down from their 10000-node values.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use ulsim::adaptation::{crossover, mutate, select_inverse_proportionate};
use ulsim::cli::commands::default_jobs;
use ulsim::cli::{cmd_settling, run_batch, ExperimentSpec};
use ulsim::engine::{LoadProfile, RunTrace, ScenarioConfig};
use ulsim::metrics::{measures_from_information, normalized_information, MetricsConfig};
use ulsim::overlay::{OverlayGraph, TopologyParams};
use ulsim::stats::{i95_from, wilcoxon_rank_sum, Alternative};
use ulsim::{FitnessKind, Genotype};

const DESK_NODES: usize = 1000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn desk_scenario() -> ScenarioConfig {
    ScenarioConfig::default().scaled_to(DESK_NODES)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean over samples with `t` in `[from, to]` of the column picked by `f`.
fn window_mean(trace: &RunTrace, from: f64, to: f64, f: impl Fn(&ulsim::engine::MetricsSample) -> f64) -> f64 {
    let vals: Vec<f64> = trace.samples.iter().filter(|s| s.t >= from && s.t <= to).map(f).collect();
    mean(&vals)
}

fn histogram_oracle(window: &[Vec<u32>], n: u32) -> f64 {
    let mut hist: BTreeMap<u32, f64> = BTreeMap::new();
    let mut total = 0.0;
    for g in window.iter().flatten() {
        *hist.entry(*g).or_default() += 1.0;
        total += 1.0;
    }
    let h: f64 = hist.values().map(|c| c / total).map(|p| -p * p.ln()).sum();
    (h / (n as f64).ln()).clamp(0.0, 1.0)
}

fn metrics_exactness() -> Outcome {
    let start = Instant::now();
    let cfg = MetricsConfig::new(6, 3, 3).unwrap();
    let worked = [[1u32, 3, 5], [1, 3, 6], [1, 4, 6]];
    let i: f64 = normalized_information(worked.iter(), &cfg).unwrap();
    let mut ok = (i - 0.85).abs() <= 0.005;

    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_identity = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.random_range(2..=8);
        let q = rng.random_range(1..=5);
        let w = rng.random_range(1..=10);
        let window: Vec<Vec<u32>> = (0..w).map(|_| (0..q).map(|_| rng.random_range(1..=n)).collect()).collect();
        let cfg = MetricsConfig::new(n, q, w).unwrap();
        let got: f64 = normalized_information(window.iter(), &cfg).unwrap();
        let (e, s, c) = measures_from_information(got).unwrap();
        worst_identity = worst_identity.max((e + s - 1.0).abs()).max((c - 4.0 * e * s).abs());
        worst_oracle = worst_oracle.max((got - histogram_oracle(&window, n)).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= worst_identity <= 1e-12 && worst_oracle <= 1e-12 && elapsed < 1.0;
    outcome(
        ok,
        format!("worked I = {i:.4}; identity err {worst_identity:.1e}; oracle err {worst_oracle:.1e}; {elapsed:.3} s"),
    )
}

fn interval_arithmetic() -> Outcome {
    // (mu, sigma, published lo, published hi)
    let rows: [(f64, f64, f64, f64); 8] = [
        (0.8977, 0.0207, 0.8548, 0.9406),
        (0.9, 0.0052, 0.8898, 0.9115),
        (0.0705, 0.0087, 0.0523, 0.0886),
        (0.0621, 0.0033, 0.0551, 0.0691),
        (0.9646, 0.0019, 0.9606, 0.9687),
        (0.9606, 0.0008, 0.9589, 0.9623),
        (0.036, 0.0013, 0.0332, 0.0387),
        (0.0364, 0.0005, 0.0352, 0.0376),
    ];
    let mut worst = 0.0f64;
    for (mu, sd, lo, hi) in rows {
        let iv = i95_from(mu, sd, 25).unwrap();
        worst = worst.max((iv.lo - lo).abs()).max((iv.hi - hi).abs());
    }
    outcome(worst <= 0.002, format!("{} intervals, worst endpoint error {worst:.5}", rows.len()))
}

fn wilcoxon_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut cases = 0;
    let mut mismatches = 0;
    for total in 2..=8usize {
        for na in 1..total {
            for trial in 0..10 {
                let mut draw = || if trial % 2 == 0 { rng.random_range(0..4) as f64 } else { rng.random::<f64>() };
                let a: Vec<f64> = (0..na).map(|_| draw()).collect();
                let b: Vec<f64> = (0..total - na).map(|_| draw()).collect();
                for alt in [Alternative::TwoSided, Alternative::Greater, Alternative::Less] {
                    cases += 1;
                    let got = wilcoxon_rank_sum(&a, &b, alt).unwrap();
                    if (got - common::brute_force_p(&a, &b, alt)).abs() > 1e-12 {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let ps: Vec<f64> = (0..200)
        .map(|_| {
            let a: Vec<f64> = (0..25).map(|_| rng.sample(StandardNormal)).collect();
            let b: Vec<f64> = (0..25).map(|_| rng.sample(StandardNormal)).collect();
            wilcoxon_rank_sum(&a, &b, Alternative::Greater).unwrap()
        })
        .collect();
    let ks = common::ks_uniform_p(&ps);
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && ks > 0.01 && elapsed < 30.0,
        format!("{mismatches}/{cases} oracle mismatches; KS p = {ks:.3}; {elapsed:.2} s"),
    )
}

fn topology_law() -> Outcome {
    let start = Instant::now();
    let params = TopologyParams::new(10_000, 5, 3).unwrap();
    let graphs: Vec<OverlayGraph> = (0..30)
        .map(|s| OverlayGraph::generate(&params, &mut ChaCha8Rng::seed_from_u64(200 + s)).unwrap())
        .collect();
    let degree = mean(&graphs.iter().map(OverlayGraph::mean_degree).collect::<Vec<_>>());
    let target = 6.871;
    let bins = 20;
    let counts = common::binned_degrees(&graphs, 3, bins);
    let p = common::chi_square_p(&counts, &common::exponential_law(3, bins));
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        (degree / target - 1.0).abs() <= 0.05 && p > 0.01 && elapsed < 60.0,
        format!("mean degree {degree:.3} vs {target}; chi-square p = {p:.3e}; {elapsed:.1} s"),
    )
}

struct Batches {
    f2: Vec<RunTrace>,
    f4: Vec<RunTrace>,
}

fn batches(scenario: &ScenarioConfig, seeds: &[u64]) -> Batches {
    let jobs = default_jobs();
    Batches {
        f2: run_batch(scenario, FitnessKind::F2, seeds, jobs).unwrap(),
        f4: run_batch(scenario, FitnessKind::F4, seeds, jobs).unwrap(),
    }
}

fn static_load(b: &Batches) -> Outcome {
    let final_qhr = |t: &[RunTrace]| mean(&t.iter().map(|r| r.final_sample().qhr.mean).collect::<Vec<_>>());
    let (q2, q4) = (final_qhr(&b.f2), final_qhr(&b.f4));
    let calmer = b.f2.iter().zip(&b.f4).filter(|(a, c)| c.final_sample().qhr.std < a.final_sample().qhr.std).count();
    let in_range = |q: f64| (0.8..=1.0).contains(&q);
    outcome(
        in_range(q2) && in_range(q4) && calmer * 2 > b.f2.len(),
        format!("final QHR F2 {q2:.3}, F4 {q4:.3}; F4 spread lower in {calmer}/{} seeds", b.f2.len()),
    )
}

fn changing_load(b: &Batches) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, traces) in [("F2", &b.f2), ("F4", &b.f4)] {
        for gene in 0..3 {
            let early = mean(&traces.iter().map(|t| window_mean(t, 1200.0, 3000.0, |s| s.genes[gene].mean)).collect::<Vec<_>>());
            let late = mean(&traces.iter().map(|t| window_mean(t, 5400.0, 9000.0, |s| s.genes[gene].mean)).collect::<Vec<_>>());
            ok &= late < early;
            parts.push(format!("{name} M{gene} {early:.2}->{late:.2}"));
        }
    }
    let tail = |t: &RunTrace, f: fn(&ulsim::engine::MetricsSample) -> f64| window_mean(t, 6000.0, 9000.0, f);
    let (mut e_lower, mut s_higher, mut h_higher) = (0, 0, 0);
    for (a, c) in b.f2.iter().zip(&b.f4) {
        e_lower += (tail(c, |s| s.emergence.mean) < tail(a, |s| s.emergence.mean)) as usize;
        s_higher += (tail(c, |s| s.self_organization.mean) > tail(a, |s| s.self_organization.mean)) as usize;
        h_higher += (tail(c, |s| s.homeostasis.mean) > tail(a, |s| s.homeostasis.mean)) as usize;
    }
    let n = b.f2.len();
    ok &= e_lower * 2 > n && s_higher * 2 > n && h_higher * 2 > n;
    parts.push(format!("F4 vs F2 over seeds: E lower {e_lower}/{n}, S higher {s_higher}/{n}, H higher {h_higher}/{n}"));
    outcome(ok, parts.join("; "))
}

/// Per-seed settling times at each period, keyed by `(variant, Ta)`.
fn settling_pairs(seeds: &[u64], tas: &[f64]) -> BTreeMap<(String, u64), Vec<f64>> {
    let mut out: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for &seed in seeds {
        let spec = ExperimentSpec { scenario: desk_scenario(), runs: 1, base_seed: seed, ..ExperimentSpec::default() };
        for row in cmd_settling(&spec, tas, None, 1).unwrap() {
            out.entry((row.variant.to_string(), row.ta as u64)).or_default().push(row.settling_time);
        }
    }
    out
}

fn settling_direction() -> Outcome {
    let wins = |m: &BTreeMap<(String, u64), Vec<f64>>| {
        let f2 = &m[&("F2".to_string(), 7)];
        let f4 = &m[&("F4".to_string(), 7)];
        (f2.iter().zip(f4).filter(|(a, b)| b <= a).count(), f2.len())
    };
    let first = settling_pairs(&[1, 2, 3, 4, 5], &[3.0, 7.0, 15.0]);
    let summary: Vec<String> = first.iter().map(|((v, ta), ts)| format!("{v}@{ta}: {:.0} s", mean(ts))).collect();
    let (w, n) = wins(&first);
    if w >= 3 {
        return outcome(true, format!("F4 settles no later in {w}/{n} seeds at Ta=7; mean t_s {}", summary.join(", ")));
    }
    let mut all = first.clone();
    for (k, v) in settling_pairs(&[6, 7, 8, 9, 10], &[7.0]) {
        all.entry(k).or_default().extend(v);
    }
    let (w10, n10) = wins(&all);
    outcome(
        w10 * 2 > n10,
        format!("F4 settles no later in {w}/{n} seeds at Ta=7, {w10}/{n10} after the rerun; mean t_s {}", summary.join(", ")),
    )
}

fn micro_oracles(audits: &[bool]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let (cases, misses) = common::flood_oracle(&mut rng);

    let mut sel = [0u64; 2];
    for _ in 0..100_000 {
        sel[select_inverse_proportionate(&[1.0, 3.0], &mut rng).unwrap()] += 1;
    }
    let p_sel = common::chi_square_p(&sel, &[0.75, 0.25]);

    let g = |x: [u32; 3]| Genotype::new(x, 6).unwrap();
    let mut cut = [0u64; 2];
    for _ in 0..20_000 {
        let (o1, _) = crossover(&g([1, 1, 1]), &g([2, 2, 2]), &mut rng);
        cut[o1.genes().iter().filter(|&&x| x == 1).count() - 1] += 1;
    }
    let p_cross = common::uniform_p(&cut);

    let mut resampled = [0u64; 6];
    for _ in 0..60_000 {
        let (m, _) = mutate(&g([1, 1, 1]), 1.0, 6, &mut rng);
        resampled[(m.genes().into_iter().find(|&x| x != 1).unwrap_or(1) - 1) as usize] += 1;
    }
    let p_mut = common::uniform_p(&resampled);

    let audited = audits.len();
    let clean = audits.iter().filter(|&&a| a).count();
    outcome(
        misses == 0 && cases > 0 && p_sel > 0.01 && p_cross > 0.01 && p_mut > 0.01 && clean == audited,
        format!(
            "flood {}/{cases} hits; chi-square p selection {p_sel:.3}, crossover {p_cross:.3}, mutation {p_mut:.3}; audits clean {clean}/{audited}",
            cases - misses
        ),
    )
}

fn report(id: usize, name: &str, o: &Outcome, failures: &mut usize) {
    if !o.pass {
        *failures += 1;
    }
    println!("criterion {id} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn main() {
    let mut failures = 0;
    let mut audits = Vec::new();

    report(1, "metrics exactness", &metrics_exactness(), &mut failures);
    report(2, "interval arithmetic", &interval_arithmetic(), &mut failures);
    report(3, "rank-sum correctness", &wilcoxon_correctness(), &mut failures);
    report(4, "topology degree law", &topology_law(), &mut failures);

    let seeds: Vec<u64> = (1..=10).collect();
    let start = Instant::now();
    let stat = batches(&desk_scenario(), &seeds);
    audits.extend(stat.f2.iter().chain(&stat.f4).map(|t| t.audit.passed()));
    let mut o = static_load(&stat);
    o.detail.push_str(&format!("; {:.0} s", start.elapsed().as_secs_f64()));
    report(5, "static load", &o, &mut failures);

    let mut changing = desk_scenario();
    changing.load_profile = LoadProfile::ChangingAt(3000.0);
    let dynamic = batches(&changing, &seeds);
    audits.extend(dynamic.f2.iter().chain(&dynamic.f4).map(|t| t.audit.passed()));
    report(6, "changing load", &changing_load(&dynamic), &mut failures);

    report(7, "settling direction", &settling_direction(), &mut failures);
    report(8, "protocol and GA oracles", &micro_oracles(&audits), &mut failures);

    println!("acceptance: {} of 8 criteria passed", 8 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
