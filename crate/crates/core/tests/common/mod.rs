#![allow(dead_code)]

use std::collections::VecDeque;

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use ulsim::engine::{run_on_graph, ScenarioConfig, Simulation};
use ulsim::overlay::{exponential_degree_pmf, NodeId, OverlayGraph};
use ulsim::protocol::ResourceVector;
use ulsim::stats::Alternative;
use ulsim::Genotype;

/// Upper-tail p-value of Pearson's statistic for `observed` counts against
/// `expected` probabilities (which must sum to one).
pub fn chi_square_p(observed: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    let total: u64 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &p)| {
            let e = p * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let df = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

pub fn uniform_p(observed: &[u64]) -> f64 {
    let k = observed.len();
    chi_square_p(observed, &vec![1.0 / k as f64; k])
}

/// Pooled degree counts binned as `m, m+1, ..., m+bins-1` plus one tail bin.
pub fn binned_degrees(graphs: &[OverlayGraph], m: usize, bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins + 1];
    for g in graphs {
        for id in g.alive() {
            let k = g.degree(*id);
            assert!(k >= m, "degree {k} below m");
            counts[(k - m).min(bins)] += 1;
        }
    }
    counts
}

/// Bin probabilities of a degree law given by its pmf on `k >= m`.
pub fn binned_law(pmf: impl Fn(usize) -> f64, m: usize, bins: usize) -> Vec<f64> {
    let mut probs: Vec<f64> = (0..bins).map(|j| pmf(m + j)).collect();
    let head: f64 = probs.iter().sum();
    probs.push(1.0 - head);
    probs
}

pub fn exponential_law(m: usize, bins: usize) -> Vec<f64> {
    binned_law(|k| exponential_degree_pmf(k, m), m, bins)
}

/// Degree law of uniform attachment: each node gains a geometric number of
/// later links with success probability `1/(m+1)`.
pub fn geometric_law(m: usize, bins: usize) -> Vec<f64> {
    let r = m as f64 / (m as f64 + 1.0);
    binned_law(|k| (1.0 - r) * r.powi((k - m) as i32), m, bins)
}

/// Two-sided Kolmogorov-Smirnov p-value of `sample` against U(0, 1)
/// (asymptotic series).
pub fn ks_uniform_p(sample: &[f64]) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).max((i as f64 + 1.0) / n - x))
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        p += 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}

pub const BIG: ResourceVector = ResourceVector::new(2048, 1024, 100);
pub const SMALL: ResourceVector = ResourceVector::new(512, 256, 10);

pub fn quiet_config() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.churn_rate = 0.0;
    cfg.query_rate = 0.0;
    cfg
}

/// A simulation on `graph` with every peer at `genes`, no resources anywhere
/// and no background events.
pub fn frozen(graph: OverlayGraph, genes: [u32; 3]) -> Simulation {
    let cfg = quiet_config();
    let params = *cfg.fitness_params();
    run_on_graph(&cfg, graph, |sim| {
        sim.clear_events();
        let ids: Vec<NodeId> = sim.graph().alive().to_vec();
        for id in ids {
            let p = sim.peers_mut().get_mut(id).unwrap();
            p.install_genotype(Genotype::new(genes, 6).unwrap(), &params);
            p.capacity = ResourceVector::ZERO;
        }
    })
    .unwrap()
}

pub fn set_capacity(sim: &mut Simulation, id: usize, c: ResourceVector) {
    sim.peers_mut().get_mut(NodeId(id)).unwrap().capacity = c;
}

pub fn bfs(graph: &OverlayGraph, from: NodeId) -> Vec<Option<usize>> {
    let mut dist = vec![None; graph.id_bound()];
    dist[from.0] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v.0].unwrap();
        for nb in graph.neighbors(v).unwrap() {
            if dist[nb.0].is_none() {
                dist[nb.0] = Some(d + 1);
                queue.push_back(*nb);
            }
        }
    }
    dist
}

/// Random spanning tree on 20 nodes plus a few chords.
pub fn oracle_graph(rng: &mut impl Rng) -> OverlayGraph {
    let mut edges = Vec::new();
    for v in 1..20 {
        edges.push((rng.random_range(0..v), v));
    }
    while edges.len() < 24 {
        let a = rng.random_range(0..20);
        let b = rng.random_range(0..20);
        if a != b && !edges.contains(&(a.min(b), a.max(b))) && !edges.contains(&(a.max(b), a.min(b))) {
            edges.push((a.min(b), a.max(b)));
        }
    }
    OverlayGraph::from_edges(20, &edges).unwrap()
}

/// Mann-Whitney U by direct pair counting.
pub fn pair_u(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

pub fn permutations(items: &mut Vec<f64>, k: usize, out: &mut Vec<Vec<f64>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, out);
        items.swap(k, i);
    }
}

/// Permutation p-value over every ordering of the pooled values.
pub fn brute_force_p(a: &[f64], b: &[f64], alternative: Alternative) -> f64 {
    let observed = pair_u(a, b);
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut perms = Vec::new();
    permutations(&mut pooled, 0, &mut perms);
    let (mut ge, mut le) = (0usize, 0usize);
    for p in &perms {
        let u = pair_u(&p[..a.len()], &p[a.len()..]);
        if u >= observed - 1e-9 {
            ge += 1;
        }
        if u <= observed + 1e-9 {
            le += 1;
        }
    }
    let total = perms.len() as f64;
    let (g, l) = (ge as f64 / total, le as f64 / total);
    match alternative {
        Alternative::Greater => g,
        Alternative::Less => l,
        Alternative::TwoSided => (2.0 * g.min(l)).min(1.0),
    }
}

/// Places a single provider at every distance up to six hops from every
/// origin on ten random 20-node graphs and floods a query from the origin
/// with all peers at full search depth. Returns `(cases, misses)`.
pub fn flood_oracle(rng: &mut impl Rng) -> (usize, usize) {
    let (mut cases, mut misses) = (0, 0);
    for _ in 0..10 {
        let graph = oracle_graph(rng);
        for origin in 0..20 {
            let dist = bfs(&graph, NodeId(origin));
            for provider in 0..20 {
                let d = dist[provider].expect("oracle graph is connected");
                if provider == origin || d > 6 {
                    continue;
                }
                let mut sim = frozen(graph.clone(), [6, 6, 6]);
                set_capacity(&mut sim, provider, BIG);
                sim.originate_query(NodeId(origin), SMALL).unwrap();
                sim.step_until(10.0);
                cases += 1;
                if sim.counters().hits != 1 || sim.reservations().made != 1 {
                    misses += 1;
                }
            }
        }
    }
    (cases, misses)
}
