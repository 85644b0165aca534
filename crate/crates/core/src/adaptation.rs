//! Per-peer genetic adaptation.
//!
//! Every `Ta` seconds a peer picks a partner among its neighbours' models
//! with probability inversely proportional to their fitness, recombines with
//! it at a random crosspoint, mutates the two offspring with probability
//! `1 - <QHR>`, and keeps one of {own model, offspring} by the same inverse
//! fitness-proportionate rule.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::genome::{avg_qhr, fitness, phenotype_of, FitnessKind, FitnessParams, Genotype, GENES};
use crate::protocol::PeerState;

/// Fitness values at or below this are treated as unbeatable.
pub const FITNESS_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationParams {
    /// Adaptation period `Ta` in seconds.
    pub period: f64,
    pub fitness: FitnessKind,
    pub fitness_params: FitnessParams<f64>,
}

impl AdaptationParams {
    pub fn new(period: f64, fitness: FitnessKind, fitness_params: FitnessParams<f64>) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(invalid(format!("adaptation period {period} must be > 0")));
        }
        Ok(Self { period, fitness, fitness_params })
    }
}

impl Default for AdaptationParams {
    fn default() -> Self {
        Self { period: 7.0, fitness: FitnessKind::F4, fitness_params: FitnessParams::default() }
    }
}

/// Index drawn with probability `(1/F_i) / sum_j (1/F_j)`.
///
/// A candidate with fitness `<= FITNESS_EPSILON` is returned outright (the
/// first such one).
pub fn select_inverse_proportionate<R: Rng + ?Sized>(fitnesses: &[f64], rng: &mut R) -> Result<usize> {
    if fitnesses.is_empty() {
        return Err(Error::NoData);
    }
    if let Some(i) = fitnesses.iter().position(|&f| f <= FITNESS_EPSILON) {
        return Ok(i);
    }
    let total: f64 = fitnesses.iter().map(|f| 1.0 / f).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, f) in fitnesses.iter().enumerate() {
        u -= 1.0 / f;
        if u < 0.0 {
            return Ok(i);
        }
    }
    Ok(fitnesses.len() - 1)
}

/// One-point crossover at `crosspoint` (genes `[0, c)` from the first parent).
pub fn crossover_at(a: &Genotype, b: &Genotype, crosspoint: usize) -> (Genotype, Genotype) {
    assert!((1..GENES).contains(&crosspoint), "crosspoint {crosspoint} out of range");
    let (ga, gb) = (a.genes(), b.genes());
    let mut o1 = ga;
    let mut o2 = gb;
    o1[crosspoint..].copy_from_slice(&gb[crosspoint..]);
    o2[crosspoint..].copy_from_slice(&ga[crosspoint..]);
    (Genotype::from_genes_unchecked(o1), Genotype::from_genes_unchecked(o2))
}

/// One-point crossover with a crosspoint uniform in `1..GENES`.
pub fn crossover<R: Rng + ?Sized>(a: &Genotype, b: &Genotype, rng: &mut R) -> (Genotype, Genotype) {
    crossover_at(a, b, rng.random_range(1..GENES))
}

/// With probability `p_mut`, resamples one uniformly chosen gene uniformly
/// from `1..=n`. Returns the result and whether a mutation happened.
pub fn mutate<R: Rng + ?Sized>(g: &Genotype, p_mut: f64, n: u32, rng: &mut R) -> (Genotype, bool) {
    if !(rng.random::<f64>() < p_mut) {
        return (*g, false);
    }
    let mut genes = g.genes();
    let pos = rng.random_range(0..GENES);
    genes[pos] = rng.random_range(1..=n);
    (Genotype::from_genes_unchecked(genes), true)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickReport {
    pub survivor: Genotype,
    pub neighborhood_qhr: f64,
    /// Offspring that went through a mutation (0, 1 or 2).
    pub mutations: u32,
    pub isolated: bool,
}

/// One adaptation step for `peer` given its neighbours' `(model, qhr)`
/// snapshots. Installs and returns the survivor.
pub fn adaptation_tick<R: Rng + ?Sized>(
    peer: &mut PeerState,
    neighbors: &[(Genotype, f64)],
    params: &AdaptationParams,
    rng: &mut R,
) -> Result<TickReport> {
    let fp = &params.fitness_params;
    let own = peer.genotype;
    let own_qhr = peer.qhr.current();
    peer.generation += 1;

    if neighbors.is_empty() {
        peer.window.push(own);
        return Ok(TickReport { survivor: own, neighborhood_qhr: own_qhr, mutations: 0, isolated: true });
    }

    let qhrs: Vec<f64> = neighbors.iter().map(|(_, q)| *q).collect();
    let shared_qhr = avg_qhr(own_qhr, &qhrs).clamp(0.0, 1.0);
    let fit = |g: &Genotype| fitness(params.fitness, phenotype_of(g, fp).phi, shared_qhr, fp);

    let neighbor_fitness = neighbors.iter().map(|(g, _)| fit(g)).collect::<Result<Vec<_>>>()?;
    let partner = neighbors[select_inverse_proportionate(&neighbor_fitness, rng)?].0;

    let (o1, o2) = crossover(&own, &partner, rng);
    let p_mut = 1.0 - shared_qhr;
    let (o1, m1) = mutate(&o1, p_mut, fp.n, rng);
    let (o2, m2) = mutate(&o2, p_mut, fp.n, rng);

    let pool = [own, o1, o2];
    let pool_fitness = pool.iter().map(fit).collect::<Result<Vec<_>>>()?;
    let survivor = pool[select_inverse_proportionate(&pool_fitness, rng)?];

    peer.install_genotype(survivor, fp);
    peer.window.push(survivor);
    Ok(TickReport {
        survivor,
        neighborhood_qhr: shared_qhr,
        mutations: m1 as u32 + m2 as u32,
        isolated: false,
    })
}
