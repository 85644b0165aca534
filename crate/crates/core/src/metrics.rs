//! Information-theoretic measures over a peer's recent genotypes.
//!
//! The normalized information `I` of the latest `W` configurations is the
//! Shannon entropy of the gene-value histogram divided by `log2 n`. Emergence,
//! self-organization and complexity follow from `I` directly; homeostasis
//! compares the current genotype with the one the peer started from.

use std::collections::VecDeque;

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricsConfig {
    /// Gene alphabet size; genes take values in `1..=n`.
    pub n: u32,
    /// Genes per genotype.
    pub q: usize,
    /// Window length in configurations.
    pub window: usize,
}

impl MetricsConfig {
    pub fn new(n: u32, q: usize, window: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("alphabet size n={n} must be >= 2")));
        }
        if q < 1 {
            return Err(invalid("genes per genotype q must be >= 1"));
        }
        if window < 1 {
            return Err(invalid("window length W must be >= 1"));
        }
        Ok(Self { n, q, window })
    }
}

/// Chronological ring of at most `capacity` genotypes, most recent last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenotypeWindow<G> {
    entries: VecDeque<G>,
    capacity: usize,
}

impl<G> GenotypeWindow<G> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be >= 1");
        Self { entries: VecDeque::with_capacity(capacity), capacity }
    }

    /// Appends `g`, dropping the oldest entry once the window is full.
    pub fn push(&mut self, g: G) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(g);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn latest(&self) -> Option<&G> {
        self.entries.back()
    }

    pub fn iter(&self) -> impl Iterator<Item = &G> {
        self.entries.iter()
    }
}

impl<G: AsRef<[u32]>> GenotypeWindow<G> {
    pub fn information<T: Real>(&self, cfg: &MetricsConfig) -> Result<T> {
        normalized_information(self.entries.iter(), cfg)
    }
}

/// Normalized Shannon information of the gene values in `entries`.
///
/// Every gene slot of every configuration contributes one observation;
/// `0 log 0` is taken as `0`. Windows shorter than `cfg.window` are measured
/// over what is available.
pub fn normalized_information<'a, T, G>(
    entries: impl IntoIterator<Item = &'a G>,
    cfg: &MetricsConfig,
) -> Result<T>
where
    T: Real,
    G: AsRef<[u32]> + 'a,
{
    let n = cfg.n;
    let mut counts = vec![0usize; n as usize];
    let mut total = 0usize;
    for entry in entries {
        let genes = entry.as_ref();
        if genes.len() != cfg.q {
            return Err(Error::LengthMismatch(genes.len(), cfg.q));
        }
        for &value in genes {
            if value < 1 || value > n {
                return Err(Error::AlphabetViolation { value, n });
            }
            counts[(value - 1) as usize] += 1;
        }
        total += genes.len();
    }
    if total == 0 {
        return Err(Error::NoData);
    }

    let total = T::count(total);
    let entropy: T = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = T::count(c) / total;
            -p * p.log2()
        })
        .sum();
    let i = entropy / T::count(n as usize).log2();
    Ok(i.max(T::zero()).min(T::one()))
}

/// Emergence, self-organization and complexity derived from `I`.
pub fn measures_from_information<T: Real>(i: T) -> Result<(T, T, T)> {
    if !(i >= T::zero() && i <= T::one()) {
        return Err(invalid(format!("information {i} outside [0, 1]")));
    }
    let e = i;
    let s = T::one() - i;
    let c = T::lit(4.0) * e * s;
    Ok((e, s, c))
}

/// `1 -` normalized Hamming distance between two genotypes.
pub fn homeostasis<T: Real>(current: &[u32], initial: &[u32]) -> Result<T> {
    if current.len() != initial.len() {
        return Err(Error::LengthMismatch(current.len(), initial.len()));
    }
    if current.is_empty() {
        return Err(Error::NoData);
    }
    let differing = current.iter().zip(initial).filter(|(a, b)| a != b).count();
    Ok(T::one() - T::count(differing) / T::count(current.len()))
}

/// The full measure set for one peer at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureSet<T> {
    pub information: T,
    pub emergence: T,
    pub self_organization: T,
    pub complexity: T,
    pub homeostasis: T,
}

impl<T: Real> MeasureSet<T> {
    pub fn from_parts(information: T, homeostasis: T) -> Result<Self> {
        let (emergence, self_organization, complexity) = measures_from_information(information)?;
        if !(homeostasis >= T::zero() && homeostasis <= T::one()) {
            return Err(invalid(format!("homeostasis {homeostasis} outside [0, 1]")));
        }
        Ok(Self { information, emergence, self_organization, complexity, homeostasis })
    }

    /// Measures for a window against the genotype the peer joined with.
    pub fn compute<G: AsRef<[u32]>>(
        window: &GenotypeWindow<G>,
        initial: &[u32],
        cfg: &MetricsConfig,
    ) -> Result<Self> {
        let current = window.latest().ok_or(Error::NoData)?;
        let i = window.information(cfg)?;
        let h = homeostasis(current.as_ref(), initial)?;
        Self::from_parts(i, h)
    }
}
