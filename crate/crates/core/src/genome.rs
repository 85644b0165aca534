//! Genotype, genotype to phenotype mapping and the fitness functions.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

pub const GENES: usize = 3;
pub const DEFAULT_ALPHABET: u32 = 6;

/// The per-peer model `(M0, M1, M2)`, each gene in `1..=n`.
///
/// `M0` sets the fan-out fraction, `M1` the hop budget and `M2` the
/// descriptor cache size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Genotype([u32; GENES]);

impl Genotype {
    pub fn new(genes: [u32; GENES], n: u32) -> Result<Self> {
        for &value in &genes {
            if value < 1 || value > n {
                return Err(Error::AlphabetViolation { value, n });
            }
        }
        Ok(Self(genes))
    }

    /// Caller guarantees the genes are in range.
    pub(crate) fn from_genes_unchecked(genes: [u32; GENES]) -> Self {
        Self(genes)
    }

    pub fn genes(&self) -> [u32; GENES] {
        self.0
    }

    pub fn gene(&self, i: usize) -> u32 {
        self.0[i]
    }
}

impl AsRef<[u32]> for Genotype {
    fn as_ref(&self) -> &[u32] {
        &self.0
    }
}

impl fmt::Display for Genotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phenotype<T> {
    /// Fraction of neighbours a blind query is forwarded to, in `(0, 1]`.
    pub fanout: T,
    /// Initial time-to-live of an originated query.
    pub max_hops: u32,
    /// Descriptor cache capacity.
    pub cache_capacity: usize,
    /// Weighted scalar summary of the three parameters.
    pub phi: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessParams<T> {
    pub phi0: T,
    pub phi1: T,
    pub phi2: T,
    /// Hit-ratio threshold used by F1 and F4.
    pub beta: T,
    /// Division guard used by F3.
    pub delta: T,
    /// Gene alphabet size.
    pub n: u32,
    phi_max: T,
}

impl<T: Real> FitnessParams<T> {
    pub fn new(phi0: T, phi1: T, phi2: T, beta: T, delta: T, n: u32) -> Result<Self> {
        if n < 1 {
            return Err(invalid("alphabet size must be >= 1"));
        }
        if !(beta > T::zero() && beta < T::one()) {
            return Err(invalid(format!("beta={beta} must lie in (0, 1)")));
        }
        if !(delta > T::zero()) {
            return Err(invalid(format!("delta={delta} must be > 0")));
        }
        if !(phi0 > T::zero() && phi1 > T::zero() && phi2 > T::zero()) {
            return Err(invalid("phenotype weights must be > 0"));
        }
        let mut p = Self { phi0, phi1, phi2, beta, delta, n, phi_max: T::zero() };
        let top = Genotype::from_genes_unchecked([n; GENES]);
        p.phi_max = phenotype_of(&top, &p).phi;
        Ok(p)
    }

    /// Largest attainable phenotype scalar, reached at `(n, n, n)`.
    pub fn phi_max(&self) -> T {
        self.phi_max
    }

    /// Smallest attainable phenotype scalar, reached at `(1, 1, 1)`.
    pub fn phi_min(&self) -> T {
        phenotype_of(&Genotype::from_genes_unchecked([1; GENES]), self).phi
    }
}

impl<T: Real> Default for FitnessParams<T> {
    fn default() -> Self {
        Self::new(T::lit(100.0), T::lit(10.0), T::lit(5.0), T::lit(0.8), T::lit(0.01), DEFAULT_ALPHABET)
            .expect("default fitness parameters are valid")
    }
}

pub fn phenotype_of<T: Real>(g: &Genotype, p: &FitnessParams<T>) -> Phenotype<T> {
    let [m0, m1, m2] = g.genes();
    let fanout = T::count(m0 as usize) / T::count(p.n as usize);
    let max_hops = m1;
    let cache_capacity = 2 * m2 as usize;
    let phi = p.phi0 * fanout + p.phi1 * T::count(max_hops as usize) + p.phi2 * T::count(cache_capacity);
    Phenotype { fanout, max_hops, cache_capacity, phi }
}

/// Mean of a peer's own hit ratio and its neighbours' (`k + 1` terms).
pub fn avg_qhr<T: Real>(own: T, neighbors: &[T]) -> T {
    let sum = neighbors.iter().fold(own, |acc, &q| acc + q);
    sum / T::count(neighbors.len() + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FitnessKind {
    F1,
    F2,
    F3,
    F4,
}

impl FitnessKind {
    pub const ALL: [FitnessKind; 4] = [FitnessKind::F1, FitnessKind::F2, FitnessKind::F3, FitnessKind::F4];
}

impl fmt::Display for FitnessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FitnessKind::F1 => "F1",
            FitnessKind::F2 => "F2",
            FitnessKind::F3 => "F3",
            FitnessKind::F4 => "F4",
        };
        f.write_str(s)
    }
}

impl FromStr for FitnessKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "F1" => Ok(FitnessKind::F1),
            "F2" => Ok(FitnessKind::F2),
            "F3" => Ok(FitnessKind::F3),
            "F4" => Ok(FitnessKind::F4),
            other => Err(invalid(format!("unknown fitness function '{other}'"))),
        }
    }
}

/// Fitness of a phenotype under the neighbourhood hit ratio `qhr`.
/// Lower is better.
///
/// F1 uses the `1/phi` branch when `qhr <= beta`.
pub fn fitness<T: Real>(kind: FitnessKind, phi: T, qhr: T, p: &FitnessParams<T>) -> Result<T> {
    if !(phi > T::zero()) {
        return Err(invalid(format!("phenotype scalar {phi} must be > 0")));
    }
    if !(qhr >= T::zero() && qhr <= T::one()) {
        return Err(invalid(format!("hit ratio {qhr} outside [0, 1]")));
    }
    let one = T::one();
    let value = match kind {
        FitnessKind::F1 => {
            if qhr <= p.beta {
                one / phi
            } else {
                phi
            }
        }
        FitnessKind::F2 => (one - qhr) / phi + qhr * phi,
        FitnessKind::F3 => (one / (qhr + p.delta) - one) / phi + qhr * phi,
        FitnessKind::F4 => (qhr / p.beta - one) * (phi / p.phi_max) + (one - qhr),
    };
    Ok(value)
}
