//! Cross-run statistics: summaries, intervals, the Wilcoxon rank-sum test and
//! settling time.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Pooled size up to which the rank-sum test enumerates exactly.
pub const EXACT_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary<T> {
    pub mean: T,
    /// Sample standard deviation (`n - 1` denominator).
    pub std: T,
    pub n: usize,
}

pub fn summary<T: Real>(values: &[T]) -> Result<Summary<T>> {
    if values.len() < 2 {
        return Err(invalid(format!("need at least 2 samples, got {}", values.len())));
    }
    let n = T::count(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    let ss = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
    let std = (ss / (n - T::one())).sqrt();
    Ok(Summary { mean, std, n: values.len() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Interval<T> {
    pub fn midpoint(&self) -> T {
        (self.lo + self.hi) / T::lit(2.0)
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.lo && x <= self.hi
    }
}

impl<T: fmt::Display> fmt::Display for Interval<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}; {}]", self.lo, self.hi)
    }
}

/// Two-sided 97.5% quantile of Student's t with `df` degrees of freedom.
pub fn t_quantile_975(df: usize) -> f64 {
    assert!(df >= 1, "degrees of freedom must be >= 1");
    StudentsT::new(0.0, 1.0, df as f64).expect("valid t parameters").inverse_cdf(0.975)
}

/// `mean ± t_{0.975, n-1} · std`: the spread interval of individual runs.
pub fn i95_from<T: Real>(mean: T, std: T, n: usize) -> Result<Interval<T>> {
    if n < 2 {
        return Err(invalid(format!("need at least 2 samples, got {n}")));
    }
    let half = T::lit(t_quantile_975(n - 1)) * std;
    Ok(Interval { lo: mean - half, hi: mean + half })
}

pub fn i95<T: Real>(values: &[T]) -> Result<Interval<T>> {
    let s = summary(values)?;
    i95_from(s.mean, s.std, s.n)
}

/// Conventional 95% confidence interval of the mean, `mean ± t · std / sqrt(n)`.
pub fn ci95_mean<T: Real>(values: &[T]) -> Result<Interval<T>> {
    let s = summary(values)?;
    let half = T::lit(t_quantile_975(s.n - 1)) * s.std / T::count(s.n).sqrt();
    Ok(Interval { lo: s.mean - half, hi: s.mean + half })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    TwoSided,
    /// `a` tends to be larger than `b`.
    Greater,
    /// `a` tends to be smaller than `b`.
    Less,
}

impl FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "two_sided" | "two-sided" => Ok(Alternative::TwoSided),
            "a_greater" | "greater" => Ok(Alternative::Greater),
            "a_less" | "less" => Ok(Alternative::Less),
            other => Err(invalid(format!("unknown alternative '{other}'"))),
        }
    }
}

/// Midranks (1-based) of `values`, doubled so they stay integral.
fn doubled_midranks<T: PartialOrd>(values: &[T]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0u64; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 averaged, doubled: (i+1 + j+1).
        let doubled = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = doubled;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Mann-Whitney `U` of `a` (midranks for ties).
pub fn u_statistic<T: Real>(a: &[T], b: &[T]) -> f64 {
    let pooled: Vec<T> = a.iter().chain(b).copied().collect();
    let (ranks, _) = doubled_midranks(&pooled);
    let doubled_sum: u64 = ranks[..a.len()].iter().sum();
    doubled_sum as f64 / 2.0 - (a.len() * (a.len() + 1)) as f64 / 2.0
}

/// Wilcoxon rank-sum (Mann-Whitney) p-value for `a` versus `b`.
///
/// Exact enumeration of all rank assignments when the pooled size is at most
/// [`EXACT_LIMIT`]; otherwise the normal approximation with tie and
/// continuity corrections.
pub fn wilcoxon_rank_sum<T: Real>(a: &[T], b: &[T], alternative: Alternative) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::NoData);
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(invalid("NaN in rank-sum input"));
    }
    if a.len() + b.len() <= EXACT_LIMIT {
        Ok(rank_sum_exact(a, b, alternative))
    } else {
        Ok(rank_sum_normal(a, b, alternative))
    }
}

fn combine(greater: f64, less: f64, alternative: Alternative) -> f64 {
    let p = match alternative {
        Alternative::Greater => greater,
        Alternative::Less => less,
        Alternative::TwoSided => 2.0 * greater.min(less),
    };
    p.min(1.0)
}

pub fn rank_sum_exact<T: Real>(a: &[T], b: &[T], alternative: Alternative) -> f64 {
    let pooled: Vec<T> = a.iter().chain(b).copied().collect();
    let (ranks, _) = doubled_midranks(&pooled);
    let observed: u64 = ranks[..a.len()].iter().sum();

    // Walk all C(n, |a|) subsets of positions that could carry a's labels.
    let n = ranks.len();
    let k = a.len();
    let (mut ge, mut le, mut total) = (0u64, 0u64, 0u64);
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let s: u64 = idx.iter().map(|&i| ranks[i]).sum();
        total += 1;
        if s >= observed {
            ge += 1;
        }
        if s <= observed {
            le += 1;
        }
        // Next combination in lexicographic order.
        let mut i = k;
        loop {
            if i == 0 {
                let total = total as f64;
                return combine(ge as f64 / total, le as f64 / total, alternative);
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub fn rank_sum_normal<T: Real>(a: &[T], b: &[T], alternative: Alternative) -> f64 {
    let pooled: Vec<T> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = doubled_midranks(&pooled);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let u = ranks[..a.len()].iter().sum::<u64>() as f64 / 2.0 - na * (na + 1.0) / 2.0;
    let mean = na * nb / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum();
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let sd = var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let greater = 1.0 - normal.cdf((u - mean - 0.5) / sd);
    let less = normal.cdf((u - mean + 0.5) / sd);
    combine(greater.min(1.0), less.min(1.0), alternative)
}

/// First time after which every sample stays within `band · |final|` of the
/// final value (absolute `band` when the final value is zero).
pub fn settling_time<T: Real>(series: &[(T, T)], band: T) -> Result<T> {
    let &(_, last) = series.last().ok_or(Error::NoData)?;
    let tol = if last == T::zero() { band } else { band * last.abs() };
    // Absorb representation error at the band edge.
    let tol = tol + T::lit(1e-12) * (T::one() + last.abs());
    let mut settled = series.len() - 1;
    for i in (0..series.len()).rev() {
        if (series[i].1 - last).abs() <= tol {
            settled = i;
        } else {
            break;
        }
    }
    Ok(series[settled].0)
}
