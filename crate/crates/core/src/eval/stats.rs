use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use serde::{Deserialize, Serialize};

use crate::special::normal_cdf;
use crate::{Error, Result};

/// Largest `n1·n2` for which the exact null distribution is enumerated.
pub const EXACT_LIMIT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PValueMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p_value: f64,
    pub method: PValueMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    pub u: f64,
    pub p_value: f64,
    pub method: PValueMethod,
    /// `None` when both samples have zero variance.
    pub cohens_d: Option<f64>,
    pub significant: bool,
}

fn check_samples(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData(alloc::format!(
            "need at least 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite sample value".into()));
    }
    Ok(())
}

/// Midranks (1-based) of the pooled sample and the tie-group sizes.
pub(crate) fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}

/// Two-sided Mann–Whitney U test.
///
/// Exact over the midrank permutation distribution when `n1·n2 ≤ 400`,
/// otherwise the tie-corrected normal approximation with continuity
/// correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    check_samples(a, b)?;
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let mean = (n1 * n2) as f64 / 2.0;

    if n1 * n2 <= EXACT_LIMIT {
        let p_value = exact_p(&ranks, n1, n2, u);
        return Ok(MannWhitney {
            u,
            p_value,
            method: PValueMethod::Exact,
        });
    }

    let n = (n1 + n2) as f64;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - tie_term);
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * normal_cdf(-z)).min(1.0)
    };
    Ok(MannWhitney {
        u,
        p_value,
        method: PValueMethod::NormalApprox,
    })
}

/// `p = min(1, 2·min(P(U ≤ u), P(U ≥ u)))` under random assignment of the
/// observed midranks. Counts subsets of the smaller group by doubled rank
/// sum, which keeps everything integral.
fn exact_p(ranks: &[f64], n1: usize, n2: usize, u1: f64) -> f64 {
    let (k, u_small) = if n1 <= n2 {
        (n1, u1)
    } else {
        (n2, (n1 * n2) as f64 - u1)
    };
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = {
        let mut d = doubled.clone();
        d.sort_unstable_by(|a, b| b.cmp(a));
        d[..k].iter().sum()
    };
    // counts[j][s]: number of j-subsets with doubled rank sum s.
    let mut counts = vec![vec![0.0f64; max_sum + 1]; k + 1];
    counts[0][0] = 1.0;
    for &d in &doubled {
        for j in (1..=k).rev() {
            let (lo, hi) = counts.split_at_mut(j);
            let prev = &lo[j - 1];
            let cur = &mut hi[0];
            for s in (d..=max_sum).rev() {
                if prev[s - d] != 0.0 {
                    cur[s] += prev[s - d];
                }
            }
        }
    }
    // U = R − k(k+1)/2, so doubled: 2U = S − k(k+1).
    let offset = k * (k + 1);
    let target = (2.0 * u_small).round() as i64;
    let (mut total, mut le, mut ge) = (0.0, 0.0, 0.0);
    for (s, &c) in counts[k].iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let two_u = s as i64 - offset as i64;
        total += c;
        if two_u <= target {
            le += c;
        }
        if two_u >= target {
            ge += c;
        }
    }
    (2.0 * le.min(ge) / total).min(1.0)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// `(mean(a) − mean(b)) / s_pooled` with sample variances.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    check_samples(a, b)?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let pooled = (((n1 - 1.0) * va + (n2 - 1.0) * vb) / (n1 + n2 - 2.0)).sqrt();
    if pooled == 0.0 {
        return Err(Error::Degenerate(
            "pooled standard deviation is zero".into(),
        ));
    }
    Ok((ma - mb) / pooled)
}

/// Runs the U test and the effect size together; significance uses `alpha`.
pub fn compare_samples(a: &[f64], b: &[f64], alpha: f64) -> Result<StatTestResult> {
    let mw = mann_whitney_u(a, b)?;
    let cohens_d = match cohens_d(a, b) {
        Ok(d) => Some(d),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(StatTestResult {
        u: mw.u,
        p_value: mw.p_value,
        method: mw.method,
        cohens_d,
        significant: mw.p_value < alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Enumerates every assignment of the pooled midranks.
    fn brute_force_p(a: &[f64], b: &[f64]) -> f64 {
        let n1 = a.len();
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let (ranks, _) = midranks(&pooled);
        let n = pooled.len();
        let r1: f64 = ranks[..n1].iter().sum();
        let u_obs = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
        let (mut total, mut le, mut ge) = (0u64, 0u64, 0u64);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != n1 {
                continue;
            }
            let r: f64 = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| ranks[i])
                .sum();
            let u = r - (n1 * (n1 + 1)) as f64 / 2.0;
            total += 1;
            if u <= u_obs + 1e-9 {
                le += 1;
            }
            if u >= u_obs - 1e-9 {
                ge += 1;
            }
        }
        (2.0 * le.min(ge) as f64 / total as f64).min(1.0)
    }

    #[test]
    fn exact_small_example() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.method, PValueMethod::Exact);
        assert_relative_eq!(r.p_value, 1.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn exact_matches_enumeration_with_ties() {
        let cases: [(&[f64], &[f64]); 4] = [
            (&[0.5, 0.7, 0.7, 0.9], &[0.1, 0.7, 0.3]),
            (&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0, 3.0, 3.0]),
            (
                &[5.0, 1.0, 3.0, 3.0, 8.0, 2.0],
                &[4.0, 4.0, 6.0, 7.0, 0.0, 9.0],
            ),
            (&[0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4], &[0.1, 0.3, 0.5]),
        ];
        for (a, b) in cases {
            let exact = mann_whitney_u(a, b).unwrap().p_value;
            let swapped = mann_whitney_u(b, a).unwrap().p_value;
            let brute = brute_force_p(a, b);
            assert_relative_eq!(exact, brute, max_relative = 1e-12);
            assert_relative_eq!(swapped, brute, max_relative = 1e-12);
        }
    }

    #[test]
    fn identical_samples_are_not_significant() {
        let a = [0.3, 0.5, 0.7, 0.9];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert_eq!(r.u, 8.0);
        assert_eq!(r.p_value, 1.0);
        let flat = [1.0; 30];
        let r = mann_whitney_u(&flat, &flat).unwrap();
        assert_eq!(r.method, PValueMethod::NormalApprox);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn large_shift_is_significant() {
        let a: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 3.0).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.method, PValueMethod::NormalApprox);
        assert_eq!(r.u, 0.0);
        assert!(r.p_value < 1e-3, "p = {}", r.p_value);
    }

    #[test]
    fn normal_approx_close_to_exact_at_boundary() {
        // n1·n2 = 400 is exact; 21·20 is approximate. Same shape of data.
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| i as f64 + 6.5).collect();
        let exact = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(exact.method, PValueMethod::Exact);
        let mut a2 = a.clone();
        a2.push(-1.0);
        let approx = mann_whitney_u(&a2, &b).unwrap();
        assert_eq!(approx.method, PValueMethod::NormalApprox);
        assert!((exact.p_value - approx.p_value).abs() < 0.02);
    }

    #[test]
    fn too_few_values() {
        assert!(matches!(
            mann_whitney_u(&[1.0], &[2.0, 3.0]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn cohens_d_examples() {
        let d = cohens_d(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert_relative_eq!(d, -1.0, max_relative = 1e-12);
        assert!(matches!(
            cohens_d(&[1.0, 1.0], &[2.0, 2.0]),
            Err(Error::Degenerate(_))
        ));
        let r = compare_samples(&[1.0, 1.0], &[2.0, 2.0], 0.05).unwrap();
        assert_eq!(r.cohens_d, None);
    }
}
