use serde::Serialize;

use crate::error::{Error, Result};

/// p-values are reported no smaller than this.
pub const P_FLOOR: f64 = 1e-16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Two-sample Kolmogorov–Smirnov statistic with the asymptotic p-value
/// `Q(√(nm/(n+m)) D)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.len() < 50 || b.len() < 50 {
        return Err(Error::Config(format!(
            "KS test needs at least 50 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Config("KS samples contain NaN".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = a[i].min(b[j]);
        while i < n && a[i] <= v {
            i += 1;
        }
        while j < m && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = (n * m) as f64 / (n + m) as f64;
    let p = kolmogorov_sf(en.sqrt() * d).max(P_FLOOR);
    Ok(KsResult {
        statistic: d,
        p_value: p,
        n_a: n,
        n_b: m,
    })
}

/// KS test on each coordinate of two point clouds.
pub fn ks_per_coordinate(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Vec<KsResult>> {
    let dim = a.first().map_or(0, Vec::len);
    if a.iter().chain(b).any(|p| p.len() != dim) {
        return Err(Error::Config(
            "KS point clouds have inconsistent dimensions".into(),
        ));
    }
    (0..dim)
        .map(|i| {
            let ai: Vec<f64> = a.iter().map(|p| p[i]).collect();
            let bi: Vec<f64> = b.iter().map(|p| p[i]).collect();
            ks_two_sample(&ai, &bi)
        })
        .collect()
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Jacobi theta form, fast for small arguments
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| ((2 * k - 1) as f64).powi(2) * c)
            .map(f64::exp)
            .sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}
