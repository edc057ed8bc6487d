use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::DiffusionSpec;
use crate::paths::{PathConfig, Simulator};
use crate::stats::par_map;

use super::{check_paths, ObservableSpec};

/// Axis-aligned box split into equal cells.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub bins: Vec<usize>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, bins: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != bins.len() || lo.is_empty() {
            return Err(Error::Config(
                "grid bounds and bin counts must have equal, positive length".into(),
            ));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(h > l)) || bins.contains(&0) {
            return Err(Error::Config(
                "grid must have hi > lo and at least one bin per axis".into(),
            ));
        }
        Ok(Grid { lo, hi, bins })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn n_cells(&self) -> usize {
        self.bins.iter().product()
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| (self.hi[i] - self.lo[i]) / self.bins[i] as f64)
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.widths().iter().product()
    }

    /// Flat index (first axis slowest) of the cell containing `x`; the upper
    /// faces belong to the last cell.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for i in 0..self.dim() {
            if !(x[i] >= self.lo[i] && x[i] <= self.hi[i]) {
                return None;
            }
            let w = (self.hi[i] - self.lo[i]) / self.bins[i] as f64;
            let k = (((x[i] - self.lo[i]) / w) as usize).min(self.bins[i] - 1);
            idx = idx * self.bins[i] + k;
        }
        Some(idx)
    }

    /// Multi-index of a flat cell index.
    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for i in (0..self.dim()).rev() {
            out[i] = idx % self.bins[i];
            idx /= self.bins[i];
        }
        out
    }

    pub fn center(&self, idx: usize) -> Vec<f64> {
        let w = self.widths();
        self.unflatten(idx)
            .iter()
            .enumerate()
            .map(|(i, &k)| self.lo[i] + (k as f64 + 0.5) * w[i])
            .collect()
    }
}

/// Histogram of surviving positions per time slice, normalized by the
/// number of launched paths.
#[derive(Clone, Debug, Serialize)]
pub struct DensityEstimate {
    pub grid: Grid,
    /// Slice times as realized on the step grid.
    pub times: Vec<f64>,
    pub counts: Vec<Vec<u64>>,
    /// Alive paths at each slice, including those outside the grid.
    pub alive: Vec<u64>,
    pub n_launched: u64,
}

impl DensityEstimate {
    /// Fraction of launched paths alive and inside the grid.
    pub fn mass(&self, slice: usize) -> f64 {
        self.counts[slice].iter().sum::<u64>() as f64 / self.n_launched as f64
    }

    /// Binomial standard error of [`mass`](Self::mass).
    pub fn mass_std_error(&self, slice: usize) -> f64 {
        let p = self.mass(slice);
        (p * (1.0 - p) / self.n_launched as f64).sqrt()
    }

    pub fn cell_mass(&self, slice: usize) -> Vec<f64> {
        let n = self.n_launched as f64;
        self.counts[slice].iter().map(|&c| c as f64 / n).collect()
    }

    /// Histogram density: cell mass over cell volume.
    pub fn density(&self, slice: usize) -> Vec<f64> {
        let v = self.grid.cell_volume();
        self.cell_mass(slice).into_iter().map(|m| m / v).collect()
    }

    /// Per-axis bandwidth `1.06 σ̂ m^{-1/5}` from the binned sample of a
    /// slice with `m` points.
    pub fn bandwidth(&self, slice: usize) -> Vec<f64> {
        let counts = &self.counts[slice];
        let m: u64 = counts.iter().sum();
        let dim = self.grid.dim();
        if m < 2 {
            return self.grid.widths();
        }
        let mut mean = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for (idx, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let x = self.grid.center(idx);
            for i in 0..dim {
                mean[i] += c as f64 * x[i];
                sq[i] += c as f64 * x[i] * x[i];
            }
        }
        let mf = m as f64;
        (0..dim)
            .map(|i| {
                let var = (sq[i] - mean[i] * mean[i] / mf) / (mf - 1.0);
                1.06 * var.max(0.0).sqrt() * mf.powf(-0.2)
            })
            .map(|h| if h > 0.0 { h } else { f64::MIN_POSITIVE })
            .collect()
    }

    /// Gaussian product-kernel smoothing of the binned sample, evaluated at
    /// the cell centers. The kernel mass is not renormalized at the edges.
    pub fn smoothed(&self, slice: usize) -> Vec<f64> {
        let h = self.bandwidth(slice);
        let counts = &self.counts[slice];
        let dim = self.grid.dim();
        let norm: f64 = h
            .iter()
            .map(|hi| hi * (2.0 * std::f64::consts::PI).sqrt())
            .product();
        let n = self.n_launched as f64;
        let sources: Vec<(Vec<f64>, f64)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(idx, &c)| (self.grid.center(idx), c as f64))
            .collect();
        (0..self.grid.n_cells())
            .map(|idx| {
                let y = self.grid.center(idx);
                let s: f64 = sources
                    .iter()
                    .map(|(x, c)| {
                        let q: f64 = (0..dim).map(|i| ((y[i] - x[i]) / h[i]).powi(2)).sum();
                        c * (-0.5 * q).exp()
                    })
                    .sum();
                s / (n * norm)
            })
            .collect()
    }
}

/// Histogram of `X_t` on `{τ > t}` for each requested `t`. Slice times are
/// snapped to the first step time at or after the request.
pub fn transition_density(
    spec: &DiffusionSpec,
    w: &[f64],
    times: &[f64],
    grid: &Grid,
    cfg: &PathConfig,
    n_paths: u64,
) -> Result<DensityEstimate> {
    check_paths(cfg, n_paths)?;
    if grid.dim() != spec.n {
        return Err(Error::DimensionMismatch {
            expected: spec.n,
            got: grid.dim(),
        });
    }
    if times.is_empty() || times.windows(2).any(|p| p[1] <= p[0]) || times[0] <= 0.0 {
        return Err(Error::Config(
            "slice times must be positive and strictly increasing".into(),
        ));
    }
    let horizon = *times.last().unwrap();
    let cfg = cfg.clone().with_horizon(horizon);
    let sim = Simulator::new(spec, &ObservableSpec::plain(), &cfg)?;
    let tol = 1e-9 * cfg.dt;
    let per_path: Vec<Result<(Vec<Option<Option<usize>>>, Vec<f64>)>> = par_map(n_paths, |p| {
        let mut slots: Vec<Option<Option<usize>>> = vec![None; times.len()];
        let mut realized = vec![f64::NAN; times.len()];
        let mut next = 0;
        sim.simulate_observed(w, 0.0, p, |v| {
            while next < times.len() && v.t >= times[next] - tol {
                if v.step > 0 && sim.in_domain(v.x) {
                    slots[next] = Some(grid.cell_of(v.x));
                }
                realized[next] = v.t;
                next += 1;
            }
        })?;
        Ok((slots, realized))
    });
    let mut counts = vec![vec![0u64; grid.n_cells()]; times.len()];
    let mut alive = vec![0u64; times.len()];
    let mut realized_times = times.to_vec();
    for r in per_path {
        let (slots, realized) = r?;
        for (j, s) in slots.iter().enumerate() {
            if let Some(cell) = s {
                alive[j] += 1;
                if let Some(c) = cell {
                    counts[j][*c] += 1;
                }
            }
            if realized[j].is_finite() {
                realized_times[j] = realized[j];
            }
        }
    }
    Ok(DensityEstimate {
        grid: grid.clone(),
        times: realized_times,
        counts,
        alive,
        n_launched: n_paths,
    })
}
