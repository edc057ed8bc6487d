use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

use super::engine::{PathSample, Simulator};

/// Every step of one simulated path.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub t: Vec<f64>,
    /// Row-major, `n` values per step.
    pub x: Vec<f64>,
    /// `g(X_k)` as used by the quadrature.
    pub g: Vec<f64>,
    /// `h(X_k, t_k)` as used by the quadrature.
    pub h: Vec<f64>,
    pub log_gamma: Vec<f64>,
    pub big_h: Vec<f64>,
}

impl Trajectory {
    pub fn new(n: usize) -> Self {
        Trajectory {
            n,
            ..Default::default()
        }
    }

    /// Simulate and record path `index`.
    pub fn record(
        sim: &Simulator,
        x0: &[f64],
        t0: f64,
        index: u64,
    ) -> Result<(Trajectory, PathSample)> {
        let mut tr = Trajectory::new(sim.dim());
        let sample = sim.simulate_observed(x0, t0, index, |v| {
            tr.push(v.t, v.x, v.g_value, v.h_value, v.log_gamma, v.h)
        })?;
        Ok((tr, sample))
    }

    pub fn push(&mut self, t: f64, x: &[f64], g: f64, h: f64, log_gamma: f64, big_h: f64) {
        self.t.push(t);
        self.x.extend_from_slice(x);
        self.g.push(g);
        self.h.push(h);
        self.log_gamma.push(log_gamma);
        self.big_h.push(big_h);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.x[k * self.n..(k + 1) * self.n]
    }

    /// Linear interpolation of the state at time `t` into `out`. `cursor`
    /// is a search hint for monotone queries. Returns false (and writes the
    /// last state) when `t` is past the end.
    pub fn interpolate(&self, t: f64, cursor: &mut usize, out: &mut [f64]) -> bool {
        let last = self.len() - 1;
        if t >= self.t[last] {
            out.copy_from_slice(self.state(last));
            // tolerate round-off in accumulated clocks
            return t - self.t[last] <= 1e-12 * self.t[last].abs().max(1.0);
        }
        if t <= self.t[0] {
            out.copy_from_slice(self.state(0));
            return true;
        }
        if *cursor > last || self.t[*cursor] > t {
            *cursor = 0;
        }
        while self.t[*cursor + 1] < t {
            *cursor += 1;
        }
        let k = *cursor;
        let (t0, t1) = (self.t[k], self.t[k + 1]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (self.state(k), self.state(k + 1));
        for i in 0..self.n {
            out[i] = a[i] + w * (b[i] - a[i]);
        }
        true
    }

    /// One CSV row per step: `t,x1..xn,gamma,H`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let xs: Vec<String> = (1..=self.n).map(|i| format!("x{i}")).collect();
        writeln!(w, "t,{},gamma,H", xs.join(","))?;
        for k in 0..self.len() {
            write!(w, "{}", self.t[k])?;
            for v in self.state(k) {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{},{}", self.log_gamma[k].exp(), self.big_h[k])?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Multiplicativity {
    pub split_index: usize,
    /// `|γ_{0,τ} − γ_{0,t} γ_{t,τ}|`.
    pub gamma_deviation: f64,
    /// `|H_{0,τ} − (H_{0,t} + γ_{0,t} H_{t,τ})|`.
    pub h_deviation: f64,
}

/// Compare the running weights with the same weights rebuilt from scratch
/// on `[t, τ]`, using the recorded integrands on the shared time grid.
pub fn gamma_multiplicativity_check(
    path: &Trajectory,
    split_time: f64,
) -> Result<Multiplicativity> {
    if path.is_empty() {
        return Err(Error::Config("empty trajectory".into()));
    }
    let last = path.len() - 1;
    if split_time < path.t[0] || split_time > path.t[last] {
        return Err(Error::Config(format!(
            "split time {split_time} outside the path lifetime [{}, {}]",
            path.t[0], path.t[last]
        )));
    }
    let j = path.t.partition_point(|&t| t < split_time).min(last);
    let mut log_tail = 0.0;
    let mut gamma_prev = 1.0;
    let mut h_tail = 0.0;
    for k in j..last {
        let dt = path.t[k + 1] - path.t[k];
        log_tail += 0.5 * (path.g[k] + path.g[k + 1]) * dt;
        let gamma_next = log_tail.exp();
        h_tail += 0.5 * (gamma_prev * path.h[k] + gamma_next * path.h[k + 1]) * dt;
        gamma_prev = gamma_next;
    }
    let gamma_full = path.log_gamma[last].exp();
    let gamma_head = path.log_gamma[j].exp();
    Ok(Multiplicativity {
        split_index: j,
        gamma_deviation: (gamma_full - gamma_head * log_tail.exp()).abs(),
        h_deviation: (path.big_h[last] - (path.big_h[j] + gamma_head * h_tail)).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::DiffusionSpec;
    use crate::observable::ObservableSpec;
    use crate::paths::PathConfig;

    fn bm() -> DiffusionSpec {
        DiffusionSpec::parse(&[vec!["1"]], &["0"], "-1 < x1 < 1").unwrap()
    }

    #[test]
    fn recorded_path_ends_at_sample() {
        let cfg = PathConfig {
            dt: 1e-3,
            seed: 3,
            ..Default::default()
        };
        let sim = Simulator::new(
            &bm(),
            &ObservableSpec::parse("-1", "1", "0", 1).unwrap(),
            &cfg,
        )
        .unwrap();
        let (tr, s) = Trajectory::record(&sim, &[0.0], 0.0, 0).unwrap();
        assert_eq!(tr.len() as u64, s.steps + 1);
        assert_eq!(tr.state(tr.len() - 1), s.exit_state.as_slice());
        assert_eq!(*tr.big_h.last().unwrap(), s.h);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x1,gamma,H\n"));
        assert_eq!(text.lines().count(), tr.len() + 1);
    }

    #[test]
    fn zero_weights_split_exactly() {
        let cfg = PathConfig {
            dt: 1e-3,
            seed: 1,
            ..Default::default()
        };
        let sim = Simulator::new(&bm(), &ObservableSpec::plain(), &cfg).unwrap();
        let (tr, s) = Trajectory::record(&sim, &[0.0], 0.0, 5).unwrap();
        let m = gamma_multiplicativity_check(&tr, 0.5 * s.exit_time).unwrap();
        assert_eq!(m.gamma_deviation, 0.0);
        assert_eq!(m.h_deviation, 0.0);
    }

    #[test]
    fn constant_rate_split() {
        let cfg = PathConfig {
            dt: 1e-3,
            seed: 2,
            ..Default::default()
        };
        let sim = Simulator::new(
            &bm(),
            &ObservableSpec::parse("-1", "0", "0", 1).unwrap(),
            &cfg,
        )
        .unwrap();
        for p in 0..20 {
            let (tr, s) = Trajectory::record(&sim, &[0.0], 0.0, p).unwrap();
            let m = gamma_multiplicativity_check(&tr, 0.37 * s.exit_time).unwrap();
            assert!(m.gamma_deviation <= 1e-10);
        }
    }

    #[test]
    fn interpolation() {
        let mut tr = Trajectory::new(1);
        tr.push(0.0, &[0.0], 0.0, 0.0, 0.0, 0.0);
        tr.push(1.0, &[2.0], 0.0, 0.0, 0.0, 0.0);
        let mut c = 0;
        let mut out = [0.0];
        assert!(tr.interpolate(0.25, &mut c, &mut out));
        assert_eq!(out[0], 0.5);
        assert!(!tr.interpolate(1.5, &mut c, &mut out));
        assert_eq!(out[0], 2.0);
    }
}
