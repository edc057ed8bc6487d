use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold `π²/8` beyond which `E_0[e^{Cτ}]` is infinite.
pub const EXP_MOMENT_THRESHOLD: f64 = PI * PI / 8.0;

/// Closed forms for Brownian motion on `(−1, 1)` killed at the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleQuery {
    /// `E_x[e^{−sτ}]`.
    Laplace { s: f64, x: f64 },
    /// `E_0[τ^k]`.
    Moment { k: u32 },
    /// `E_0[e^{Cτ}]`.
    ExpC { c: f64 },
    /// `P_x[τ > t]`.
    Survival { x: f64, t: f64 },
    /// Solution of `½f'' − sf + 1 = 0`, `f(±1) = 0`.
    Fs { s: f64, x: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum OracleValue {
    Finite(f64),
    Divergent,
}

impl OracleValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            OracleValue::Finite(v) => Some(v),
            OracleValue::Divergent => None,
        }
    }
}

fn check_x(x: f64) -> Result<()> {
    if x.abs() > 1.0 {
        return Err(Error::Config(format!("x = {x} is outside [-1, 1]")));
    }
    Ok(())
}

pub fn oracle_interval_bm(q: OracleQuery) -> Result<OracleValue> {
    Ok(match q {
        OracleQuery::Laplace { s, x } => OracleValue::Finite(laplace(s, x)?),
        OracleQuery::Moment { k } => OracleValue::Finite(moment(k)?),
        OracleQuery::ExpC { c } => exp_moment(c),
        OracleQuery::Survival { x, t } => OracleValue::Finite(survival(x, t)?),
        OracleQuery::Fs { s, x } => OracleValue::Finite(f_s(s, x)?),
    })
}

/// `cosh(x√(2s)) / cosh(√(2s))`.
pub fn laplace(s: f64, x: f64) -> Result<f64> {
    check_x(x)?;
    if s < 0.0 {
        return Err(Error::Config(format!(
            "Laplace variable must be >= 0, got {s}"
        )));
    }
    let r = (2.0 * s).sqrt();
    // cosh ratio without overflow for large s
    Ok(((x.abs() - 1.0) * r).exp() * (1.0 + (-2.0 * x.abs() * r).exp()) / (1.0 + (-2.0 * r).exp()))
}

/// `(1 − cosh(x√(2s))/cosh(√(2s))) / s`, with the limit `E_x[τ] = 1 − x²`
/// at `s = 0`.
pub fn f_s(s: f64, x: f64) -> Result<f64> {
    check_x(x)?;
    if s < 0.0 {
        return Err(Error::Config(format!("s must be >= 0, got {s}")));
    }
    if s < 1e-6 {
        // E_x[τ] − s E_x[τ²]/2
        let m1 = 1.0 - x * x;
        let m2 = (5.0 - 6.0 * x * x + x.powi(4)) / 3.0;
        return Ok(m1 - 0.5 * s * m2);
    }
    Ok((1.0 - laplace(s, x)?) / s)
}

/// Euler numbers `E_0, E_2, …, E_{2m}` by the binomial recurrence.
fn euler_numbers(m: usize) -> Vec<f64> {
    let mut e = vec![1.0];
    for n in 1..=m {
        // Σ_{j=0}^{n} C(2n, 2j) E_{2j} = 0
        let mut s = 0.0;
        let mut binom = 1.0; // C(2n, 0)
        for (j, ej) in e.iter().enumerate() {
            s += binom * ej;
            let (a, b) = (2 * j, 2 * n);
            binom *= ((b - a) * (b - a - 1)) as f64 / ((a + 1) * (a + 2)) as f64;
        }
        e.push(-s);
    }
    e
}

/// `E_0[τ^k] = (−1)^k k! 2^k a_{2k}` with `1/cosh x = Σ a_{2k} x^{2k}`.
pub fn moment(k: u32) -> Result<f64> {
    if k > 40 {
        return Err(Error::Config(format!(
            "moment order {k} is above the supported maximum of 40"
        )));
    }
    let e = euler_numbers(k as usize);
    let mut a = e[k as usize];
    for j in 1..=2 * k {
        a /= j as f64;
    }
    let mut factor = 1.0;
    for j in 1..=k {
        factor *= 2.0 * j as f64;
    }
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * factor * a)
}

/// `E_0[e^{Cτ}] = 1/cos(√(2C))` for `0 ≤ C < π²/8`, `1/cosh(√(−2C))` for
/// `C < 0`, divergent otherwise.
pub fn exp_moment(c: f64) -> OracleValue {
    if c >= EXP_MOMENT_THRESHOLD {
        OracleValue::Divergent
    } else if c >= 0.0 {
        OracleValue::Finite(1.0 / (2.0 * c).sqrt().cos())
    } else {
        OracleValue::Finite(1.0 / (-2.0 * c).sqrt().cosh())
    }
}

/// `Σ_{k odd} (4/(kπ)) sin(kπ(x+1)/2) e^{−k²π²t/8}`, summed until the
/// terms drop below `1e-17`.
pub fn survival(x: f64, t: f64) -> Result<f64> {
    check_x(x)?;
    if x.abs() == 1.0 {
        return Ok(0.0);
    }
    if t <= 0.0 {
        return Ok(1.0);
    }
    let mut s = 0.0;
    let mut k = 1u64;
    loop {
        let kf = k as f64;
        let decay = (-kf * kf * PI * PI * t / 8.0).exp();
        let bound = 4.0 / (kf * PI) * decay;
        s += bound * (kf * PI * (x + 1.0) / 2.0).sin();
        if bound < 1e-17 || k > 2_000_000 {
            break;
        }
        k += 2;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euler_numbers_match_table() {
        assert_eq!(
            euler_numbers(5),
            vec![1.0, -1.0, 5.0, -61.0, 1385.0, -50521.0]
        );
    }

    #[test]
    fn moments() {
        assert!((moment(1).unwrap() - 1.0).abs() < 1e-15);
        assert!((moment(2).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert!((moment(3).unwrap() - 61.0 / 15.0).abs() < 1e-14);
        assert_eq!(moment(0).unwrap(), 1.0);
    }

    #[test]
    fn laplace_and_fs() {
        assert!((laplace(1.0, 0.0).unwrap() - 1.0 / 2f64.sqrt().cosh()).abs() < 1e-15);
        assert!((f_s(1.0, 0.0).unwrap() - (1.0 - 1.0 / 2f64.sqrt().cosh())).abs() < 1e-15);
        assert!((laplace(1.0, 0.0).unwrap() - 0.45910).abs() < 1e-5);
        for s in [0.5, 1.0, 2.0] {
            assert!((-s * f_s(s, 0.0).unwrap() + 1.0 - laplace(s, 0.0).unwrap()).abs() < 1e-12);
        }
        assert_eq!(laplace(3.0, 1.0).unwrap(), 1.0);
        assert!(laplace(1e6, 0.5).unwrap().is_finite());
        assert!((f_s(1e-9, 0.0).unwrap() - 1.0).abs() < 1e-8);
        assert!((f_s(1e-5, 0.3).unwrap() - f_s(1e-7, 0.3).unwrap()).abs() < 1e-5);
    }

    #[test]
    fn exp_moment_threshold() {
        assert!((exp_moment(0.5).finite().unwrap() - 1.850815717680925).abs() < 1e-12);
        assert_eq!(exp_moment(1.3), OracleValue::Divergent);
        assert_eq!(exp_moment(EXP_MOMENT_THRESHOLD), OracleValue::Divergent);
        assert!(exp_moment(EXP_MOMENT_THRESHOLD - 1e-9).finite().unwrap() > 1e4);
        assert!((exp_moment(-1.0).finite().unwrap() - laplace(1.0, 0.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn survival_series() {
        // reflection-principle series for the same probability
        let phi = |z: f64| 0.5 * (1.0 + statrs::function::erf::erf(z / 2f64.sqrt()));
        let st = 0.5f64.sqrt();
        let refl: f64 = (-50i32..=50)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * (phi((2 * k + 1) as f64 / st) - phi((2 * k - 1) as f64 / st))
            })
            .sum();
        // limited by the accuracy of statrs' erf, not by the series
        assert!((survival(0.0, 0.5).unwrap() - refl).abs() < 1e-10);
        assert!((survival(0.0, 0.5).unwrap() - 0.6854457668903521).abs() < 1e-13);
        assert_eq!(survival(1.0, 0.5).unwrap(), 0.0);
        assert!((survival(0.0, 1e-3).unwrap() - 1.0).abs() < 1e-12);
        assert!(survival(0.0, 2.0).unwrap() < survival(0.0, 1.0).unwrap());
    }
}
