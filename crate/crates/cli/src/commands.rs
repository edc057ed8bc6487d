use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{json, Value};

use hypofk::estimators::{
    solve_field, solve_harmonic, solve_parabolic, survival_probability, transition_density,
    write_field_csv, Grid, HarmonicOptions,
};
use hypofk::hormander::{check, default_depth};
use hypofk::paths::{Simulator, StopCause, Trajectory};
use hypofk::rng::derive_seed;
use hypofk::sle::{bpz_residual, covariant_observable, sle_spec};
use hypofk::stats::{mean_se, par_map};
use hypofk::verify::{
    martingale_drift_test, oracle_interval_bm, strong_residual, weak_residual, GridField,
    OracleQuery, QuadGrid, WeakOptions,
};
use hypofk::DiffusionSpec;

use crate::config::{parse_field, LaunchPoint, RunConfig, SpaceTimeGrid, Task};
use crate::error::{CliError, Status};

pub struct Outcome {
    pub status: Status,
    pub result: Value,
    /// File name and content, written into the output directory.
    pub files: Vec<(String, String)>,
}

fn wrong_task(command: &str, task: &Task, allowed: &str) -> CliError {
    CliError::config(format!(
        "`{command}` does not run task kind `{}` (expected {allowed})",
        task.kind()
    ))
}

fn verdict(pass: bool) -> Status {
    if pass {
        Status::Pass
    } else {
        Status::CheckFailed
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

fn check_points(points: &[Vec<f64>], n: usize) -> Result<(), CliError> {
    if points.is_empty() {
        return Err(CliError::config("task.points is empty"));
    }
    for p in points {
        if p.len() != n {
            return Err(CliError::config(format!(
                "point {p:?} has {} coordinates, expected {n}",
                p.len()
            )));
        }
    }
    Ok(())
}

fn launch_pairs(points: &[LaunchPoint], n: usize) -> Result<Vec<(Vec<f64>, f64)>, CliError> {
    let xs: Vec<Vec<f64>> = points.iter().map(|p| p.x.clone()).collect();
    check_points(&xs, n)?;
    Ok(points.iter().map(|p| (p.x.clone(), p.t)).collect())
}

fn quad_grid(g: &SpaceTimeGrid, n: usize) -> Result<QuadGrid, CliError> {
    if g.lo.len() != n + 1 {
        return Err(CliError::config(format!(
            "space-time grid needs {} axes (space then time), got {}",
            n + 1,
            g.lo.len()
        )));
    }
    Ok(QuadGrid::new(
        g.lo.clone(),
        g.hi.clone(),
        g.intervals.clone(),
    )?)
}

fn horizon(cfg: &RunConfig) -> Result<f64, CliError> {
    cfg.numerics
        .horizon
        .ok_or_else(|| CliError::config("numerics.horizon is required for this task"))
}

fn csv_header(n: usize) -> String {
    (1..=n)
        .map(|i| format!("x{i}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

pub fn check_hormander(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let Task::Hormander { points } = &cfg.task else {
        return Err(wrong_task("check-hormander", &cfg.task, "hormander"));
    };
    let spec = cfg.spec()?;
    check_points(points, spec.n)?;
    let depth = cfg.numerics.depth.unwrap_or(default_depth(spec.n));
    let reports = check(&spec, points, depth, cfg.numerics.rank_tol)?;
    let all = reports.iter().all(|r| r.satisfied);
    let mut csv = format!(
        "{},depth,rank,satisfied,min_singular_value\n",
        csv_header(spec.n)
    );
    for r in &reports {
        let min = r.singular_values.last().copied().unwrap_or(0.0);
        writeln!(
            csv,
            "{},{},{},{},{min}",
            join(&r.point),
            r.depth,
            r.rank,
            r.satisfied
        )
        .unwrap();
    }
    Ok(Outcome {
        status: verdict(all),
        result: json!({
            "spec": describe(&spec),
            "max_depth": depth,
            "tol": cfg.numerics.rank_tol,
            "all_satisfied": all,
            "reports": reports,
        }),
        files: vec![("ranks.csv".into(), csv)],
    })
}

fn describe(spec: &DiffusionSpec) -> Value {
    json!({
        "n": spec.n,
        "d": spec.d,
        "sigma": spec.sigma.iter().map(|r| r.iter().map(|e| e.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "drift": spec.drift.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
        "domain": spec.domain.to_string(),
        "confinement": spec.confinement.as_ref().map(|p| p.to_string()),
    })
}

pub fn solve(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = cfg.spec()?;
    let obs = cfg.observable(spec.n)?;
    let pc = cfg.path_config();
    let n_paths = cfg.numerics.n_paths;
    match &cfg.task {
        Task::Parabolic { points, grid } => {
            horizon(cfg)?;
            let launch = match (grid, points.is_empty()) {
                (Some(g), true) => GridField::launch_points(&quad_grid(g, spec.n)?),
                (None, false) => launch_pairs(points, spec.n)?,
                _ => {
                    return Err(CliError::config(
                        "parabolic task needs exactly one of points and grid",
                    ))
                }
            };
            let rows = solve_field(&launch, &pc, |x, t, c| {
                solve_parabolic(&spec, &obs, x, t, c, n_paths)
            })?;
            let mut buf = Vec::new();
            write_field_csv(&rows, spec.n, &mut buf)?;
            let censored: usize = rows.iter().map(|r| r.estimate.n_censored_by_cap).sum();
            let status = if censored > 0 {
                Status::Unreliable
            } else {
                Status::Pass
            };
            Ok(Outcome {
                status,
                result: json!({
                    "task": "parabolic",
                    "seed": pc.seed,
                    "n_points": rows.len(),
                    "censored_by_cap": censored,
                    "rows": rows,
                }),
                files: vec![("field.csv".into(), String::from_utf8(buf).unwrap())],
            })
        }
        Task::Harmonic { points, criterion } => {
            check_points(points, spec.n)?;
            let opts = HarmonicOptions {
                criterion: *criterion,
                ..Default::default()
            };
            let mut results = Vec::new();
            let mut csv = format!(
                "{},mean,std_error,cap_fraction,divergent\n",
                csv_header(spec.n)
            );
            let mut flagged = false;
            for (k, x) in points.iter().enumerate() {
                let c = pc.clone().with_seed(derive_seed(pc.seed, k as u64));
                let r = solve_harmonic(&spec, &obs, x, &c, n_paths, &opts)?;
                flagged |= r.unreliable || r.divergent;
                writeln!(
                    csv,
                    "{},{},{},{},{}",
                    join(x),
                    r.estimate.mean,
                    r.estimate.std_error,
                    r.cap_fraction,
                    r.divergent
                )
                .unwrap();
                results.push(json!({ "x": x, "estimate": r }));
            }
            Ok(Outcome {
                status: if flagged {
                    Status::Unreliable
                } else {
                    Status::Pass
                },
                result: json!({ "task": "harmonic", "seed": pc.seed, "points": results }),
                files: vec![("harmonic.csv".into(), csv)],
            })
        }
        Task::Survival { points } => {
            let t_end = horizon(cfg)?;
            let launch = launch_pairs(points, spec.n)?;
            let rows = solve_field(&launch, &pc, |x, t, c| {
                survival_probability(&spec, x, t, t_end, c, n_paths)
            })?;
            let mut buf = Vec::new();
            write_field_csv(&rows, spec.n, &mut buf)?;
            Ok(Outcome {
                status: Status::Pass,
                result: json!({ "task": "survival", "seed": pc.seed, "horizon": t_end, "rows": rows }),
                files: vec![("survival.csv".into(), String::from_utf8(buf).unwrap())],
            })
        }
        Task::Density { x, times, grid } => {
            check_points(std::slice::from_ref(x), spec.n)?;
            let g = Grid::new(grid.lo.clone(), grid.hi.clone(), grid.bins.clone())?;
            let d = transition_density(&spec, x, times, &g, &pc, n_paths)?;
            let mut csv = format!("t,{},mass,density,smoothed\n", csv_header(spec.n));
            for j in 0..d.times.len() {
                let mass = d.cell_mass(j);
                let dens = d.density(j);
                let smooth = d.smoothed(j);
                for c in 0..g.n_cells() {
                    writeln!(
                        csv,
                        "{},{},{},{},{}",
                        d.times[j],
                        join(&g.center(c)),
                        mass[c],
                        dens[c],
                        smooth[c]
                    )
                    .unwrap();
                }
            }
            let slices: Vec<Value> = (0..d.times.len())
                .map(|j| {
                    json!({
                        "t": d.times[j],
                        "alive": d.alive[j],
                        "mass": d.mass(j),
                        "mass_std_error": d.mass_std_error(j),
                    })
                })
                .collect();
            Ok(Outcome {
                status: Status::Pass,
                result: json!({
                    "task": "density",
                    "seed": pc.seed,
                    "n_launched": d.n_launched,
                    "grid": g,
                    "slices": slices,
                }),
                files: vec![("density.csv".into(), csv)],
            })
        }
        other => Err(wrong_task(
            "solve",
            other,
            "parabolic, harmonic, survival or density",
        )),
    }
}

/// A field CSV as written by `solve`, checked node by node against `grid`.
fn read_field(path: &std::path::Path, grid: QuadGrid) -> Result<GridField, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let dim = grid.dim();
    let mut values = Vec::new();
    let mut errors = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim + 2 {
            return Err(CliError::config(format!(
                "{} row {}: expected {} columns",
                path.display(),
                k + 1,
                dim + 2
            )));
        }
        let nums: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::config(format!("{} row {}: {e}", path.display(), k + 1)))?;
        if k >= grid.n_nodes() {
            return Err(CliError::config(format!(
                "{} has more rows than the grid has nodes",
                path.display()
            )));
        }
        let node = grid.node(k);
        if node
            .iter()
            .zip(&nums)
            .any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
        {
            return Err(CliError::config(format!(
                "{} row {} is at {:?}, grid node is {node:?}",
                path.display(),
                k + 1,
                &nums[..dim]
            )));
        }
        values.push(nums[dim]);
        errors.push(nums[dim + 1]);
    }
    if values.len() != grid.n_nodes() {
        return Err(CliError::config(format!(
            "{} has {} rows, the grid has {} nodes",
            path.display(),
            values.len(),
            grid.n_nodes()
        )));
    }
    Ok(GridField {
        grid,
        values,
        std_errors: Some(errors),
    })
}

pub fn verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = cfg.spec()?;
    let obs = cfg.observable(spec.n)?;
    match &cfg.task {
        Task::Strong { f, points, tol } => {
            let f = parse_field(f, spec.n, "task.f")?;
            let pts = launch_pairs(points, spec.n)?;
            let r = strong_residual(&spec, &obs, &f, &pts, *tol)?;
            Ok(Outcome {
                status: verdict(r.pass),
                result: json!({ "task": "strong", "report": r }),
                files: Vec::new(),
            })
        }
        Task::Weak {
            f,
            field_csv,
            grid,
            bumps,
            factor,
            floor,
        } => {
            let qg = quad_grid(grid, spec.n)?;
            let field = match (f, field_csv) {
                (Some(src), None) => {
                    let f = parse_field(src, spec.n, "task.f")?;
                    GridField::from_fn(qg, |x, t| Ok(f.eval(x, t)?))?
                }
                (None, Some(path)) => read_field(path, qg)?,
                _ => {
                    return Err(CliError::config(
                        "weak task needs exactly one of f and field_csv",
                    ))
                }
            };
            if bumps.is_empty() {
                return Err(CliError::config("task.bumps is empty"));
            }
            let opts = WeakOptions {
                factor: *factor,
                floor: *floor,
            };
            let reports = bumps
                .iter()
                .map(|b| weak_residual(&spec, &obs, &field, &b.to_expr(), &opts))
                .collect::<Result<Vec<_>, _>>()?;
            let pass = reports.iter().all(|r| r.pass);
            Ok(Outcome {
                status: verdict(pass),
                result: json!({ "task": "weak", "pass": pass, "reports": reports }),
                files: Vec::new(),
            })
        }
        Task::Drift {
            f,
            launch,
            pairs,
            confidence,
        } => {
            let f = parse_field(f, spec.n, "task.f")?;
            let r = martingale_drift_test(
                &spec,
                &obs,
                &f,
                launch,
                pairs,
                &cfg.path_config(),
                cfg.numerics.n_paths,
                *confidence,
            )?;
            Ok(Outcome {
                status: verdict(r.pass),
                result: json!({ "task": "drift", "report": r }),
                files: Vec::new(),
            })
        }
        other => Err(wrong_task("verify", other, "strong, weak or drift")),
    }
}

pub fn sle_sim(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let Task::SleSim { record } = &cfg.task else {
        return Err(wrong_task("sle-sim", &cfg.task, "sle-sim"));
    };
    let sle = cfg
        .sle()?
        .ok_or_else(|| CliError::config("sle-sim needs a problem.sle block"))?;
    horizon(cfg)?;
    let spec = sle_spec(&sle)?;
    let n = spec.n;
    let psi = parse_field(&cfg.problem.observable.psi, n, "problem.observable.psi")?;
    let mut obs = covariant_observable(&sle, &psi)?;
    obs.h = parse_field(&cfg.problem.observable.h, n, "problem.observable.h")?;
    let pc = sle.path_config(&cfg.path_config());
    let sim = Simulator::new(&spec, &obs, &pc)?;
    let samples = par_map(cfg.numerics.n_paths, |p| sim.simulate(&sle.launch, 0.0, p))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut causes: BTreeMap<String, usize> = BTreeMap::new();
    let mut csv = format!("path,exit_time,cause,{},gamma,H\n", csv_header(n));
    let mut contributions = Vec::with_capacity(samples.len());
    for (p, s) in samples.iter().enumerate() {
        let cause = to_value(&s.cause).as_str().unwrap_or("").to_string();
        *causes.entry(cause.clone()).or_default() += 1;
        writeln!(
            csv,
            "{p},{},{cause},{},{},{}",
            s.exit_time,
            join(&s.exit_state),
            s.gamma,
            s.h
        )
        .unwrap();
        contributions.push(sim.contribution(s)?);
    }
    let m = mean_se(&contributions);
    let mut files = vec![("paths.csv".into(), csv)];
    for p in 0..(*record).min(cfg.numerics.n_paths) {
        let (tr, _) = Trajectory::record(&sim, &sle.launch, 0.0, p)?;
        let mut buf = Vec::new();
        tr.write_csv(&mut buf)?;
        files.push((
            format!("trajectory_{p}.csv"),
            String::from_utf8(buf).unwrap(),
        ));
    }
    let collided = samples
        .iter()
        .filter(|s| s.cause == StopCause::Collision)
        .count();
    Ok(Outcome {
        status: Status::Pass,
        result: json!({
            "spec": describe(&spec),
            "seed": pc.seed,
            "n_paths": samples.len(),
            "causes": causes,
            "collided": collided,
            "observable_mean": m.mean,
            "observable_std_error": m.std_error,
        }),
        files,
    })
}

pub fn bpz_check(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let Task::Bpz { f, points, tol } = &cfg.task else {
        return Err(wrong_task("bpz-check", &cfg.task, "bpz"));
    };
    let sle = cfg
        .sle()?
        .ok_or_else(|| CliError::config("bpz-check needs a problem.sle block"))?;
    let f = parse_field(f, sle.n(), "task.f")?;
    check_points(points, sle.n())?;
    let r = bpz_residual(&sle, &f, points, *tol)?;
    Ok(Outcome {
        status: verdict(r.pass),
        result: json!({ "task": "bpz", "report": r }),
        files: Vec::new(),
    })
}

fn default_queries() -> Vec<OracleQuery> {
    let mut q = Vec::new();
    for s in [0.5, 1.0, 2.0] {
        q.push(OracleQuery::Laplace { s, x: 0.0 });
    }
    q.push(OracleQuery::Fs { s: 1.0, x: 0.0 });
    for k in 1..=4 {
        q.push(OracleQuery::Moment { k });
    }
    for c in [0.5, 1.0, 1.3] {
        q.push(OracleQuery::ExpC { c });
    }
    q.push(OracleQuery::Survival { x: 0.0, t: 0.5 });
    q
}

pub fn oracle(cfg: &RunConfig, configured: bool) -> Result<Outcome, CliError> {
    let queries = match &cfg.task {
        Task::Oracle { queries } => queries.clone(),
        _ if !configured => default_queries(),
        other => return Err(wrong_task("oracle", other, "oracle")),
    };
    let mut csv = String::from("query,value\n");
    let mut rows = Vec::new();
    for q in queries {
        let v = oracle_interval_bm(q)?;
        let label = to_value(&q).to_string();
        let shown = match v.finite() {
            Some(x) => x.to_string(),
            None => "divergent".into(),
        };
        writeln!(csv, "\"{}\",{shown}", label.replace('"', "\"\"")).unwrap();
        rows.push(json!({ "query": q, "value": v }));
    }
    Ok(Outcome {
        status: Status::Pass,
        result: json!({ "values": rows }),
        files: vec![("oracle.csv".into(), csv)],
    })
}
