//! The five experiment tasks. Each produces a column table plus diagnostics;
//! row order depends only on the config.

use rayon::prelude::*;
use serde_json::{json, Map, Value};
use skspin::continuum::{error_table, window_label};
use skspin::evaluator::{build_operators, lattice_correlator, quadrature_change};
use skspin::oracle::fd_correlator;
use skspin::sampler::{metropolis_run, write_snapshot, McObservable, McParams, SnapshotHeader};
use skspin::{Complex, ContourParams, ExactOracle, TwoPoint};

use crate::config::{Experiment, Observable, Task};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Str(String),
    Int(u64),
    Num(f64),
    Bool(bool),
}

#[derive(Debug, Clone, Default)]
pub struct Artifact {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub diagnostics: Map<String, Value>,
}

impl Artifact {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Self::default()
        }
    }

    /// True when an MC estimate was flagged as unreliable.
    pub fn sign_collapsed(&self) -> bool {
        self.diagnostics
            .get("sign_collapsed")
            .and_then(Value::as_bool)
            .unwrap_or(false)
    }
}

fn time_index(contour: &ContourParams, t: f64) -> Result<usize, CliError> {
    contour.time_index(t).ok_or_else(|| {
        CliError::validation(format!(
            "time {t} is not a multiple of dt = {} for N = {}",
            contour.dt(),
            contour.slices(skspin::Leg::Forward)
        ))
    })
}

fn push_complex(row: &mut Vec<Cell>, z: Complex) {
    row.push(Cell::Num(z.re));
    row.push(Cell::Num(z.im));
}

pub fn run(exp: &Experiment) -> Result<Artifact, CliError> {
    match exp.config.task {
        Task::Exact => exact(exp),
        Task::LatticeCorrelator => lattice(exp),
        Task::ContinuumTable => continuum(exp),
        Task::Mc => mc(exp),
        Task::ZtildeCheck => ztilde(exp),
    }
}

fn exact(exp: &Experiment) -> Result<Artifact, CliError> {
    let oracle = ExactOracle::new(&exp.spec)?;
    let beta = exp.config.contour.beta;
    let contour = exp.ns.first().map(|&n| exp.contour(n)).transpose()?;
    let mut art = Artifact::new(&["observable", "t", "t_prime", "re_exact", "im_exact"]);
    for o in &exp.observables {
        let times = o.times(contour.as_ref())?;
        let values = oracle.correlator_series(beta, o.x, o.i, &times, o.xp, o.ip, o.t_prime)?;
        for (t, v) in times.iter().zip(values) {
            let mut row = vec![Cell::Str(o.label()), Cell::Num(*t), Cell::Num(o.t_prime)];
            push_complex(&mut row, v);
            art.rows.push(row);
        }
    }
    let energies: Vec<f64> = oracle.energies().to_vec();
    art.diagnostics
        .insert("spectrum_above_ground".into(), json!(energies));
    Ok(art)
}

fn lattice(exp: &Experiment) -> Result<Artifact, CliError> {
    let oracle = ExactOracle::new(&exp.spec)?;
    let beta = exp.config.contour.beta;
    let q = &exp.config.quadrature;
    let mut art = Artifact::new(&[
        "observable",
        "n",
        "t",
        "t_prime",
        "re_lattice",
        "im_lattice",
        "re_exact",
        "im_exact",
    ]);
    let mut changes = Map::new();
    for &n in &exp.ns {
        let contour = exp.contour(n)?;
        if q.check {
            let change = quadrature_change(&exp.spec, &contour, &exp.grid)?;
            changes.insert(n.to_string(), json!(change));
            if !(change <= q.tol) {
                return Err(skspin::Error::QuadratureNotConverged { change, tol: q.tol }.into());
            }
        }
        let (props, ins) = build_operators(&exp.spec, &contour, &exp.grid)?;
        for o in &exp.observables {
            let times = o.times(Some(&contour))?;
            let tp_hat = time_index(&contour, o.t_prime)?;
            let t_hats = times
                .iter()
                .map(|&t| time_index(&contour, t))
                .collect::<Result<Vec<_>, _>>()?;
            let values = t_hats
                .par_iter()
                .map(|&th| {
                    lattice_correlator(&props, &ins, o.ordering, th, tp_hat, o.x, o.i, o.xp, o.ip)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let exact = oracle.correlator_series(beta, o.x, o.i, &times, o.xp, o.ip, o.t_prime)?;
            for ((t, l), e) in times.iter().zip(values).zip(exact) {
                let mut row = vec![
                    Cell::Str(o.label()),
                    Cell::Int(n as u64),
                    Cell::Num(*t),
                    Cell::Num(o.t_prime),
                ];
                push_complex(&mut row, l);
                push_complex(&mut row, e);
                art.rows.push(row);
            }
        }
    }
    if q.check {
        art.diagnostics
            .insert("quadrature_doubling_change".into(), Value::Object(changes));
    }
    Ok(art)
}

fn two_point(o: &Observable) -> TwoPoint {
    let t = match &o.times {
        crate::config::Times::List(v) => v[0],
        crate::config::Times::Slices => unreachable!("validated as a fixed time"),
    };
    TwoPoint {
        ordering: o.ordering,
        x: o.x,
        i: o.i,
        xp: o.xp,
        ip: o.ip,
        t,
        t_prime: o.t_prime,
    }
}

fn continuum(exp: &Experiment) -> Result<Artifact, CliError> {
    let c = &exp.config.contour;
    let q = &exp.config.quadrature;
    let windows = &exp.config.continuum.as_ref().expect("validated").windows;
    let observables: Vec<TwoPoint> = exp.observables.iter().map(two_point).collect();
    let mut columns = vec!["window".to_string()];
    for o in &observables {
        columns.push(format!("Re {}", o.label()));
        columns.push(format!("Im {}", o.label()));
    }
    let mut art = Artifact {
        columns,
        ..Artifact::default()
    };
    if q.check {
        // the coarsest time step has the fastest-varying integrand
        let n = exp.ns[0];
        let change = quadrature_change(&exp.spec, &exp.contour(n)?, &exp.grid)?;
        art.diagnostics.insert(
            "quadrature_doubling_change".into(),
            json!({ n.to_string(): change }),
        );
        if !(change <= q.tol) {
            return Err(skspin::Error::QuadratureNotConverged { change, tol: q.tol }.into());
        }
    }
    let table = error_table(&exp.spec, c.beta, c.t_max, &exp.grid, windows, &observables)?;
    let mut fits = Vec::new();
    for (w, ns) in windows.iter().enumerate() {
        let mut row = vec![Cell::Str(window_label(ns))];
        for (k, fit) in table.fits[w].iter().enumerate() {
            push_complex(&mut row, fit.extrapolation_error);
            fits.push(json!({
                "window": window_label(ns),
                "observable": observables[k].label(),
                "intercept": [fit.intercept.re, fit.intercept.im],
                "slope": [fit.slope.re, fit.slope.im],
                "residual_rms": fit.residual_rms,
                "raw": table.raw[w][k].iter().map(|v| [v.re, v.im]).collect::<Vec<_>>(),
            }));
        }
        art.rows.push(row);
    }
    let exact: Vec<[f64; 2]> = table.exact.iter().map(|v| [v.re, v.im]).collect();
    art.diagnostics.insert("exact".into(), json!(exact));
    art.diagnostics.insert("fits".into(), Value::Array(fits));
    Ok(art)
}

fn mc(exp: &Experiment) -> Result<Artifact, CliError> {
    let mc = exp.config.mc.as_ref().expect("validated");
    let n = exp.ns[0];
    let contour = exp.contour(n)?;
    let seed = exp.config.seed.unwrap_or(0);
    let mut labels = Vec::new();
    let mut mc_obs = Vec::new();
    for o in &exp.observables {
        let tp_hat = time_index(&contour, o.t_prime)?;
        for t in o.times(Some(&contour))? {
            let t_hat = time_index(&contour, t)?;
            mc_obs.push(McObservable::two_point(
                &contour,
                exp.spec.rep,
                o.ordering,
                t_hat,
                tp_hat,
                o.x,
                o.i,
                o.xp,
                o.ip,
            )?);
            labels.push((o, t, t_hat, tp_hat));
        }
    }
    let params = McParams {
        proposal_width: mc.proposal_width,
        n_samples: mc.n_samples,
        n_therm: mc.n_therm,
        seed,
        chains: mc.chains,
    };
    let run = metropolis_run(&exp.spec, &contour, &params, &mc_obs)?;
    let traces = if mc.compare_trace {
        let (props, ins) = build_operators(&exp.spec, &contour, &exp.grid)?;
        let v = labels
            .iter()
            .map(|(o, _, th, tph)| {
                lattice_correlator(&props, &ins, o.ordering, *th, *tph, o.x, o.i, o.xp, o.ip)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Some(v)
    } else {
        None
    };
    let mut columns = vec![
        "observable",
        "n",
        "t",
        "t_prime",
        "re_mc",
        "im_mc",
        "re_stderr",
        "im_stderr",
    ];
    if traces.is_some() {
        columns.extend(["re_trace", "im_trace"]);
    }
    columns.extend(["bin_size", "sign_collapsed"]);
    let mut art = Artifact::new(&columns);
    for (k, ((o, t, _, _), e)) in labels.iter().zip(&run.estimates).enumerate() {
        let mut row = vec![
            Cell::Str(o.label()),
            Cell::Int(n as u64),
            Cell::Num(*t),
            Cell::Num(o.t_prime),
        ];
        push_complex(&mut row, e.mean);
        push_complex(&mut row, e.stderr);
        if let Some(tr) = &traces {
            push_complex(&mut row, tr[k]);
        }
        row.push(Cell::Int(e.bin_size as u64));
        row.push(Cell::Bool(e.sign_collapsed));
        art.rows.push(row);
    }
    if let Some(e) = run.estimates.first() {
        art.diagnostics
            .insert("avg_sign".into(), json!([e.avg_sign.re, e.avg_sign.im]));
        art.diagnostics.insert(
            "avg_sign_stderr".into(),
            json!([e.sign_stderr.re, e.sign_stderr.im]),
        );
        art.diagnostics
            .insert("acceptance".into(), json!(e.acceptance));
        art.diagnostics
            .insert("sign_collapsed".into(), json!(e.sign_collapsed));
        art.diagnostics
            .insert("n_samples".into(), json!(e.n_samples));
    }
    art.diagnostics.insert("seed".into(), json!(seed));
    art.diagnostics.insert("chains".into(), json!(mc.chains));
    if let Some(path) = &mc.snapshot {
        let header = SnapshotHeader::new(&exp.spec, &contour, seed);
        let file = std::fs::File::create(path)
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        write_snapshot(std::io::BufWriter::new(file), &header, &run.final_paths)?;
        art.diagnostics
            .insert("snapshot".into(), json!(path.display().to_string()));
    }
    Ok(art)
}

fn ztilde(exp: &Experiment) -> Result<Artifact, CliError> {
    let oracle = ExactOracle::new(&exp.spec)?;
    let beta = exp.config.contour.beta;
    let eps = exp.config.ztilde.as_ref().map(|z| z.eps).expect("resolved");
    let mut art = Artifact::new(&[
        "observable",
        "n",
        "t",
        "t_prime",
        "re_fd",
        "im_fd",
        "re_exact",
        "im_exact",
    ]);
    for &n in &exp.ns {
        let contour = exp.contour(n)?;
        for o in &exp.observables {
            let tp_hat = time_index(&contour, o.t_prime)?;
            let times = o.times(Some(&contour))?;
            let values = times
                .par_iter()
                .map(|&t| {
                    let th = time_index(&contour, t)?;
                    let fd = fd_correlator(
                        &exp.spec, &contour, o.ordering, th, tp_hat, o.x, o.i, o.xp, o.ip, eps,
                    )?;
                    let ex = oracle.correlator(beta, o.x, o.i, t, o.xp, o.ip, o.t_prime)?;
                    Ok((fd, ex))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            for (t, (fd, ex)) in times.iter().zip(values) {
                let mut row = vec![
                    Cell::Str(o.label()),
                    Cell::Int(n as u64),
                    Cell::Num(*t),
                    Cell::Num(o.t_prime),
                ];
                push_complex(&mut row, fd);
                push_complex(&mut row, ex);
                art.rows.push(row);
            }
        }
    }
    Ok(art)
}
