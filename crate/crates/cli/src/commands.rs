//! The `run`, `tune`, `spectrum` and `sweep` subcommands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use hvrbf::geometry::NodeSet;
use hvrbf::local_approx::OperatorKind;
use hvrbf::metrics::{fit_order, window, write_metrics_csv, FitModel, MetricsRecord};
use hvrbf::operators::{stabilised_operator, HyperviscosityConfig, SparseOperator};
use hvrbf::spectral::{dump_spectrum, write_spectrum_csv, SpectralConfig, STABILITY_SLACK};
use hvrbf::textio::fmt_real;
use hvrbf::timestepping::{
    advection_operator, exact_burgers, linearised_burgers, run_advection, run_burgers, RunOutcome,
    StencilCache,
};
use hvrbf::tuner::{evolution_probe, find_c_opt, TuneResult, TuneStatus};
use hvrbf::Execution;

use crate::config::{ConfigError, Experiment, Problem, RawConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("solution diverged at t = {t}")]
    Diverged { t: f64 },
    #[error("tuning failed: {0}")]
    Tuner(String),
    #[error(transparent)]
    Core(#[from] hvrbf::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 config, 2 divergence, 3 tuner failure, 4 anything else.
    pub fn exit_code(&self) -> i32 {
        use hvrbf::Error as E;
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Diverged { .. } => 2,
            CliError::Tuner(_) => 3,
            CliError::Core(e) => match e {
                E::InvalidParameter(_) | E::StencilTooLarge { .. } | E::TooLargeForDense { .. } => {
                    1
                }
                E::Diverged { .. } => 2,
                E::NoStableC { .. } => 3,
                _ => 4,
            },
            CliError::Io(_) => 4,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn write_file<F>(path: &Path, header: &str, body: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> hvrbf::Result<()>,
{
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

fn simulate(exp: &Experiment, nodes: &NodeSet) -> CliResult<RunOutcome> {
    let stepper = exp.stepper();
    let out = match exp.problem {
        Problem::Advection => run_advection(nodes, exp.beta, &stepper),
        Problem::Burgers => run_burgers(nodes, exp.re, &stepper),
    };
    out.map_err(|e| match e {
        hvrbf::Error::NoStableC { c_max } => CliError::Tuner(format!(
            "no stable hyperviscosity constant up to c = {c_max}"
        )),
        e => e.into(),
    })
}

/// Rounds away representation noise of `step * dt` for file names.
fn time_label(t: f64) -> String {
    fmt_real((t * 1e9).round() / 1e9)
}

/// Runs one simulation and writes `metrics.csv`, one `snapshot_*.csv` per
/// recorded time and the tuning traces into `out`.
pub fn cmd_run(exp: &Experiment, out: &Path) -> CliResult<RunOutcome> {
    fs::create_dir_all(out)?;
    let nodes = exp.nodes()?;
    let res = simulate(exp, &nodes)?;
    let header = &exp.header;
    write_file(&out.join("metrics.csv"), header, |w| {
        write_metrics_csv(&res.records, w)
    })?;
    for (i, s) in res.snapshots.iter().enumerate() {
        let name = format!("snapshot_{i:03}_t{}.csv", time_label(s.state.t));
        write_file(&out.join(name), header, |w| s.write_csv(&nodes, w))?;
    }
    match exp.problem {
        Problem::Advection => {
            if let Some((_, t)) = res.tunes.first() {
                write_file(&out.join("tune_trace.csv"), header, |w| {
                    t.write_trace_csv(w)
                })?;
            }
        }
        Problem::Burgers => {
            for (step, t) in &res.tunes {
                let name = format!("tune_trace_step{step:06}.csv");
                write_file(&out.join(name), header, |w| t.write_trace_csv(w))?;
            }
            write_file(&out.join("c_history.csv"), header, |w| {
                writeln!(w, "step,t,c")?;
                for (step, c) in &res.c_history {
                    writeln!(
                        w,
                        "{step},{},{}",
                        fmt_real(*step as f64 * exp.dt),
                        fmt_real(*c)
                    )?;
                }
                Ok(())
            })?;
        }
    }
    let last = res.last_record();
    println!(
        "t={} rel_error={} rel_energy={} c={}",
        fmt_real(last.t),
        fmt_real(last.rel_error),
        fmt_real(last.rel_energy),
        last.c_current.map(fmt_real).unwrap_or_default()
    );
    if let Some(t) = res.diverged_at {
        return Err(CliError::Diverged { t });
    }
    Ok(res)
}

/// Transport operator, hyperviscosity operator and Dirichlet nodes of the
/// configured problem; Burgers' is linearised about its initial state.
pub fn problem_operators(
    exp: &Experiment,
    nodes: &NodeSet,
) -> hvrbf::Result<(SparseOperator, SparseOperator, Vec<usize>)> {
    let mut cache = StencilCache::new(nodes);
    let d_adv = match exp.problem {
        Problem::Advection => advection_operator(&mut cache, exp.beta, &exp.scheme)?,
        Problem::Burgers => {
            let dx = cache.assemble(&exp.scheme.transport(OperatorKind::PartialX)?)?;
            let dy = cache.assemble(&exp.scheme.transport(OperatorKind::PartialY)?)?;
            let lap = cache.assemble(&exp.scheme.transport(OperatorKind::Laplacian)?)?;
            let f: Vec<[f64; 2]> = nodes
                .points()
                .iter()
                .map(|&p| exact_burgers(p, 0.0, exp.re))
                .collect();
            let u = vec![
                f.iter().map(|v| v[0]).collect(),
                f.iter().map(|v| v[1]).collect(),
            ];
            linearised_burgers(&dx, &dy, &lap, &u, exp.re)?
        }
    };
    let d_hip = cache.assemble(&exp.scheme.hyperviscosity(exp.alpha)?)?;
    Ok((d_adv, d_hip, nodes.boundary_ids().to_vec()))
}

/// Finds `c_opt` for the configured problem at `t = 0`.
pub fn cmd_tune(exp: &Experiment, out: &Path) -> CliResult<TuneResult> {
    fs::create_dir_all(out)?;
    let nodes = exp.nodes()?;
    let (d_adv, d_hip, boundary) = problem_operators(exp, &nodes)?;
    let spectral = SpectralConfig {
        num_eigs: exp.tuner.num_eigs,
        ..exp.spectral
    };
    let probe = evolution_probe(
        &d_adv, &d_hip, exp.alpha, exp.h, exp.dt, &boundary, spectral,
    );
    let res = find_c_opt(probe, &exp.tuner)?;
    write_file(&out.join("tune_trace.csv"), &exp.header, |w| {
        res.write_trace_csv(w)
    })?;
    let json = serde_json::json!({
        "config": exp.header.trim_start_matches("# config "),
        "nodes": nodes.len(),
        "result": res,
    });
    let text = serde_json::to_string_pretty(&json).expect("tune results serialise");
    fs::write(out.join("tune.json"), format!("{text}\n"))?;
    println!("{text}");
    if res.status == TuneStatus::NoStableC {
        return Err(CliError::Tuner(format!(
            "no stable constant within {} sweep steps",
            exp.tuner.max_sweep
        )));
    }
    Ok(res)
}

/// Keeps only the rows and columns of nodes off the Dirichlet boundary.
fn interior_block(op: &SparseOperator, boundary: &[usize]) -> hvrbf::Result<SparseOperator> {
    if boundary.is_empty() {
        return Ok(op.clone());
    }
    let mut map = vec![usize::MAX; op.dim()];
    let mut next = 0;
    for (i, m) in map.iter_mut().enumerate() {
        if boundary.binary_search(&i).is_err() {
            *m = next;
            next += 1;
        }
    }
    let rows = (0..op.dim())
        .filter(|&i| map[i] != usize::MAX)
        .map(|i| {
            op.row(i)
                .filter(|&(j, _)| map[j] != usize::MAX)
                .map(|(j, v)| (map[j], v))
                .collect()
        })
        .collect();
    SparseOperator::from_rows(rows, None)
}

/// One row of the spectrum summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumCase {
    pub k: u32,
    pub c: f64,
    pub n: usize,
    /// Eigenvalues whose backward Euler amplification exceeds one.
    pub unstable: usize,
    pub rho: f64,
}

/// Full spectra of the stabilised operator for every `(k, c)` case.
pub fn cmd_spectrum(exp: &Experiment, out: &Path) -> CliResult<Vec<SpectrumCase>> {
    fs::create_dir_all(out)?;
    let nodes = exp.nodes()?;
    let ks = if exp.spectrum.k.is_empty() {
        vec![exp.scheme.k_adv]
    } else {
        exp.spectrum.k.clone()
    };
    let scale = exp.spectrum.scale.unwrap_or(exp.h);
    let mut cases = Vec::new();
    for &k in &ks {
        let mut e = exp.clone();
        e.scheme.k_adv = k;
        let (d_adv, d_hip, boundary) = problem_operators(&e, &nodes)?;
        for &c in &exp.spectrum.c {
            let hv = HyperviscosityConfig::new(exp.alpha, c, exp.h)?;
            let d_hat = interior_block(&stabilised_operator(&d_adv, &d_hip, &hv)?, &boundary)?;
            let eigs = dump_spectrum(&d_hat, 1.0)?;
            let amp = |&(re, im): &(f64, f64)| 1.0 / (1.0 - exp.dt * re).hypot(exp.dt * im);
            let unstable = eigs
                .iter()
                .filter(|e| amp(e) > 1.0 + STABILITY_SLACK)
                .count();
            let mut rho = eigs.iter().map(amp).fold(0.0, f64::max);
            if !boundary.is_empty() {
                rho = rho.max(1.0);
            }
            let scaled: Vec<(f64, f64)> =
                eigs.iter().map(|(r, i)| (r * scale, i * scale)).collect();
            let name = format!("spectrum_k{k}_c{}.csv", fmt_real(c));
            write_file(&out.join(name), &exp.header, |w| {
                write_spectrum_csv(&scaled, w)
            })?;
            cases.push(SpectrumCase {
                k,
                c,
                n: eigs.len(),
                unstable,
                rho,
            });
        }
    }
    write_file(&out.join("spectrum_summary.csv"), &exp.header, |w| {
        writeln!(w, "k,c,n,unstable,rho")?;
        for s in &cases {
            writeln!(
                w,
                "{},{},{},{},{}",
                s.k,
                fmt_real(s.c),
                s.n,
                s.unstable,
                fmt_real(s.rho)
            )?;
        }
        Ok(())
    })?;
    for s in &cases {
        println!(
            "k={} c={} unstable={} rho={}",
            s.k,
            fmt_real(s.c),
            s.unstable,
            fmt_real(s.rho)
        );
    }
    Ok(cases)
}

/// Result of one sweep grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub values: Vec<String>,
    /// `ok`, `diverged`, `no-stable-c` or `error: ...`.
    pub status: String,
    pub record: Option<MetricsRecord>,
    pub order: Option<f64>,
}

fn sweep_point(raw: &RawConfig) -> (String, Option<MetricsRecord>) {
    let run = || -> CliResult<RunOutcome> {
        let exp = raw.resolve()?;
        let nodes = exp.nodes()?;
        simulate(&exp, &nodes)
    };
    match run() {
        Ok(res) => {
            let rec = *res.last_record();
            match res.diverged_at {
                Some(t) => ("diverged".into(), Some(MetricsRecord { t, ..rec })),
                None => ("ok".into(), Some(rec)),
            }
        }
        Err(CliError::Tuner(_)) => ("no-stable-c".into(), None),
        Err(e) => {
            let msg: String = e
                .to_string()
                .chars()
                .map(|ch| if ch == ',' || ch == '\n' { ';' } else { ch })
                .collect();
            (format!("error: {msg}"), None)
        }
    }
}

/// Runs every point of the Cartesian product of the sweep axes and writes
/// `sweep.csv`. Failed points are recorded in their row.
pub fn cmd_sweep(raw: &RawConfig, out: &Path) -> CliResult<Vec<SweepRow>> {
    let base = raw.resolve()?;
    let axes = raw.axis_names();
    if axes.is_empty() {
        return Err(CliError::Usage(
            "sweep needs at least one sweep.<key>=v1,v2,... axis".into(),
        ));
    }
    let grid = raw.grid()?;
    fs::create_dir_all(out)?;
    let results = Execution::Parallel.map_slice(&grid, |(_, point)| sweep_point(point));
    let mut rows: Vec<SweepRow> = grid
        .iter()
        .zip(results)
        .map(|((values, _), (status, record))| SweepRow {
            values: values.clone(),
            status,
            record,
            order: None,
        })
        .collect();

    let fit_axis = base.fit.axis.clone().or_else(|| {
        ["h", "dt"]
            .into_iter()
            .find(|a| axes.iter().any(|x| x == a))
            .map(str::to_string)
    });
    let mut fits = Vec::new();
    if let Some(fa) = &fit_axis {
        let ai = axes
            .iter()
            .position(|a| a == fa)
            .expect("fit axis is an axis");
        let model = if fa == "dt" {
            FitModel::DtPower
        } else {
            FitModel::HPower
        };
        let group_of = |r: &SweepRow| {
            let mut g = r.values.clone();
            g.remove(ai);
            g
        };
        let mut groups: Vec<Vec<String>> = Vec::new();
        for g in rows.iter().map(group_of) {
            if !groups.contains(&g) {
                groups.push(g);
            }
        }
        for g in groups {
            let samples: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| group_of(r) == g && r.status == "ok")
                .filter_map(|r| Some((r.values[ai].parse().ok()?, r.record?.rel_error)))
                .collect();
            let len = base.fit.len.unwrap_or(samples.len());
            let sel = window(&samples, base.fit.start, len);
            if let Ok(f) = fit_order(&sel, model) {
                for r in rows.iter_mut().filter(|r| group_of(r) == g) {
                    r.order = Some(f.k);
                }
                fits.push((g, f));
            }
        }
    }

    write_file(&out.join("sweep.csv"), &base.header, |w| {
        writeln!(
            w,
            "{},status,t,rel_error,rel_energy,c,order",
            axes.join(",")
        )?;
        let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
        for r in &rows {
            let rec = r.record.as_ref();
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.values.join(","),
                r.status,
                opt(rec.map(|x| x.t)),
                opt(rec.map(|x| x.rel_error)),
                opt(rec.map(|x| x.rel_energy)),
                opt(rec.and_then(|x| x.c_current)),
                opt(r.order)
            )?;
        }
        Ok(())
    })?;
    for r in &rows {
        println!("{} {}", r.values.join(" "), r.status);
    }
    if let Some(fa) = &fit_axis {
        for (g, f) in &fits {
            let others: Vec<String> = axes
                .iter()
                .filter(|a| *a != fa)
                .zip(g)
                .map(|(a, v)| format!("{a}={v}"))
                .collect();
            println!(
                "order along {fa} [{}]: k={} d={}",
                others.join(" "),
                fmt_real(f.k),
                fmt_real(f.d)
            );
        }
    }
    Ok(rows)
}
