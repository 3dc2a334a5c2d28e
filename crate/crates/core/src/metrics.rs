//! Error and energy diagnostics, and convergence-order fitting.

use std::io::Write;

use crate::textio::fmt_real;
use crate::{Error, Result};

/// One row of the metrics table.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MetricsRecord {
    pub t: f64,
    pub rel_error: f64,
    pub rel_energy: f64,
    pub c_current: Option<f64>,
    pub rho_at_tune: Option<f64>,
}

fn check_pair(u_h: &[f64], u: &[f64]) -> Result<f64> {
    if u_h.len() != u.len() {
        return Err(Error::DimensionMismatch(u.len(), u_h.len()));
    }
    let norm2: f64 = u.iter().map(|v| v * v).sum();
    if norm2 == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(norm2)
}

/// `||u - u_h|| / ||u||` on nodal values.
pub fn relative_l2_error(u_h: &[f64], u: &[f64]) -> Result<f64> {
    let norm2 = check_pair(u_h, u)?;
    let diff2: f64 = u_h.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((diff2 / norm2).sqrt())
}

/// `sum u_h^2 / sum u^2`.
pub fn relative_energy(u_h: &[f64], u: &[f64]) -> Result<f64> {
    let norm2 = check_pair(u_h, u)?;
    Ok(u_h.iter().map(|v| v * v).sum::<f64>() / norm2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FitModel {
    /// error against spacing `h`
    HPower,
    /// error against timestep
    DtPower,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct OrderFit {
    pub k: f64,
    pub d: f64,
    pub a: f64,
    /// Sum of squared log residuals at the optimum.
    pub misfit: f64,
}

/// Fits `error ~ a * scale^k + d` with `d >= 0`, in log-error space.
///
/// For a fixed offset `d` the exponent and amplitude follow from linear
/// regression of `log(error - d)` on `log(scale)`; the offset itself is
/// chosen by a grid scan over `[0, min error)` refined by golden section.
pub fn fit_order(samples: &[(f64, f64)], model: FitModel) -> Result<OrderFit> {
    let _ = model;
    if samples.len() < 3 {
        return Err(Error::DegenerateSamples(format!(
            "need at least 3 samples, got {}",
            samples.len()
        )));
    }
    if samples
        .iter()
        .any(|&(s, e)| !(s > 0.0) || !(e > 0.0) || !s.is_finite() || !e.is_finite())
    {
        return Err(Error::DegenerateSamples(
            "scales and errors must be positive and finite".into(),
        ));
    }
    let first = samples[0];
    if samples.iter().all(|&(s, _)| s == first.0) {
        return Err(Error::DegenerateSamples("all scales equal".into()));
    }
    if samples.iter().all(|&(_, e)| e == first.1) {
        return Err(Error::DegenerateSamples("all errors equal".into()));
    }
    let e_min = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);

    let eval = |d: f64| -> (f64, f64, f64) {
        let (k, log_a) = regress(samples, d);
        let misfit = samples
            .iter()
            .map(|&(s, e)| {
                let model = log_a.exp() * s.powf(k) + d;
                (e.ln() - model.ln()).powi(2)
            })
            .sum();
        (misfit, k, log_a)
    };

    const GRID: usize = 400;
    let upper = e_min * (1.0 - 1e-9);
    let mut best = (0usize, eval(0.0).0);
    for i in 1..GRID {
        let d = upper * i as f64 / GRID as f64;
        let m = eval(d).0;
        if m < best.1 {
            best = (i, m);
        }
    }
    let step = upper / GRID as f64;
    let (mut lo, mut hi) = (
        (best.0 as f64 - 1.0).max(0.0) * step,
        ((best.0 + 1) as f64 * step).min(upper),
    );
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (eval(x1).0, eval(x2).0);
    for _ in 0..200 {
        if hi - lo <= 1e-15 * upper.max(f64::MIN_POSITIVE) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = eval(x1).0;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = eval(x2).0;
        }
    }
    let mut d = 0.5 * (lo + hi);
    let mut res = eval(d);
    let at_zero = eval(0.0);
    if at_zero.0 <= res.0 {
        d = 0.0;
        res = at_zero;
    }
    Ok(OrderFit {
        k: res.1,
        d,
        a: res.2.exp(),
        misfit: res.0,
    })
}

fn regress(samples: &[(f64, f64)], d: f64) -> (f64, f64) {
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| (s.1 - d).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let k = sxy / sxx;
    (k, my - k * mx)
}

/// Picks `samples[start..start + len]` after sorting by descending scale,
/// mirroring how marker windows are described for refinement plots.
pub fn window(samples: &[(f64, f64)], start: usize, len: usize) -> Vec<(f64, f64)> {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| b.0.total_cmp(&a.0));
    s.into_iter().skip(start).take(len).collect()
}

pub fn write_metrics_csv<W: Write>(records: &[MetricsRecord], mut out: W) -> Result<()> {
    writeln!(out, "t,rel_error,rel_energy,c,rho")?;
    let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_real(r.t),
            fmt_real(r.rel_error),
            fmt_real(r.rel_energy),
            opt(r.c_current),
            opt(r.rho_at_tune)
        )?;
    }
    Ok(())
}
