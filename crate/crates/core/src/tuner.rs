//! Selection of the hyperviscosity constant: the smallest `c` for which the
//! evolution map has spectral radius at most one.

use std::io::Write;

use crate::operators::{stabilised_operator, HyperviscosityConfig, SparseOperator};
use crate::spectral::{
    build_evolution, is_stable, spectral_radius, SpectralConfig, StabilityReport, STABILITY_SLACK,
};
use crate::textio::fmt_real;
use crate::{Error, Result};

/// How a spectral estimate that did not converge within the restart budget
/// is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unconverged {
    /// Judged by its best estimate of `rho`.
    #[default]
    BestEstimate,
    /// Always unstable.
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TunerConfig {
    pub c_init: f64,
    pub sweep_factor: f64,
    pub max_sweep: usize,
    /// Bisection stops once `c_hi / c_lo <= 1 + bisect_tol`.
    pub bisect_tol: f64,
    pub max_bisect: usize,
    pub num_eigs: usize,
    #[serde(default)]
    pub unconverged: Unconverged,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig {
            c_init: 0.3,
            sweep_factor: 10.0,
            max_sweep: 8,
            bisect_tol: 0.05,
            max_bisect: 64,
            num_eigs: 40,
            unconverged: Unconverged::BestEstimate,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.c_init > 0.0
            && self.c_init.is_finite()
            && self.sweep_factor > 1.0
            && self.bisect_tol > 0.0
            && self.bisect_tol < 1.0
            && self.max_sweep > 0
            && self.max_bisect > 0
            && self.num_eigs > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("tuner config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Sweep,
    Bisect,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Sweep => "sweep",
            Phase::Bisect => "bisect",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Evaluation {
    pub c: f64,
    pub rho: f64,
    pub converged: bool,
    pub stable: bool,
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuneStatus {
    Ok,
    AlreadyStable,
    NoStableC,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TuneResult {
    /// `None` when no stable constant was found.
    pub c_opt: Option<f64>,
    pub bracket: Option<(f64, f64)>,
    pub evaluations: Vec<Evaluation>,
    pub status: TuneStatus,
}

impl TuneResult {
    /// The spectral radius recorded at `c_opt`.
    pub fn rho_at_opt(&self) -> Option<f64> {
        let c = self.c_opt?;
        self.evaluations
            .iter()
            .rev()
            .find(|e| e.c == c)
            .map(|e| e.rho)
    }

    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "c,rho,phase")?;
        for e in &self.evaluations {
            writeln!(out, "{},{},{}", fmt_real(e.c), fmt_real(e.rho), e.phase)?;
        }
        Ok(())
    }
}

struct Prober<P> {
    probe: P,
    policy: Unconverged,
    evaluations: Vec<Evaluation>,
}

impl<P: FnMut(f64) -> Result<StabilityReport>> Prober<P> {
    fn stable(&mut self, c: f64, phase: Phase) -> Result<bool> {
        let report = match (self.probe)(c) {
            Err(Error::Factorisation { .. }) => StabilityReport::singular(),
            other => other?,
        };
        let stable = match self.policy {
            Unconverged::BestEstimate => is_stable(report.rho),
            Unconverged::Unstable => report.is_stable(),
        };
        log::debug!(
            "tuner {phase} c={c:e} rho={} converged={}",
            report.rho,
            report.converged
        );
        self.evaluations.push(Evaluation {
            c,
            rho: report.rho,
            converged: report.converged,
            stable,
            phase,
        });
        Ok(stable)
    }
}

/// Outcome of the coarse sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bracket {
    AlreadyStable,
    NoStableC,
    /// `rho(lo) > 1` (or `lo = 0` when every probe down to the last was
    /// stable) and `rho(hi) <= 1`.
    Found(f64, f64),
}

/// Coarse multiplicative sweep around `c_init`. The first evaluation is
/// always at `c = 0`.
pub fn bracket<P>(probe: P, cfg: &TunerConfig) -> Result<(Bracket, Vec<Evaluation>)>
where
    P: FnMut(f64) -> Result<StabilityReport>,
{
    let mut pr = Prober {
        probe,
        policy: cfg.unconverged,
        evaluations: Vec::new(),
    };
    let b = sweep(&mut pr, cfg)?;
    Ok((b, pr.evaluations))
}

fn sweep<P: FnMut(f64) -> Result<StabilityReport>>(
    pr: &mut Prober<P>,
    cfg: &TunerConfig,
) -> Result<Bracket> {
    cfg.validate()?;
    if pr.stable(0.0, Phase::Sweep)? {
        return Ok(Bracket::AlreadyStable);
    }
    let mut c = cfg.c_init;
    if pr.stable(c, Phase::Sweep)? {
        // walk down to the lowest stable decade
        for _ in 0..cfg.max_sweep {
            let lower = c / cfg.sweep_factor;
            if !pr.stable(lower, Phase::Sweep)? {
                return Ok(Bracket::Found(lower, c));
            }
            c = lower;
        }
        return Ok(Bracket::Found(0.0, c));
    }
    for _ in 0..cfg.max_sweep {
        let upper = c * cfg.sweep_factor;
        if pr.stable(upper, Phase::Sweep)? {
            return Ok(Bracket::Found(c, upper));
        }
        c = upper;
    }
    Ok(Bracket::NoStableC)
}

/// Smallest stable `c`, located by a coarse sweep followed by bisection in
/// `log(c)`. `probe` maps `c` to the stability report of the corresponding
/// evolution map.
pub fn find_c_opt<P>(probe: P, cfg: &TunerConfig) -> Result<TuneResult>
where
    P: FnMut(f64) -> Result<StabilityReport>,
{
    let mut pr = Prober {
        probe,
        policy: cfg.unconverged,
        evaluations: Vec::new(),
    };
    let (mut lo, mut hi) = match sweep(&mut pr, cfg)? {
        Bracket::AlreadyStable => {
            return Ok(TuneResult {
                c_opt: Some(0.0),
                bracket: None,
                evaluations: pr.evaluations,
                status: TuneStatus::AlreadyStable,
            })
        }
        Bracket::NoStableC => {
            return Ok(TuneResult {
                c_opt: None,
                bracket: None,
                evaluations: pr.evaluations,
                status: TuneStatus::NoStableC,
            })
        }
        Bracket::Found(lo, hi) => (lo, hi),
    };
    if lo > 0.0 {
        let mut iters = 0;
        while hi / lo > 1.0 + cfg.bisect_tol && iters < cfg.max_bisect {
            let mid = (lo * hi).sqrt();
            if pr.stable(mid, Phase::Bisect)? {
                hi = mid;
            } else {
                lo = mid;
            }
            iters += 1;
        }
    }
    Ok(TuneResult {
        c_opt: Some(hi),
        bracket: Some((lo, hi)),
        evaluations: pr.evaluations,
        status: TuneStatus::Ok,
    })
}

/// Upper bound on bisection steps for a bracket `(lo, hi)`.
pub fn bisection_bound(lo: f64, hi: f64, tol: f64) -> usize {
    ((hi / lo).ln() / (1.0 + tol).ln()).log2().ceil().max(0.0) as usize + 1
}

/// `true` on steps where `c_opt` is recomputed.
pub fn retune_schedule(step: usize, chi: usize) -> bool {
    assert!(chi >= 1, "retune period must be positive");
    step.is_multiple_of(chi)
}

/// Probe for [`find_c_opt`] that builds `I - dt * D_hat(c)` with
/// `D_hat(c) = -d_adv + (-1)^(alpha+1) c h^(2 alpha) d_hip` and measures
/// its spectral radius. Arnoldi stops at the first converged eigenvalue
/// outside the unit circle unless `spectral` sets its own exit.
pub fn evolution_probe<'a>(
    d_adv: &'a SparseOperator,
    d_hip: &'a SparseOperator,
    alpha: u32,
    h: f64,
    dt: f64,
    boundary: &'a [usize],
    spectral: SpectralConfig,
) -> impl FnMut(f64) -> Result<StabilityReport> + 'a {
    let spectral = SpectralConfig {
        early_exit_above: spectral.early_exit_above.or(Some(1.0 + STABILITY_SLACK)),
        ..spectral
    };
    move |c| {
        let hv = HyperviscosityConfig::new(alpha, c, h)?;
        let d_hat = stabilised_operator(d_adv, d_hip, &hv)?;
        let map = build_evolution(&d_hat, dt, boundary)?;
        spectral_radius(&map, &spectral)
    }
}
