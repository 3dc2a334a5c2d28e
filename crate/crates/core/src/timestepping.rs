//! Backward Euler drivers: linear advection on the torus and the linearised
//! Burgers' equation on the unit square.

use std::collections::HashMap;
use std::io::Write;

use crate::geometry::{find_stencils, NodeSet, StencilTable};
use crate::local_approx::{OperatorKind, OperatorSpec};
use crate::metrics::{relative_energy, relative_l2_error, MetricsRecord};
use crate::operators::{assemble, stabilised_operator, HyperviscosityConfig, SparseOperator};
use crate::spectral::{build_evolution, EvolutionMap, SpectralConfig};
use crate::textio::fmt_real;
use crate::tuner::{
    evolution_probe, find_c_opt, retune_schedule, TuneResult, TuneStatus, TunerConfig,
};
use crate::{Error, Result};

/// `||u||_inf` beyond which a run is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Nodal field, one vector per component, at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub values: Vec<Vec<f64>>,
    pub t: f64,
}

impl FieldState {
    pub fn scalar(values: Vec<f64>, t: f64) -> Self {
        FieldState {
            values: vec![values],
            t,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0f64, |m, v| {
            if v.is_nan() {
                f64::NAN
            } else {
                m.max(v.abs())
            }
        })
    }

    pub fn is_divergent(&self) -> bool {
        let m = self.max_abs();
        !(m <= DIVERGENCE_THRESHOLD)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum CMode {
    Fixed(f64),
    /// Tuned at the start (advection) or every `chi` steps (Burgers).
    Adaptive {
        tuner: TunerConfig,
        chi: usize,
    },
}

/// Stencil parameters of the transport and hyperviscosity operators.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SchemeConfig {
    pub k_adv: u32,
    pub m_adv: u32,
    pub n_adv: usize,
    /// Defaults to `2 alpha + 1` when unset.
    pub k_hyp: Option<u32>,
    pub m_hyp: u32,
    pub n_hyp: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            k_adv: 3,
            m_adv: 2,
            n_adv: 12,
            k_hyp: None,
            m_hyp: 2,
            n_hyp: 30,
        }
    }
}

impl SchemeConfig {
    pub fn transport(&self, kind: OperatorKind) -> Result<OperatorSpec> {
        OperatorSpec::new(kind, self.k_adv, self.m_adv, self.n_adv)
    }

    pub fn hyperviscosity(&self, alpha: u32) -> Result<OperatorSpec> {
        OperatorSpec::new(
            OperatorKind::Hyperviscosity(alpha),
            self.k_hyp.unwrap_or(2 * alpha + 1),
            self.m_hyp,
            self.n_hyp,
        )
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub t_final: f64,
    pub alpha: u32,
    pub c_mode: CMode,
    /// Times at which metrics and snapshots are taken, rounded to the
    /// nearest step. The initial and final times are always recorded.
    pub snapshot_times: Vec<f64>,
    pub spectral: SpectralConfig,
    pub scheme: SchemeConfig,
    /// Support radius of the advected bump.
    pub bump_radius: f64,
}

impl StepperConfig {
    pub fn new(dt: f64, t_final: f64, alpha: u32, c_mode: CMode) -> Self {
        StepperConfig {
            dt,
            t_final,
            alpha,
            c_mode,
            snapshot_times: Vec::new(),
            spectral: SpectralConfig::default(),
            scheme: SchemeConfig::default(),
            bump_radius: BUMP_RADIUS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_final >= self.dt * (1.0 - 1e-9)) || self.alpha == 0 {
            return Err(Error::InvalidParameter(format!(
                "stepper dt={} T={} alpha={}",
                self.dt, self.t_final, self.alpha
            )));
        }
        if !(self.bump_radius > 0.0 && self.bump_radius <= 0.5) {
            return Err(Error::InvalidParameter(format!(
                "bump radius {} outside (0, 0.5]",
                self.bump_radius
            )));
        }
        match &self.c_mode {
            CMode::Fixed(c) if !(*c >= 0.0) => Err(Error::InvalidParameter(format!("c = {c}"))),
            CMode::Adaptive { chi: 0, .. } => {
                Err(Error::InvalidParameter("chi must be at least 1".into()))
            }
            CMode::Adaptive { tuner, .. } => tuner.validate(),
            _ => Ok(()),
        }
    }

    pub fn num_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    fn snapshot_steps(&self) -> Vec<usize> {
        let last = self.num_steps();
        let mut s: Vec<usize> = self
            .snapshot_times
            .iter()
            .map(|t| ((t / self.dt).round() as usize).min(last))
            .collect();
        s.push(0);
        s.push(last);
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// Per-node stencil tables, one per distinct stencil size.
pub struct StencilCache<'a> {
    nodes: &'a NodeSet,
    tables: HashMap<usize, StencilTable>,
}

impl<'a> StencilCache<'a> {
    pub fn new(nodes: &'a NodeSet) -> Self {
        StencilCache {
            nodes,
            tables: HashMap::new(),
        }
    }

    pub fn get(&mut self, n: usize) -> Result<&StencilTable> {
        if !self.tables.contains_key(&n) {
            self.tables.insert(n, find_stencils(self.nodes, n)?);
        }
        Ok(&self.tables[&n])
    }

    pub fn assemble(&mut self, spec: &OperatorSpec) -> Result<SparseOperator> {
        let nodes = self.nodes;
        let st = self.get(spec.n)?;
        assemble(nodes, st, spec)
    }
}

/// One backward Euler step. With `boundary_values`, the boundary entries of
/// the result are set from it exactly.
pub fn step_linear(
    map: &EvolutionMap,
    state: &FieldState,
    boundary_values: Option<&[Vec<f64>]>,
) -> Result<FieldState> {
    let n = map.dim();
    if let Some(v) = state.values.iter().find(|v| v.len() != n) {
        return Err(Error::DimensionMismatch(n, v.len()));
    }
    let values = match boundary_values {
        None => state.values.iter().map(|u| map.apply(u)).collect(),
        Some(g) => {
            if g.len() != state.values.len() {
                return Err(Error::DimensionMismatch(state.values.len(), g.len()));
            }
            state
                .values
                .iter()
                .zip(g)
                .map(|(u, g)| map.apply_with_boundary(u, g))
                .collect()
        }
    };
    let next = FieldState {
        values,
        t: state.t + map.dt(),
    };
    if next.is_divergent() {
        return Err(Error::Diverged { t: next.t });
    }
    Ok(next)
}

/// Default support radius of the advected bump.
pub const BUMP_RADIUS: f64 = 0.1;

/// Compactly supported bump of radius `r_bump` centred in the unit torus.
pub fn bump_ic(x: [f64; 2], r_bump: f64, normalise: bool) -> f64 {
    let d = [x[0] - 0.5, x[1] - 0.5].map(|v| v - v.round());
    let r2 = d[0] * d[0] + d[1] * d[1];
    let rr = r_bump * r_bump;
    if r2 >= rr {
        return 0.0;
    }
    let expo = |r2: f64| (1.0 - rr * (r2 - rr)) / (r2 - rr);
    if normalise {
        (expo(r2) - expo(0.0)).exp()
    } else {
        expo(r2).exp()
    }
}

/// Closed-form Burgers' solution used for initial and boundary data:
/// `u1 = 3/4 - g`, `u2 = 3/4 + g` with
/// `g = 1 / (4 (1 + exp(Re/32 (-t - 4 x1 + 4 x2))))`.
pub fn exact_burgers(x: [f64; 2], t: f64, re: f64) -> [f64; 2] {
    let e = re / 32.0 * (-t - 4.0 * x[0] + 4.0 * x[1]);
    let term = if e > 700.0 {
        0.0
    } else if e < -700.0 {
        0.25
    } else {
        1.0 / (4.0 * (1.0 + e.exp()))
    };
    [0.75 - term, 0.75 + term]
}

/// Field recorded at one snapshot time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub state: FieldState,
    pub exact: Vec<Vec<f64>>,
}

impl Snapshot {
    /// `x,y,u` for scalar fields, `x,y,u1,u2,err_l1` for two components.
    pub fn write_csv<W: Write>(&self, nodes: &NodeSet, mut out: W) -> Result<()> {
        let v = &self.state.values;
        if v.len() == 1 {
            writeln!(out, "x,y,u")?;
            for (i, p) in nodes.points().iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{}",
                    fmt_real(p[0]),
                    fmt_real(p[1]),
                    fmt_real(v[0][i])
                )?;
            }
        } else {
            writeln!(out, "x,y,u1,u2,err_l1")?;
            for (i, p) in nodes.points().iter().enumerate() {
                let err: f64 = (0..v.len())
                    .map(|k| (v[k][i] - self.exact[k][i]).abs())
                    .sum();
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    fmt_real(p[0]),
                    fmt_real(p[1]),
                    fmt_real(v[0][i]),
                    fmt_real(v[1][i]),
                    fmt_real(err)
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<MetricsRecord>,
    pub snapshots: Vec<Snapshot>,
    /// Last state reached (the divergent one when the run blew up).
    pub final_state: FieldState,
    /// Time at which divergence detection tripped.
    pub diverged_at: Option<f64>,
    /// `(step, result)` for every tuning performed.
    pub tunes: Vec<(usize, TuneResult)>,
    /// `(step, c)` whenever the constant in use changed.
    pub c_history: Vec<(usize, f64)>,
}

impl RunOutcome {
    pub fn last_record(&self) -> &MetricsRecord {
        self.records
            .last()
            .expect("runs always record the initial state")
    }
}

fn record(
    state: &FieldState,
    exact: &[Vec<f64>],
    c: Option<f64>,
    rho: Option<f64>,
) -> Result<MetricsRecord> {
    let uh: Vec<f64> = state.values.concat();
    let u: Vec<f64> = exact.concat();
    Ok(MetricsRecord {
        t: state.t,
        rel_error: relative_l2_error(&uh, &u)?,
        rel_energy: relative_energy(&uh, &u)?,
        c_current: c,
        rho_at_tune: rho,
    })
}

/// `beta_x D_x + beta_y D_y`; zero velocity components are not assembled.
pub fn advection_operator(
    cache: &mut StencilCache<'_>,
    beta: [f64; 2],
    scheme: &SchemeConfig,
) -> Result<SparseOperator> {
    let mut ops = Vec::new();
    for (b, kind) in beta
        .into_iter()
        .zip([OperatorKind::PartialX, OperatorKind::PartialY])
    {
        if b != 0.0 {
            ops.push((b, cache.assemble(&scheme.transport(kind)?)?));
        }
    }
    if ops.is_empty() {
        return Ok(SparseOperator::zeros(cache.nodes.len()));
    }
    let terms: Vec<(f64, &SparseOperator)> = ops.iter().map(|(b, d)| (*b, d)).collect();
    SparseOperator::linear_combination(&terms)
}

/// `diag(u1) D_x + diag(u2) D_y - Re^-1 Lap`, the Burgers' transport
/// operator linearised about the velocity `u`.
pub fn linearised_burgers(
    dx: &SparseOperator,
    dy: &SparseOperator,
    lap: &SparseOperator,
    u: &[Vec<f64>],
    re: f64,
) -> Result<SparseOperator> {
    SparseOperator::linear_combination(&[
        (1.0, &dx.scale_rows(&u[0])?),
        (1.0, &dy.scale_rows(&u[1])?),
        (-1.0 / re, lap),
    ])
}

/// Linear advection `u_t + beta . grad u = 0` on the torus with the bump
/// initial condition; `c` is fixed or tuned once before the first step.
pub fn run_advection(nodes: &NodeSet, beta: [f64; 2], cfg: &StepperConfig) -> Result<RunOutcome> {
    let mut cache = StencilCache::new(nodes);
    run_advection_with(nodes, &mut cache, beta, cfg)
}

pub fn run_advection_with(
    nodes: &NodeSet,
    cache: &mut StencilCache<'_>,
    beta: [f64; 2],
    cfg: &StepperConfig,
) -> Result<RunOutcome> {
    cfg.validate()?;
    if !nodes.boundary_ids().is_empty() {
        return Err(Error::InvalidParameter(
            "advection runs on the periodic torus".into(),
        ));
    }
    let d_adv = advection_operator(cache, beta, &cfg.scheme)?;
    let d_hip = cache.assemble(&cfg.scheme.hyperviscosity(cfg.alpha)?)?;
    let h = nodes.h();

    let mut tunes = Vec::new();
    let (c, rho) = match &cfg.c_mode {
        CMode::Fixed(c) => (*c, None),
        CMode::Adaptive { tuner, .. } => {
            let spectral = SpectralConfig {
                num_eigs: tuner.num_eigs,
                ..cfg.spectral
            };
            let res = find_c_opt(
                evolution_probe(&d_adv, &d_hip, cfg.alpha, h, cfg.dt, &[], spectral),
                tuner,
            )?;
            let c = match (res.status, res.c_opt) {
                (TuneStatus::NoStableC, _) | (_, None) => {
                    let c_max = res.evaluations.iter().map(|e| e.c).fold(0.0, f64::max);
                    return Err(Error::NoStableC { c_max });
                }
                (_, Some(c)) => c,
            };
            let rho = res.rho_at_opt();
            log::info!(
                "advection: c_opt = {c} (rho = {rho:?}, {} evaluations)",
                res.evaluations.len()
            );
            tunes.push((0, res));
            (c, rho)
        }
    };
    let d_hat = stabilised_operator(&d_adv, &d_hip, &HyperviscosityConfig::new(cfg.alpha, c, h)?)?;
    let map = build_evolution(&d_hat, cfg.dt, &[])?;

    let exact_at = |t: f64| -> Vec<Vec<f64>> {
        vec![nodes
            .points()
            .iter()
            .map(|p| {
                bump_ic(
                    [p[0] - beta[0] * t, p[1] - beta[1] * t],
                    cfg.bump_radius,
                    true,
                )
            })
            .collect()]
    };
    let mut state = FieldState {
        values: exact_at(0.0),
        t: 0.0,
    };
    let snaps = cfg.snapshot_steps();
    let mut out = RunOutcome {
        records: Vec::new(),
        snapshots: Vec::new(),
        final_state: state.clone(),
        diverged_at: None,
        tunes,
        c_history: vec![(0, c)],
    };
    let take = |state: &FieldState, out: &mut RunOutcome, first: bool| -> Result<()> {
        let exact = exact_at(state.t);
        out.records.push(record(
            state,
            &exact,
            Some(c),
            if first { rho } else { None },
        )?);
        out.snapshots.push(Snapshot {
            state: state.clone(),
            exact,
        });
        Ok(())
    };
    take(&state, &mut out, true)?;
    for step in 1..=cfg.num_steps() {
        match step_linear(&map, &state, None) {
            Ok(next) => state = next,
            Err(Error::Diverged { t }) => {
                log::warn!("advection diverged at t = {t}");
                out.diverged_at = Some(t);
                state.t = t;
                break;
            }
            Err(e) => return Err(e),
        }
        state.t = step as f64 * cfg.dt;
        if snaps.binary_search(&step).is_ok() {
            take(&state, &mut out, false)?;
        }
    }
    out.final_state = state;
    Ok(out)
}

/// Viscous Burgers' equation on the unit square, linearised about the
/// previous velocity, with Dirichlet data from [`exact_burgers`].
pub fn run_burgers(nodes: &NodeSet, re: f64, cfg: &StepperConfig) -> Result<RunOutcome> {
    let mut cache = StencilCache::new(nodes);
    run_burgers_with(nodes, &mut cache, re, cfg)
}

pub fn run_burgers_with(
    nodes: &NodeSet,
    cache: &mut StencilCache<'_>,
    re: f64,
    cfg: &StepperConfig,
) -> Result<RunOutcome> {
    cfg.validate()?;
    if !(re > 0.0) {
        return Err(Error::InvalidParameter(format!("Re = {re}")));
    }
    if nodes.boundary_ids().is_empty() {
        return Err(Error::InvalidParameter(
            "Burgers' runs need a bounded node set".into(),
        ));
    }
    let dx = cache.assemble(&cfg.scheme.transport(OperatorKind::PartialX)?)?;
    let dy = cache.assemble(&cfg.scheme.transport(OperatorKind::PartialY)?)?;
    let lap = cache.assemble(&cfg.scheme.transport(OperatorKind::Laplacian)?)?;
    let d_hip = cache.assemble(&cfg.scheme.hyperviscosity(cfg.alpha)?)?;
    let h = nodes.h();
    let boundary = nodes.boundary_ids();

    let exact_at = |t: f64| -> Vec<Vec<f64>> {
        let f: Vec<[f64; 2]> = nodes
            .points()
            .iter()
            .map(|&p| exact_burgers(p, t, re))
            .collect();
        vec![
            f.iter().map(|v| v[0]).collect(),
            f.iter().map(|v| v[1]).collect(),
        ]
    };
    let mut state = FieldState {
        values: exact_at(0.0),
        t: 0.0,
    };
    let snaps = cfg.snapshot_steps();
    let mut out = RunOutcome {
        records: Vec::new(),
        snapshots: Vec::new(),
        final_state: state.clone(),
        diverged_at: None,
        tunes: Vec::new(),
        c_history: Vec::new(),
    };
    let mut c = match cfg.c_mode {
        CMode::Fixed(c) => Some(c),
        CMode::Adaptive { .. } => None,
    };
    let mut rho_pending = None;
    {
        let exact = exact_at(0.0);
        out.snapshots.push(Snapshot {
            state: state.clone(),
            exact: exact.clone(),
        });
        // initial row filled in after the first tune
        out.records.push(record(&state, &exact, c, None)?);
    }

    for step in 0..cfg.num_steps() {
        // transport part, advection minus diffusion: D_hat = -d_eff + hyperviscosity
        let a = linearised_burgers(&dx, &dy, &lap, &state.values, re)?;
        if let CMode::Adaptive { tuner, chi } = &cfg.c_mode {
            if retune_schedule(step, *chi) {
                let tcfg = TunerConfig {
                    c_init: c.filter(|&v| v > 0.0).unwrap_or(tuner.c_init),
                    ..*tuner
                };
                let spectral = SpectralConfig {
                    num_eigs: tuner.num_eigs,
                    ..cfg.spectral
                };
                let res = find_c_opt(
                    evolution_probe(&a, &d_hip, cfg.alpha, h, cfg.dt, boundary, spectral),
                    &tcfg,
                );
                match res {
                    Ok(r) if r.c_opt.is_some() => {
                        let new_c = r.c_opt.unwrap();
                        rho_pending = r.rho_at_opt();
                        log::debug!("burgers step {step}: c_opt = {new_c}");
                        c = Some(new_c);
                        out.tunes.push((step, r));
                    }
                    other => {
                        let why = match &other {
                            Ok(r) => format!("{:?}", r.status),
                            Err(e) => e.to_string(),
                        };
                        log::warn!(
                            "burgers step {step}: tuning failed ({why}); keeping c = {:?}",
                            c
                        );
                        if let Ok(r) = other {
                            out.tunes.push((step, r));
                        }
                    }
                }
            }
        }
        let c_now = c.unwrap_or(0.0);
        if out.c_history.last().map(|&(_, v)| v) != Some(c_now) {
            out.c_history.push((step, c_now));
        }
        if step == 0 {
            let r = &mut out.records[0];
            r.c_current = Some(c_now);
            r.rho_at_tune = rho_pending.take();
        }
        let d_hat =
            stabilised_operator(&a, &d_hip, &HyperviscosityConfig::new(cfg.alpha, c_now, h)?)?;
        let map = build_evolution(&d_hat, cfg.dt, boundary)?;
        let t_next = (step + 1) as f64 * cfg.dt;
        let g = exact_at(t_next);
        match step_linear(&map, &state, Some(&g)) {
            Ok(mut next) => {
                next.t = t_next;
                state = next;
            }
            Err(Error::Diverged { t }) => {
                log::warn!("burgers diverged at t = {t}");
                out.diverged_at = Some(t);
                state.t = t;
                break;
            }
            Err(e) => return Err(e),
        }
        if snaps.binary_search(&(step + 1)).is_ok() {
            out.records
                .push(record(&state, &g, Some(c_now), rho_pending.take())?);
            out.snapshots.push(Snapshot {
                state: state.clone(),
                exact: g,
            });
        }
    }
    out.final_state = state;
    Ok(out)
}
