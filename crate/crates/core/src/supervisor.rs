//! Monitoring signals, observer selection, and the static and dynamic
//! estimation runs.
//!
//! The plant, the N observer states and the N monitors are integrated as one
//! flat state `[x | x̂_1 … x̂_N | μ_1 … μ_N]`. The input is sampled at the
//! start of each step and held across the step's stages.

use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;
use thiserror::Error;

use crate::gain_design::{self, CCCertificate, GainDesignError, GainTable, SynthesisConfig};
use crate::input::InputSignal;
use crate::models::{
    euclid_norm, inf_norm, BoundednessMonitor, LinearPlant, LurePlant, ModelError, Plant,
};
use crate::observers::{
    bank_output_errors, CircleCriterionObserver, LuenbergerObserver, Observer, ObserverBank,
    ObserverError,
};
use crate::odesim::{self, Dynamics, SimConfig, SimError};
use crate::sampling::{self, ParamBox, SampledParamSet, SamplingError, ZoomState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SupervisorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
    #[error(transparent)]
    Gain(#[from] GainDesignError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("invalid run setup: {0}")]
    Setup(String),
}

/// `μ̇_i = −λ μ_i + |ỹ_i|∞²`.
pub fn monitor_rhs(mu: f64, y_err: &[f64], lambda: f64) -> f64 {
    let e = inf_norm(y_err);
    -lambda * mu + e * e
}

/// `argmin_i μ_i`, lowest index on ties (0-based).
pub fn select(mu: &[f64]) -> usize {
    let mut best = 0;
    for (i, &m) in mu.iter().enumerate() {
        if m < mu[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorBank {
    pub mu: Vec<f64>,
    pub lambda: f64,
}

impl MonitorBank {
    pub fn new(n: usize, lambda: f64) -> Self {
        Self {
            mu: vec![0.0; n],
            lambda,
        }
    }

    pub fn reset(&mut self) {
        self.mu.fill(0.0);
    }

    pub fn select(&self) -> usize {
        select(&self.mu)
    }
}

/// Produces an observer (with gains) for a nominal parameter.
pub trait ObserverDesigner {
    fn design(&mut self, p: &[f64]) -> Result<Observer, SupervisorError>;
}

/// Luenberger gains by eigenvalue assignment at each `p_i`.
#[derive(Debug, Clone)]
pub struct LuenbergerDesigner {
    pub plant: LinearPlant,
    pub targets: Vec<Complex64>,
    pub nu: f64,
}

impl ObserverDesigner for LuenbergerDesigner {
    fn design(&mut self, p: &[f64]) -> Result<Observer, SupervisorError> {
        let a = (self.plant.a_of_p)(p);
        let c = (self.plant.c_of_p)(p);
        let (l, cert) = gain_design::design_luenberger(&a, &c, &self.targets, self.nu)?;
        let mut obs = LuenbergerObserver::new(&self.plant, p, l)?;
        obs.certificate = Some(cert);
        Ok(Observer::Luenberger(obs))
    }
}

/// Circle-criterion gains: the gain-table entry covering `p` (or the
/// nearest one) is re-verified at `p`; if verification fails, synthesis
/// starts from it.
#[derive(Debug, Clone)]
pub struct CircleCriterionDesigner {
    pub plant: LurePlant,
    pub table: GainTable,
    pub synthesis: SynthesisConfig,
}

impl CircleCriterionDesigner {
    /// Verified LMI data for `p`: the table entry if it certifies at `p`,
    /// otherwise a synthesis warm-started from it.
    pub fn certify(&self, p: &[f64]) -> Result<CCCertificate, SupervisorError> {
        let mats = self.plant.matrices(p);
        let warm = self
            .table
            .lookup("circle_criterion", p)
            .ok()
            .map(|e| e.cc_data())
            .transpose()?;
        let cert = match warm.as_ref().map(|d| gain_design::verify_cc_gains(d, &mats, None)) {
            Some(Ok(c)) => c,
            _ => {
                log::info!("re-synthesizing circle-criterion gains at p = {p:?}");
                let cfg = SynthesisConfig {
                    warm_start: warm,
                    ..self.synthesis.clone()
                };
                gain_design::synthesize_cc_gains(&mats, &self.plant.sector_upper(), &cfg)?
            }
        };
        Ok(cert)
    }
}

impl ObserverDesigner for CircleCriterionDesigner {
    fn design(&mut self, p: &[f64]) -> Result<Observer, SupervisorError> {
        let cert = self.certify(p)?;
        let mut obs =
            CircleCriterionObserver::new(&self.plant, p, cert.data.k.clone(), cert.data.l.clone())?;
        obs.certificate = Some(cert.assumption2()?);
        Ok(Observer::CircleCriterion(obs))
    }
}

/// Builds a bank by designing one observer per grid point.
pub fn build_bank(
    designer: &mut dyn ObserverDesigner,
    points: &[Vec<f64>],
) -> Result<ObserverBank, SupervisorError> {
    let obs = points
        .iter()
        .map(|p| designer.design(p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ObserverBank::new(obs)?)
}

/// Everything a run needs besides the observers.
pub struct RunSetup<'a> {
    pub plant: &'a dyn Plant,
    /// Parameter of the simulated plant.
    pub p_true: Vec<f64>,
    pub x0: Vec<f64>,
    /// Common initial state of every observer.
    pub xhat0: Vec<f64>,
    pub lambda: f64,
    pub sim: SimConfig,
    pub input: &'a dyn InputSignal,
    /// Reference used only to fill the error columns of the trace.
    pub p_star_log: Option<Vec<f64>>,
    pub record_output_errors: bool,
    pub guard_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    /// 0-based index of the selected observer.
    pub sigma: usize,
    pub p_hat: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    pub mu_min: f64,
    pub err_p_inf: f64,
    pub err_x_inf: f64,
    pub zoom_k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoomEvent {
    pub k: usize,
    pub t: f64,
    /// `p̂(t_k⁻)`.
    pub p_hat: Vec<f64>,
    /// `|p̂(t_k⁻) − p*|∞` (NaN without a logging reference).
    pub err_p_inf_before: f64,
    pub prev_box: ParamBox,
    pub bx: ParamBox,
    /// Largest `|x̂_i(t_k) − x̂_i(t_k⁻)|` over the bank.
    pub state_jump: f64,
    pub mu_after: Vec<f64>,
    pub nested: bool,
    pub contains_p_star: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisorTrace {
    pub n_p: usize,
    pub n_x: usize,
    pub records: Vec<TraceRecord>,
    pub zoom_events: Vec<ZoomEvent>,
    /// Observer parameters at the end of the run.
    pub final_params: Vec<Vec<f64>>,
    /// Per record, per observer output error (when requested).
    pub output_errors: Option<Vec<Vec<Vec<f64>>>>,
    pub plant_max_abs: f64,
    pub wall_seconds: f64,
}

pub const CSV_FIXED_HEAD: [&str; 2] = ["t", "sigma"];

impl SupervisorTrace {
    pub fn csv_header(n_p: usize, n_x: usize) -> Vec<String> {
        let mut h: Vec<String> = CSV_FIXED_HEAD.iter().map(|s| s.to_string()).collect();
        h.extend((1..=n_p).map(|j| format!("p_hat_{j}")));
        h.extend((1..=n_x).map(|j| format!("x_hat_{j}")));
        h.extend((1..=n_x).map(|j| format!("x_{j}")));
        h.extend(["mu_min", "err_p_inf", "err_x_inf", "zoom_k"].map(String::from));
        h
    }

    /// Trace CSV; `sigma` is written 1-based.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::csv_header(self.n_p, self.n_x).join(","))?;
        for r in &self.records {
            let mut row = vec![r.t.to_string(), (r.sigma + 1).to_string()];
            row.extend(r.p_hat.iter().map(f64::to_string));
            row.extend(r.x_hat.iter().map(f64::to_string));
            row.extend(r.x.iter().map(f64::to_string));
            row.push(r.mu_min.to_string());
            row.push(r.err_p_inf.to_string());
            row.push(r.err_x_inf.to_string());
            row.push(r.zoom_k.to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Per-observer output errors as CSV: `t, ytilde_<i>_<k>`.
    pub fn write_output_errors_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let Some(errs) = &self.output_errors else {
            return Ok(());
        };
        let n_obs = errs.first().map_or(0, |e| e.len());
        let n_y = errs.first().and_then(|e| e.first()).map_or(0, |v| v.len());
        let mut head = vec!["t".to_string()];
        for i in 1..=n_obs {
            for k in 1..=n_y {
                head.push(format!("ytilde_{i}_{k}"));
            }
        }
        writeln!(w, "{}", head.join(","))?;
        for (r, e) in self.records.iter().zip(errs) {
            let mut row = vec![r.t.to_string()];
            for v in e {
                row.extend(v.iter().map(f64::to_string));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace has at least the t = 0 record")
    }

    /// `|p̂(t_f) − p*|` (Euclidean) against `p_star`.
    pub fn final_param_error_euclid(&self, p_star: &[f64]) -> f64 {
        let d: Vec<f64> = self.last().p_hat.iter().zip(p_star).map(|(a, b)| a - b).collect();
        euclid_norm(&d)
    }

    /// `|x̃_σ(t_f)| / (max_t |x(t)| − min_t |x(t)|)` over the recorded
    /// samples, Euclidean norms.
    pub fn normalized_state_error(&self) -> f64 {
        let norms: Vec<f64> = self.records.iter().map(|r| euclid_norm(&r.x)).collect();
        let span = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - norms.iter().cloned().fold(f64::INFINITY, f64::min);
        let last = self.last();
        let d: Vec<f64> = last.x_hat.iter().zip(&last.x).map(|(a, b)| a - b).collect();
        euclid_norm(&d) / span
    }
}

struct Composite<'a> {
    plant: &'a dyn Plant,
    p_true: &'a [f64],
    bank: ObserverBank,
    input: &'a dyn InputSignal,
    lambda: f64,
    u: Vec<f64>,
    share_phi: bool,
    guard: BoundednessMonitor,
    guard_error: Option<ModelError>,
}

impl Composite<'_> {
    fn n_x(&self) -> usize {
        self.plant.n_x()
    }
    fn n_obs(&self) -> usize {
        self.bank.len()
    }
}

impl Dynamics for Composite<'_> {
    fn dim(&self) -> usize {
        let n = self.n_x();
        n + self.n_obs() * n + self.n_obs()
    }

    fn rhs(&self, _t: f64, s: &[f64], ds: &mut [f64]) {
        let n = self.n_x();
        let nb = self.n_obs();
        let (x, rest) = s.split_at(n);
        let (xhats, mu) = rest.split_at(nb * n);
        let (dx, drest) = ds.split_at_mut(n);
        let (dxhats, dmu) = drest.split_at_mut(nb * n);

        let mut y = vec![0.0; self.plant.n_y()];
        self.plant.h(x, self.p_true, &mut y);
        self.plant.f(x, self.p_true, &self.u, dx);

        let phi = match (self.share_phi, self.bank.get(0)) {
            (true, Observer::CircleCriterion(o)) => Some((o.phi)(&self.u, &y)),
            _ => None,
        };
        self.bank.rhs(xhats, &self.u, &y, phi.as_deref(), dxhats);

        let mut yhat = vec![0.0; y.len()];
        for (i, o) in self.bank.observers().iter().enumerate() {
            o.output(&xhats[i * n..(i + 1) * n], &mut yhat);
            let e = yhat
                .iter()
                .zip(&y)
                .fold(0.0_f64, |a, (p, q)| a.max((p - q).abs()));
            dmu[i] = -self.lambda * mu[i] + e * e;
        }
    }

    fn begin_step(&mut self, t: f64, s: &[f64]) {
        self.input.eval(t, &mut self.u);
        if self.guard_error.is_none() {
            if let Err(e) = self.guard.check(&s[..self.plant.n_x()]) {
                self.guard_error = Some(e);
            }
        }
    }
}

fn inf_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn check_setup(setup: &RunSetup, bank: &ObserverBank) -> Result<(), SupervisorError> {
    let p = setup.plant;
    let problems = [
        (setup.x0.len() != p.n_x(), "x0 length differs from n_x"),
        (setup.xhat0.len() != p.n_x(), "xhat0 length differs from n_x"),
        (setup.p_true.len() != p.n_p(), "p_true length differs from n_p"),
        (bank.n_x() != p.n_x(), "observer n_x differs from plant"),
        (bank.n_y() != p.n_y(), "observer n_y differs from plant"),
        (setup.input.n_u() != p.n_u(), "input width differs from n_u"),
        (!(setup.lambda > 0.0), "lambda must be > 0"),
    ];
    if let Some((_, msg)) = problems.iter().find(|(bad, _)| *bad) {
        return Err(SupervisorError::Setup(msg.to_string()));
    }
    if let Some(ps) = &setup.p_star_log {
        if ps.len() != p.n_p() {
            return Err(SupervisorError::Setup("p_star length differs from n_p".into()));
        }
    }
    Ok(())
}

struct DynamicState<'d> {
    designer: &'d mut dyn ObserverDesigner,
    zoom: ZoomState,
    m: usize,
}

fn run_inner(
    setup: &RunSetup,
    bank: ObserverBank,
    mut dynamic: Option<DynamicState<'_>>,
) -> Result<SupervisorTrace, SupervisorError> {
    check_setup(setup, &bank)?;
    let started = Instant::now();
    let n = setup.plant.n_x();
    let n_p = setup.plant.n_p();
    let nb = bank.len();
    let share_phi = matches!(bank.get(0), Observer::CircleCriterion(_));
    let mut sys = Composite {
        plant: setup.plant,
        p_true: &setup.p_true,
        bank,
        input: setup.input,
        lambda: setup.lambda,
        u: vec![0.0; setup.plant.n_u()],
        share_phi,
        guard: BoundednessMonitor::new(setup.guard_threshold),
        guard_error: None,
    };
    let mut state = vec![0.0; sys.dim()];
    state[..n].copy_from_slice(&setup.x0);
    for i in 0..nb {
        state[n + i * n..n + (i + 1) * n].copy_from_slice(&setup.xhat0);
    }

    let p_star = setup.p_star_log.clone();
    let err_p = |p_hat: &[f64]| match &p_star {
        Some(ps) => inf_diff(p_hat, ps),
        None => f64::NAN,
    };
    let mut records = Vec::new();
    let mut output_errors = setup.record_output_errors.then(Vec::new);
    let mut zoom_events = Vec::new();
    let zoom_k = std::cell::Cell::new(0usize);
    let mu_off = n + nb * n;

    let on_event = |sys: &mut Composite, k: usize, t: f64, s: &mut [f64]| {
        let Some(dy) = dynamic.as_mut() else {
            return Ok(());
        };
        let mu_left = &s[mu_off..];
        let sigma = select(mu_left);
        let p_hat = sys.bank.get(sigma).param().to_vec();
        let prev_box = dy.zoom.current_box.clone();
        let before: Vec<f64> = s[n..mu_off].to_vec();
        let grid = sampling::zoom_update(&mut dy.zoom, &p_hat, t, dy.m)?;
        for (i, p) in grid.points.iter().enumerate() {
            let obs = dy.designer.design(p)?;
            sys.bank.replace(i, obs)?;
        }
        s[mu_off..].fill(0.0);
        let bx = dy.zoom.current_box.clone();
        zoom_events.push(ZoomEvent {
            k,
            t,
            err_p_inf_before: err_p(&p_hat),
            p_hat,
            nested: prev_box.contains_box(&bx),
            contains_p_star: p_star.as_ref().map(|ps| bx.contains(ps)),
            prev_box,
            bx,
            state_jump: inf_diff(&before, &s[n..mu_off]),
            mu_after: s[mu_off..].to_vec(),
        });
        zoom_k.set(k);
        log::debug!("zoom {k} at t = {t}");
        Ok::<(), SupervisorError>(())
    };

    let on_record = |sys: &Composite, _step: usize, t: f64, s: &[f64]| {
        if let Some(e) = &sys.guard_error {
            return Err(SupervisorError::Model(e.clone()));
        }
        let mu = &s[mu_off..];
        let sigma = select(mu);
        let x = s[..n].to_vec();
        let x_hat = s[n + sigma * n..n + (sigma + 1) * n].to_vec();
        let p_hat = sys.bank.get(sigma).param().to_vec();
        if let Some(oe) = output_errors.as_mut() {
            let mut y = vec![0.0; sys.plant.n_y()];
            sys.plant.h(&x, sys.p_true, &mut y);
            oe.push(bank_output_errors(&sys.bank, &s[n..mu_off], &y));
        }
        records.push(TraceRecord {
            t,
            sigma,
            err_p_inf: err_p(&p_hat),
            err_x_inf: inf_diff(&x_hat, &x),
            mu_min: mu[sigma],
            mu: mu.to_vec(),
            p_hat,
            x_hat,
            x,
            zoom_k: zoom_k.get(),
        });
        Ok(())
    };

    odesim::run(&setup.sim, &mut sys, &mut state, on_event, on_record)?;
    sys.guard.check(&state[..n])?;
    if let Some(e) = sys.guard_error {
        return Err(e.into());
    }
    Ok(SupervisorTrace {
        n_p,
        n_x: n,
        records,
        zoom_events,
        final_params: sys.bank.params(),
        output_errors,
        plant_max_abs: sys.guard.max_abs_seen,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Static policy: a fixed bank, monitors never reset.
pub fn run_static(setup: &RunSetup, bank: ObserverBank) -> Result<SupervisorTrace, SupervisorError> {
    if setup.sim.event_period().is_some() {
        return Err(SupervisorError::Setup(
            "static runs take no update period".into(),
        ));
    }
    run_inner(setup, bank, None)
}

/// Dynamic policy: every `T_d` (the sim event period) the box zooms around
/// `p̂(t_k⁻)`, slot `i` gets grid point `i` of the new box with fresh gains,
/// observer states carry over and monitors reset.
pub fn run_dynamic(
    setup: &RunSetup,
    designer: &mut dyn ObserverDesigner,
    theta: ParamBox,
    m: usize,
    alpha: f64,
) -> Result<SupervisorTrace, SupervisorError> {
    if setup.sim.event_period().is_none() {
        return Err(SupervisorError::Setup(
            "dynamic runs need an update period".into(),
        ));
    }
    let zoom = ZoomState::new(theta, alpha)?;
    let grid = sampling::grid_sample(&zoom.current_box, m)?;
    let bank = build_bank(designer, &grid.points)?;
    run_inner(
        setup,
        bank,
        Some(DynamicState { designer, zoom, m }),
    )
}

/// Static grid helper: designs a bank over `grid_sample(theta, m)`.
pub fn static_bank(
    designer: &mut dyn ObserverDesigner,
    theta: &ParamBox,
    m: usize,
) -> Result<(SampledParamSet, ObserverBank), SupervisorError> {
    let grid = sampling::grid_sample(theta, m)?;
    let bank = build_bank(designer, &grid.points)?;
    Ok((grid, bank))
}
