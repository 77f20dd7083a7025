//! Fixed-step RK4 integration with an event grid.
//!
//! The integrator advances a flat state vector. Time is always computed as
//! `step_index * dt`, so event instants `k * event_period` are hit exactly
//! once the period has been snapped to a multiple of `dt`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("non-finite derivative at t = {t}")]
    NonFiniteDerivative { t: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    dt: f64,
    t_final: f64,
    event_period: Option<f64>,
    record_stride: usize,
}

impl SimConfig {
    /// Validates the config and snaps `event_period` to the nearest integer
    /// multiple of `dt` (logging a warning when it moves).
    pub fn new(
        dt: f64,
        t_final: f64,
        event_period: Option<f64>,
        record_stride: usize,
    ) -> Result<Self, SimError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimError::InvalidConfig(format!("dt must be > 0, got {dt}")));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(SimError::InvalidConfig(format!(
                "t_final must be > 0, got {t_final}"
            )));
        }
        if dt > t_final {
            return Err(SimError::InvalidConfig(format!(
                "dt ({dt}) must not exceed t_final ({t_final})"
            )));
        }
        if record_stride == 0 {
            return Err(SimError::InvalidConfig("record_stride must be >= 1".into()));
        }
        let event_period = match event_period {
            None => None,
            Some(td) => {
                if !(td >= dt && td.is_finite()) {
                    return Err(SimError::InvalidConfig(format!(
                        "event period ({td}) must be >= dt ({dt})"
                    )));
                }
                let k = (td / dt).round().max(1.0);
                let snapped = k * dt;
                if (snapped - td).abs() > 1e-12 * td.max(1.0) {
                    log::warn!("event period {td} snapped to {snapped} (multiple of dt = {dt})");
                }
                Some(snapped)
            }
        };
        Ok(Self {
            dt,
            t_final,
            event_period,
            record_stride,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn event_period(&self) -> Option<f64> {
        self.event_period
    }

    pub fn record_stride(&self) -> usize {
        self.record_stride
    }

    pub fn total_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Steps between events.
    pub fn event_stride(&self) -> Option<usize> {
        self.event_period
            .map(|td| ((td / self.dt).round() as usize).max(1))
    }

    /// Step indices at which events fire: `k·stride` for k ≥ 1, strictly
    /// inside the run (never at t = 0 or t_final).
    pub fn event_steps(&self) -> Vec<usize> {
        let total = self.total_steps();
        match self.event_stride() {
            None => Vec::new(),
            Some(s) => (1..).map(|k| k * s).take_while(|&j| j < total).collect(),
        }
    }
}

/// A vector field `ẋ = f(t, x)` with an optional per-step hook.
pub trait Dynamics {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]);

    /// Called once at the start of every step, before any stage evaluation.
    fn begin_step(&mut self, _t: f64, _x: &[f64]) {}
}

/// Reusable stage buffers for [`rk4_step_in_place`].
#[derive(Debug, Clone)]
pub struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// One classical RK4 step, updating `x` in place.
pub fn rk4_step_in_place<F>(
    mut rhs: F,
    x: &mut [f64],
    t: f64,
    dt: f64,
    ws: &mut Rk4Workspace,
) -> Result<(), SimError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = x.len();
    let half = 0.5 * dt;
    let Rk4Workspace {
        k1,
        k2,
        k3,
        k4,
        tmp,
    } = ws;

    rhs(t, x, k1);
    if !all_finite(k1) {
        return Err(SimError::NonFiniteDerivative { t });
    }
    for i in 0..n {
        tmp[i] = x[i] + half * k1[i];
    }
    rhs(t + half, tmp, k2);
    if !all_finite(k2) {
        return Err(SimError::NonFiniteDerivative { t: t + half });
    }
    for i in 0..n {
        tmp[i] = x[i] + half * k2[i];
    }
    rhs(t + half, tmp, k3);
    if !all_finite(k3) {
        return Err(SimError::NonFiniteDerivative { t: t + half });
    }
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    rhs(t + dt, tmp, k4);
    if !all_finite(k4) {
        return Err(SimError::NonFiniteDerivative { t: t + dt });
    }
    for i in 0..n {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

/// One classical RK4 step returning the new state.
pub fn rk4_step<F>(rhs: F, state: &[f64], t: f64, dt: f64) -> Result<Vec<f64>, SimError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(dt > 0.0) {
        return Err(SimError::InvalidConfig(format!("dt must be > 0, got {dt}")));
    }
    let mut x = state.to_vec();
    let mut ws = Rk4Workspace::new(x.len());
    rk4_step_in_place(rhs, &mut x, t, dt, &mut ws)?;
    Ok(x)
}

/// Integrates `system` from t = 0 to `t_final`.
///
/// * `on_event(system, k, t_k, state)` fires before the step that starts at
///   `t_k = k·event_period` (k ≥ 1, t_k < t_final). `state` holds the left
///   limit and may be modified.
/// * `on_record(system, step, t, state)` fires at t = 0 and after every
///   `record_stride`-th step.
///
/// Returns the final time.
pub fn run<D, E, FE, FR>(
    sim: &SimConfig,
    system: &mut D,
    state: &mut [f64],
    mut on_event: FE,
    mut on_record: FR,
) -> Result<f64, E>
where
    D: Dynamics,
    E: From<SimError>,
    FE: FnMut(&mut D, usize, f64, &mut [f64]) -> Result<(), E>,
    FR: FnMut(&D, usize, f64, &[f64]) -> Result<(), E>,
{
    if state.len() != system.dim() {
        return Err(SimError::InvalidConfig(format!(
            "state has {} entries, system expects {}",
            state.len(),
            system.dim()
        ))
        .into());
    }
    let total = sim.total_steps();
    let event_stride = sim.event_stride();
    let mut ws = Rk4Workspace::new(state.len());
    on_record(system, 0, 0.0, state)?;
    let mut event_k = 0;
    for j in 0..total {
        let t = j as f64 * sim.dt;
        if let Some(s) = event_stride {
            if j > 0 && j % s == 0 {
                event_k += 1;
                on_event(system, event_k, t, state)?;
            }
        }
        system.begin_step(t, state);
        let sys: &D = system;
        rk4_step_in_place(|tt, x, dx| sys.rhs(tt, x, dx), state, t, sim.dt, &mut ws)?;
        let step = j + 1;
        if step % sim.record_stride == 0 {
            on_record(system, step, step as f64 * sim.dt, state)?;
        }
    }
    Ok(total as f64 * sim.dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;
    impl Dynamics for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
            dx[0] = -x[0];
        }
    }

    #[test]
    fn rk4_decay_single_step() {
        let x = rk4_step(|_, x, dx| dx[0] = -x[0], &[1.0], 0.0, 0.1).unwrap();
        // 1 − h + h²/2 − h³/6 + h⁴/24 at h = 0.1
        let expected = 1.0 - 0.1 + 0.005 - 0.001 / 6.0 + 0.0001 / 24.0;
        assert!((x[0] - expected).abs() < 1e-15);
        assert!((x[0] - 0.9048375).abs() < 1e-7);
        assert!((x[0] - (-0.1f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn rk4_trivial_fields() {
        let x = rk4_step(|_, _, dx| dx[0] = 0.0, &[3.25], 0.0, 0.5).unwrap();
        assert_eq!(x[0], 3.25);
        let x = rk4_step(|_, _, dx| dx[0] = 1.0, &[0.0], 0.0, 0.37).unwrap();
        assert!((x[0] - 0.37).abs() < 1e-16);
    }

    #[test]
    fn rk4_flags_non_finite() {
        let err = rk4_step(|_, _, dx| dx[0] = f64::NAN, &[0.0], 2.0, 0.1).unwrap_err();
        assert_eq!(err, SimError::NonFiniteDerivative { t: 2.0 });
    }

    #[test]
    fn event_count_and_times() {
        let sim = SimConfig::new(0.001, 100.0, Some(10.0), 1000).unwrap();
        let mut times = Vec::new();
        let mut state = vec![1.0];
        run::<_, SimError, _, _>(
            &sim,
            &mut Decay,
            &mut state,
            |_, k, t, _| {
                times.push((k, t));
                Ok(())
            },
            |_, _, _, _| Ok(()),
        )
        .unwrap();
        assert_eq!(times.len(), 9);
        for (i, &(k, t)) in times.iter().enumerate() {
            assert_eq!(k, i + 1);
            assert_eq!(t, (i + 1) as f64 * 10_000.0 * 0.001);
        }
    }

    #[test]
    fn no_events_without_period() {
        let sim = SimConfig::new(0.01, 1.0, None, 1).unwrap();
        let mut fired = 0;
        let mut records = 0;
        let mut state = vec![1.0];
        run::<_, SimError, _, _>(
            &sim,
            &mut Decay,
            &mut state,
            |_, _, _, _| {
                fired += 1;
                Ok(())
            },
            |_, _, _, _| {
                records += 1;
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(fired, 0);
        assert_eq!(records, 101);
    }

    #[test]
    fn event_period_snaps_to_grid() {
        let sim = SimConfig::new(0.003, 10.0, Some(1.0), 1).unwrap();
        let td = sim.event_period().unwrap();
        assert!(((td / 0.003).round() * 0.003 - td).abs() < 1e-15);
        assert!(SimConfig::new(0.1, 1.0, Some(0.01), 1).is_err());
        assert!(SimConfig::new(0.0, 1.0, None, 1).is_err());
        assert!(SimConfig::new(2.0, 1.0, None, 1).is_err());
        assert!(SimConfig::new(0.1, 1.0, None, 0).is_err());
    }

    fn decay_error(dt: f64) -> f64 {
        let sim = SimConfig::new(dt, 1.0, None, usize::MAX).unwrap();
        let mut state = vec![1.0];
        run::<_, SimError, _, _>(&sim, &mut Decay, &mut state, |_, _, _, _| Ok(()), |_, _, _, _| Ok(()))
            .unwrap();
        (state[0] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn fourth_order_convergence() {
        let ratio = decay_error(0.1) / decay_error(0.05);
        assert!((14.0..=18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn deterministic_runs() {
        let sim = SimConfig::new(0.01, 2.0, Some(0.5), 3).unwrap();
        let go = || {
            let mut state = vec![1.0];
            let mut rec = Vec::new();
            run::<_, SimError, _, _>(
                &sim,
                &mut Decay,
                &mut state,
                |_, _, _, s| {
                    s[0] *= 0.5;
                    Ok(())
                },
                |_, _, t, s| {
                    rec.push((t.to_bits(), s[0].to_bits()));
                    Ok(())
                },
            )
            .unwrap();
            rec
        };
        assert_eq!(go(), go());
    }
}
