//! Plant models: the generic interface, linear and Lur'e plants, the
//! Jansen–Rit neural mass model, and a runtime boundedness guard.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Mat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("trajectory blow-up: |x|_inf = {value} exceeds threshold {threshold}")]
    TrajectoryBlowUp { value: f64, threshold: f64 },
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// `ẋ = f(x, p, u)`, `y = h(x, p)`.
pub trait Plant: Send + Sync {
    fn n_x(&self) -> usize;
    fn n_u(&self) -> usize;
    fn n_y(&self) -> usize;
    fn n_p(&self) -> usize;
    fn f(&self, x: &[f64], p: &[f64], u: &[f64], dx: &mut [f64]);
    fn h(&self, x: &[f64], p: &[f64], y: &mut [f64]);
}

pub type MatFn = Arc<dyn Fn(&[f64]) -> Mat + Send + Sync>;
pub type PhiFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

fn mat_vec_add(m: &Mat, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, &vj) in v.iter().enumerate() {
            acc += m[(i, j)] * vj;
        }
        *o += acc;
    }
}

/// `ẋ = A(p)x + B(p)u`, `y = C(p)x`.
#[derive(Clone)]
pub struct LinearPlant {
    n_x: usize,
    n_u: usize,
    n_y: usize,
    n_p: usize,
    pub a_of_p: MatFn,
    pub b_of_p: MatFn,
    pub c_of_p: MatFn,
}

impl fmt::Debug for LinearPlant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearPlant")
            .field("n_x", &self.n_x)
            .field("n_u", &self.n_u)
            .field("n_y", &self.n_y)
            .field("n_p", &self.n_p)
            .finish()
    }
}

impl LinearPlant {
    /// Dimensions are read off the callbacks evaluated at `p_probe`.
    pub fn new(
        a_of_p: MatFn,
        b_of_p: MatFn,
        c_of_p: MatFn,
        p_probe: &[f64],
    ) -> Result<Self, ModelError> {
        let a = a_of_p(p_probe);
        let b = b_of_p(p_probe);
        let c = c_of_p(p_probe);
        let n_x = a.nrows();
        if a.ncols() != n_x || b.nrows() != n_x || c.ncols() != n_x {
            return Err(ModelError::DimensionMismatch(format!(
                "A {}x{}, B {}x{}, C {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        Ok(Self {
            n_x,
            n_u: b.ncols(),
            n_y: c.nrows(),
            n_p: p_probe.len(),
            a_of_p,
            b_of_p,
            c_of_p,
        })
    }

    /// `ẋ = −p·x + u`, `y = x`: the one-parameter testbed.
    pub fn scalar_testbed() -> Self {
        Self::new(
            Arc::new(|p: &[f64]| Mat::from_element(1, 1, -p[0])),
            Arc::new(|_: &[f64]| Mat::from_element(1, 1, 1.0)),
            Arc::new(|_: &[f64]| Mat::from_element(1, 1, 1.0)),
            &[1.0],
        )
        .expect("consistent dimensions")
    }
}

impl Plant for LinearPlant {
    fn n_x(&self) -> usize {
        self.n_x
    }
    fn n_u(&self) -> usize {
        self.n_u
    }
    fn n_y(&self) -> usize {
        self.n_y
    }
    fn n_p(&self) -> usize {
        self.n_p
    }
    fn f(&self, x: &[f64], p: &[f64], u: &[f64], dx: &mut [f64]) {
        dx.fill(0.0);
        mat_vec_add(&(self.a_of_p)(p), x, dx);
        mat_vec_add(&(self.b_of_p)(p), u, dx);
    }
    fn h(&self, x: &[f64], p: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        mat_vec_add(&(self.c_of_p)(p), x, y);
    }
}

/// A scalar slope-restricted nonlinearity, `a ≤ γ'(v) ≤ b`.
#[derive(Clone)]
pub struct Nonlinearity {
    pub func: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub slope_lower: f64,
    pub slope_upper: f64,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("slope_lower", &self.slope_lower)
            .field("slope_upper", &self.slope_upper)
            .finish()
    }
}

impl Nonlinearity {
    pub fn eval(&self, v: f64) -> f64 {
        (self.func)(v)
    }
}

/// `ẋ = A(p)x + G(p)γ(Hx) + B(p)φ(u, y)`, `y = C(p)x`.
#[derive(Clone)]
pub struct LurePlant {
    n_x: usize,
    n_u: usize,
    n_y: usize,
    n_p: usize,
    pub a_of_p: MatFn,
    pub g_of_p: MatFn,
    pub b_of_p: MatFn,
    pub c_of_p: MatFn,
    pub h: Mat,
    pub gamma: Vec<Nonlinearity>,
    pub phi: PhiFn,
}

impl fmt::Debug for LurePlant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LurePlant")
            .field("n_x", &self.n_x)
            .field("n_u", &self.n_u)
            .field("n_y", &self.n_y)
            .field("n_p", &self.n_p)
            .field("n_gamma", &self.gamma.len())
            .finish()
    }
}

/// Plant matrices frozen at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct LureMatrices {
    pub a: Mat,
    pub g: Mat,
    pub b: Mat,
    pub c: Mat,
    pub h: Mat,
}

impl LurePlant {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a_of_p: MatFn,
        g_of_p: MatFn,
        b_of_p: MatFn,
        c_of_p: MatFn,
        h: Mat,
        gamma: Vec<Nonlinearity>,
        phi: PhiFn,
        n_u: usize,
        p_probe: &[f64],
    ) -> Result<Self, ModelError> {
        let a = a_of_p(p_probe);
        let g = g_of_p(p_probe);
        let b = b_of_p(p_probe);
        let c = c_of_p(p_probe);
        let n_x = a.nrows();
        let n_gamma = gamma.len();
        let ok = a.ncols() == n_x
            && g.shape() == (n_x, n_gamma)
            && b.nrows() == n_x
            && c.ncols() == n_x
            && h.shape() == (n_gamma, n_x);
        if !ok {
            return Err(ModelError::DimensionMismatch(format!(
                "A {:?}, G {:?}, B {:?}, C {:?}, H {:?}, n_gamma {n_gamma}",
                a.shape(),
                g.shape(),
                b.shape(),
                c.shape(),
                h.shape()
            )));
        }
        let phi_len = phi(&vec![0.0; n_u], &vec![0.0; c.nrows()]).len();
        if phi_len != b.ncols() {
            return Err(ModelError::DimensionMismatch(format!(
                "phi returns {phi_len} entries, B has {} columns",
                b.ncols()
            )));
        }
        Ok(Self {
            n_x,
            n_u,
            n_y: c.nrows(),
            n_p: p_probe.len(),
            a_of_p,
            g_of_p,
            b_of_p,
            c_of_p,
            h,
            gamma,
            phi,
        })
    }

    pub fn n_gamma(&self) -> usize {
        self.gamma.len()
    }

    pub fn matrices(&self, p: &[f64]) -> LureMatrices {
        LureMatrices {
            a: (self.a_of_p)(p),
            g: (self.g_of_p)(p),
            b: (self.b_of_p)(p),
            c: (self.c_of_p)(p),
            h: self.h.clone(),
        }
    }

    pub fn sector_upper(&self) -> Vec<f64> {
        self.gamma.iter().map(|g| g.slope_upper).collect()
    }

    /// `γ(v)` componentwise.
    pub fn gamma_eval(&self, v: &[f64]) -> Vec<f64> {
        self.gamma.iter().zip(v).map(|(g, &vk)| g.eval(vk)).collect()
    }
}

impl Plant for LurePlant {
    fn n_x(&self) -> usize {
        self.n_x
    }
    fn n_u(&self) -> usize {
        self.n_u
    }
    fn n_y(&self) -> usize {
        self.n_y
    }
    fn n_p(&self) -> usize {
        self.n_p
    }
    fn f(&self, x: &[f64], p: &[f64], u: &[f64], dx: &mut [f64]) {
        let m = self.matrices(p);
        let mut y = vec![0.0; self.n_y];
        mat_vec_add(&m.c, x, &mut y);
        let mut hx = vec![0.0; self.gamma.len()];
        mat_vec_add(&m.h, x, &mut hx);
        let gam = self.gamma_eval(&hx);
        let ph = (self.phi)(u, &y);
        dx.fill(0.0);
        mat_vec_add(&m.a, x, dx);
        mat_vec_add(&m.g, &gam, dx);
        mat_vec_add(&m.b, &ph, dx);
    }
    fn h(&self, x: &[f64], p: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        mat_vec_add(&(self.c_of_p)(p), x, y);
    }
}

/// Known constants of the Jansen–Rit model. Defaults follow the original
/// model publication; every field can be overridden from config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JansenRitParams {
    /// Excitatory rate constant (s⁻¹).
    pub a: f64,
    /// Inhibitory rate constant (s⁻¹).
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// Half the maximum firing rate (s⁻¹).
    pub e0: f64,
    /// Sigmoid midpoint (mV).
    pub v0: f64,
    /// Sigmoid slope (mV⁻¹).
    pub r: f64,
}

impl Default for JansenRitParams {
    fn default() -> Self {
        Self {
            a: 100.0,
            b: 50.0,
            c1: 135.0,
            c2: 0.8 * 135.0,
            c3: 0.25 * 135.0,
            c4: 0.25 * 135.0,
            e0: 2.5,
            v0: 6.0,
            r: 0.56,
        }
    }
}

impl JansenRitParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("a", self.a),
            ("b", self.b),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("e0", self.e0),
            ("v0", self.v0),
            ("r", self.r),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidParams(format!(
                    "{name} must be a positive finite number, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Maximum slope of the sigmoid, attained at `v = v0`.
    pub fn sigmoid_max_slope(&self) -> f64 {
        self.e0 * self.r / 2.0
    }
}

/// `S(v) = 2e0 / (1 + exp(r(v0 − v)))`.
pub fn sigmoid(v: f64, params: &JansenRitParams) -> f64 {
    2.0 * params.e0 / (1.0 + (params.r * (params.v0 - v)).exp())
}

fn rate_block(a: &mut Mat, offset: usize, k: f64) {
    a[(offset, offset + 1)] = 1.0;
    a[(offset + 1, offset)] = -k * k;
    a[(offset + 1, offset + 1)] = -2.0 * k;
}

/// Jansen–Rit model in Lur'e form with states
/// `(x01, x02, x11, x12, x21, x22)` and parameters `(p1, p2)` = excitatory
/// and inhibitory synaptic gains.
pub fn jansen_rit_plant(params: JansenRitParams) -> Result<LurePlant, ModelError> {
    params.validate()?;
    let jr = params;
    let a_mat = {
        let mut a = Mat::zeros(6, 6);
        rate_block(&mut a, 0, jr.a);
        rate_block(&mut a, 2, jr.a);
        rate_block(&mut a, 4, jr.b);
        a
    };
    let c_mat = Mat::from_row_slice(1, 6, &[0.0, 0.0, 1.0, 0.0, -1.0, 0.0]);
    let mut h = Mat::zeros(2, 6);
    h[(0, 0)] = jr.c1;
    h[(1, 0)] = jr.c3;

    let g_of_p: MatFn = Arc::new(move |p: &[f64]| {
        let mut g = Mat::zeros(6, 2);
        g[(3, 0)] = p[0] * jr.a * jr.c2;
        g[(5, 1)] = p[1] * jr.b * jr.c4;
        g
    });
    let b_of_p: MatFn = Arc::new(move |p: &[f64]| {
        let mut b = Mat::zeros(6, 2);
        b[(1, 0)] = p[0] * jr.a;
        b[(3, 1)] = p[0] * jr.a;
        b
    });
    let a_fn: MatFn = Arc::new(move |_: &[f64]| a_mat.clone());
    let c_fn: MatFn = Arc::new(move |_: &[f64]| c_mat.clone());
    let s = Nonlinearity {
        func: Arc::new(move |v| sigmoid(v, &jr)),
        slope_lower: 0.0,
        slope_upper: jr.sigmoid_max_slope(),
    };
    let phi: PhiFn = Arc::new(move |u: &[f64], y: &[f64]| vec![sigmoid(y[0], &jr), u[0]]);
    LurePlant::new(
        a_fn,
        g_of_p,
        b_of_p,
        c_fn,
        h,
        vec![s.clone(), s],
        phi,
        1,
        &[6.5, 25.5],
    )
}

/// Result of the finite-difference slope scan of a Lur'e nonlinearity.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorReport {
    /// Per component: (min slope seen, max slope seen).
    pub observed: Vec<(f64, f64)>,
    pub within_bounds: bool,
}

/// Scans each `γ_k` with central differences on `points` grid nodes over
/// `[center − half_width, center + half_width]`.
pub fn sector_bound_diagnostic(
    plant: &LurePlant,
    center: f64,
    half_width: f64,
    points: usize,
    tol: f64,
) -> SectorReport {
    let h = 1e-5 * half_width.max(1.0);
    let mut observed = Vec::with_capacity(plant.gamma.len());
    let mut within = true;
    for g in &plant.gamma {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..points {
            let v = center - half_width + 2.0 * half_width * i as f64 / (points.max(2) - 1) as f64;
            let slope = (g.eval(v + h) - g.eval(v - h)) / (2.0 * h);
            lo = lo.min(slope);
            hi = hi.max(slope);
        }
        within &= lo >= g.slope_lower - tol && hi <= g.slope_upper + tol;
        observed.push((lo, hi));
    }
    SectorReport {
        observed,
        within_bounds: within,
    }
}

/// Running `|x|_∞` maximum with a blow-up guard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundednessMonitor {
    pub max_abs_seen: f64,
    pub threshold: f64,
}

impl Default for BoundednessMonitor {
    fn default() -> Self {
        Self::new(1e6)
    }
}

impl BoundednessMonitor {
    pub fn new(threshold: f64) -> Self {
        Self {
            max_abs_seen: 0.0,
            threshold,
        }
    }

    pub fn check(&mut self, x: &[f64]) -> Result<(), ModelError> {
        let norm = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if !(norm <= self.threshold) {
            return Err(ModelError::TrajectoryBlowUp {
                value: norm,
                threshold: self.threshold,
            });
        }
        self.max_abs_seen = self.max_abs_seen.max(norm);
        Ok(())
    }
}

/// `|v|_∞`.
pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

/// Euclidean norm.
pub fn euclid_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{spectrum, Vector};

    #[test]
    fn sigmoid_midpoint_and_limits() {
        let p = JansenRitParams::default();
        assert!((sigmoid(p.v0, &p) - p.e0).abs() < 1e-15);
        assert!(sigmoid(p.v0 - 100.0 / p.r, &p).abs() < 1e-6);
        assert!((sigmoid(p.v0 + 100.0 / p.r, &p) - 2.0 * p.e0).abs() < 1e-6);
    }

    #[test]
    fn sigmoid_scalar_value() {
        let p = JansenRitParams::default();
        let expected = 5.0 / (1.0 + (-2.24f64).exp());
        assert!((sigmoid(10.0, &p) - expected).abs() < 1e-14);
        assert!((expected - 4.518_922).abs() < 1e-6);
    }

    #[test]
    fn sigmoid_is_monotone() {
        let p = JansenRitParams::default();
        let vals: Vec<f64> = (0..1000)
            .map(|i| sigmoid(-50.0 + 0.1 * i as f64, &p))
            .collect();
        assert!(vals.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn jansen_rit_structure() {
        let params = JansenRitParams::default();
        let plant = jansen_rit_plant(params).unwrap();
        assert_eq!(
            (plant.n_x(), plant.n_u(), plant.n_y(), plant.n_p(), plant.n_gamma()),
            (6, 1, 1, 2, 2)
        );
        let m = plant.matrices(&[6.5, 25.5]);
        assert_eq!(m.a[(0, 1)], 1.0);
        assert_eq!(m.a[(1, 0)], -10_000.0);
        assert_eq!(m.a[(1, 1)], -200.0);
        assert_eq!(m.a[(5, 4)], -2500.0);
        assert_eq!(m.g[(3, 0)], 6.5 * 100.0 * params.c2);
        assert_eq!(m.g[(5, 1)], 25.5 * 50.0 * params.c4);
        assert_eq!(m.b[(1, 0)], 650.0);
        assert_eq!(m.b[(3, 1)], 650.0);
        assert!(spectrum(&m.a).unwrap().iter().all(|z| z.re < 0.0));
        let block = m.a.view((0, 0), (2, 2)).into_owned();
        for z in spectrum(&block).unwrap() {
            assert!((z.re + 100.0).abs() < 1e-4 && z.im.abs() < 1e-4);
        }
        for b in plant.sector_upper() {
            assert!((b - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn sector_diagnostic_passes_for_sigmoid() {
        let params = JansenRitParams::default();
        let plant = jansen_rit_plant(params).unwrap();
        let rep = sector_bound_diagnostic(&plant, params.v0, 50.0, 2001, 1e-6);
        assert!(rep.within_bounds, "{rep:?}");
        assert!(rep.observed[0].1 > 0.69);
    }

    #[test]
    fn lure_rhs_matches_naive_assembly() {
        let params = JansenRitParams::default();
        let plant = jansen_rit_plant(params).unwrap();
        let x = [1.0, -2.0, 3.5, 0.25, -1.5, 7.0];
        let p = [5.0, 23.0];
        let u = [200.0];
        let mut dx = [0.0; 6];
        plant.f(&x, &p, &u, &mut dx);

        let m = plant.matrices(&p);
        let xv = Vector::from_column_slice(&x);
        let hx = &m.h * &xv;
        let y = (&m.c * &xv)[0];
        let gam = Vector::from_vec(vec![sigmoid(hx[0], &params), sigmoid(hx[1], &params)]);
        let ph = Vector::from_vec(vec![sigmoid(y, &params), u[0]]);
        let naive = &m.a * &xv + &m.g * gam + &m.b * ph;
        for i in 0..6 {
            assert!((dx[i] - naive[i]).abs() <= 1e-12 * naive[i].abs().max(1.0));
        }
    }

    #[test]
    fn boundedness_monitor() {
        let mut mon = BoundednessMonitor::new(1e6);
        mon.check(&[0.0]).unwrap();
        assert_eq!(mon.max_abs_seen, 0.0);
        for v in [1.0, -5.0, 3.0] {
            mon.check(&[v]).unwrap();
        }
        assert_eq!(mon.max_abs_seen, 5.0);
        let err = mon.check(&[2e6]).unwrap_err();
        assert!(matches!(err, ModelError::TrajectoryBlowUp { .. }));
        assert_eq!(mon.max_abs_seen, 5.0);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = JansenRitParams {
            r: -1.0,
            ..Default::default()
        };
        assert!(jansen_rit_plant(p).is_err());
    }
}
