//! Observer classes, the multi-observer bank, and sampled verification of
//! the quadratic Lyapunov robustness certificate.
//!
//! Two classes ship: a Luenberger observer for linear plants and a circle
//! criterion observer for Lur'e plants. Each observer is built for one
//! nominal parameter `p_i` and freezes the plant matrices at that value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{self, LinalgError, Mat};
use crate::models::{LinearPlant, LurePlant, Nonlinearity, PhiFn, Plant};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObserverError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("observer bank must hold at least one observer")]
    EmptyBank,
    #[error("observer bank mixes classes or dimensions: {0}")]
    Heterogeneous(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("A + L C is not Hurwitz (spectral abscissa {0})")]
    NotStabilizing(f64),
    #[error("certificate violated at {violations} of {samples} exact-parameter samples (worst excess {worst_excess:e})")]
    CertificateViolated {
        violations: usize,
        samples: usize,
        worst_excess: f64,
    },
}

fn mat_vec(m: &Mat, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, &vj) in v.iter().enumerate() {
            acc += m[(i, j)] * vj;
        }
        *o = acc;
    }
}

fn mat_vec_add(m: &Mat, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, &vj) in v.iter().enumerate() {
            acc += m[(i, j)] * vj;
        }
        *o += acc;
    }
}

/// Quadratic certificate `V(x̃) = x̃ᵀ P x̃` with
/// `a1 |x̃|∞² ≤ V ≤ a2 |x̃|∞²` and `V̇ ≤ −λ0 V` at exact parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Assumption2Certificate {
    pub p_matrix: Mat,
    pub lambda0: f64,
    pub a1: f64,
    pub a2: f64,
    /// Dissipation rate ν behind `V̇ ≤ −ν|x̃|²`.
    pub nu: f64,
    pub check_log: Option<VerificationReport>,
}

impl Assumption2Certificate {
    /// `a1 = λmin(P)`, `a2 = n·λmax(P)`, `λ0 = ν / (2 λmax(P))`.
    pub fn from_quadratic(p_matrix: Mat, nu: f64) -> Result<Self, ObserverError> {
        let eig = linalg::sym_eig(&p_matrix)?;
        let n = p_matrix.nrows() as f64;
        if eig.min() <= 0.0 {
            return Err(ObserverError::DimensionMismatch(format!(
                "P is not positive definite (min eigenvalue {})",
                eig.min()
            )));
        }
        Ok(Self {
            lambda0: nu / (2.0 * eig.max()),
            a1: eig.min(),
            a2: n * eig.max(),
            nu,
            p_matrix,
            check_log: None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct LuenbergerObserver {
    pub p: Vec<f64>,
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub l: Mat,
    pub certificate: Option<Assumption2Certificate>,
}

impl LuenbergerObserver {
    pub fn new(plant: &LinearPlant, p: &[f64], l: Mat) -> Result<Self, ObserverError> {
        let a = (plant.a_of_p)(p);
        let b = (plant.b_of_p)(p);
        let c = (plant.c_of_p)(p);
        if l.shape() != (a.nrows(), c.nrows()) {
            return Err(ObserverError::DimensionMismatch(format!(
                "L is {:?}, expected {:?}",
                l.shape(),
                (a.nrows(), c.nrows())
            )));
        }
        let abscissa = linalg::spectral_abscissa(&(&a + &l * &c))?;
        if abscissa >= 0.0 {
            return Err(ObserverError::NotStabilizing(abscissa));
        }
        Ok(Self {
            p: p.to_vec(),
            a,
            b,
            c,
            l,
            certificate: None,
        })
    }

    /// `A x̂ + B u + L (C x̂ − y)`.
    pub fn rhs(&self, xhat: &[f64], u: &[f64], y: &[f64], out: &mut [f64]) {
        let mut innov = vec![0.0; y.len()];
        mat_vec(&self.c, xhat, &mut innov);
        for (e, yk) in innov.iter_mut().zip(y) {
            *e -= yk;
        }
        mat_vec(&self.a, xhat, out);
        mat_vec_add(&self.b, u, out);
        mat_vec_add(&self.l, &innov, out);
    }
}

#[derive(Clone)]
pub struct CircleCriterionObserver {
    pub p: Vec<f64>,
    pub a: Mat,
    pub g: Mat,
    pub b: Mat,
    pub c: Mat,
    pub h: Mat,
    pub k: Mat,
    pub l: Mat,
    pub gamma: Vec<Nonlinearity>,
    pub phi: PhiFn,
    pub certificate: Option<Assumption2Certificate>,
}

impl std::fmt::Debug for CircleCriterionObserver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CircleCriterionObserver")
            .field("p", &self.p)
            .field("k", &self.k)
            .field("l", &self.l)
            .field("certified", &self.certificate.is_some())
            .finish()
    }
}

impl CircleCriterionObserver {
    pub fn new(plant: &LurePlant, p: &[f64], k: Mat, l: Mat) -> Result<Self, ObserverError> {
        let m = plant.matrices(p);
        let n_y = m.c.nrows();
        if k.shape() != (plant.n_gamma(), n_y) || l.shape() != (m.a.nrows(), n_y) {
            return Err(ObserverError::DimensionMismatch(format!(
                "K is {:?}, L is {:?}",
                k.shape(),
                l.shape()
            )));
        }
        Ok(Self {
            p: p.to_vec(),
            a: m.a,
            g: m.g,
            b: m.b,
            c: m.c,
            h: m.h,
            k,
            l,
            gamma: plant.gamma.clone(),
            phi: plant.phi.clone(),
            certificate: None,
        })
    }

    /// `A x̂ + G γ(H x̂ + K(C x̂ − y)) + B φ(u, y) + L (C x̂ − y)`.
    pub fn rhs(&self, xhat: &[f64], u: &[f64], y: &[f64], out: &mut [f64]) {
        let ph = (self.phi)(u, y);
        self.rhs_with_phi(xhat, y, &ph, out);
    }

    /// Same as [`Self::rhs`] with `φ(u, y)` supplied by the caller (it is
    /// shared by every observer in a bank).
    pub fn rhs_with_phi(&self, xhat: &[f64], y: &[f64], phi: &[f64], out: &mut [f64]) {
        let ng = self.gamma.len();
        let mut innov = vec![0.0; y.len()];
        mat_vec(&self.c, xhat, &mut innov);
        for (e, yk) in innov.iter_mut().zip(y) {
            *e -= yk;
        }
        let mut w = vec![0.0; ng];
        mat_vec(&self.h, xhat, &mut w);
        mat_vec_add(&self.k, &innov, &mut w);
        for (wk, g) in w.iter_mut().zip(&self.gamma) {
            *wk = g.eval(*wk);
        }
        mat_vec(&self.a, xhat, out);
        mat_vec_add(&self.g, &w, out);
        mat_vec_add(&self.b, phi, out);
        mat_vec_add(&self.l, &innov, out);
    }
}

#[derive(Debug, Clone)]
pub enum Observer {
    Luenberger(LuenbergerObserver),
    CircleCriterion(CircleCriterionObserver),
}

impl Observer {
    pub fn class_name(&self) -> &'static str {
        match self {
            Observer::Luenberger(_) => "luenberger",
            Observer::CircleCriterion(_) => "circle_criterion",
        }
    }

    pub fn param(&self) -> &[f64] {
        match self {
            Observer::Luenberger(o) => &o.p,
            Observer::CircleCriterion(o) => &o.p,
        }
    }

    pub fn n_x(&self) -> usize {
        self.c().ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c().nrows()
    }

    fn c(&self) -> &Mat {
        match self {
            Observer::Luenberger(o) => &o.c,
            Observer::CircleCriterion(o) => &o.c,
        }
    }

    pub fn certificate(&self) -> Option<&Assumption2Certificate> {
        match self {
            Observer::Luenberger(o) => o.certificate.as_ref(),
            Observer::CircleCriterion(o) => o.certificate.as_ref(),
        }
    }

    pub fn rhs(&self, xhat: &[f64], u: &[f64], y: &[f64], out: &mut [f64]) {
        match self {
            Observer::Luenberger(o) => o.rhs(xhat, u, y, out),
            Observer::CircleCriterion(o) => o.rhs(xhat, u, y, out),
        }
    }

    /// `ŷ = C(p_i) x̂`.
    pub fn output(&self, xhat: &[f64], yhat: &mut [f64]) {
        mat_vec(self.c(), xhat, yhat);
    }
}

/// The multi-observer: `N ≥ 1` observers of one class sharing plant
/// dimensions. Observer states live outside the bank (in the composite
/// integration state), indexed by slot.
#[derive(Debug, Clone)]
pub struct ObserverBank {
    observers: Vec<Observer>,
}

impl ObserverBank {
    pub fn new(observers: Vec<Observer>) -> Result<Self, ObserverError> {
        let first = observers.first().ok_or(ObserverError::EmptyBank)?;
        let (class, n_x, n_y) = (first.class_name(), first.n_x(), first.n_y());
        for (i, o) in observers.iter().enumerate() {
            if o.class_name() != class || o.n_x() != n_x || o.n_y() != n_y {
                return Err(ObserverError::Heterogeneous(format!(
                    "slot {i} is {} ({}x{}), slot 0 is {class} ({n_x}x{n_y})",
                    o.class_name(),
                    o.n_x(),
                    o.n_y()
                )));
            }
        }
        Ok(Self { observers })
    }

    pub fn len(&self) -> usize {
        self.observers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observers.is_empty()
    }

    pub fn n_x(&self) -> usize {
        self.observers[0].n_x()
    }

    pub fn n_y(&self) -> usize {
        self.observers[0].n_y()
    }

    pub fn observers(&self) -> &[Observer] {
        &self.observers
    }

    pub fn get(&self, i: usize) -> &Observer {
        &self.observers[i]
    }

    pub fn params(&self) -> Vec<Vec<f64>> {
        self.observers.iter().map(|o| o.param().to_vec()).collect()
    }

    /// Swaps in a new observer at slot `i`; class and dimensions must match.
    pub fn replace(&mut self, i: usize, obs: Observer) -> Result<(), ObserverError> {
        let cur = &self.observers[i];
        if cur.class_name() != obs.class_name() || cur.n_x() != obs.n_x() || cur.n_y() != obs.n_y()
        {
            return Err(ObserverError::Heterogeneous(format!(
                "cannot replace {} with {}",
                cur.class_name(),
                obs.class_name()
            )));
        }
        self.observers[i] = obs;
        Ok(())
    }

    /// Derivatives of all observer states. `xhats` and `out` hold the N
    /// states back to back.
    pub fn rhs(&self, xhats: &[f64], u: &[f64], y: &[f64], phi: Option<&[f64]>, out: &mut [f64]) {
        let n = self.n_x();
        for (i, o) in self.observers.iter().enumerate() {
            let xs = &xhats[i * n..(i + 1) * n];
            let os = &mut out[i * n..(i + 1) * n];
            match (o, phi) {
                (Observer::CircleCriterion(cc), Some(ph)) => cc.rhs_with_phi(xs, y, ph, os),
                _ => o.rhs(xs, u, y, os),
            }
        }
    }
}

/// `ỹ_i = h(x̂_i, p_i) − y` for every slot.
pub fn bank_output_errors(bank: &ObserverBank, xhats: &[f64], y: &[f64]) -> Vec<Vec<f64>> {
    let n = bank.n_x();
    bank.observers()
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let mut yhat = vec![0.0; y.len()];
            o.output(&xhats[i * n..(i + 1) * n], &mut yhat);
            yhat.iter().zip(y).map(|(a, b)| a - b).collect()
        })
        .collect()
}

/// Sampling boxes `x̃ ∈ H(0, r_x̃)`, `x ∈ H(0, r_x)`, `u ∈ H(u_c, r_u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationBoxes {
    pub x_tilde_radius: f64,
    pub x_radius: f64,
    pub u_center: f64,
    pub u_radius: f64,
}

impl Default for VerificationBoxes {
    fn default() -> Self {
        Self {
            x_tilde_radius: 20.0,
            x_radius: 20.0,
            u_center: 0.0,
            u_radius: 320.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub samples: usize,
    pub violations: usize,
    /// Largest `V̇ + λ0 V − tol` over exact-parameter samples (≤ 0 when clean).
    pub worst_excess: f64,
    /// `(|p̃|∞, max(0, V̇ + λ0 V))` per mismatched plant parameter: an
    /// empirical envelope of the robustness gain.
    pub gamma_envelope: Vec<(f64, f64)>,
}

fn quad(p: &Mat, x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += x[i] * p[(i, j)] * y[j];
        }
    }
    acc
}

/// Evaluates `(V, V̇, round-off scale)` for one sample.
fn lyapunov_derivative(
    obs: &Observer,
    plant: &dyn Plant,
    p_true: &[f64],
    pm: &Mat,
    x: &[f64],
    x_tilde: &[f64],
    u: &[f64],
) -> (f64, f64, f64) {
    let n = x.len();
    let mut y = vec![0.0; plant.n_y()];
    plant.h(x, p_true, &mut y);
    let xhat: Vec<f64> = x.iter().zip(x_tilde).map(|(a, b)| a + b).collect();
    let mut fhat = vec![0.0; n];
    obs.rhs(&xhat, u, &y, &mut fhat);
    let mut f = vec![0.0; n];
    plant.f(x, p_true, u, &mut f);
    let err: Vec<f64> = fhat.iter().zip(&f).map(|(a, b)| a - b).collect();
    let v = quad(pm, x_tilde, x_tilde);
    let vdot = 2.0 * quad(pm, x_tilde, &err);
    let mag: f64 = fhat.iter().chain(&f).fold(0.0_f64, |a, v| a.max(v.abs()));
    let px = crate::models::inf_norm(x_tilde) * linalg::max_abs(pm) * n as f64;
    (v, vdot, 2.0 * px * mag + v.abs())
}

/// Samples `(x̃, x, u)` and checks `V̇ ≤ −λ0 V + tol` at `p̃ = 0`, with
/// `tol = 1e−8·max(1, round-off scale of the sample)`. For each entry of
/// `mismatched` (a plant parameter different from the observer's) it records
/// the worst residual `max(0, V̇ + λ0 V)`.
pub fn verify_assumption2(
    obs: &Observer,
    plant: &dyn Plant,
    cert: &Assumption2Certificate,
    boxes: &VerificationBoxes,
    mismatched: &[Vec<f64>],
    sample_budget: usize,
    seed: u64,
) -> Result<VerificationReport, ObserverError> {
    let n = obs.n_x();
    if cert.p_matrix.shape() != (n, n) || plant.n_x() != n {
        return Err(ObserverError::DimensionMismatch(format!(
            "certificate P is {:?}, observer has {n} states",
            cert.p_matrix.shape()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nu_dim = plant.n_u();
    let draw = |rng: &mut ChaCha8Rng| {
        let xt: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-1.0..=1.0) * boxes.x_tilde_radius)
            .collect();
        let x: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-1.0..=1.0) * boxes.x_radius)
            .collect();
        let u: Vec<f64> = (0..nu_dim)
            .map(|_| boxes.u_center + rng.random_range(-1.0..=1.0) * boxes.u_radius)
            .collect();
        (xt, x, u)
    };

    let p_obs = obs.param().to_vec();
    let mut violations = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for s in 0..sample_budget {
        let (mut xt, x, u) = draw(&mut rng);
        if s == 0 {
            xt.fill(0.0);
        }
        let (v, vdot, scale) = lyapunov_derivative(obs, plant, &p_obs, &cert.p_matrix, &x, &xt, &u);
        let tol = 1e-8 * scale.max(1.0);
        let excess = vdot + cert.lambda0 * v - tol;
        worst_excess = worst_excess.max(excess);
        if excess > 0.0 {
            violations += 1;
        }
    }

    let per_param = (sample_budget / 10).max(1);
    let mut gamma_envelope = Vec::with_capacity(mismatched.len());
    for p_true in mismatched {
        let mut worst: f64 = 0.0;
        for _ in 0..per_param {
            let (xt, x, u) = draw(&mut rng);
            let (v, vdot, _) = lyapunov_derivative(obs, plant, p_true, &cert.p_matrix, &x, &xt, &u);
            worst = worst.max(vdot + cert.lambda0 * v);
        }
        let dp = p_true
            .iter()
            .zip(&p_obs)
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
        gamma_envelope.push((dp, worst));
    }

    let report = VerificationReport {
        samples: sample_budget,
        violations,
        worst_excess,
        gamma_envelope,
    };
    if violations > 0 {
        return Err(ObserverError::CertificateViolated {
            violations,
            samples: sample_budget,
            worst_excess,
        });
    }
    Ok(report)
}

/// Exponential envelope `|x̃(t)| ≤ k̄ e^{−λ̄ t} |x̃(0)|` fitted to a decay
/// record: `λ̄` from a least-squares fit of `ln|x̃|` over the samples above
/// `floor`, `k̄` as the smallest constant that makes the envelope hold on
/// every sample. Returns `None` if the record does not decay.
pub fn fit_exponential_envelope(times: &[f64], errors: &[f64], floor: f64) -> Option<(f64, f64)> {
    let e0 = *errors.first()?;
    if !(e0 > 0.0) {
        return None;
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(errors)
        .filter(|(_, &e)| e > floor)
        .map(|(&t, &e)| (t, e.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let lambda = -sxy / sxx;
    if !(lambda > 0.0) {
        return None;
    }
    let k = times
        .iter()
        .zip(errors)
        .map(|(&t, &e)| e * (lambda * t).exp() / e0)
        .fold(1.0_f64, f64::max);
    Some((k, lambda))
}
