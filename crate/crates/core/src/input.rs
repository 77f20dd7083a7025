//! Excitation inputs `u(t)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub trait InputSignal: Send + Sync {
    fn n_u(&self) -> usize;
    fn eval(&self, t: f64, u: &mut [f64]);
}

/// `offset + amplitude·sin(ω·t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sine {
    pub amplitude: f64,
    pub omega: f64,
    pub offset: f64,
}

impl InputSignal for Sine {
    fn n_u(&self) -> usize {
        1
    }
    fn eval(&self, t: f64, u: &mut [f64]) {
        u[0] = self.offset + self.amplitude * (self.omega * t).sin();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constant(pub Vec<f64>);

impl InputSignal for Constant {
    fn n_u(&self) -> usize {
        self.0.len()
    }
    fn eval(&self, _t: f64, u: &mut [f64]) {
        u.copy_from_slice(&self.0);
    }
}

/// Piecewise-constant input, uniform on `[low, high]`, redrawn every
/// `hold` seconds.
///
/// Values come from ChaCha8 seeded with `seed_from_u64(seed)`; draw `k`
/// (for `t ∈ [k·hold, (k+1)·hold)`) is `low + (high − low)·(w >> 11)·2⁻⁵³`
/// with `w` the k-th `next_u64`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseUniform {
    pub low: f64,
    pub high: f64,
    pub hold: f64,
    pub seed: u64,
    values: Vec<f64>,
}

impl PiecewiseUniform {
    /// Pre-draws enough values to cover `[0, horizon]`.
    pub fn new(low: f64, high: f64, hold: f64, seed: u64, horizon: f64) -> Self {
        let count = (horizon / hold).ceil() as usize + 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..count)
            .map(|_| {
                let w = rng.next_u64() >> 11;
                low + (high - low) * (w as f64 * (1.0 / (1u64 << 53) as f64))
            })
            .collect();
        Self {
            low,
            high,
            hold,
            seed,
            values,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl InputSignal for PiecewiseUniform {
    fn n_u(&self) -> usize {
        1
    }
    fn eval(&self, t: f64, u: &mut [f64]) {
        let k = ((t / self.hold) + 1e-9).floor().max(0.0) as usize;
        u[0] = self.values[k.min(self.values.len() - 1)];
    }
}
