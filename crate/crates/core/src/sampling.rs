//! Parameter boxes, uniform cell-center grids, set distance, and the
//! zoom-in update of the parameter set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("parameter set is empty")]
    EmptySet,
    #[error("zoom intersection is empty in dimension {dim}")]
    EmptyIntersection { dim: usize },
    #[error("grid count m must be at least 1")]
    ZeroCount,
    #[error("zoom factor {0} outside (0, 1)")]
    BadAlpha(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Axis-aligned box `{p : |p_j − c_j| ≤ δ_j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub center: Vec<f64>,
    pub half_lengths: Vec<f64>,
}

impl ParamBox {
    pub fn new(center: Vec<f64>, half_lengths: Vec<f64>) -> Result<Self, SamplingError> {
        if center.len() != half_lengths.len() || center.is_empty() {
            return Err(SamplingError::InvalidBox(format!(
                "center has {} entries, half-lengths {}",
                center.len(),
                half_lengths.len()
            )));
        }
        if half_lengths.iter().chain(&center).any(|v| !v.is_finite()) {
            return Err(SamplingError::InvalidBox("non-finite entry".into()));
        }
        if let Some(d) = half_lengths.iter().find(|d| **d < 0.0) {
            return Err(SamplingError::InvalidBox(format!("negative half-length {d}")));
        }
        Ok(Self {
            center,
            half_lengths,
        })
    }

    pub fn from_bounds(lower: &[f64], upper: &[f64]) -> Result<Self, SamplingError> {
        if lower.len() != upper.len() {
            return Err(SamplingError::InvalidBox("bound lengths differ".into()));
        }
        if let Some(j) = (0..lower.len()).find(|&j| !(lower[j] <= upper[j])) {
            return Err(SamplingError::InvalidBox(format!(
                "lower[{j}] = {} exceeds upper[{j}] = {}",
                lower[j], upper[j]
            )));
        }
        Self::new(
            lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect(),
            lower.iter().zip(upper).map(|(l, u)| 0.5 * (u - l)).collect(),
        )
    }

    /// Hypercube `H(ξ, r)`.
    pub fn cube(xi: &[f64], r: f64) -> Result<Self, SamplingError> {
        Self::new(xi.to_vec(), vec![r; xi.len()])
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.center
            .iter()
            .zip(&self.half_lengths)
            .map(|(c, d)| c - d)
            .collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.center
            .iter()
            .zip(&self.half_lengths)
            .map(|(c, d)| c + d)
            .collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.center.iter().zip(&self.half_lengths))
                .all(|(v, (c, d))| (v - c).abs() <= *d)
    }

    /// Interval containment `other ⊆ self` on bounds.
    pub fn contains_box(&self, other: &ParamBox) -> bool {
        let (lo, hi) = (self.lower(), self.upper());
        let (olo, ohi) = (other.lower(), other.upper());
        (0..self.dim()).all(|j| lo[j] <= olo[j] && ohi[j] <= hi[j])
    }

    pub fn intersect(&self, other: &ParamBox) -> Result<ParamBox, SamplingError> {
        if self.dim() != other.dim() {
            return Err(SamplingError::DimensionMismatch(format!(
                "{} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let (a_lo, a_hi) = (self.lower(), self.upper());
        let (b_lo, b_hi) = (other.lower(), other.upper());
        let mut center = Vec::with_capacity(self.dim());
        let mut half = Vec::with_capacity(self.dim());
        for j in 0..self.dim() {
            let (lo, hi) = (a_lo[j].max(b_lo[j]), a_hi[j].min(b_hi[j]));
            if lo > hi {
                return Err(SamplingError::EmptyIntersection { dim: j });
            }
            // keep the exact centre/half-length when one side is contained
            if lo == b_lo[j] && hi == b_hi[j] {
                center.push(other.center[j]);
                half.push(other.half_lengths[j]);
            } else if lo == a_lo[j] && hi == a_hi[j] {
                center.push(self.center[j]);
                half.push(self.half_lengths[j]);
            } else {
                let c = 0.5 * (lo + hi);
                let mut d = 0.5 * (hi - lo);
                // round-off must not push the box outside [lo, hi]
                while d > 0.0 && (c - d < lo || c + d > hi) {
                    d -= d * f64::EPSILON;
                }
                center.push(c);
                half.push(d);
            }
        }
        ParamBox::new(center, half)
    }

    pub fn volume(&self) -> f64 {
        self.half_lengths.iter().map(|d| 2.0 * d).product()
    }

    pub fn max_half_length(&self) -> f64 {
        self.half_lengths.iter().cloned().fold(0.0, f64::max)
    }
}

/// Grid `Θ̂ = {p_1, …, p_N}` of cell centers inside `parent`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledParamSet {
    pub points: Vec<Vec<f64>>,
    pub parent: ParamBox,
    pub m: usize,
}

impl SampledParamSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `max_j δ_j / m`.
    pub fn distance_bound(&self) -> f64 {
        self.parent.max_half_length() / self.m as f64
    }
}

/// Splits every side of `bx` into `m` equal cells and returns the `m^{n_p}`
/// centers `c_j − δ_j + (2i−1)δ_j/m`. The last dimension varies fastest.
pub fn grid_sample(bx: &ParamBox, m: usize) -> Result<SampledParamSet, SamplingError> {
    if m == 0 {
        return Err(SamplingError::ZeroCount);
    }
    let n = bx.dim();
    let axes: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let (c, d) = (bx.center[j], bx.half_lengths[j]);
            (1..=m)
                .map(|i| c - d + (2 * i - 1) as f64 * d / m as f64)
                .collect()
        })
        .collect();
    let total = m.pow(n as u32);
    let mut points = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let mut p = vec![0.0; n];
        for j in (0..n).rev() {
            p[j] = axes[j][rem % m];
            rem /= m;
        }
        points.push(p);
    }
    Ok(SampledParamSet {
        points,
        parent: bx.clone(),
        m,
    })
}

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc: f64, (x, y)| acc.max((x - y).abs()))
}

/// `min_i |p − p_i|∞` and its argmin (lowest index on ties).
pub fn distance_to_set(p: &[f64], set: &SampledParamSet) -> Result<(f64, usize), SamplingError> {
    let mut best: Option<(f64, usize)> = None;
    for (i, q) in set.points.iter().enumerate() {
        let d = inf_dist(p, q);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best.ok_or(SamplingError::EmptySet)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoomRecord {
    pub t: f64,
    pub p_hat: Vec<f64>,
    pub bx: ParamBox,
}

/// Dynamic-sampling state: `δ(k) = α^k δ(0)` and the running intersection
/// `Θ(k) = H(p̂(t_k⁻), δ(k)) ∩ Θ(k−1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoomState {
    pub k: usize,
    pub alpha: f64,
    pub initial_box: ParamBox,
    pub current_box: ParamBox,
    /// Unclipped half-lengths `α^k δ(0)`.
    pub half_lengths: Vec<f64>,
    pub history: Vec<ZoomRecord>,
}

impl ZoomState {
    pub fn new(theta: ParamBox, alpha: f64) -> Result<Self, SamplingError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(SamplingError::BadAlpha(alpha));
        }
        Ok(Self {
            k: 0,
            alpha,
            half_lengths: theta.half_lengths.clone(),
            current_box: theta.clone(),
            initial_box: theta,
            history: Vec::new(),
        })
    }
}

/// Advances `z` by one zoom step around `p_hat` (the left-limit estimate at
/// `t`) and returns the new grid of `m^{n_p}` points.
pub fn zoom_update(
    z: &mut ZoomState,
    p_hat: &[f64],
    t: f64,
    m: usize,
) -> Result<SampledParamSet, SamplingError> {
    let half: Vec<f64> = z.half_lengths.iter().map(|d| d * z.alpha).collect();
    let around = ParamBox::new(p_hat.to_vec(), half.clone())?;
    let next = around.intersect(&z.current_box)?;
    z.half_lengths = half;
    z.current_box = next;
    z.k += 1;
    z.history.push(ZoomRecord {
        t,
        p_hat: p_hat.to_vec(),
        bx: z.current_box.clone(),
    });
    grid_sample(&z.current_box, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn theta() -> ParamBox {
        ParamBox::from_bounds(&[4.0, 22.0], &[8.0, 28.0]).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn jansen_rit_grid_centers() {
        let g = grid_sample(&theta(), 5).unwrap();
        assert_eq!(g.len(), 25);
        let mut d1: Vec<f64> = g.points.iter().map(|p| p[0]).collect();
        let mut d2: Vec<f64> = g.points.iter().map(|p| p[1]).collect();
        d1.sort_by(f64::total_cmp);
        d1.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        d2.sort_by(f64::total_cmp);
        d2.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        assert!(close(&d1, &[4.4, 5.2, 6.0, 6.8, 7.6]));
        assert!(close(&d2, &[22.6, 23.8, 25.0, 26.2, 27.4]));
        assert!(close(&g.points[1], &[4.4, 23.8]));
        assert!((g.distance_bound() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn single_point_grid_is_center() {
        let g = grid_sample(&theta(), 1).unwrap();
        assert_eq!(g.points, vec![vec![6.0, 25.0]]);
        assert!(matches!(grid_sample(&theta(), 0), Err(SamplingError::ZeroCount)));
    }

    #[test]
    fn nearest_point_to_true_parameter() {
        let g = grid_sample(&theta(), 5).unwrap();
        let (d, i) = distance_to_set(&[6.5, 25.5], &g).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
        assert!(d <= g.distance_bound());
        // (6.0, 25.0) and (6.8, 25.0) tie at 0.5; the lower index wins
        let ties: Vec<usize> = (0..g.len())
            .filter(|&j| (inf_dist(&[6.5, 25.5], &g.points[j]) - 0.5).abs() < 1e-12)
            .collect();
        assert_eq!(ties.len(), 2);
        assert!(close(&g.points[ties[0]], &[6.0, 25.0]));
        assert!(close(&g.points[ties[1]], &[6.8, 25.0]));
        assert_eq!(i, ties[0]);
    }

    #[test]
    fn distance_edge_cases() {
        let g = grid_sample(&theta(), 3).unwrap();
        let p = g.points[4].clone();
        assert_eq!(distance_to_set(&p, &g).unwrap(), (0.0, 4));
        let single = SampledParamSet {
            points: vec![vec![1.0, 2.0]],
            parent: theta(),
            m: 1,
        };
        assert_eq!(distance_to_set(&[4.0, 0.5], &single).unwrap(), (3.0, 0));
        let empty = SampledParamSet {
            points: vec![],
            parent: theta(),
            m: 1,
        };
        assert!(matches!(distance_to_set(&[0.0, 0.0], &empty), Err(SamplingError::EmptySet)));
        // tie → lowest index
        let two = SampledParamSet {
            points: vec![vec![0.0], vec![2.0]],
            parent: ParamBox::cube(&[1.0], 1.0).unwrap(),
            m: 2,
        };
        assert_eq!(distance_to_set(&[1.0], &two).unwrap(), (1.0, 0));
    }

    #[test]
    fn zoom_example() {
        let mut z = ZoomState::new(theta(), 0.8).unwrap();
        let g = zoom_update(&mut z, &[7.5, 25.0], 10.0, 5).unwrap();
        assert!(close(&z.half_lengths, &[1.6, 2.4]));
        assert!(close(&z.current_box.lower(), &[5.9, 22.6]));
        assert!(close(&z.current_box.upper(), &[8.0, 27.4]));
        assert_eq!(z.k, 1);
        assert_eq!(g.len(), 25);
        assert!(theta().contains_box(&z.current_box));
    }

    #[test]
    fn zoom_half_lengths_geometric() {
        let mut z = ZoomState::new(theta(), 0.5).unwrap();
        for _ in 0..6 {
            let c = z.current_box.center.clone();
            zoom_update(&mut z, &c, 0.0, 3).unwrap();
        }
        assert!(close(&z.half_lengths, &[2.0 / 64.0, 3.0 / 64.0]));
    }

    #[test]
    fn zoom_at_corner_is_nonempty() {
        let mut z = ZoomState::new(theta(), 0.8).unwrap();
        zoom_update(&mut z, &[4.0, 28.0], 0.0, 5).unwrap();
        assert!(z.current_box.contains(&[4.0, 28.0]));
        assert!(z.current_box.volume() > 0.0);
    }

    #[test]
    fn rejects_bad_alpha_and_bounds() {
        assert!(ZoomState::new(theta(), 1.0).is_err());
        assert!(ZoomState::new(theta(), 0.0).is_err());
        assert!(ParamBox::from_bounds(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn grid_bound_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in 2..=9 {
            let g = grid_sample(&theta(), m).unwrap();
            for _ in 0..1000 {
                let p = [rng.random_range(4.0..=8.0), rng.random_range(22.0..=28.0)];
                assert!(distance_to_set(&p, &g).unwrap().0 <= g.distance_bound());
            }
        }
    }

    proptest! {
        #[test]
        fn grid_points_inside_and_bound_holds(
            c in prop::collection::vec(-10.0f64..10.0, 1..4),
            seed in 0u64..1000,
            m in 1usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d: Vec<f64> = c.iter().map(|_| rng.random_range(0.01..5.0)).collect();
            let bx = ParamBox::new(c, d).unwrap();
            let g = grid_sample(&bx, m).unwrap();
            prop_assert_eq!(g.len(), m.pow(bx.dim() as u32));
            for p in &g.points {
                prop_assert!(bx.contains(p));
            }
            let lo = bx.lower();
            let hi = bx.upper();
            for _ in 0..50 {
                let p: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| rng.random_range(*l..=*h)).collect();
                prop_assert!(distance_to_set(&p, &g).unwrap().0 <= g.distance_bound());
            }
        }

        #[test]
        fn zoom_nests_and_shrinks(alpha in 0.05f64..0.95, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut z = ZoomState::new(theta(), alpha).unwrap();
            let v0 = z.current_box.volume();
            for k in 1..8 {
                let g = grid_sample(&z.current_box, 3).unwrap();
                let p = g.points[rng.random_range(0..g.len())].clone();
                let before = z.current_box.clone();
                zoom_update(&mut z, &p, k as f64, 3).unwrap();
                prop_assert!(before.contains_box(&z.current_box));
                prop_assert!(z.current_box.volume() <= alpha.powi(2 * k) * v0 * (1.0 + 1e-12));
            }
        }
    }
}
