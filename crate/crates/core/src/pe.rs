//! Persistency-of-excitation diagnostics on recorded output-error traces.

use thiserror::Error;

use crate::linalg::{self, Mat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PeError {
    #[error("window {window} is longer than the trace ({duration}) or shorter than two samples")]
    WindowTooLong { window: f64, duration: f64 },
    #[error("trace needs at least two uniformly spaced samples: {0}")]
    BadTrace(String),
}

fn check_trace(times: &[f64], rows: usize, window: f64) -> Result<f64, PeError> {
    if times.len() < 2 || times.len() != rows {
        return Err(PeError::BadTrace(format!(
            "{} times, {} samples",
            times.len(),
            rows
        )));
    }
    let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(h > 0.0)
        || times
            .windows(2)
            .any(|w| ((w[1] - w[0]) - h).abs() > 1e-6 * h)
    {
        return Err(PeError::BadTrace("sampling is not uniform".into()));
    }
    let duration = times[times.len() - 1] - times[0];
    if !(window >= 2.0 * h && window <= duration * (1.0 + 1e-12)) {
        return Err(PeError::WindowTooLong { window, duration });
    }
    Ok(h)
}

/// Trailing-window trapezoid integrals of a scalar sample series `g`.
/// The window start generally falls between samples; the integrand is
/// interpolated linearly there. Returns `(t, ∫_{t−T}^{t} g)` for every
/// sample time with a full window behind it.
fn windowed_integral(times: &[f64], g: &[f64], window: f64, h: f64) -> Vec<(f64, f64)> {
    let t0 = times[0];
    let mut cum = vec![0.0; g.len()];
    for j in 1..g.len() {
        cum[j] = cum[j - 1] + 0.5 * h * (g[j - 1] + g[j]);
    }
    // ∫_{t0}^{s} of the piecewise-linear interpolant
    let cum_at = |s: f64| -> f64 {
        let pos = ((s - t0) / h).max(0.0);
        let i = (pos.floor() as usize).min(g.len() - 2);
        let frac = pos - i as f64;
        let gs = g[i] + frac * (g[i + 1] - g[i]);
        cum[i] + 0.5 * frac * h * (g[i] + gs)
    };
    times
        .iter()
        .enumerate()
        .filter(|(_, &t)| t - t0 >= window * (1.0 - 1e-12))
        .map(|(j, &t)| (t, (cum[j] - cum_at(t - window)).max(0.0)))
        .collect()
}

/// `t ↦ ∫_{t−T_f}^{t} |ỹ(τ)|∞² dτ` on the recorded grid. `y_err[j]` is the
/// output error at `times[j]`.
pub fn windowed_energy(
    times: &[f64],
    y_err: &[Vec<f64>],
    window: f64,
) -> Result<Vec<(f64, f64)>, PeError> {
    let h = check_trace(times, y_err.len(), window)?;
    let g: Vec<f64> = y_err
        .iter()
        .map(|v| v.iter().fold(0.0_f64, |a, x| a.max(x.abs())).powi(2))
        .collect();
    Ok(windowed_integral(times, &g, window, h))
}

/// `min_t λ_min(∫_{t−T_f}^{t} ỹ ỹᵀ dτ)`.
pub fn classical_pe_gramian(times: &[f64], y_err: &[Vec<f64>], window: f64) -> Result<f64, PeError> {
    let h = check_trace(times, y_err.len(), window)?;
    let ny = y_err[0].len();
    let mut entries = Vec::new();
    for a in 0..ny {
        for b in a..ny {
            let g: Vec<f64> = y_err.iter().map(|v| v[a] * v[b]).collect();
            entries.push(((a, b), windowed_integral(times, &g, window, h)));
        }
    }
    let windows = entries[0].1.len();
    let mut floor = f64::INFINITY;
    for w in 0..windows {
        let mut gram = Mat::zeros(ny, ny);
        for ((a, b), series) in &entries {
            gram[(*a, *b)] = series[w].1;
            gram[(*b, *a)] = series[w].1;
        }
        let lmin = if ny == 1 {
            gram[(0, 0)]
        } else {
            linalg::sym_eig(&gram)
                .map(|e| e.min())
                .unwrap_or(f64::NAN)
        };
        floor = floor.min(lmin);
    }
    Ok(floor)
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeScatter {
    /// `(|p̃_i|∞, min_t E_i(t))` per observer.
    pub pairs: Vec<(f64, f64)>,
    pub spearman: Option<f64>,
}

pub fn pe_scatter(param_errors: &[f64], min_energies: &[f64]) -> PeScatter {
    PeScatter {
        pairs: param_errors
            .iter()
            .cloned()
            .zip(min_energies.iter().cloned())
            .collect(),
        spearman: spearman(param_errors, min_energies),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeReport {
    pub window: f64,
    pub min_energy: Vec<f64>,
    pub gramian_floor: Vec<f64>,
    pub param_errors: Vec<f64>,
    pub scatter: PeScatter,
}

/// Default diagnostic window `5/λ`.
pub fn default_window(lambda: f64) -> f64 {
    5.0 / lambda
}

/// Builds the report for a bank. `y_errs[i][j]` is observer `i`'s output
/// error at `times[j]`.
pub fn pe_report(
    times: &[f64],
    y_errs: &[Vec<Vec<f64>>],
    param_errors: &[f64],
    window: f64,
) -> Result<PeReport, PeError> {
    let mut min_energy = Vec::with_capacity(y_errs.len());
    let mut gramian_floor = Vec::with_capacity(y_errs.len());
    for ye in y_errs {
        let e = windowed_energy(times, ye, window)?;
        min_energy.push(e.iter().map(|p| p.1).fold(f64::INFINITY, f64::min));
        gramian_floor.push(classical_pe_gramian(times, ye, window)?);
    }
    Ok(PeReport {
        window,
        scatter: pe_scatter(param_errors, &min_energy),
        min_energy,
        gramian_floor,
        param_errors: param_errors.to_vec(),
    })
}
