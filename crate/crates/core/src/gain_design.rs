//! Observer gain design and certification.
//!
//! Luenberger gains come from eigenvalue assignment plus a Lyapunov
//! certificate. Circle-criterion gains are certified by assembling the
//! block LMI and testing negative semidefiniteness; synthesis is a seeded
//! randomized search, and externally computed gains load from certificate
//! files.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError, Mat};
use crate::models::LureMatrices;
use crate::observers::{Assumption2Certificate, ObserverError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GainDesignError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("sector bound {index} is zero")]
    ZeroSectorBound { index: usize },
    #[error("LMI is not negative semidefinite: max eigenvalue {max_eig:e} > tol {tol:e}")]
    NotNSD { max_eig: f64, tol: f64 },
    #[error("P is not symmetric positive definite: {0}")]
    BadP(String),
    #[error("M is not a positive diagonal: {0}")]
    BadM(String),
    #[error("synthesis budget exhausted after {evaluations} evaluations (best relative max eigenvalue {best:e})")]
    SynthesisBudgetExhausted { evaluations: usize, best: f64 },
    #[error("Lyapunov residual {residual:e} exceeds {bound:e}")]
    LyapunovResidual { residual: f64, bound: f64 },
    #[error("certificate file: {0}")]
    File(String),
    #[error("no gain table entry for class {0}")]
    NoEntry(String),
}

/// Decision variables of the circle-criterion LMI for one nominal parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CCLmiData {
    pub p: Mat,
    pub m_diag: Vec<f64>,
    pub k: Mat,
    pub l: Mat,
    pub lmi_nu: f64,
    pub lmi_mu: f64,
    pub sector_upper: Vec<f64>,
}

/// Assembles the symmetric `(2 n_x + n_γ)`-square LMI
///
/// ```text
/// [ 𝒜   ℬ   P   ]
/// [ ℬᵀ  ℰ   0   ]
/// [ P   0   −μI ]
/// ```
///
/// with `𝒜 = P(A+LC) + (A+LC)ᵀP + νI`, `ℬ = PG + (H+KC)ᵀM` and
/// `ℰ = −2M·diag(1/b_k)`. The `M` diagonal and `ℰ` are indexed by the
/// nonlinearity count `n_γ`.
pub fn assemble_cc_lmi(
    data: &CCLmiData,
    a: &Mat,
    g: &Mat,
    c: &Mat,
    h: &Mat,
) -> Result<Mat, GainDesignError> {
    let nx = a.nrows();
    let ng = g.ncols();
    let ny = c.nrows();
    let shapes_ok = a.ncols() == nx
        && g.nrows() == nx
        && c.ncols() == nx
        && h.shape() == (ng, nx)
        && data.p.shape() == (nx, nx)
        && data.l.shape() == (nx, ny)
        && data.k.shape() == (ng, ny)
        && data.m_diag.len() == ng
        && data.sector_upper.len() == ng;
    if !shapes_ok {
        return Err(GainDesignError::DimensionMismatch(format!(
            "A {:?}, G {:?}, C {:?}, H {:?}, P {:?}, L {:?}, K {:?}, m {}, b {}",
            a.shape(),
            g.shape(),
            c.shape(),
            h.shape(),
            data.p.shape(),
            data.l.shape(),
            data.k.shape(),
            data.m_diag.len(),
            data.sector_upper.len()
        )));
    }
    if let Some(index) = data.sector_upper.iter().position(|&b| b == 0.0) {
        return Err(GainDesignError::ZeroSectorBound { index });
    }
    let p = &data.p;
    let acl = a + &data.l * c;
    let pa = p * &acl;
    let blk_a = &pa + pa.transpose() + Mat::identity(nx, nx) * data.lmi_nu;
    let m = Mat::from_diagonal(&nalgebra::DVector::from_column_slice(&data.m_diag));
    let blk_b = p * g + (h + &data.k * c).transpose() * &m;
    let blk_e = Mat::from_diagonal(&nalgebra::DVector::from_iterator(
        ng,
        data.m_diag
            .iter()
            .zip(&data.sector_upper)
            .map(|(mk, bk)| -2.0 * mk / bk),
    ));

    let n = 2 * nx + ng;
    let mut x = Mat::zeros(n, n);
    x.view_mut((0, 0), (nx, nx)).copy_from(&blk_a);
    x.view_mut((0, nx), (nx, ng)).copy_from(&blk_b);
    x.view_mut((nx, 0), (ng, nx)).copy_from(&blk_b.transpose());
    x.view_mut((nx, nx), (ng, ng)).copy_from(&blk_e);
    x.view_mut((0, nx + ng), (nx, nx)).copy_from(p);
    x.view_mut((nx + ng, 0), (nx, nx)).copy_from(&p.transpose());
    x.view_mut((nx + ng, nx + ng), (nx, nx))
        .copy_from(&(Mat::identity(nx, nx) * -data.lmi_mu));
    // exact symmetry regardless of round-off in 𝒜
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (x[(i, j)] + x[(j, i)]);
            x[(i, j)] = v;
            x[(j, i)] = v;
        }
    }
    Ok(x)
}

/// `1e−7·max(1, ‖X‖max)`.
pub fn default_lmi_tol(lmi: &Mat) -> f64 {
    1e-7 * linalg::max_abs(lmi).max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CCCertificate {
    pub data: CCLmiData,
    pub max_eig: f64,
    pub tol: f64,
}

impl CCCertificate {
    /// The quadratic certificate `V = x̃ᵀPx̃` implied by the LMI.
    pub fn assumption2(&self) -> Result<Assumption2Certificate, GainDesignError> {
        Ok(Assumption2Certificate::from_quadratic(
            self.data.p.clone(),
            self.data.lmi_nu,
        )?)
    }
}

fn check_p(p: &Mat) -> Result<(), GainDesignError> {
    let eig = linalg::sym_eig(p).map_err(|e| GainDesignError::BadP(e.to_string()))?;
    if eig.min() <= 0.0 {
        return Err(GainDesignError::BadP(format!("min eigenvalue {:e}", eig.min())));
    }
    Ok(())
}

fn check_m(m: &[f64]) -> Result<(), GainDesignError> {
    if let Some(v) = m.iter().find(|v| !(**v > 0.0)) {
        return Err(GainDesignError::BadM(format!("diagonal entry {v}")));
    }
    Ok(())
}

/// Certifies `data` against the plant matrices when the assembled LMI is
/// negative semidefinite within `tol` (default [`default_lmi_tol`]).
pub fn verify_cc_gains(
    data: &CCLmiData,
    mats: &LureMatrices,
    tol: Option<f64>,
) -> Result<CCCertificate, GainDesignError> {
    check_p(&data.p)?;
    check_m(&data.m_diag)?;
    if !(data.lmi_nu > 0.0 && data.lmi_mu > 0.0) {
        return Err(GainDesignError::DimensionMismatch(format!(
            "lmi_nu {} and lmi_mu {} must be positive",
            data.lmi_nu, data.lmi_mu
        )));
    }
    let lmi = assemble_cc_lmi(data, &mats.a, &mats.g, &mats.c, &mats.h)?;
    let tol = tol.unwrap_or_else(|| default_lmi_tol(&lmi));
    let max_eig = linalg::sym_eig(&lmi)?.max();
    if max_eig > tol {
        return Err(GainDesignError::NotNSD { max_eig, tol });
    }
    Ok(CCCertificate {
        data: data.clone(),
        max_eig,
        tol,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    /// Objective evaluations per (L, K) candidate.
    pub budget: usize,
    pub seed: u64,
    /// Whether `L` may be chosen by eigenvalue assignment. When false only
    /// `L = 0` is tried.
    pub allow_injection: bool,
    /// Spectrum scales tried for assigned `L`: targets `−s·(1, 2, …, n_x)`.
    pub target_scales: Vec<f64>,
    /// Random `K` candidates besides `K = 0`.
    pub k_candidates: usize,
    /// Starting point (for example a gain-table entry) tried first.
    pub warm_start: Option<CCLmiData>,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            budget: 2000,
            seed: 0,
            allow_injection: true,
            target_scales: vec![1.0, 3.0, 10.0],
            k_candidates: 2,
            warm_start: None,
        }
    }
}

fn lmi_objective(
    acl: &Mat,
    l: &Mat,
    k: &Mat,
    theta: &[f64],
    mats: &LureMatrices,
    sector_upper: &[f64],
) -> Option<(f64, CCLmiData)> {
    let nx = acl.nrows();
    let ng = sector_upper.len();
    let q: Vec<f64> = theta[..nx].iter().map(|v| v.exp()).collect();
    let qm = Mat::from_diagonal(&nalgebra::DVector::from_column_slice(&q));
    let p = linalg::solve_lyapunov_q(acl, &qm).ok()?;
    let data = CCLmiData {
        p,
        m_diag: theta[nx..nx + ng].iter().map(|v| v.exp()).collect(),
        k: k.clone(),
        l: l.clone(),
        lmi_nu: 0.1 * q.iter().cloned().fold(f64::INFINITY, f64::min),
        lmi_mu: theta[nx + ng].exp(),
        sector_upper: sector_upper.to_vec(),
    };
    let lmi = assemble_cc_lmi(&data, &mats.a, &mats.g, &mats.c, &mats.h).ok()?;
    let max_eig = linalg::sym_eig(&lmi).ok()?.max();
    Some((max_eig / linalg::max_abs(&lmi).max(1e-300), data))
}

/// Best-effort randomized search for circle-criterion gains.
///
/// Candidates are tried in a fixed order: the warm start, then each `L`
/// (zero when `A` is Hurwitz, then assigned spectra) crossed with each `K`
/// (zero, then seeded random). For each pair a (1+1) evolution strategy
/// over `log diag(Q)`, `log M` and `log μ` minimizes the relative largest
/// eigenvalue of the LMI, with `P` solving `P Acl + Aclᵀ P = −Q` and
/// `ν = 0.1·min Q`. The first strictly negative point that also passes
/// [`verify_cc_gains`] is returned.
pub fn synthesize_cc_gains(
    mats: &LureMatrices,
    sector_upper: &[f64],
    cfg: &SynthesisConfig,
) -> Result<CCCertificate, GainDesignError> {
    if let Some(ws) = &cfg.warm_start {
        if let Ok(cert) = verify_cc_gains(ws, mats, None) {
            if cert.max_eig < 0.0 {
                return Ok(cert);
            }
        }
    }
    let nx = mats.a.nrows();
    let ny = mats.c.nrows();
    let ng = sector_upper.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut l_cands = Vec::new();
    if linalg::is_hurwitz(&mats.a)? {
        l_cands.push(Mat::zeros(nx, ny));
    }
    if cfg.allow_injection {
        let base = linalg::spectral_abscissa(&mats.a)?.abs().max(1.0);
        for s in &cfg.target_scales {
            let targets: Vec<Complex64> = (1..=nx)
                .map(|i| Complex64::new(-s * base * i as f64, 0.0))
                .collect();
            if let Ok(l) = linalg::stabilizing_output_injection(&mats.a, &mats.c, &targets) {
                l_cands.push(l);
            }
        }
    }
    let mut k_cands = vec![Mat::zeros(ng, ny)];
    for _ in 0..cfg.k_candidates {
        k_cands.push(Mat::from_fn(ng, ny, |_, _| rng.random_range(-1.0..1.0)));
    }

    let dim = nx + ng + 1;
    let mut evaluations = 0;
    let mut best_overall = f64::INFINITY;
    for l in &l_cands {
        let acl = &mats.a + l * &mats.c;
        for k in &k_cands {
            let mut theta = vec![0.0; dim];
            let Some((mut best, mut best_data)) =
                lmi_objective(&acl, l, k, &theta, mats, sector_upper)
            else {
                continue;
            };
            evaluations += 1;
            let mut step = 1.0;
            for _ in 0..cfg.budget {
                if best < 0.0 {
                    if let Ok(cert) = verify_cc_gains(&best_data, mats, None) {
                        return Ok(cert);
                    }
                }
                let trial: Vec<f64> = theta
                    .iter()
                    .map(|t| t + step * standard_normal(&mut rng))
                    .collect();
                evaluations += 1;
                match lmi_objective(&acl, l, k, &trial, mats, sector_upper) {
                    Some((v, d)) if v < best => {
                        best = v;
                        best_data = d;
                        theta = trial;
                        step *= 1.5;
                    }
                    _ => step *= 0.9,
                }
                step = step.clamp(1e-4, 4.0);
            }
            if best < 0.0 {
                if let Ok(cert) = verify_cc_gains(&best_data, mats, None) {
                    return Ok(cert);
                }
            }
            best_overall = best_overall.min(best);
        }
    }
    Err(GainDesignError::SynthesisBudgetExhausted {
        evaluations,
        best: best_overall,
    })
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Luenberger gain by eigenvalue assignment with its Lyapunov certificate
/// (`P(A+LC) + (A+LC)ᵀP = −νI`).
pub fn design_luenberger(
    a: &Mat,
    c: &Mat,
    targets: &[Complex64],
    nu: f64,
) -> Result<(Mat, Assumption2Certificate), GainDesignError> {
    let l = linalg::stabilizing_output_injection(a, c, targets)?;
    let acl = a + &l * c;
    let p = linalg::solve_lyapunov(&acl, nu)?;
    let n = a.nrows();
    let residual = linalg::lyapunov_residual(&acl, &p, &(Mat::identity(n, n) * nu));
    let bound = 1e-8 * nu * linalg::max_abs(&p).max(1.0);
    if residual > bound {
        return Err(GainDesignError::LyapunovResidual { residual, bound });
    }
    Ok((l, Assumption2Certificate::from_quadratic(p, nu)?))
}

/// One entry of a certificate file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainCertificate {
    /// `"luenberger"` or `"circle_criterion"`.
    pub class: String,
    pub p: Vec<f64>,
    /// Box over which the gains were certified (vertex check). Absent means
    /// the certificate applies to `p` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_upper: Option<Vec<f64>>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    #[serde(rename = "K", default, skip_serializing_if = "Vec::is_empty")]
    pub k: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    pub p_matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub m_diag: Vec<f64>,
    pub nu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lmi_mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sector_upper: Vec<f64>,
    pub max_eig: f64,
    /// Plant matrices at `p`, for certificates of plants not built into the
    /// library.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantMatrices>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// Row-major `A`, `G`, `C`, `H` of a Lur'e plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantMatrices {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
}

impl PlantMatrices {
    pub fn to_lure(&self) -> Result<LureMatrices, GainDesignError> {
        let a = rows_to_mat(&self.a, "A")?;
        Ok(LureMatrices {
            b: Mat::zeros(a.nrows(), 0),
            a,
            g: rows_to_mat(&self.g, "G")?,
            c: rows_to_mat(&self.c, "C")?,
            h: rows_to_mat(&self.h, "H")?,
        })
    }
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn rows_to_mat(rows: &[Vec<f64>], what: &str) -> Result<Mat, GainDesignError> {
    let r = rows.len();
    let c = rows.first().map_or(0, |v| v.len());
    if rows.iter().any(|v| v.len() != c) {
        return Err(GainDesignError::File(format!("ragged matrix {what}")));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

impl GainCertificate {
    pub fn from_cc(p: &[f64], cert: &CCCertificate) -> Self {
        let d = &cert.data;
        Self {
            class: "circle_criterion".into(),
            p: p.to_vec(),
            valid_lower: None,
            valid_upper: None,
            l: mat_to_rows(&d.l),
            k: mat_to_rows(&d.k),
            p_matrix: mat_to_rows(&d.p),
            m_diag: d.m_diag.clone(),
            nu: d.lmi_nu,
            lmi_mu: Some(d.lmi_mu),
            sector_upper: d.sector_upper.clone(),
            max_eig: cert.max_eig,
            plant: None,
            metadata: BTreeMap::new(),
        }
    }

    pub fn from_luenberger(p: &[f64], l: &Mat, cert: &Assumption2Certificate) -> Self {
        Self {
            class: "luenberger".into(),
            p: p.to_vec(),
            valid_lower: None,
            valid_upper: None,
            l: mat_to_rows(l),
            k: Vec::new(),
            p_matrix: mat_to_rows(&cert.p_matrix),
            m_diag: Vec::new(),
            nu: cert.nu,
            lmi_mu: None,
            sector_upper: Vec::new(),
            max_eig: -cert.nu,
            plant: None,
            metadata: BTreeMap::new(),
        }
    }

    pub fn cc_data(&self) -> Result<CCLmiData, GainDesignError> {
        if self.class != "circle_criterion" {
            return Err(GainDesignError::File(format!(
                "entry class {} has no LMI data",
                self.class
            )));
        }
        Ok(CCLmiData {
            p: rows_to_mat(&self.p_matrix, "P")?,
            m_diag: self.m_diag.clone(),
            k: rows_to_mat(&self.k, "K")?,
            l: rows_to_mat(&self.l, "L")?,
            lmi_nu: self.nu,
            lmi_mu: self
                .lmi_mu
                .ok_or_else(|| GainDesignError::File("lmi_mu missing".into()))?,
            sector_upper: self.sector_upper.clone(),
        })
    }

    /// Whether `p` lies in the certified box (or equals `p` if no box).
    pub fn covers(&self, p: &[f64]) -> bool {
        match (&self.valid_lower, &self.valid_upper) {
            (Some(lo), Some(hi)) => p
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *l <= *v && *v <= *h),
            _ => self.p.as_slice() == p,
        }
    }
}

/// A set of certificates with box-cover or nearest-entry lookup.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainTable {
    #[serde(default)]
    pub certificate: Vec<GainCertificate>,
}

impl GainTable {
    pub fn from_toml(text: &str) -> Result<Self, GainDesignError> {
        toml::from_str(text).map_err(|e| GainDesignError::File(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, GainDesignError> {
        toml::to_string(self).map_err(|e| GainDesignError::File(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, GainDesignError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GainDesignError::File(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), GainDesignError> {
        std::fs::write(path, self.to_toml()?)
            .map_err(|e| GainDesignError::File(format!("{}: {e}", path.display())))
    }

    /// First entry of `class` whose box covers `p`, else the entry of that
    /// class with nearest nominal parameter (∞-norm, lowest index on ties).
    pub fn lookup(&self, class: &str, p: &[f64]) -> Result<&GainCertificate, GainDesignError> {
        let of_class = || self.certificate.iter().filter(|c| c.class == class);
        if let Some(c) = of_class().find(|c| c.covers(p)) {
            return Ok(c);
        }
        let mut best: Option<(f64, &GainCertificate)> = None;
        for c in of_class() {
            let d = c
                .p
                .iter()
                .zip(p)
                .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c));
            }
        }
        best.map(|b| b.1)
            .ok_or_else(|| GainDesignError::NoEntry(class.to_string()))
    }
}
