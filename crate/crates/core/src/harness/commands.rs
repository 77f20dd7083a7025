//! Subcommands: simulate, table, sample, verify-lmi, synthesize-gains and
//! pe-check. Each returns its report lines; the binary prints them.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentConfig, PlantKind, SamplingMode, SweepConfig};
use super::{
    build_plant, cc_designer, luenberger_targets, resolve, run_experiment, with_seed, ConfigError,
    HarnessError, PlantInstance, LUENBERGER_NU,
};
use crate::gain_design::{
    self, mat_to_rows, rows_to_mat, GainCertificate, GainTable, PlantMatrices,
};
use crate::linalg::{self, Mat};
use crate::models::{jansen_rit_plant, JansenRitParams, LureMatrices};
use crate::pe;
use crate::sampling::{grid_sample, ParamBox};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct CommonOpts {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

fn config_path(opts: &CommonOpts) -> Result<&Path, HarnessError> {
    opts.config
        .as_deref()
        .ok_or_else(|| ConfigError::Invalid("--config is required".into()).into())
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load_experiment(opts: &CommonOpts) -> Result<(ExperimentConfig, PathBuf), HarnessError> {
    let path = config_path(opts)?;
    let cfg = with_seed(ExperimentConfig::load(path)?, opts.seed);
    Ok((cfg, base_dir(path)))
}

fn out_dir(opts: &CommonOpts, cfg_dir: Option<&str>) -> Result<PathBuf, HarnessError> {
    let dir = opts
        .out
        .clone()
        .or_else(|| cfg_dir.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, HarnessError> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// Runs the configured experiment and writes `trace.csv` (plus
/// `output_errors.csv` and `observer_params.csv` when `output.output_errors`
/// is set).
pub fn cmd_simulate(opts: &CommonOpts) -> Result<Vec<String>, HarnessError> {
    let (cfg, dir) = load_experiment(opts)?;
    let out = out_dir(opts, cfg.output.dir.as_deref())?;
    let trace = run_experiment(&cfg, &dir)?;

    let path = out.join("trace.csv");
    trace
        .write_csv(create(&path)?)
        .map_err(|e| HarnessError::io(&path, e))?;
    if trace.output_errors.is_some() {
        let oe = out.join("output_errors.csv");
        trace
            .write_output_errors_csv(create(&oe)?)
            .map_err(|e| HarnessError::io(&oe, e))?;
        let pp = out.join("observer_params.csv");
        let mut text = String::from("observer");
        for j in 1..=trace.n_p {
            text.push_str(&format!(",p_{j}"));
        }
        text.push_str(",err_p_inf\n");
        for (i, p) in trace.final_params.iter().enumerate() {
            let err = p
                .iter()
                .zip(&cfg.plant.p_true)
                .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
            text.push_str(&format!("{},{},{}\n", i + 1, join(p), err));
        }
        fs::write(&pp, text).map_err(|e| HarnessError::io(&pp, e))?;
    }

    let last = trace.last();
    let err_x: Vec<f64> = last.x_hat.iter().zip(&last.x).map(|(a, b)| a - b).collect();
    Ok(vec![
        format!("trace written to {}", path.display()),
        format!(
            "final |p_err|_inf = {:.6}  |p_err|_2 = {:.6}  |x_err|_inf = {:.6e}  |x_err|_2 = {:.6e}",
            last.err_p_inf,
            trace.final_param_error_euclid(&cfg.plant.p_true),
            last.err_x_inf,
            crate::models::euclid_norm(&err_x),
        ),
        format!(
            "p_hat = [{}]  zoom events = {}  max |x|_inf = {:.4}  wall = {:.2} s",
            join(&last.p_hat),
            trace.zoom_events.len(),
            trace.plant_max_abs,
            trace.wall_seconds
        ),
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableCell {
    pub mode: SamplingMode,
    pub m: usize,
    pub n: usize,
    pub err_p_euclid: f64,
    pub err_p_inf: f64,
    pub state_ratio: f64,
    pub zoom_events: usize,
}

/// Reference cells `(N, static, dynamic)` printed next to the sweep.
pub const REFERENCE_CELLS: [(usize, f64, f64); 3] = [(4, 4.30, 2.66), (16, 3.80, 1.04), (25, 2.55, 0.72)];

/// Runs every `m` of the sweep in both modes (in parallel) and writes
/// `table.csv`.
pub fn run_sweep(sweep: &SweepConfig, sweep_dir: &Path, seed: Option<u64>) -> Result<Vec<TableCell>, HarnessError> {
    let base_path = resolve(sweep_dir, &sweep.base);
    let base = with_seed(ExperimentConfig::load(&base_path)?, seed);
    let base_dir = base_dir(&base_path);
    let jobs: Vec<(SamplingMode, usize)> = sweep
        .m_values
        .iter()
        .flat_map(|&m| [(SamplingMode::Static, m), (SamplingMode::Dynamic, m)])
        .collect();
    jobs.par_iter()
        .map(|&(mode, m)| {
            let mut cfg = base.clone();
            cfg.sampling.mode = mode;
            cfg.sampling.m = m;
            cfg.output.output_errors = false;
            (cfg.sampling.alpha, cfg.sampling.td) = match mode {
                SamplingMode::Static => (None, None),
                SamplingMode::Dynamic => (Some(sweep.alpha), Some(sweep.td)),
            };
            let trace = run_experiment(&cfg, &base_dir)?;
            Ok(TableCell {
                mode,
                m,
                n: m.pow(cfg.n_p() as u32),
                err_p_euclid: trace.final_param_error_euclid(&cfg.plant.p_true),
                err_p_inf: trace.last().err_p_inf,
                state_ratio: trace.normalized_state_error(),
                zoom_events: trace.zoom_events.len(),
            })
        })
        .collect()
}

pub fn cmd_table(opts: &CommonOpts) -> Result<Vec<String>, HarnessError> {
    let path = config_path(opts)?;
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let sweep = SweepConfig::from_toml(&text)?;
    let cells = run_sweep(&sweep, &base_dir(path), opts.seed)?;
    let out = out_dir(opts, None)?;
    let csv = out.join("table.csv");
    let mut body = String::from("mode,m,N,err_p_euclid,err_p_inf,state_ratio,zoom_events\n");
    for c in &cells {
        body.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            mode_name(c.mode),
            c.m,
            c.n,
            c.err_p_euclid,
            c.err_p_inf,
            c.state_ratio,
            c.zoom_events
        ));
    }
    fs::write(&csv, body).map_err(|e| HarnessError::io(&csv, e))?;

    let mut lines = vec![format!("{:<10}{:>6}{:>14}{:>14}{:>14}", "mode", "N", "|p_err|", "|p_err|_inf", "x ratio")];
    for c in &cells {
        lines.push(format!(
            "{:<10}{:>6}{:>14.4}{:>14.4}{:>14.3e}",
            mode_name(c.mode),
            c.n,
            c.err_p_euclid,
            c.err_p_inf,
            c.state_ratio
        ));
    }
    lines.push("reference |p_err| at t_f = 100 s (different input and gains):".into());
    for (n, s, d) in REFERENCE_CELLS {
        lines.push(format!("  N = {n:>2}: static {s:.2}, dynamic {d:.2}"));
    }
    lines.push(format!("table written to {}", csv.display()));
    Ok(lines)
}

fn mode_name(m: SamplingMode) -> &'static str {
    match m {
        SamplingMode::Static => "static",
        SamplingMode::Dynamic => "dynamic",
    }
}

/// Writes the grid of `theta` with `sampling.m` points per side to
/// `grid.csv`.
pub fn cmd_sample(opts: &CommonOpts) -> Result<Vec<String>, HarnessError> {
    let (cfg, _) = load_experiment(opts)?;
    let bx = ParamBox::from_bounds(&cfg.theta.lower, &cfg.theta.upper)
        .map_err(|e| ConfigError::Invalid(format!("theta: {e}")))?;
    let grid = grid_sample(&bx, cfg.sampling.m).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let out = out_dir(opts, cfg.output.dir.as_deref())?;
    let path = out.join("grid.csv");
    let mut text = String::from("i");
    for j in 1..=bx.dim() {
        text.push_str(&format!(",p_{j}"));
    }
    text.push('\n');
    for (i, p) in grid.points.iter().enumerate() {
        text.push_str(&format!("{},{}\n", i + 1, join(p)));
    }
    fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(vec![format!(
        "{} points, distance bound {} , written to {}",
        grid.len(),
        grid.distance_bound(),
        path.display()
    )])
}

fn corners(lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let n = lo.len();
    (0..1usize << n)
        .map(|mask| {
            (0..n)
                .map(|j| if mask >> j & 1 == 1 { hi[j] } else { lo[j] })
                .collect()
        })
        .collect()
}

fn entry_mats(entry: &GainCertificate, p: &[f64]) -> Result<LureMatrices, HarnessError> {
    match &entry.plant {
        Some(pm) => Ok(pm.to_lure()?),
        None => {
            let plant = jansen_rit_plant(JansenRitParams::default())?;
            if p.len() != 2 {
                return Err(ConfigError::Invalid(format!(
                    "entry at {p:?} has no plant matrices and is not a Jansen-Rit parameter"
                ))
                .into());
            }
            Ok(plant.matrices(p))
        }
    }
}

/// Verifies every entry of a certificate file. Entries without plant
/// matrices are checked against the default Jansen–Rit plant, at `p` and at
/// every corner of the certified box.
pub fn cmd_verify_lmi(opts: &CommonOpts) -> Result<Vec<String>, HarnessError> {
    let path = config_path(opts)?;
    let table = GainTable::load(path).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    if table.certificate.is_empty() {
        return Err(ConfigError::Invalid("no [[certificate]] entries".into()).into());
    }
    let mut lines = Vec::new();
    let mut failures = 0;
    for (i, e) in table.certificate.iter().enumerate() {
        let mut points = vec![e.p.clone()];
        if let (Some(lo), Some(hi)) = (&e.valid_lower, &e.valid_upper) {
            points.extend(corners(lo, hi));
        }
        for p in &points {
            let verdict = match e.class.as_str() {
                "circle_criterion" => {
                    let data = e.cc_data().map_err(|e| ConfigError::Invalid(e.to_string()))?;
                    let mats = entry_mats(e, p)?;
                    gain_design::verify_cc_gains(&data, &mats, None)
                        .map(|c| (c.max_eig, c.tol))
                }
                "luenberger" => verify_luenberger_entry(e),
                other => {
                    return Err(ConfigError::Invalid(format!("unknown class {other}")).into())
                }
            };
            match verdict {
                Ok((max_eig, tol)) => lines.push(format!(
                    "entry {} ({}, p = [{}]): CERTIFIED, max eig = {max_eig:.6e} (tol {tol:.1e})",
                    i + 1,
                    e.class,
                    join(p)
                )),
                Err(err) => {
                    failures += 1;
                    lines.push(format!(
                        "entry {} ({}, p = [{}]): REJECTED, {err}",
                        i + 1,
                        e.class,
                        join(p)
                    ));
                }
            }
        }
    }
    if failures > 0 {
        return Err(HarnessError::Runtime(format!(
            "{failures} check(s) failed\n{}",
            lines.join("\n")
        )));
    }
    Ok(lines)
}

/// Luenberger entries carry `A` and `C`; the check is
/// `P(A+LC) + (A+LC)ᵀP = −νI` with `P > 0`. Reports `−ν` as max eigenvalue.
fn verify_luenberger_entry(e: &GainCertificate) -> Result<(f64, f64), gain_design::GainDesignError> {
    let pm = e
        .plant
        .as_ref()
        .ok_or_else(|| gain_design::GainDesignError::File("luenberger entry needs plant A and C".into()))?;
    let a = rows_to_mat(&pm.a, "A")?;
    let c = rows_to_mat(&pm.c, "C")?;
    let l = rows_to_mat(&e.l, "L")?;
    let p = rows_to_mat(&e.p_matrix, "P")?;
    let acl = &a + &l * &c;
    let n = a.nrows();
    let q = Mat::identity(n, n) * e.nu;
    let residual = linalg::lyapunov_residual(&acl, &p, &q);
    let tol = 1e-8 * e.nu.max(1.0) * linalg::max_abs(&p).max(1.0);
    if residual > tol {
        return Err(gain_design::GainDesignError::LyapunovResidual { residual, bound: tol });
    }
    if linalg::sym_eig(&p)?.min() <= 0.0 {
        return Err(gain_design::GainDesignError::BadP("not positive definite".into()));
    }
    Ok((-e.nu, tol))
}

/// Designs gains for every grid point of the configured experiment and
/// writes them to `gains.toml`.
pub fn cmd_synthesize_gains(opts: &CommonOpts) -> Result<Vec<String>, HarnessError> {
    let (cfg, dir) = load_experiment(opts)?;
    let plant = build_plant(&cfg)?;
    let bx = ParamBox::from_bounds(&cfg.theta.lower, &cfg.theta.upper)
        .map_err(|e| ConfigError::Invalid(format!("theta: {e}")))?;
    let grid = grid_sample(&bx, cfg.sampling.m).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let mut table = GainTable::default();
    for p in &grid.points {
        let entry = match &plant {
            PlantInstance::Linear(lp) => {
                let a = (lp.a_of_p)(p);
                let c = (lp.c_of_p)(p);
                let targets = luenberger_targets(&cfg);
                let (l, cert) = gain_design::design_luenberger(&a, &c, &targets, LUENBERGER_NU)?;
                let mut e = GainCertificate::from_luenberger(p, &l, &cert);
                e.plant = Some(PlantMatrices {
                    g: vec![vec![]; a.nrows()],
                    a: mat_to_rows(&a),
                    c: mat_to_rows(&c),
                    h: vec![],
                });
                e
            }
            PlantInstance::Lure(lp) => {
                let designer = cc_designer(&cfg, lp, &dir)?;
                GainCertificate::from_cc(p, &designer.certify(p)?)
            }
        };
        table.certificate.push(entry);
    }
    let out = out_dir(opts, cfg.output.dir.as_deref())?;
    let path = out.join("gains.toml");
    table.save(&path)?;
    Ok(vec![format!(
        "{} certificate(s) written to {}",
        table.certificate.len(),
        path.display()
    )])
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| ConfigError::Invalid(format!("{}: empty CSV", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| {
                ConfigError::Invalid(format!("{} line {}: {e}", path.display(), k + 2))
            })?;
        if row.len() != header.len() {
            return Err(ConfigError::Invalid(format!(
                "{} line {}: {} fields, header has {}",
                path.display(),
                k + 2,
                row.len(),
                header.len()
            ))
            .into());
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// PE diagnostics for an output-error CSV (`t, ytilde_<i>_<k>`). The
/// window is `window`, else `5/λ` from `--config`. Parameter errors come
/// from `observer_params.csv` beside the trace when present. Writes
/// `pe_report.csv`.
pub fn cmd_pe_check(
    opts: &CommonOpts,
    trace: Option<&Path>,
    window: Option<f64>,
) -> Result<Vec<String>, HarnessError> {
    let cfg = match &opts.config {
        Some(_) => Some(load_experiment(opts)?.0),
        None => None,
    };
    let window = match (window, &cfg) {
        (Some(w), _) => w,
        (None, Some(c)) => pe::default_window(c.monitor.lambda),
        (None, None) => {
            return Err(ConfigError::Invalid("pe-check needs --window or --config".into()).into())
        }
    };
    let out = out_dir(opts, cfg.as_ref().and_then(|c| c.output.dir.as_deref()))?;
    let trace_path = trace
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.join("output_errors.csv"));
    let (header, rows) = read_csv(&trace_path)?;
    let mut columns: Vec<(usize, usize, usize)> = Vec::new();
    for (col, name) in header.iter().enumerate().skip(1) {
        let parts: Vec<&str> = name.split('_').collect();
        match parts.as_slice() {
            ["ytilde", i, k] => {
                let (i, k) = (i.parse::<usize>(), k.parse::<usize>());
                match (i, k) {
                    (Ok(i), Ok(k)) if i >= 1 && k >= 1 => columns.push((i - 1, k - 1, col)),
                    _ => return Err(ConfigError::Invalid(format!("bad column {name}")).into()),
                }
            }
            _ => return Err(ConfigError::Invalid(format!("unexpected column {name}")).into()),
        }
    }
    let n_obs = columns.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let n_y = columns.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let mut y_errs = vec![vec![vec![0.0; n_y]; rows.len()]; n_obs];
    for (j, r) in rows.iter().enumerate() {
        for &(i, k, col) in &columns {
            y_errs[i][j][k] = r[col];
        }
    }
    let params_path = trace_path.with_file_name("observer_params.csv");
    let param_errors = if params_path.exists() {
        let (h, prow) = read_csv(&params_path)?;
        let col = h.iter().position(|c| c == "err_p_inf").ok_or_else(|| {
            ConfigError::Invalid(format!("{}: no err_p_inf column", params_path.display()))
        })?;
        prow.iter().map(|r| r[col]).collect()
    } else {
        vec![f64::NAN; n_obs]
    };
    if param_errors.len() != n_obs {
        return Err(ConfigError::Invalid(format!(
            "{} lists {} observers, trace has {n_obs}",
            params_path.display(),
            param_errors.len()
        ))
        .into());
    }
    let report = pe::pe_report(&times, &y_errs, &param_errors, window)
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let path = out.join("pe_report.csv");
    let mut text = String::from("observer,err_p_inf,min_energy,gramian_floor\n");
    for i in 0..n_obs {
        text.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            report.param_errors[i],
            report.min_energy[i],
            report.gramian_floor[i]
        ));
    }
    fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    let rho = report
        .scatter
        .spearman
        .map_or("n/a".to_string(), |r| format!("{r:.4}"));
    let max_e = report.min_energy.iter().cloned().fold(0.0, f64::max);
    Ok(vec![
        format!("window T_f = {window}, {n_obs} observers, largest min-energy {max_e:.6e}"),
        format!("Spearman(|p_err|_inf, min energy) = {rho}"),
        format!("report written to {}", path.display()),
    ])
}

/// Whether a config describes the Jansen–Rit plant.
pub fn is_jansen_rit(cfg: &ExperimentConfig) -> bool {
    cfg.plant.kind == PlantKind::JansenRit
}
