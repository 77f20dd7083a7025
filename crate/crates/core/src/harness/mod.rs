//! Experiment assembly from config files and the command implementations
//! behind the `supobs` binary.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use thiserror::Error;

use crate::gain_design::{GainDesignError, GainTable, SynthesisConfig};
use crate::input::{Constant, InputSignal, PiecewiseUniform, Sine};
use crate::models::{jansen_rit_plant, LinearPlant, LurePlant, ModelError, Plant};
use crate::odesim::SimConfig;
use crate::sampling::ParamBox;
use crate::supervisor::{
    self, CircleCriterionDesigner, LuenbergerDesigner, ObserverDesigner, RunSetup,
    SupervisorError, SupervisorTrace,
};

pub use config::{ConfigError, ExperimentConfig, SamplingMode, SweepConfig};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] SupervisorError),
    #[error(transparent)]
    Gain(#[from] GainDesignError),
    #[error("{0}")]
    Runtime(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl HarnessError {
    /// 2 for configuration problems, 3 for run or certification failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 3,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<ModelError> for HarnessError {
    fn from(e: ModelError) -> Self {
        HarnessError::Run(e.into())
    }
}

/// Plant instance selected by `plant.kind`.
#[derive(Debug, Clone)]
pub enum PlantInstance {
    Linear(LinearPlant),
    Lure(LurePlant),
}

impl PlantInstance {
    pub fn as_plant(&self) -> &dyn Plant {
        match self {
            PlantInstance::Linear(p) => p,
            PlantInstance::Lure(p) => p,
        }
    }
}

pub fn build_plant(cfg: &ExperimentConfig) -> Result<PlantInstance, HarnessError> {
    Ok(match cfg.plant.kind {
        config::PlantKind::ScalarLinear => PlantInstance::Linear(LinearPlant::scalar_testbed()),
        config::PlantKind::JansenRit => {
            PlantInstance::Lure(jansen_rit_plant(cfg.plant.jansen_rit.unwrap_or_default())?)
        }
    })
}

pub fn build_input(cfg: &ExperimentConfig) -> Box<dyn InputSignal> {
    let i = &cfg.input;
    match i.kind {
        config::InputKind::Sine => Box::new(Sine {
            amplitude: i.amplitude.unwrap_or(1.0),
            omega: i.omega.unwrap_or(1.0),
            offset: i.offset.unwrap_or(0.0),
        }),
        config::InputKind::PiecewiseUniform => Box::new(PiecewiseUniform::new(
            i.low.unwrap_or(0.0),
            i.high.unwrap_or(1.0),
            i.hold.unwrap_or(1.0),
            i.seed.unwrap_or(0),
            cfg.sim.t_final,
        )),
        config::InputKind::Constant => Box::new(Constant(vec![i.offset.unwrap_or(0.0)])),
    }
}

/// Resolves `file` against `base_dir` unless it is absolute.
pub fn resolve(base_dir: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

/// Decay rate `ν` of the Luenberger Lyapunov certificates.
pub const LUENBERGER_NU: f64 = 2.0;

pub fn luenberger_targets(cfg: &ExperimentConfig) -> Vec<Complex64> {
    cfg.observer
        .targets
        .iter()
        .map(|&t| Complex64::new(t, 0.0))
        .collect()
}

pub fn cc_designer(
    cfg: &ExperimentConfig,
    plant: &LurePlant,
    base_dir: &Path,
) -> Result<CircleCriterionDesigner, HarnessError> {
    let table = match &cfg.observer.gains_file {
        Some(f) => GainTable::load(&resolve(base_dir, f))
            .map_err(|e| ConfigError::Invalid(format!("observer.gains_file: {e}")))?,
        None => GainTable::default(),
    };
    Ok(CircleCriterionDesigner {
        plant: plant.clone(),
        table,
        synthesis: SynthesisConfig {
            budget: cfg.observer.synthesis_budget,
            seed: cfg.input.seed.unwrap_or(0),
            ..SynthesisConfig::default()
        },
    })
}

pub fn build_designer(
    cfg: &ExperimentConfig,
    plant: &PlantInstance,
    base_dir: &Path,
) -> Result<Box<dyn ObserverDesigner>, HarnessError> {
    Ok(match plant {
        PlantInstance::Linear(p) => Box::new(LuenbergerDesigner {
            plant: p.clone(),
            targets: luenberger_targets(cfg),
            nu: LUENBERGER_NU,
        }),
        PlantInstance::Lure(p) => Box::new(cc_designer(cfg, p, base_dir)?),
    })
}

/// Applies `--seed` to the input descriptor.
pub fn with_seed(mut cfg: ExperimentConfig, seed: Option<u64>) -> ExperimentConfig {
    if let Some(s) = seed {
        cfg.input.seed = Some(s);
    }
    cfg
}

/// Runs one configured experiment end to end.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    base_dir: &Path,
) -> Result<SupervisorTrace, HarnessError> {
    cfg.validate()?;
    let plant = build_plant(cfg)?;
    let input = build_input(cfg);
    let mut designer = build_designer(cfg, &plant, base_dir)?;
    let theta = ParamBox::from_bounds(&cfg.theta.lower, &cfg.theta.upper)
        .map_err(|e| ConfigError::Invalid(format!("theta: {e}")))?;
    let dynamic = cfg.sampling.mode == SamplingMode::Dynamic;
    let sim = SimConfig::new(
        cfg.sim.dt,
        cfg.sim.t_final,
        if dynamic { cfg.sampling.td } else { None },
        cfg.sim.record_stride,
    )
    .map_err(|e| ConfigError::Invalid(format!("sim: {e}")))?;
    let setup = RunSetup {
        plant: plant.as_plant(),
        p_true: cfg.plant.p_true.clone(),
        x0: cfg.plant.x0.clone(),
        xhat0: cfg.observer.xhat0.clone(),
        lambda: cfg.monitor.lambda,
        sim,
        input: input.as_ref(),
        p_star_log: Some(cfg.plant.p_true.clone()),
        record_output_errors: cfg.output.output_errors,
        guard_threshold: cfg.plant.guard,
    };
    let trace = if dynamic {
        supervisor::run_dynamic(
            &setup,
            designer.as_mut(),
            theta,
            cfg.sampling.m,
            cfg.sampling.alpha.unwrap_or(0.5),
        )?
    } else {
        let (_, bank) = supervisor::static_bank(designer.as_mut(), &theta, cfg.sampling.m)?;
        supervisor::run_static(&setup, bank)?
    };
    Ok(trace)
}
