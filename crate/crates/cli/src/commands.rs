use crate::config::{
    ClassifyConfig, FssConfig, FssInput, MeanFieldConfig, QuantumConfig, SpectrumConfig, SpectrumMode, SweepConfig,
};
use serde::Serialize;
use serde_json::{json, Value};
use spinsync::diagnostics::{classify_phase, order_parameters, AveragingWindow, Engine, Signal};
use spinsync::fss::{fit_collapse, ScalingDataset};
use spinsync::lindblad::{coherent_state, evolve, EvolveOptions};
use spinsync::liouvillian::{
    build_superoperator, full_spectrum, gap_csv, gap_scaling, leading_eigenvalues, SpectrumResult,
};
use spinsync::meanfield::{classify_attractor, MeanFieldSolver};
use spinsync::model::CollectiveSpinModel;
use spinsync::ode::uniform_grid;
use spinsync::sweep::{arnold_tongue, generate_fss_dataset};
use spinsync::Error;
use std::collections::BTreeMap;

/// One file of a run's output directory.
pub struct OutFile {
    pub name: &'static str,
    pub body: String,
}

/// Everything a subcommand produced. `failure` is set when the run stopped
/// after writing partial results.
#[derive(Default)]
pub struct Run {
    pub files: Vec<OutFile>,
    pub seeds: BTreeMap<&'static str, u64>,
    pub resolved: Value,
    pub failure: Option<Error>,
}

impl Run {
    fn new(resolved: &impl Serialize) -> Self {
        Self {
            resolved: serde_json::to_value(resolved).unwrap_or(Value::Null),
            ..Self::default()
        }
    }

    fn csv(&mut self, name: &'static str, body: String) {
        self.files.push(OutFile { name, body });
    }

    fn json(&mut self, name: &'static str, value: &impl Serialize) {
        let mut body = serde_json::to_string_pretty(value).expect("serializable output");
        body.push('\n');
        self.files.push(OutFile { name, body });
    }
}

pub fn meanfield(cfg: &MeanFieldConfig) -> Result<Run, Error> {
    let mut run = Run::new(cfg);
    let grid = uniform_grid(0.0, cfg.t_end, cfg.sample_dt);
    let solver = MeanFieldSolver {
        field: cfg.field,
        ..MeanFieldSolver::default()
    };
    let traj = solver.integrate(cfg.initial_condition.bloch()?, &cfg.params, cfg.t_end, &grid, cfg.protocol)?;
    let attractor = match classify_attractor(&traj, cfg.tail_fraction) {
        Ok(r) => json!(r),
        Err(e) => json!({ "error": e.to_string() }),
    };
    run.csv("trajectory.csv", traj.to_csv());
    run.json(
        "attractor.json",
        &json!({
            "params": cfg.params,
            "final_state": traj.last(),
            "attractor": attractor,
        }),
    );
    Ok(run)
}

pub fn quantum(cfg: &QuantumConfig) -> Result<Run, Error> {
    let mut run = Run::new(cfg);
    let model = CollectiveSpinModel::new(cfg.params)?;
    let a = cfg.initial_condition.angles();
    let rho0 = coherent_state(a.theta, a.phi, cfg.params.n_spins())?;
    let mut options = EvolveOptions::default();
    options.tol = options.tol.tightened(cfg.tolerance_factor);
    let grid = uniform_grid(0.0, cfg.t_end, cfg.sample_dt);
    let series = evolve(&rho0, &model, cfg.t_end, &grid, cfg.frame, &options)?;
    let signal = Signal::from_quantum(&series, &cfg.params);
    let window = AveragingWindow::tail(&signal, 0.5);
    let tail = order_parameters(&signal, &window)?;
    run.csv("observables.csv", series.to_csv());
    run.json(
        "summary.json",
        &json!({
            "params": cfg.params,
            "frame": series.frame,
            "tolerances": options.tol,
            "samples": series.times.len(),
            "stats": series.stats,
            "max_trace_drift": series.max_trace_drift,
            "max_hermiticity_defect": series.max_hermiticity_defect,
            "min_eigenvalue": series.min_eigenvalue,
            "tail_window": window,
            "tail": tail,
        }),
    );
    Ok(run)
}

fn spectrum_summary(cfg: &SpectrumConfig, s: &SpectrumResult) -> Value {
    json!({
        "params": cfg.params,
        "mode": cfg.mode,
        "eigenvalues": s.eigenvalues.len(),
        "steady_count": s.steady_count(),
        "alpha_r": s.gap_real,
        "alpha_i": s.gap_imag,
        "R": s.ratio,
        "oscillatory": s.oscillatory,
    })
}

pub fn spectrum(cfg: &SpectrumConfig) -> Result<Run, Error> {
    let mut run = Run::new(cfg);
    run.seeds.insert("solver.seed", cfg.solver.seed);
    match cfg.mode {
        SpectrumMode::Leading | SpectrumMode::Full => {
            let model = CollectiveSpinModel::new(cfg.params)?;
            let sup = build_superoperator(&model, &cfg.solver)?;
            let s = if cfg.mode == SpectrumMode::Full {
                full_spectrum(&sup, &cfg.solver)?
            } else {
                leading_eigenvalues(&sup, cfg.count, &cfg.solver)?
            };
            run.csv("spectrum.csv", s.cloud_csv());
            run.json("gap.json", &spectrum_summary(cfg, &s));
        }
        SpectrumMode::Scaling => {
            let points = gap_scaling(&cfg.params, &cfg.n_list, &cfg.solver)?;
            run.csv("gap.csv", gap_csv(&points));
            run.json("gap.json", &json!({ "params": cfg.params, "points": points }));
        }
    }
    Ok(run)
}

pub fn classify(cfg: &ClassifyConfig) -> Result<Run, Error> {
    let mut run = Run::new(cfg);
    if cfg.options.engine == Engine::Quantum {
        run.seeds.insert("spectrum.seed", cfg.options.spectrum.seed);
    }
    let c = classify_phase(&cfg.params, &cfg.options)?;
    run.json("classification.json", &c);
    Ok(run)
}

pub fn sweep(cfg: &SweepConfig) -> Result<Run, Error> {
    let mut run = Run::new(cfg);
    if cfg.sweep.engine == Engine::Quantum {
        run.seeds.insert("spectrum.seed", cfg.sweep.classify_options().spectrum.seed);
    }
    let map = arnold_tongue(&cfg.sweep)?;
    run.csv("phase_map.csv", map.to_csv());
    run.json("phase_map.json", &map);
    Ok(run)
}

pub fn fss(cfg: &FssConfig) -> Result<Run, Error> {
    let mut run = Run::new(cfg);
    run.seeds.insert("fit.seed", cfg.fit.seed);
    let data = match &cfg.input {
        FssInput::Generate(spec) => {
            let out = generate_fss_dataset(spec)?;
            run.csv("fss_records.csv", out.records_csv());
            match out.dataset {
                Ok(d) => d,
                Err(e) => {
                    run.failure = Some(e);
                    return Ok(run);
                }
            }
        }
        FssInput::Data(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            ScalingDataset::from_csv(&text)?
        }
    };
    run.csv("fss_data.csv", data.to_csv());
    match fit_collapse(&data, &cfg.fit) {
        Ok(fit) => run.json("collapse.json", &fit),
        Err(e) => run.failure = Some(e),
    }
    Ok(run)
}
