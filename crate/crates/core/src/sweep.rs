//! Parameter sweeps: Arnold-tongue maps and finite-size-scaling datasets.

use crate::diagnostics::{
    classify_phase, order_parameters, run_engine, Classification, ClassifyOptions, Engine, InitialCondition,
    PhaseLabel, WindowChoice,
};
use crate::error::{Error, Result};
use crate::fss::{ScalingDataset, ScalingPoint};
use crate::params::ModelParams;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Optional replacements for the engine defaults of [`ClassifyOptions`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOverrides {
    pub t_end: Option<f64>,
    pub max_t_end: Option<f64>,
    pub sample_dt: Option<f64>,
    pub window: Option<WindowChoice>,
    pub meanfield_threshold: Option<f64>,
    pub quantum_threshold_c: Option<f64>,
    pub tolerance_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub epsilon_grid: Vec<f64>,
    pub detuning_grid: Vec<f64>,
    /// Sizes of quantum runs; a quantum map takes exactly one.
    #[serde(default)]
    pub n_list: Vec<usize>,
    pub engine: Engine,
    pub base_params: ModelParams,
    #[serde(default)]
    pub initial_condition: InitialCondition,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub run: RunOverrides,
}

fn one() -> usize {
    1
}

/// `(field, reason)` for one configuration problem.
pub type Violation = (String, String);

fn check_grid(name: &str, grid: &[f64], out: &mut Vec<Violation>) {
    if grid.is_empty() {
        out.push((name.into(), "must not be empty".into()));
    } else if grid.iter().any(|v| !v.is_finite()) {
        out.push((name.into(), "values must be finite".into()));
    } else if grid.windows(2).any(|w| w[1] <= w[0]) {
        out.push((name.into(), "values must be strictly ascending".into()));
    }
}

impl SweepSpec {
    /// A `count x count` grid over `epsilon` and `detuning` ranges.
    pub fn square(
        base_params: ModelParams,
        engine: Engine,
        epsilon: (f64, f64),
        detuning: (f64, f64),
        count: usize,
    ) -> Self {
        let lin = |(a, b): (f64, f64)| -> Vec<f64> {
            if count == 1 {
                return vec![a];
            }
            (0..count).map(|i| a + (b - a) * i as f64 / (count - 1) as f64).collect()
        };
        Self {
            epsilon_grid: lin(epsilon),
            detuning_grid: lin(detuning),
            n_list: vec![base_params.n_spins()],
            engine,
            base_params,
            initial_condition: InitialCondition::default(),
            workers: 1,
            run: RunOverrides::default(),
        }
    }

    /// Every violated constraint; empty when the sweep can run.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_grid("epsilon_grid", &self.epsilon_grid, &mut out);
        check_grid("detuning_grid", &self.detuning_grid, &mut out);
        if self.epsilon_grid.iter().any(|&e| e < 0.0) {
            out.push(("epsilon_grid".into(), "drive strengths must be non-negative".into()));
        }
        if self.engine == Engine::Quantum {
            if self.n_list.is_empty() {
                out.push(("n_list".into(), "quantum runs need at least one size".into()));
            } else if self.n_list.windows(2).any(|w| w[1] <= w[0]) || self.n_list[0] == 0 {
                out.push(("n_list".into(), "sizes must be positive and strictly ascending".into()));
            }
        }
        if self.workers == 0 {
            out.push(("workers".into(), "must be at least 1".into()));
        }
        if let Err(e) = self.initial_condition.bloch() {
            out.push(("initial_condition".into(), e.to_string()));
        }
        let positive = [
            ("run.t_end", self.run.t_end),
            ("run.max_t_end", self.run.max_t_end),
            ("run.sample_dt", self.run.sample_dt),
            ("run.meanfield_threshold", self.run.meanfield_threshold),
            ("run.quantum_threshold_c", self.run.quantum_threshold_c),
            ("run.tolerance_factor", self.run.tolerance_factor),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    out.push((name.into(), format!("must be positive, got {v}")));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((field, reason)) => Err(Error::InvalidConfig(format!("{field}: {reason}"))),
        }
    }

    pub fn classify_options(&self) -> ClassifyOptions {
        let mut o = match self.engine {
            Engine::MeanField => ClassifyOptions::default(),
            Engine::Quantum => ClassifyOptions::quantum(),
        };
        o.initial_condition = self.initial_condition;
        let r = &self.run;
        if let Some(v) = r.t_end {
            o.t_end = v;
        }
        if let Some(v) = r.max_t_end {
            o.max_t_end = v;
        }
        if let Some(v) = r.sample_dt {
            o.sample_dt = v;
        }
        if let Some(v) = r.window {
            o.window = v;
        }
        if let Some(v) = r.meanfield_threshold {
            o.meanfield_threshold = v;
        }
        if let Some(v) = r.quantum_threshold_c {
            o.quantum_threshold_c = v;
        }
        if let Some(v) = r.tolerance_factor {
            o.tolerance_factor = v;
        }
        o
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("workers: {e}")))
    }

    fn map_size(&self) -> usize {
        match self.engine {
            Engine::MeanField => self.base_params.n_spins(),
            Engine::Quantum => self.n_list[0],
        }
    }
}

/// One grid point of a [`PhaseMap`]. Failed points keep their coordinates
/// and carry the error text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub epsilon: f64,
    pub detuning: f64,
    pub label: Option<PhaseLabel>,
    pub mzbar: Option<f64>,
    pub var_mz: Option<f64>,
    pub r_proxy: Option<f64>,
    pub error: Option<String>,
}

/// Labels over the `(epsilon, detuning)` plane, detuning-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMap {
    pub engine: Engine,
    pub n_spins: usize,
    pub epsilon_grid: Vec<f64>,
    pub detuning_grid: Vec<f64>,
    pub records: Vec<PhaseRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl PhaseMap {
    pub fn get(&self, i_eps: usize, i_det: usize) -> &PhaseRecord {
        &self.records[i_det * self.epsilon_grid.len() + i_eps]
    }

    /// CSV `epsilon,detuning,label,mzbar,var_mz,R_proxy,error`; empty
    /// fields mark failed points or absent values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,detuning,label,mzbar,var_mz,R_proxy,error\n");
        for r in &self.records {
            let err = r.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
            out.push_str(&format!(
                "{},{},{},{},{},{},\"{}\"\n",
                r.epsilon,
                r.detuning,
                r.label.map_or("", |l| l.as_str()),
                opt(r.mzbar),
                opt(r.var_mz),
                opt(r.r_proxy),
                err
            ));
        }
        out
    }

    /// Count of points carrying `label`.
    pub fn count(&self, label: PhaseLabel) -> usize {
        self.records.iter().filter(|r| r.label == Some(label)).count()
    }
}

/// Classifies every grid point with [`classify_phase`].
pub fn arnold_tongue(spec: &SweepSpec) -> Result<PhaseMap> {
    let options = spec.classify_options();
    arnold_tongue_with(spec, |p| classify_phase(p, &options))
}

/// [`arnold_tongue`] with a custom per-point classifier.
pub fn arnold_tongue_with<F>(spec: &SweepSpec, classify: F) -> Result<PhaseMap>
where
    F: Fn(&ModelParams) -> Result<Classification> + Sync,
{
    spec.validate()?;
    if spec.engine == Engine::Quantum && spec.n_list.len() != 1 {
        return Err(Error::InvalidConfig("n_list: a quantum map takes exactly one size".into()));
    }
    let n_spins = spec.map_size();
    let (ne, nd) = (spec.epsilon_grid.len(), spec.detuning_grid.len());
    let point = |k: usize| -> PhaseRecord {
        let (epsilon, detuning) = (spec.epsilon_grid[k % ne], spec.detuning_grid[k / ne]);
        let result = spec
            .base_params
            .with_n_spins(n_spins)
            .and_then(|p| p.with_epsilon(epsilon))
            .and_then(|p| p.with_detuning_value(detuning))
            .and_then(|p| classify(&p));
        match result {
            Ok(c) => PhaseRecord {
                epsilon,
                detuning,
                label: Some(c.label),
                mzbar: Some(c.mzbar),
                var_mz: Some(c.var_mz),
                r_proxy: c.r_proxy,
                error: None,
            },
            Err(e) => PhaseRecord {
                epsilon,
                detuning,
                label: None,
                mzbar: None,
                var_mz: None,
                r_proxy: None,
                error: Some(e.to_string()),
            },
        }
    };
    let records = spec.pool()?.install(|| (0..ne * nd).into_par_iter().map(point).collect());
    Ok(PhaseMap {
        engine: spec.engine,
        n_spins,
        epsilon_grid: spec.epsilon_grid.clone(),
        detuning_grid: spec.detuning_grid.clone(),
        records,
    })
}

/// Order parameters of one `(N, epsilon)` run of a scaling sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FssRecord {
    #[serde(rename = "N")]
    pub n_spins: usize,
    pub epsilon: f64,
    pub mzbar: Option<f64>,
    pub var_mz: Option<f64>,
    pub t0: Option<f64>,
    pub dt: Option<f64>,
    pub error: Option<String>,
}

/// Records of a scaling sweep and the dataset built from the successful
/// ones.
#[derive(Debug, Clone, PartialEq)]
pub struct FssSweep {
    pub records: Vec<FssRecord>,
    pub dataset: Result<ScalingDataset>,
}

impl FssSweep {
    /// CSV `N,epsilon,mzbar,var_mz,t0,dt,error`.
    pub fn records_csv(&self) -> String {
        let mut out = String::from("N,epsilon,mzbar,var_mz,t0,dt,error\n");
        for r in &self.records {
            let err = r.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
            out.push_str(&format!(
                "{},{},{},{},{},{},\"{}\"\n",
                r.n_spins,
                r.epsilon,
                opt(r.mzbar),
                opt(r.var_mz),
                opt(r.t0),
                opt(r.dt),
                err
            ));
        }
        out
    }
}

/// Quantum runs over `n_list x epsilon_grid` at the first detuning of the
/// spec, averaged over an estimated window unless `run.window` is set.
/// `mzbar` is stored as `|mzbar|`.
pub fn generate_fss_dataset(spec: &SweepSpec) -> Result<FssSweep> {
    spec.validate()?;
    if spec.engine != Engine::Quantum {
        return Err(Error::InvalidConfig("engine: scaling data needs the quantum engine".into()));
    }
    let mut options = spec.classify_options();
    if spec.run.window.is_none() {
        options.window = WindowChoice::Auto;
    }
    let detuning = spec.detuning_grid[0];
    let ne = spec.epsilon_grid.len();
    let jobs: Vec<(usize, f64)> = spec
        .n_list
        .iter()
        .flat_map(|&n| spec.epsilon_grid.iter().map(move |&e| (n, e)))
        .collect();
    // Largest sizes first so the slow runs start early; order of the
    // output is fixed by the job index.
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by_key(|&k| std::cmp::Reverse(k / ne));
    let run = |k: usize| -> (usize, FssRecord) {
        let (n, epsilon) = jobs[k];
        let result = spec
            .base_params
            .with_n_spins(n)
            .and_then(|p| p.with_epsilon(epsilon))
            .and_then(|p| p.with_detuning_value(detuning))
            .and_then(|p| {
                let signal = run_engine(&p, &options)?;
                let window = options.window.resolve(&signal)?;
                Ok((order_parameters(&signal, &window)?, window))
            });
        let rec = match result {
            Ok((op, w)) => FssRecord {
                n_spins: n,
                epsilon,
                mzbar: Some(op.mzbar.abs()),
                var_mz: Some(op.var_mz),
                t0: Some(w.t0),
                dt: Some(w.dt),
                error: None,
            },
            Err(e) => FssRecord {
                n_spins: n,
                epsilon,
                mzbar: None,
                var_mz: None,
                t0: None,
                dt: None,
                error: Some(e.to_string()),
            },
        };
        (k, rec)
    };
    let mut done: Vec<(usize, FssRecord)> = spec.pool()?.install(|| order.par_iter().map(|&k| run(k)).collect());
    done.sort_by_key(|(k, _)| *k);
    let records: Vec<FssRecord> = done.into_iter().map(|(_, r)| r).collect();
    let points = records
        .iter()
        .filter_map(|r| {
            r.mzbar.map(|m| ScalingPoint {
                n_spins: r.n_spins,
                epsilon: r.epsilon,
                mzbar: m,
                sigma: None,
            })
        })
        .collect();
    Ok(FssSweep {
        records,
        dataset: ScalingDataset::new(points),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sso(n: usize) -> ModelParams {
        ModelParams::with_detuning(0.0, 0.0, 0.0, 1.0, 2.0, n).unwrap()
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut spec = SweepSpec::square(sso(1), Engine::Quantum, (0.0, 1.0), (0.0, 1.0), 3);
        spec.epsilon_grid = vec![1.0, 0.5];
        spec.detuning_grid.clear();
        spec.n_list.clear();
        spec.workers = 0;
        spec.run.t_end = Some(-1.0);
        let fields: Vec<String> = spec.violations().into_iter().map(|v| v.0).collect();
        for f in ["epsilon_grid", "detuning_grid", "n_list", "workers", "run.t_end"] {
            assert!(fields.iter().any(|x| x == f), "{f} missing from {fields:?}");
        }
    }

    #[test]
    fn two_by_two_map_order_and_csv() {
        let spec = SweepSpec::square(sso(1), Engine::MeanField, (1.0, 4.0), (0.0, 2.0), 2);
        let map = arnold_tongue(&spec).unwrap();
        let csv = map.to_csv();
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows.len(), 5);
        assert!(rows[1].starts_with("1,0,"));
        assert!(rows[2].starts_with("4,0,"));
        assert!(rows[3].starts_with("1,2,"));
        assert_eq!(map.get(1, 0).label, Some(PhaseLabel::Btc));
    }

    #[test]
    fn map_is_independent_of_workers() {
        let mut spec = SweepSpec::square(sso(1), Engine::MeanField, (0.2, 3.0), (0.0, 2.0), 4);
        spec.run.t_end = Some(150.0);
        let a = arnold_tongue(&spec).unwrap();
        spec.workers = 3;
        let b = arnold_tongue(&spec).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn failing_point_is_isolated() {
        let mut spec = SweepSpec::square(sso(1), Engine::MeanField, (0.5, 3.0), (0.0, 1.0), 3);
        spec.run.t_end = Some(100.0);
        let options = spec.classify_options();
        let clean = arnold_tongue(&spec).unwrap();
        let injected = arnold_tongue_with(&spec, |p| {
            if p.epsilon() == 1.75 && p.detuning() == 0.5 {
                Err(Error::NoConvergence("injected".into()))
            } else {
                classify_phase(p, &options)
            }
        })
        .unwrap();
        for (a, b) in clean.records.iter().zip(&injected.records) {
            if a.epsilon == 1.75 && a.detuning == 0.5 {
                assert!(b.error.as_deref().unwrap().contains("injected"));
                assert!(b.label.is_none());
            } else {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn undriven_points_are_recorded_not_fatal() {
        let spec = SweepSpec::square(sso(1), Engine::MeanField, (0.0, 1.0), (0.5, 1.0), 2);
        let map = arnold_tongue(&spec).unwrap();
        assert!(map.get(0, 0).error.is_some());
        assert!(map.get(1, 0).label.is_some());
    }

    #[test]
    fn small_scaling_sweep() {
        let mut spec = SweepSpec::square(sso(4), Engine::Quantum, (1.0, 3.0), (0.0, 0.0), 5);
        spec.detuning_grid = vec![0.0];
        spec.n_list = vec![4, 6, 8];
        spec.run.t_end = Some(30.0);
        let out = generate_fss_dataset(&spec).unwrap();
        assert_eq!(out.records.len(), 15);
        assert!(out.records.iter().all(|r| r.error.is_none()), "{:?}", out.records);
        let d = out.dataset.as_ref().unwrap();
        assert_eq!(d.sizes(), vec![4, 6, 8]);
        assert!(d.points().iter().all(|p| p.mzbar >= 0.0));
        assert!(out.records_csv().starts_with("N,epsilon,mzbar,var_mz,t0,dt,error\n4,1,"));
    }

    fn label_at(background: (f64, f64), epsilon: f64, detuning: f64) -> PhaseLabel {
        let p = ModelParams::with_detuning(0.0, detuning, epsilon, background.0, background.1, 1).unwrap();
        classify_phase(&p, &ClassifyOptions::default()).unwrap().label
    }

    #[test]
    fn resonant_row_flips_at_threshold() {
        let mut spec = SweepSpec::square(sso(1), Engine::MeanField, (1.9, 2.1), (0.0, 0.0), 2);
        spec.detuning_grid = vec![0.0];
        let map = arnold_tongue(&spec).unwrap();
        assert!(matches!(map.get(0, 0).label, Some(PhaseLabel::QsI | PhaseLabel::QsII)));
        assert_eq!(map.get(1, 0).label, Some(PhaseLabel::Btc));
    }

    #[test]
    fn detuning_melts_pfp_oscillation() {
        assert_eq!(label_at((1.0, 1.0), 2.2, 0.0), PhaseLabel::Btc);
        assert_eq!(label_at((1.0, 1.0), 2.2, 4.0), PhaseLabel::TrivialFixedPoint);
    }

    #[test]
    fn slow_transient_is_not_mistaken_for_oscillation() {
        // Relaxation near the degenerate pole outlasts the default t_end.
        assert_eq!(label_at((1.0, 1.0), 0.2, 3.0), PhaseLabel::TrivialFixedPoint);
        let p = ModelParams::with_detuning(0.0, 3.0, 0.2, 1.0, 1.0, 1).unwrap();
        let c = classify_phase(&p, &ClassifyOptions::default()).unwrap();
        assert!(c.window.end() > 400.0, "{:?}", c.window);
    }

    #[test]
    fn sso_background_supports_non_resonant_btc() {
        assert_eq!(label_at((1.0, 2.0), 0.3, 2.0), PhaseLabel::Btc);
    }

    #[test]
    fn scaling_sweep_needs_quantum_engine() {
        let spec = SweepSpec::square(sso(4), Engine::MeanField, (1.0, 3.0), (0.0, 0.0), 5);
        assert!(generate_fss_dataset(&spec).is_err());
    }
}
