//! Config loading. Files are TOML, or JSON when the extension is `.json`.
//! Every section is decoded on its own so one run reports all problems.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use spinsync::diagnostics::{ClassifyOptions, Engine, InitialCondition, WindowChoice};
use spinsync::fss::FitOptions;
use spinsync::lindblad::Frame;
use spinsync::liouvillian::SolverOptions;
use spinsync::meanfield::{DriveProtocol, VectorField};
use spinsync::params::{ModelParams, ParamsRecord};
use spinsync::sweep::{RunOverrides, SweepSpec};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub reason: String,
}

fn err(field: impl Into<String>, reason: impl Into<String>) -> FieldError {
    FieldError {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Raw config file with its hash.
pub struct Source {
    pub path: PathBuf,
    pub sha256: String,
    pub root: serde_json::Map<String, Value>,
}

pub fn load(path: &Path) -> Result<Source, Vec<FieldError>> {
    let bytes = std::fs::read(path).map_err(|e| vec![err("--config", format!("{}: {e}", path.display()))])?;
    let sha256 = format!("{:x}", Sha256::digest(&bytes));
    let text = String::from_utf8(bytes).map_err(|_| vec![err("--config", "file is not UTF-8")])?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let value: Value = if is_json {
        serde_json::from_str(&text).map_err(|e| vec![err("--config", format!("invalid JSON: {e}"))])?
    } else {
        let t: toml::Table = toml::from_str(&text).map_err(|e| vec![err("--config", format!("invalid TOML: {e}"))])?;
        serde_json::to_value(t).map_err(|e| vec![err("--config", e.to_string())])?
    };
    match value {
        Value::Object(root) => Ok(Source {
            path: path.to_path_buf(),
            sha256,
            root,
        }),
        _ => Err(vec![err("--config", "top level must be a table")]),
    }
}

/// Decodes sections and accumulates errors.
struct Reader<'a> {
    root: &'a serde_json::Map<String, Value>,
    known: Vec<&'static str>,
    errors: Vec<FieldError>,
}

impl<'a> Reader<'a> {
    fn new(src: &'a Source) -> Self {
        Self {
            root: &src.root,
            known: Vec::new(),
            errors: Vec::new(),
        }
    }

    fn decode<T: DeserializeOwned>(&mut self, key: &'static str, value: &Value) -> Option<T> {
        match serde_json::from_value(value.clone()) {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(err(key, e.to_string()));
                None
            }
        }
    }

    fn required<T: DeserializeOwned>(&mut self, key: &'static str) -> Option<T> {
        self.known.push(key);
        match self.root.get(key) {
            Some(v) => self.decode(key, v),
            None => {
                self.errors.push(err(key, "missing required field"));
                None
            }
        }
    }

    fn optional<T: DeserializeOwned>(&mut self, key: &'static str) -> Option<Option<T>> {
        self.known.push(key);
        match self.root.get(key) {
            Some(v) => self.decode(key, v).map(Some),
            None => Some(None),
        }
    }

    fn or_default<T: DeserializeOwned + Default>(&mut self, key: &'static str) -> Option<T> {
        self.optional(key).map(Option::unwrap_or_default)
    }

    fn finish<T>(mut self, value: Option<T>) -> Result<T, Vec<FieldError>> {
        for k in self.root.keys() {
            if !self.known.contains(&k.as_str()) {
                self.errors.push(err(k.clone(), "unknown field"));
            }
        }
        match value {
            Some(v) if self.errors.is_empty() => Ok(v),
            _ => Err(self.errors),
        }
    }
}

fn params_from(record: Option<ParamsRecord>, prefix: &str, errors: &mut Vec<FieldError>) -> Option<ModelParams> {
    let r = record?;
    let v = ModelParams::violations(r.omega0, r.omega_d, r.epsilon, r.gamma_plus, r.gamma_minus, r.n_spins);
    if v.is_empty() {
        ModelParams::try_from(r).ok()
    } else {
        errors.extend(v.into_iter().map(|(f, reason)| err(format!("{prefix}.{f}"), reason)));
        None
    }
}

fn check_positive(field: &str, v: f64, errors: &mut Vec<FieldError>) {
    if !(v.is_finite() && v > 0.0) {
        errors.push(err(field, format!("must be positive and finite, got {v}")));
    }
}

fn check_initial(field: &str, ic: &InitialCondition, errors: &mut Vec<FieldError>) {
    if let Err(e) = ic.bloch() {
        errors.push(err(field, e.to_string()));
    }
}

fn check_times(t_end: f64, sample_dt: f64, errors: &mut Vec<FieldError>) {
    check_positive("t_end", t_end, errors);
    check_positive("sample_dt", sample_dt, errors);
    if sample_dt > t_end {
        errors.push(err("sample_dt", "must not exceed t_end"));
    }
}

fn default_t_end_mf() -> f64 {
    400.0
}

fn default_t_end_q() -> f64 {
    40.0
}

/// `meanfield` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct MeanFieldConfig {
    pub params: ModelParams,
    pub initial_condition: InitialCondition,
    pub t_end: f64,
    pub sample_dt: f64,
    pub protocol: DriveProtocol,
    pub field: VectorField,
    /// Tail fraction used to label the attractor.
    pub tail_fraction: f64,
}

impl MeanFieldConfig {
    pub fn read(src: &Source) -> Result<Self, Vec<FieldError>> {
        let mut r = Reader::new(src);
        let params = r.required::<ParamsRecord>("params");
        let initial_condition = r.or_default::<InitialCondition>("initial_condition");
        let t_end = r.optional("t_end").map(|v| v.unwrap_or_else(default_t_end_mf));
        let sample_dt = r.optional("sample_dt").map(|v| v.unwrap_or(0.05));
        let protocol = r.optional("protocol").map(|v| v.unwrap_or(DriveProtocol::Constant));
        let field = r.or_default::<VectorField>("field");
        let tail_fraction = r.optional("tail_fraction").map(|v| v.unwrap_or(0.25));
        let params = params_from(params, "params", &mut r.errors);
        let value = (|| {
            Some(Self {
                params: params?,
                initial_condition: initial_condition?,
                t_end: t_end?,
                sample_dt: sample_dt?,
                protocol: protocol?,
                field: field?,
                tail_fraction: tail_fraction?,
            })
        })();
        if let Some(c) = &value {
            check_times(c.t_end, c.sample_dt, &mut r.errors);
            check_initial("initial_condition", &c.initial_condition, &mut r.errors);
            if !(c.tail_fraction > 0.0 && c.tail_fraction <= 1.0) {
                r.errors.push(err("tail_fraction", "must lie in (0, 1]"));
            }
        }
        r.finish(value)
    }
}

/// `quantum` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct QuantumConfig {
    pub params: ModelParams,
    pub initial_condition: InitialCondition,
    pub t_end: f64,
    pub sample_dt: f64,
    pub frame: Frame,
    /// Divides the integration tolerances.
    pub tolerance_factor: f64,
}

impl QuantumConfig {
    pub fn read(src: &Source) -> Result<Self, Vec<FieldError>> {
        let mut r = Reader::new(src);
        let params = r.required::<ParamsRecord>("params");
        let initial_condition = r.or_default::<InitialCondition>("initial_condition");
        let t_end = r.optional("t_end").map(|v| v.unwrap_or_else(default_t_end_q));
        let sample_dt = r.optional("sample_dt").map(|v| v.unwrap_or(0.05));
        let frame = r.or_default::<Frame>("frame");
        let tolerance_factor = r.optional("tolerance_factor").map(|v| v.unwrap_or(1.0));
        let params = params_from(params, "params", &mut r.errors);
        let value = (|| {
            Some(Self {
                params: params?,
                initial_condition: initial_condition?,
                t_end: t_end?,
                sample_dt: sample_dt?,
                frame: frame?,
                tolerance_factor: tolerance_factor?,
            })
        })();
        if let Some(c) = &value {
            check_times(c.t_end, c.sample_dt, &mut r.errors);
            check_initial("initial_condition", &c.initial_condition, &mut r.errors);
            check_positive("tolerance_factor", c.tolerance_factor, &mut r.errors);
        }
        r.finish(value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMode {
    /// Few slowest eigenvalues by shift-invert Arnoldi.
    #[default]
    Leading,
    /// Dense diagonalization.
    Full,
    /// Gap over `n_list`.
    Scaling,
}

/// `spectrum` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumConfig {
    pub params: ModelParams,
    pub mode: SpectrumMode,
    pub count: usize,
    pub n_list: Vec<usize>,
    pub solver: SolverOptions,
}

impl SpectrumConfig {
    pub fn read(src: &Source) -> Result<Self, Vec<FieldError>> {
        let mut r = Reader::new(src);
        let params = r.required::<ParamsRecord>("params");
        let mode = r.or_default::<SpectrumMode>("mode");
        let count = r.optional("count").map(|v| v.unwrap_or(spinsync::liouvillian::GAP_EIGENVALUES));
        let n_list = r.or_default::<Vec<usize>>("n_list");
        let solver = r.or_default::<SolverOptions>("solver");
        let params = params_from(params, "params", &mut r.errors);
        let value = (|| {
            Some(Self {
                params: params?,
                mode: mode?,
                count: count?,
                n_list: n_list?,
                solver: solver?,
            })
        })();
        if let Some(c) = &value {
            if c.count == 0 {
                r.errors.push(err("count", "must be at least 1"));
            }
            if c.mode == SpectrumMode::Scaling {
                if c.n_list.is_empty() {
                    r.errors.push(err("n_list", "scaling mode needs at least one size"));
                } else if c.n_list.windows(2).any(|w| w[1] <= w[0]) || c.n_list[0] == 0 {
                    r.errors.push(err("n_list", "sizes must be positive and strictly ascending"));
                }
            } else if !c.n_list.is_empty() {
                r.errors.push(err("n_list", "only used in scaling mode"));
            }
        }
        r.finish(value)
    }
}

/// `classify` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct ClassifyConfig {
    pub params: ModelParams,
    pub options: ClassifyOptions,
}

/// Options table of `classify`; defaults depend on the engine.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifySection {
    engine: Option<Engine>,
    t_end: Option<f64>,
    max_t_end: Option<f64>,
    sample_dt: Option<f64>,
    window: Option<WindowChoice>,
    meanfield_threshold: Option<f64>,
    quantum_threshold_c: Option<f64>,
    tolerance_factor: Option<f64>,
    initial_condition: Option<InitialCondition>,
    spectrum: Option<SolverOptions>,
}

impl ClassifyConfig {
    pub fn read(src: &Source, engine: Option<Engine>) -> Result<Self, Vec<FieldError>> {
        let mut r = Reader::new(src);
        let params = r.required::<ParamsRecord>("params");
        let section = r.or_default::<ClassifySection>("classify");
        let params = params_from(params, "params", &mut r.errors);
        let value = (|| {
            let s = section?;
            let engine = engine.or(s.engine).unwrap_or(Engine::MeanField);
            let spec = SweepSpec {
                epsilon_grid: vec![0.0],
                detuning_grid: vec![0.0],
                n_list: Vec::new(),
                engine,
                base_params: params?,
                initial_condition: s.initial_condition.unwrap_or_default(),
                workers: 1,
                run: RunOverrides {
                    t_end: s.t_end,
                    max_t_end: s.max_t_end,
                    sample_dt: s.sample_dt,
                    window: s.window,
                    meanfield_threshold: s.meanfield_threshold,
                    quantum_threshold_c: s.quantum_threshold_c,
                    tolerance_factor: s.tolerance_factor,
                },
            };
            let mut options = spec.classify_options();
            if let Some(so) = s.spectrum {
                options.spectrum = so;
            }
            Some((spec, options))
        })();
        if let Some((spec, _)) = &value {
            for (f, reason) in spec.violations() {
                let f = if f.starts_with("run.") { f.replacen("run.", "classify.", 1) } else { format!("classify.{f}") };
                r.errors.push(err(f, reason));
            }
        }
        r.finish(value.map(|(spec, options)| Self {
            params: spec.base_params,
            options,
        }))
    }
}

/// Grid given as a list or as an inclusive linear range.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl Grid {
    fn values(&self, field: &str, errors: &mut Vec<FieldError>) -> Vec<f64> {
        match *self {
            Grid::List(ref v) => v.clone(),
            Grid::Range { start, stop, count } => {
                if count == 0 {
                    errors.push(err(format!("{field}.count"), "must be at least 1"));
                    return Vec::new();
                }
                if count == 1 {
                    return vec![start];
                }
                (0..count)
                    .map(|i| {
                        if i == count - 1 {
                            stop
                        } else {
                            start + (stop - start) * i as f64 / (count - 1) as f64
                        }
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    epsilon_grid: Grid,
    detuning_grid: Grid,
    #[serde(default)]
    n_list: Vec<usize>,
    engine: Option<Engine>,
    base_params: ParamsRecord,
    #[serde(default)]
    initial_condition: InitialCondition,
    workers: Option<usize>,
    #[serde(default)]
    run: RunOverrides,
}

fn sweep_spec(
    section: SweepSection,
    prefix: &str,
    engine: Option<Engine>,
    workers: Option<usize>,
    errors: &mut Vec<FieldError>,
) -> Option<SweepSpec> {
    let base = params_from(Some(section.base_params), &format!("{prefix}.base_params"), errors);
    let epsilon_grid = section.epsilon_grid.values(&format!("{prefix}.epsilon_grid"), errors);
    let detuning_grid = section.detuning_grid.values(&format!("{prefix}.detuning_grid"), errors);
    let spec = SweepSpec {
        epsilon_grid,
        detuning_grid,
        n_list: section.n_list,
        engine: engine.or(section.engine).unwrap_or(Engine::MeanField),
        // Placeholder so the remaining fields are still checked.
        base_params: base.unwrap_or(ModelParams::new(0.0, 0.0, 0.0, 0.0, 0.0, 1).expect("valid placeholder")),
        initial_condition: section.initial_condition,
        workers: workers.or(section.workers).unwrap_or(1),
        run: section.run,
    };
    let before = errors.len();
    for (f, reason) in spec.violations() {
        errors.push(err(format!("{prefix}.{f}"), reason));
    }
    (base.is_some() && errors.len() == before).then_some(spec)
}

/// `sweep` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct SweepConfig {
    pub sweep: SweepSpec,
}

impl SweepConfig {
    pub fn read(src: &Source, engine: Option<Engine>, workers: Option<usize>) -> Result<Self, Vec<FieldError>> {
        let mut r = Reader::new(src);
        let section = r.required::<SweepSection>("sweep");
        let spec = section.and_then(|s| sweep_spec(s, "sweep", engine, workers, &mut r.errors));
        if let Some(s) = &spec {
            if s.engine == Engine::Quantum && s.n_list.len() != 1 {
                r.errors.push(err("sweep.n_list", "a quantum map takes exactly one size"));
            }
        }
        r.finish(spec.map(|sweep| Self { sweep }))
    }
}

/// Where the scaling data of `fss` comes from.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FssInput {
    Generate(SweepSpec),
    /// CSV `N,epsilon,mzbar[,sigma]`, relative paths resolved against the
    /// config file.
    Data(PathBuf),
}

/// `fss` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct FssConfig {
    pub input: FssInput,
    pub fit: FitOptions,
}

impl FssConfig {
    pub fn read(src: &Source, engine: Option<Engine>, workers: Option<usize>) -> Result<Self, Vec<FieldError>> {
        let mut r = Reader::new(src);
        let sweep = r.optional::<SweepSection>("sweep");
        let data = r.optional::<PathBuf>("data");
        let fit = r.or_default::<FitOptions>("fit");
        if engine.is_some_and(|e| e != Engine::Quantum) {
            r.errors.push(err("--engine", "scaling data needs the quantum engine"));
        }
        let input = match (sweep, data) {
            (Some(Some(s)), Some(None)) => {
                let spec = sweep_spec(s, "sweep", Some(Engine::Quantum), workers, &mut r.errors);
                if let Some(s) = &spec {
                    if s.n_list.len() < 3 {
                        r.errors.push(err("sweep.n_list", "collapse needs at least three sizes"));
                    }
                }
                spec.map(FssInput::Generate)
            }
            (Some(None), Some(Some(p))) => {
                let base = src.path.parent().unwrap_or(Path::new("."));
                Some(FssInput::Data(base.join(p)))
            }
            (Some(Some(_)), Some(Some(_))) => {
                r.errors.push(err("data", "give either `sweep` or `data`, not both"));
                None
            }
            (Some(None), Some(None)) => {
                r.errors.push(err("sweep", "missing: give `sweep` or `data`"));
                None
            }
            _ => None,
        };
        if let Some(f) = &fit {
            if f.restarts == 0 {
                r.errors.push(err("fit.restarts", "must be at least 1"));
            }
            if f.max_iters == 0 {
                r.errors.push(err("fit.max_iters", "must be at least 1"));
            }
            check_positive("fit.residual_ceiling", f.residual_ceiling, &mut r.errors);
        }
        let value = (|| Some(Self { input: input?, fit: fit? }))();
        r.finish(value)
    }
}
