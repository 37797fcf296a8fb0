//! Dynamical order parameters, relative phase and phase classification.

use crate::error::{Error, Result};
use crate::lindblad::{coherent_state, evolve, EvolveOptions, Frame, ObservableSeries};
use crate::liouvillian::{build_superoperator, leading_eigenvalues, SolverOptions};
use crate::meanfield::{
    crossing_frequency, tangent_eigenvalues, AngularState, BlochVector, DriveProtocol, MeanFieldSolver,
    MeanFieldTrajectory, LIMIT_CYCLE_VARIANCE,
};
use crate::model::CollectiveSpinModel;
use crate::ode::uniform_grid;
use crate::params::ModelParams;
use serde::{Deserialize, Serialize};

/// Transverse amplitude below which the azimuthal phase is undefined.
pub const AMPLITUDE_GUARD: f64 = 1e-10;

/// Default `C` of the finite-N oscillation threshold `var_mz > C / N`.
pub const QUANTUM_THRESHOLD_C: f64 = 1e-7;

/// Sampled magnetization with the drive phase rate of its frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub times: Vec<f64>,
    pub m_x: Vec<f64>,
    pub m_y: Vec<f64>,
    pub m_z: Vec<f64>,
    /// `omega_d` for lab-frame data, zero in the rotating frame.
    pub drive_phase_rate: f64,
}

impl Signal {
    pub fn from_meanfield(traj: &MeanFieldTrajectory) -> Self {
        Self {
            times: traj.times.clone(),
            m_x: traj.states.iter().map(|m| m.m_x).collect(),
            m_y: traj.states.iter().map(|m| m.m_y).collect(),
            m_z: traj.states.iter().map(|m| m.m_z).collect(),
            drive_phase_rate: 0.0,
        }
    }

    pub fn from_quantum(series: &ObservableSeries, params: &ModelParams) -> Self {
        Self {
            times: series.times.clone(),
            m_x: series.m_x.clone(),
            m_y: series.m_y.clone(),
            m_z: series.m_z.clone(),
            drive_phase_rate: match series.frame {
                Frame::Rotating => 0.0,
                Frame::Lab => params.omega_d(),
            },
        }
    }

    /// A signal with only `m_z`, for order parameters of external data.
    pub fn from_mz(times: Vec<f64>, m_z: Vec<f64>) -> Self {
        let zeros = vec![0.0; times.len()];
        Self {
            times,
            m_x: zeros.clone(),
            m_y: zeros,
            m_z,
            drive_phase_rate: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.times.first().copied().unwrap_or(0.0)
    }

    pub fn end(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragingWindow {
    pub t0: f64,
    pub dt: f64,
}

impl AveragingWindow {
    pub fn new(t0: f64, dt: f64) -> Result<Self> {
        if !(t0 >= 0.0 && t0.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "t0",
                reason: format!("window start must be finite and non-negative, got {t0}"),
            });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "dt",
                reason: format!("window length must be positive, got {dt}"),
            });
        }
        Ok(Self { t0, dt })
    }

    pub fn full_span(signal: &Signal) -> Self {
        Self {
            t0: signal.start(),
            dt: signal.end() - signal.start(),
        }
    }

    /// The last `fraction` of the span.
    pub fn tail(signal: &Signal, fraction: f64) -> Self {
        let span = signal.end() - signal.start();
        let dt = span * fraction.clamp(0.0, 1.0);
        Self {
            t0: signal.end() - dt,
            dt,
        }
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.dt
    }

    fn check(&self, signal: &Signal) -> Result<()> {
        let slack = 1e-9 * (1.0 + signal.end().abs());
        if signal.len() < 2 || self.t0 < signal.start() - slack || self.end() > signal.end() + slack || self.dt <= 0.0 {
            return Err(Error::WindowOutOfRange {
                t0: self.t0,
                t1: self.end(),
                start: signal.start(),
                end: signal.end(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderParameters {
    pub mzbar: f64,
    pub var_mz: f64,
}

fn lerp(times: &[f64], values: &[f64], i: usize, t: f64) -> f64 {
    let (t0, t1) = (times[i], times[i + 1]);
    if t1 == t0 {
        return values[i];
    }
    values[i] + (values[i + 1] - values[i]) * (t - t0) / (t1 - t0)
}

/// Nodes and trapezoidal weights of the piecewise-linear signal restricted
/// to `[a, b]`.
fn window_nodes(times: &[f64], values: &[f64], a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let n = times.len();
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    let first = times.partition_point(|&t| t <= a);
    let seg = first.saturating_sub(1).min(n - 2);
    ts.push(a);
    vs.push(lerp(times, values, seg, a));
    for i in first..n {
        if times[i] >= b {
            break;
        }
        ts.push(times[i]);
        vs.push(values[i]);
    }
    let last = times.partition_point(|&t| t < b).clamp(1, n - 1) - 1;
    ts.push(b);
    vs.push(lerp(times, values, last, b));
    let mut w = vec![0.0; ts.len()];
    for i in 1..ts.len() {
        let h = ts[i] - ts[i - 1];
        w[i - 1] += 0.5 * h;
        w[i] += 0.5 * h;
    }
    (vs, w)
}

/// Time average of `m_z` and its variance over `window`, by the trapezoidal
/// rule on the sampled signal.
pub fn order_parameters(signal: &Signal, window: &AveragingWindow) -> Result<OrderParameters> {
    window.check(signal)?;
    let (a, b) = (window.t0.max(signal.start()), window.end().min(signal.end()));
    let (vs, w) = window_nodes(&signal.times, &signal.m_z, a, b);
    let total: f64 = w.iter().sum();
    let mzbar = vs.iter().zip(&w).map(|(v, w)| v * w).sum::<f64>() / total;
    // Central form of the second moment minus the squared mean; never negative.
    let var_mz = vs.iter().zip(&w).map(|(v, w)| w * (v - mzbar).powi(2)).sum::<f64>() / total;
    Ok(OrderParameters { mzbar, var_mz })
}

/// Unwrapped `delta phi(t) = phi(t) - omega_d t` at every sample.
pub fn relative_phase(signal: &Signal) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(signal.len());
    let mut prev_raw = 0.0;
    let mut offset = 0.0;
    for i in 0..signal.len() {
        let (x, y) = (signal.m_x[i], signal.m_y[i]);
        if x * x + y * y <= AMPLITUDE_GUARD {
            return Err(Error::AmplitudeCollapse { t: signal.times[i] });
        }
        let raw = y.atan2(x);
        if i > 0 {
            let jump = raw - prev_raw;
            if jump > std::f64::consts::PI {
                offset -= std::f64::consts::TAU;
            } else if jump < -std::f64::consts::PI {
                offset += std::f64::consts::TAU;
            }
        }
        prev_raw = raw;
        out.push(raw + offset - signal.drive_phase_rate * signal.times[i]);
    }
    Ok(out)
}

/// Deviations below this are treated as absent in the window estimate.
const ENVELOPE_FLOOR: f64 = 1e-8;
/// Dynamic range of the envelope used in the exponential fit.
const ENVELOPE_DECADES: f64 = 1e-4;

/// Relaxation time and oscillation frequency read off a signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalScales {
    /// Zero when no transient is resolved.
    pub tau: f64,
    pub frequency: Option<f64>,
}

/// Envelope decay time of `|m_z - tail mean|` and the tail crossing frequency.
pub fn signal_scales(signal: &Signal) -> Result<SignalScales> {
    let n = signal.len();
    if n < 20 {
        return Err(Error::EstimateFailed(format!("{n} samples, need at least 20")));
    }
    let tail = 3 * n / 4;
    let tail_mean = signal.m_z[tail..].iter().sum::<f64>() / (n - tail) as f64;
    let mut env = vec![0.0; n];
    let mut run = 0.0_f64;
    for i in (0..n).rev() {
        run = run.max((signal.m_z[i] - tail_mean).abs());
        env[i] = run;
    }
    let floor = env[tail];
    let frequency = if floor > ENVELOPE_FLOOR {
        crossing_frequency(&signal.times[tail..], &signal.m_z[tail..], tail_mean)
    } else {
        None
    };
    let e0 = env[0] - floor;
    let tau = if e0 > ENVELOPE_FLOOR.max(1e-3 * floor) {
        let cut = e0 * ENVELOPE_DECADES;
        let (mut st, mut sy, mut stt, mut sty, mut k) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let ex = env[i] - floor;
            if ex <= cut {
                break;
            }
            let (t, y) = (signal.times[i], ex.ln());
            st += t;
            sy += y;
            stt += t * t;
            sty += t * y;
            k += 1.0;
        }
        let denom = k * stt - st * st;
        if k < 3.0 || denom <= 0.0 {
            return Err(Error::EstimateFailed("too few envelope points for a fit".into()));
        }
        let slope = (k * sty - st * sy) / denom;
        if !(slope < 0.0) {
            return Err(Error::EstimateFailed(format!("envelope does not decay (slope {slope:.3e})")));
        }
        -1.0 / slope
    } else {
        0.0
    };
    if tau == 0.0 && frequency.is_none() {
        return Err(Error::EstimateFailed("signal has neither a transient nor an oscillation".into()));
    }
    Ok(SignalScales { tau, frequency })
}

/// `t0 = 10 tau` past the first sample and `dt = max(50 / f, 20 tau)`.
pub fn estimate_window(signal: &Signal) -> Result<AveragingWindow> {
    let s = signal_scales(signal)?;
    let span = signal.end() - signal.start();
    if span < 20.0 * s.tau {
        return Err(Error::EstimateFailed(format!(
            "trajectory spans {:.1} relaxation times, need 20",
            span / s.tau
        )));
    }
    let dt = match s.frequency {
        Some(f) => (50.0 / f).max(20.0 * s.tau),
        None => 20.0 * s.tau,
    };
    Ok(AveragingWindow {
        t0: signal.start() + 10.0 * s.tau,
        dt,
    })
}

/// How the averaging window of a run is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowChoice {
    /// [`estimate_window`], truncated to the span. A constant signal uses
    /// the full span; any other failure falls back to the last half.
    Auto,
    /// The last `fraction` of the span.
    Tail { fraction: f64 },
    Fixed { t0: f64, dt: f64 },
}

impl WindowChoice {
    pub fn resolve(&self, signal: &Signal) -> Result<AveragingWindow> {
        match *self {
            WindowChoice::Fixed { t0, dt } => AveragingWindow::new(t0, dt),
            WindowChoice::Tail { fraction } => Ok(AveragingWindow::tail(signal, fraction)),
            WindowChoice::Auto => match estimate_window(signal) {
                Ok(w) if w.end() <= signal.end() => Ok(w),
                Ok(w) if signal.end() - w.t0 >= 0.25 * (signal.end() - signal.start()) => Ok(AveragingWindow {
                    t0: w.t0,
                    dt: signal.end() - w.t0,
                }),
                Ok(_) => Ok(AveragingWindow::tail(signal, 0.5)),
                Err(Error::EstimateFailed(_)) => {
                    let (lo, hi) = signal
                        .m_z
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                    if hi - lo <= ENVELOPE_FLOOR {
                        Ok(AveragingWindow::full_span(signal))
                    } else {
                        Ok(AveragingWindow::tail(signal, 0.5))
                    }
                }
                Err(e) => Err(e),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseLabel {
    #[serde(rename = "QS_I")]
    QsI,
    #[serde(rename = "QS_II")]
    QsII,
    #[serde(rename = "BTC")]
    Btc,
    TrivialFixedPoint,
}

impl PhaseLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhaseLabel::QsI => "QS_I",
            PhaseLabel::QsII => "QS_II",
            PhaseLabel::Btc => "BTC",
            PhaseLabel::TrivialFixedPoint => "TrivialFixedPoint",
        }
    }

    pub fn is_oscillatory(&self) -> bool {
        matches!(self, PhaseLabel::Btc)
    }
}

impl std::fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    MeanField,
    Quantum,
}

impl std::str::FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "meanfield" => Ok(Engine::MeanField),
            "quantum" => Ok(Engine::Quantum),
            other => Err(format!("unknown engine `{other}`, expected meanfield or quantum")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    Bloch { m_x: f64, m_y: f64, m_z: f64 },
    Angles { theta: f64, phi: f64 },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Bloch {
            m_x: 0.0,
            m_y: 0.0,
            m_z: 1.0,
        }
    }
}

impl InitialCondition {
    pub fn angles(&self) -> AngularState {
        match *self {
            InitialCondition::Angles { theta, phi } => AngularState::new(theta, phi),
            InitialCondition::Bloch { m_x, m_y, m_z } => BlochVector::new(m_x, m_y, m_z).to_angular(),
        }
    }

    pub fn bloch(&self) -> Result<BlochVector> {
        let m = match *self {
            InitialCondition::Angles { theta, phi } => AngularState::new(theta, phi).to_bloch(),
            InitialCondition::Bloch { m_x, m_y, m_z } => BlochVector::new(m_x, m_y, m_z),
        };
        let r = m.norm_sq();
        if !((r - 1.0).abs() < 1e-9) {
            return Err(Error::InvalidParameter {
                field: "initial_condition",
                reason: format!("Bloch vector must have unit length, |m|^2 = {r}"),
            });
        }
        Ok(BlochVector::new(m.m_x / r.sqrt(), m.m_y / r.sqrt(), m.m_z / r.sqrt()))
    }
}

/// Settings of a single classification run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyOptions {
    pub engine: Engine,
    pub t_end: f64,
    /// Mean-field runs with an `Auto` window are extended up to this time
    /// when the transient outlasts `t_end`.
    pub max_t_end: f64,
    pub sample_dt: f64,
    pub initial_condition: InitialCondition,
    pub window: WindowChoice,
    pub meanfield_threshold: f64,
    pub quantum_threshold_c: f64,
    /// Divides every integration tolerance.
    pub tolerance_factor: f64,
    pub spectrum: SolverOptions,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            engine: Engine::MeanField,
            t_end: 400.0,
            max_t_end: 20_000.0,
            sample_dt: 0.05,
            initial_condition: InitialCondition::default(),
            window: WindowChoice::Auto,
            meanfield_threshold: LIMIT_CYCLE_VARIANCE,
            quantum_threshold_c: QUANTUM_THRESHOLD_C,
            tolerance_factor: 1.0,
            spectrum: SolverOptions::default(),
        }
    }
}

impl ClassifyOptions {
    /// Defaults for finite-N runs: the last half of `t in [0, 40]`.
    pub fn quantum() -> Self {
        Self {
            engine: Engine::Quantum,
            t_end: 40.0,
            sample_dt: 0.05,
            window: WindowChoice::Tail { fraction: 0.5 },
            ..Self::default()
        }
    }

    pub fn threshold(&self, n_spins: usize) -> f64 {
        match self.engine {
            Engine::MeanField => self.meanfield_threshold,
            Engine::Quantum => self.quantum_threshold_c / n_spins as f64,
        }
    }
}

/// Outcome of [`classify_phase`]; also the JSON classification record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub params: ModelParams,
    pub engine: Engine,
    pub label: PhaseLabel,
    pub mzbar: f64,
    pub var_mz: f64,
    pub threshold: f64,
    /// `|Im lambda / Re lambda|` of the slowest relaxation mode; absent for
    /// oscillatory points.
    pub r_proxy: Option<f64>,
    pub window: AveragingWindow,
}

/// Magnetization time series of one engine run.
pub fn run_engine(params: &ModelParams, options: &ClassifyOptions) -> Result<Signal> {
    let grid = uniform_grid(0.0, options.t_end, options.sample_dt);
    match options.engine {
        Engine::MeanField => {
            let mut solver = MeanFieldSolver::default();
            solver.tol = solver.tol.tightened(options.tolerance_factor);
            let m0 = options.initial_condition.bloch()?;
            let traj = solver.integrate(m0, params, options.t_end, &grid, DriveProtocol::Constant)?;
            Ok(Signal::from_meanfield(&traj))
        }
        Engine::Quantum => {
            let model = CollectiveSpinModel::new(*params)?;
            let a = options.initial_condition.angles();
            let rho0 = coherent_state(a.theta, a.phi, params.n_spins())?;
            let mut evo = EvolveOptions::default();
            evo.tol = evo.tol.tightened(options.tolerance_factor);
            let series = evolve(&rho0, &model, options.t_end, &grid, Frame::Rotating, &evo)?;
            Ok(Signal::from_quantum(&series, params))
        }
    }
}

/// R-proxy from the linearization at the end state of a mean-field run.
pub fn meanfield_r_proxy(end: &BlochVector, params: &ModelParams) -> Option<f64> {
    let ev = tangent_eigenvalues(end, params);
    let lead = if ev[0].re >= ev[1].re { ev[0] } else { ev[1] };
    (lead.re < 0.0).then(|| (lead.im / lead.re).abs())
}

/// R-proxy `|alpha_i / alpha_r|` of the Liouvillian gap.
pub fn quantum_r_proxy(params: &ModelParams, options: &SolverOptions) -> Result<Option<f64>> {
    let model = CollectiveSpinModel::new(*params)?;
    let sup = build_superoperator(&model, options)?;
    Ok(leading_eigenvalues(&sup, 4, options)?.ratio)
}

/// Runs the chosen engine and labels the point.
///
/// Oscillation above threshold is BTC. Otherwise a point without an SSO
/// background is a trivial fixed point, and a locked point on an SSO
/// background is QS-I or QS-II by whether the R-proxy is below or above one.
///
/// A mean-field run whose estimated relaxation time does not fit the
/// averaging window is repeated with a longer `t_end`, up to `max_t_end`.
pub fn classify_phase(params: &ModelParams, options: &ClassifyOptions) -> Result<Classification> {
    let mut opts = *options;
    let mut signal = run_engine(params, &opts)?;
    let extend = opts.engine == Engine::MeanField && opts.window == WindowChoice::Auto;
    while extend && opts.t_end < opts.max_t_end {
        let needed = match signal_scales(&signal) {
            Ok(s) => 1.1 * 30.0 * s.tau,
            Err(_) => break,
        };
        if signal.end() - signal.start() >= needed {
            break;
        }
        opts.t_end = needed.max(2.0 * opts.t_end).min(opts.max_t_end);
        signal = run_engine(params, &opts)?;
    }
    classify_signal(params, &opts, &signal)
}

/// [`classify_phase`] on an existing run of the configured engine.
pub fn classify_signal(params: &ModelParams, options: &ClassifyOptions, signal: &Signal) -> Result<Classification> {
    if params.epsilon() == 0.0 {
        return Err(Error::Unclassifiable("undriven point: no drive phase to lock to".into()));
    }
    let window = options.window.resolve(signal)?;
    let op = order_parameters(signal, &window)?;
    let threshold = options.threshold(params.n_spins());
    let record = |label, r_proxy| Classification {
        params: *params,
        engine: options.engine,
        label,
        mzbar: op.mzbar,
        var_mz: op.var_mz,
        threshold,
        r_proxy,
        window,
    };
    if !op.var_mz.is_finite() {
        return Err(Error::Unclassifiable(format!("variance is {}", op.var_mz)));
    }
    if op.var_mz > threshold {
        return Ok(record(PhaseLabel::Btc, None));
    }
    let r = match options.engine {
        Engine::MeanField => {
            let i = signal.len() - 1;
            meanfield_r_proxy(&BlochVector::new(signal.m_x[i], signal.m_y[i], signal.m_z[i]), params)
        }
        Engine::Quantum => quantum_r_proxy(params, &options.spectrum)?,
    };
    if !params.has_sso_background() {
        return Ok(record(PhaseLabel::TrivialFixedPoint, r));
    }
    match r {
        Some(r) if r < 1.0 => Ok(record(PhaseLabel::QsI, Some(r))),
        Some(r) => Ok(record(PhaseLabel::QsII, Some(r))),
        None => Err(Error::Unclassifiable("locked state with a marginal relaxation mode".into())),
    }
}
