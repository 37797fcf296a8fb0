//! Finite-N master-equation dynamics in the Dicke basis.
//!
//! The right-hand side is evaluated as `K rho + rho K^dagger + sum L rho L^dagger`
//! with the tridiagonal effective generator `K`, so one evaluation costs
//! `O(D^2)` for `D = N + 1`.

use crate::band::BandMatrix;
use crate::error::{Error, Result};
use crate::liouvillian::{self, SolverOptions};
use crate::meanfield::BlochVector;
use crate::model::CollectiveSpinModel;
use crate::ode::{Control, Dopri5, Observer, OdeSystem, SolveStats, Tolerances};
use faer::Side;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Density matrix in the Dicke basis, north pole first.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    data: DMatrix<Complex64>,
    n_spins: usize,
}

/// Validation thresholds for [`DensityMatrix`].
pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-8;
/// Largest N for which positivity is checked by diagonalization.
pub const POSITIVITY_CHECK_MAX_N: usize = 60;

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and (for `N <= 60`) positivity.
    pub fn new(data: DMatrix<Complex64>, n_spins: usize) -> Result<Self> {
        let rho = Self::new_unchecked(data, n_spins)?;
        let herm = rho.hermiticity_defect();
        if herm > HERMITICITY_TOL {
            return Err(Error::InvalidParameter {
                field: "rho",
                reason: format!("not Hermitian: max |rho - rho^dagger| = {herm:e}"),
            });
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidParameter {
                field: "rho",
                reason: format!("trace must be one, got {tr}"),
            });
        }
        if n_spins <= POSITIVITY_CHECK_MAX_N {
            let min = rho.min_eigenvalue();
            if min < -POSITIVITY_TOL {
                return Err(Error::PositivityViolation { t: 0.0, min_eigenvalue: min });
            }
        }
        Ok(rho)
    }

    /// Wraps a matrix after checking only its shape.
    pub fn new_unchecked(data: DMatrix<Complex64>, n_spins: usize) -> Result<Self> {
        if data.nrows() != n_spins + 1 || data.ncols() != n_spins + 1 {
            return Err(Error::DimensionMismatch {
                expected: n_spins + 1,
                found: data.nrows(),
            });
        }
        Ok(Self { data, n_spins })
    }

    /// `|psi><psi|` for a normalized amplitude vector.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let d = psi.len();
        if d < 2 {
            return Err(Error::InvalidParameter {
                field: "psi",
                reason: "needs at least two amplitudes".into(),
            });
        }
        let data = DMatrix::from_fn(d, d, |i, j| psi[i] * psi[j].conj());
        Self::new(data, d - 1)
    }

    pub fn maximally_mixed(n_spins: usize) -> Self {
        let d = n_spins + 1;
        Self {
            data: DMatrix::from_diagonal_element(d, d, Complex64::new(1.0 / d as f64, 0.0)),
            n_spins,
        }
    }

    /// Projector onto `|S, S - k>`.
    pub fn basis_projector(n_spins: usize, k: usize) -> Self {
        let d = n_spins + 1;
        let mut data = DMatrix::zeros(d, d);
        data[(k, k)] = Complex64::new(1.0, 0.0);
        Self { data, n_spins }
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn dim(&self) -> usize {
        self.n_spins + 1
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.data
    }

    pub fn trace(&self) -> Complex64 {
        self.data.trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.data)
    }

    /// `Tr[rho^2]`.
    pub fn purity(&self) -> f64 {
        // Tr[rho rho] = sum_ij rho_ij rho_ji; for Hermitian rho this is sum |rho_ij|^2.
        let d = self.dim();
        let mut acc = 0.0;
        for j in 0..d {
            for i in 0..d {
                acc += (self.data[(i, j)] * self.data[(j, i)]).re;
            }
        }
        acc
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim();
        let m = faer::Mat::<Complex64>::from_fn(d, d, |i, j| 0.5 * (self.data[(i, j)] + self.data[(j, i)].conj()));
        match m.self_adjoint_eigenvalues(Side::Lower) {
            Ok(ev) => ev.into_iter().fold(f64::INFINITY, f64::min),
            Err(_) => f64::NAN,
        }
    }

    /// `Tr[rho A]`.
    pub fn expectation(&self, op: &BandMatrix) -> Complex64 {
        let mut acc = ZERO;
        for (k, diag) in op.diagonals() {
            for (i, a) in diag.iter().enumerate() {
                if *a == ZERO {
                    continue;
                }
                let j = (i as isize + k) as usize;
                acc += a * self.data[(j, i)];
            }
        }
        acc
    }

    /// Normalized magnetization `<S^alpha> / S`.
    pub fn magnetization(&self, model: &CollectiveSpinModel) -> BlochVector {
        let s = model.ops.total_spin();
        BlochVector::new(
            self.expectation(&model.ops.s_x).re / s,
            self.expectation(&model.ops.s_y).re / s,
            self.expectation(&model.ops.s_z).re / s,
        )
    }

    /// Replaces `rho` by `(rho + rho^dagger) / 2`.
    pub fn hermitize(&mut self) {
        hermitize(&mut self.data);
    }
}

fn hermiticity_defect(m: &DMatrix<Complex64>) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..d {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn hermitize(m: &mut DMatrix<Complex64>) {
    let d = m.nrows();
    for j in 0..d {
        for i in 0..=j {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// Amplitudes of the spin coherent state `|theta, phi>` in the Dicke basis.
pub fn coherent_amplitudes(theta: f64, phi: f64, n_spins: usize) -> Result<Vec<Complex64>> {
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(Error::InvalidParameter {
            field: "theta",
            reason: format!("must lie in [0, pi], got {theta}"),
        });
    }
    if !phi.is_finite() {
        return Err(Error::InvalidParameter {
            field: "phi",
            reason: format!("must be finite, got {phi}"),
        });
    }
    let n = n_spins;
    let lf = ln_factorials(n);
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    // Index k holds m = S - k: S + m = N - k powers of cos, S - m = k of sin.
    let amp = |k: usize| -> f64 {
        let (pc, ps) = (n - k, k);
        if (pc > 0 && c == 0.0) || (ps > 0 && s == 0.0) {
            return 0.0;
        }
        let ln_binom = lf[n] - lf[k] - lf[n - k];
        let mut ln = 0.5 * ln_binom;
        if pc > 0 {
            ln += pc as f64 * c.ln();
        }
        if ps > 0 {
            ln += ps as f64 * s.ln();
        }
        ln.exp()
    };
    Ok((0..=n)
        .map(|k| amp(k) * Complex64::from_polar(1.0, k as f64 * phi))
        .collect())
}

/// Pure spin coherent state with mean direction `(theta, phi)`.
pub fn coherent_state(theta: f64, phi: f64, n_spins: usize) -> Result<DensityMatrix> {
    let psi = coherent_amplitudes(theta, phi, n_spins)?;
    let d = psi.len();
    let data = DMatrix::from_fn(d, d, |i, j| psi[i] * psi[j].conj());
    Ok(DensityMatrix { data, n_spins })
}

/// Banded factors of the master equation for one Hamiltonian.
#[derive(Debug, Clone)]
struct Generator {
    k: BandMatrix,
    k_adj: BandMatrix,
    jumps: Vec<BandMatrix>,
}

impl Generator {
    fn new(model: &CollectiveSpinModel, hamiltonian: &BandMatrix) -> Self {
        let k = model.effective_generator(hamiltonian);
        let k_adj = k.adjoint();
        let jumps = model
            .jumps()
            .into_iter()
            .filter(|l| l.max_abs() > 0.0)
            .cloned()
            .collect();
        Self { k, k_adj, jumps }
    }

    fn apply(&self, rho: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|z| *z = ZERO);
        self.k.mul_dense_acc(rho, out);
        self.k_adj.dense_mul_acc(rho, out);
        for l in &self.jumps {
            l.sandwich_acc(rho, out);
        }
    }

    /// Same map for Hermitian `rho`, with a result that is Hermitian to the
    /// last bit: `rho K^dagger` is taken as `(K rho)^dagger` and the jump
    /// terms are symmetrized. Integration stages built from it keep the
    /// state exactly Hermitian.
    fn apply_hermitian(&self, rho: &[Complex64], out: &mut [Complex64], dim: usize) {
        out.iter_mut().for_each(|z| *z = ZERO);
        self.k.mul_dense_acc(rho, out);
        for j in 0..dim {
            for i in 0..=j {
                let v = out[i + dim * j] + out[j + dim * i].conj();
                out[i + dim * j] = v;
                out[j + dim * i] = v.conj();
            }
        }
        for l in &self.jumps {
            l.sandwich_acc(rho, out);
        }
        for j in 0..dim {
            for i in 0..=j {
                let v = 0.5 * (out[i + dim * j] + out[j + dim * i].conj());
                out[i + dim * j] = v;
                out[j + dim * i] = v.conj();
            }
        }
    }
}

/// `d rho / dt` in the rotating frame.
pub fn lindblad_rhs(rho: &DensityMatrix, model: &CollectiveSpinModel) -> Result<DMatrix<Complex64>> {
    if rho.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: rho.dim(),
        });
    }
    let gen = Generator::new(model, &model.hamiltonian);
    let d = model.dim();
    let mut out = vec![ZERO; d * d];
    gen.apply(rho.data.as_slice(), &mut out);
    Ok(DMatrix::from_vec(d, d, out))
}

/// Reference frame of a master-equation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Time-independent generator after the rotating-wave approximation.
    #[default]
    Rotating,
    /// Full time-dependent drive; validation only.
    Lab,
}

struct RotatingSystem {
    gen: Generator,
    dim: usize,
}

impl OdeSystem for RotatingSystem {
    fn dim(&self) -> usize {
        2 * self.dim * self.dim
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        self.gen
            .apply_hermitian(bytemuck::cast_slice(y), bytemuck::cast_slice_mut(dy), self.dim);
    }
}

/// Lab frame: `K(t) = K0 + epsilon cos(omega_d t) * (i S_x)`.
struct LabSystem {
    gen: Generator,
    drive: BandMatrix,
    epsilon: f64,
    omega_d: f64,
    dim: usize,
}

impl OdeSystem for LabSystem {
    fn dim(&self) -> usize {
        2 * self.dim * self.dim
    }
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let rho: &[Complex64] = bytemuck::cast_slice(y);
        let out: &mut [Complex64] = bytemuck::cast_slice_mut(dy);
        let c = self.epsilon * (self.omega_d * t).cos();
        if c == 0.0 {
            self.gen.apply_hermitian(rho, out, self.dim);
            return;
        }
        // K(t) = K0 + i c S_x
        let gen = Generator {
            k: self.gen.k.add(&self.drive.scale(Complex64::new(0.0, c))),
            k_adj: BandMatrix::zeros(self.dim),
            jumps: self.gen.jumps.clone(),
        };
        gen.apply_hermitian(rho, out, self.dim);
    }
}

/// Magnetization, purity and invariant monitors sampled on a time grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub m_x: Vec<f64>,
    pub m_y: Vec<f64>,
    pub m_z: Vec<f64>,
    pub purity: Vec<f64>,
    pub frame: Frame,
    /// Largest `|Tr rho - 1|` over the samples.
    pub max_trace_drift: f64,
    /// Largest `max |rho - rho^dagger|` before re-symmetrization.
    pub max_hermiticity_defect: f64,
    /// Smallest eigenvalue over the samples, when checked.
    pub min_eigenvalue: Option<f64>,
    pub stats: SolveStats,
    #[serde(skip)]
    pub states: Vec<DensityMatrix>,
}

impl ObservableSeries {
    /// CSV with columns `t,m_x,m_y,m_z,purity`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,m_x,m_y,m_z,purity\n");
        for i in 0..self.times.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.times[i], self.m_x[i], self.m_y[i], self.m_z[i], self.purity[i]
            ));
        }
        out
    }

    /// Rotates lab-frame transverse components into the frame co-rotating
    /// at `omega_d`: `m_+ -> m_+ exp(-i omega_d t)`.
    pub fn to_rotating_frame(&self, omega_d: f64) -> ObservableSeries {
        let mut out = self.clone();
        if self.frame == Frame::Rotating {
            return out;
        }
        for i in 0..self.times.len() {
            let mp = Complex64::new(self.m_x[i], self.m_y[i]) * Complex64::from_polar(1.0, -omega_d * self.times[i]);
            out.m_x[i] = mp.re;
            out.m_y[i] = mp.im;
        }
        out.frame = Frame::Rotating;
        out.states.clear();
        out
    }
}

/// Settings for [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub tol: Tolerances,
    /// Runs above this N are refused.
    pub max_n: usize,
    /// Largest N at which positivity is checked at every sample.
    pub positivity_check_max_n: usize,
    /// Keep the full density matrix at every sample.
    pub keep_states: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            tol: Tolerances::MASTER_EQUATION,
            max_n: 800,
            positivity_check_max_n: POSITIVITY_CHECK_MAX_N,
            keep_states: false,
        }
    }
}

/// A negative eigenvalue below this aborts a run.
pub const POSITIVITY_ABORT: f64 = 1e-6;

struct SeriesObserver<'a> {
    model: &'a CollectiveSpinModel,
    check_positivity: bool,
    keep_states: bool,
    series: ObservableSeries,
}

impl Observer for SeriesObserver<'_> {
    fn on_step(&mut self, t: f64, y: &[f64]) -> Control {
        if y.iter().all(|v| v.is_finite()) {
            Control::Continue
        } else {
            Control::Stop(Error::NonFinite { t })
        }
    }

    fn on_sample(&mut self, _index: usize, t: f64, y: &[f64]) -> Control {
        let d = self.model.dim();
        let data = DMatrix::from_column_slice(d, d, bytemuck::cast_slice(y));
        let mut rho = DensityMatrix {
            data,
            n_spins: self.model.params.n_spins(),
        };
        let s = &mut self.series;
        s.max_hermiticity_defect = s.max_hermiticity_defect.max(rho.hermiticity_defect());
        rho.hermitize();
        let tr = rho.trace();
        s.max_trace_drift = s.max_trace_drift.max((tr - 1.0).norm());
        if self.check_positivity {
            let min = rho.min_eigenvalue();
            s.min_eigenvalue = Some(s.min_eigenvalue.map_or(min, |m| m.min(min)));
            if min < -POSITIVITY_ABORT {
                return Control::Stop(Error::PositivityViolation { t, min_eigenvalue: min });
            }
        }
        let m = rho.magnetization(self.model);
        s.times.push(t);
        s.m_x.push(m.m_x);
        s.m_y.push(m.m_y);
        s.m_z.push(m.m_z);
        s.purity.push(rho.purity());
        if self.keep_states {
            s.states.push(rho);
        }
        Control::Continue
    }
}

/// Integrates the master equation from `rho0` and samples observables on
/// `grid`.
pub fn evolve(
    rho0: &DensityMatrix,
    model: &CollectiveSpinModel,
    t_end: f64,
    grid: &[f64],
    frame: Frame,
    options: &EvolveOptions,
) -> Result<ObservableSeries> {
    let n = model.params.n_spins();
    if n > options.max_n {
        return Err(Error::InvalidParameter {
            field: "n_spins",
            reason: format!("{n} exceeds the evolution cap {}", options.max_n),
        });
    }
    if rho0.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: rho0.dim(),
        });
    }
    let d = model.dim();
    let y0: Vec<f64> = bytemuck::cast_slice(rho0.data.as_slice()).to_vec();
    let mut obs = SeriesObserver {
        model,
        check_positivity: n <= options.positivity_check_max_n,
        keep_states: options.keep_states,
        series: ObservableSeries {
            times: Vec::with_capacity(grid.len()),
            m_x: Vec::with_capacity(grid.len()),
            m_y: Vec::with_capacity(grid.len()),
            m_z: Vec::with_capacity(grid.len()),
            purity: Vec::with_capacity(grid.len()),
            frame,
            max_trace_drift: 0.0,
            max_hermiticity_defect: 0.0,
            min_eigenvalue: None,
            stats: SolveStats::default(),
            states: Vec::new(),
        },
    };
    let solver = Dopri5::new(options.tol);
    let stats = match frame {
        Frame::Rotating => {
            let sys = RotatingSystem {
                gen: Generator::new(model, &model.hamiltonian),
                dim: d,
            };
            solver.solve(&sys, 0.0, &y0, t_end, grid, &mut obs)?
        }
        Frame::Lab => {
            let h0 = model.ops.s_z.scale_real(model.params.omega0());
            let sys = LabSystem {
                gen: Generator::new(model, &h0),
                drive: model.ops.s_x.clone(),
                epsilon: model.params.epsilon(),
                omega_d: model.params.omega_d(),
                dim: d,
            };
            solver.solve(&sys, 0.0, &y0, t_end, grid, &mut obs)?
        }
    };
    obs.series.stats = stats;
    Ok(obs.series)
}

/// Stationary state from the null vector of the superoperator.
pub fn steady_state(model: &CollectiveSpinModel) -> Result<DensityMatrix> {
    let sup = liouvillian::build_superoperator(model, &SolverOptions::default())?;
    let x = sup.null_vector()?;
    let d = model.dim();
    let mut data = DMatrix::from_column_slice(d, d, &x);
    let tr = data.trace();
    data.iter_mut().for_each(|z| *z /= tr);
    hermitize(&mut data);
    Ok(DensityMatrix {
        data,
        n_spins: model.params.n_spins(),
    })
}

/// Stationarity defect of a pole projector under the undriven generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoleDefect {
    pub n_spins: usize,
    /// Largest entry modulus of `L0[|pole><pole|]`.
    pub max_abs: f64,
    /// Initial rate of change of `<S_z>/S`.
    pub m_z_rate: f64,
}

/// Measures how far `|S, +-S><S, +-S|` is from stationarity under the
/// undriven generator (`epsilon = 0`) at finite N.
pub fn pole_defect(model: &CollectiveSpinModel, north: bool) -> Result<PoleDefect> {
    let undriven = CollectiveSpinModel::with_operators(model.params.with_epsilon(0.0)?, model.ops.clone())?;
    let n = model.params.n_spins();
    let rho = DensityMatrix::basis_projector(n, if north { 0 } else { n });
    let drho = lindblad_rhs(&rho, &undriven)?;
    let max_abs = drho.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let rate = DensityMatrix { data: drho, n_spins: n }.expectation(&model.ops.s_z).re / model.ops.total_spin();
    Ok(PoleDefect {
        n_spins: n,
        max_abs,
        m_z_rate: rate,
    })
}

/// JSON-ready description of a master-equation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub params: crate::params::ModelParams,
    pub frame: Frame,
    pub tolerances: Tolerances,
    pub t_end: f64,
    pub samples: usize,
    pub stats: SolveStats,
    pub max_trace_drift: f64,
    pub max_hermiticity_defect: f64,
    pub min_eigenvalue: Option<f64>,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(model: &CollectiveSpinModel, series: &ObservableSeries, options: &EvolveOptions, t_end: f64, wall_time_s: f64) -> Self {
        Self {
            params: model.params,
            frame: series.frame,
            tolerances: options.tol,
            t_end,
            samples: series.times.len(),
            stats: series.stats,
            max_trace_drift: series.max_trace_drift,
            max_hermiticity_defect: series.max_hermiticity_defect,
            min_eigenvalue: series.min_eigenvalue,
            wall_time_s,
        }
    }
}
