//! Thermodynamic-limit dynamics on the Bloch sphere.
//!
//! The rotating-frame mean-field flow is integrated in Cartesian form
//! (valid everywhere) or in angular form (valid away from the poles).
//! The unit sphere is invariant; the norm defect is monitored, never
//! corrected.

use crate::error::{Error, Result};
use crate::ode::{Control, Dopri5, Observer, OdeSystem, Tolerances};
use crate::params::ModelParams;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Angular form is rejected when `sin(theta)` drops below this.
pub const POLE_GUARD: f64 = 1e-3;

/// Rate at which the default vector field pulls `|m|^2` back to one.
pub const NORMAL_RELAXATION: f64 = 4.0;

/// Tail variance of `m_z` above which a mean-field attractor is a limit cycle.
pub const LIMIT_CYCLE_VARIANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub m_x: f64,
    pub m_y: f64,
    pub m_z: f64,
}

impl BlochVector {
    pub const NORTH: BlochVector = BlochVector { m_x: 0.0, m_y: 0.0, m_z: 1.0 };
    pub const SOUTH: BlochVector = BlochVector { m_x: 0.0, m_y: 0.0, m_z: -1.0 };

    pub fn new(m_x: f64, m_y: f64, m_z: f64) -> Self {
        Self { m_x, m_y, m_z }
    }

    pub fn norm_sq(&self) -> f64 {
        self.m_x * self.m_x + self.m_y * self.m_y + self.m_z * self.m_z
    }

    pub fn transverse_sq(&self) -> f64 {
        self.m_x * self.m_x + self.m_y * self.m_y
    }

    /// Polar and azimuthal angles; `phi` is reduced to `[0, 2pi)`.
    pub fn to_angular(&self) -> AngularState {
        let theta = self.transverse_sq().sqrt().atan2(self.m_z);
        let phi = self.m_y.atan2(self.m_x).rem_euclid(2.0 * PI);
        AngularState { theta, phi }
    }

    /// Rotation about the z axis by `angle`.
    pub fn rotate_z(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.m_x - s * self.m_y, s * self.m_x + c * self.m_y, self.m_z)
    }

    pub fn distance(&self, other: &Self) -> f64 {
        ((self.m_x - other.m_x).powi(2) + (self.m_y - other.m_y).powi(2) + (self.m_z - other.m_z).powi(2)).sqrt()
    }

    fn as_array(&self) -> [f64; 3] {
        [self.m_x, self.m_y, self.m_z]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularState {
    pub theta: f64,
    pub phi: f64,
}

impl AngularState {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    pub fn to_bloch(&self) -> BlochVector {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        BlochVector::new(st * cp, st * sp, ct)
    }
}

/// Time dependence of the drive amplitude in a mean-field run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriveProtocol {
    /// epsilon applied for all times.
    Constant,
    /// Drive off for `t < t_on`, on afterwards.
    Step { t_on: f64 },
}

impl DriveProtocol {
    /// Step protocol switching on after the background has relaxed,
    /// `t_on = 20 / gamma_plus`.
    pub fn step_after_relaxation(params: &ModelParams) -> Self {
        DriveProtocol::Step {
            t_on: 20.0 / params.gamma_plus(),
        }
    }

    fn epsilon_at(&self, eps: f64, t: f64) -> f64 {
        match *self {
            DriveProtocol::Constant => eps,
            DriveProtocol::Step { t_on } => {
                if t < t_on {
                    0.0
                } else {
                    eps
                }
            }
        }
    }
}

/// Right-hand side of the rotating-frame mean-field equations.
pub fn mf_rhs(m: &BlochVector, params: &ModelParams) -> BlochVector {
    rhs_with_drive(m, params.detuning(), params.epsilon(), params.gamma_plus(), params.gamma_minus())
}

fn rhs_with_drive(m: &BlochVector, detuning: f64, eps: f64, gp: f64, gm: f64) -> BlochVector {
    let g = gp - gm * m.m_z * m.m_z;
    BlochVector {
        m_x: -detuning * m.m_y - g * m.m_x * m.m_z,
        m_y: detuning * m.m_x + 0.5 * eps * m.m_z - g * m.m_y * m.m_z,
        m_z: -0.5 * eps * m.m_y + g * (1.0 - m.m_z * m.m_z),
    }
}

/// Rate of change of `|m|^2` along the flow at an arbitrary (off-sphere)
/// point: `2 m_z (1 - |m|^2)(G+ - G- m_z^2)`.
pub fn norm_flow(m: &BlochVector, params: &ModelParams) -> f64 {
    2.0 * m.m_z * (1.0 - m.norm_sq()) * (params.gamma_plus() - params.gamma_minus() * m.m_z * m.m_z)
}

/// Jacobian of [`mf_rhs`] in Cartesian coordinates.
pub fn jacobian(m: &BlochVector, params: &ModelParams) -> [[f64; 3]; 3] {
    let (d, e) = (params.detuning(), params.epsilon());
    let (gp, gm) = (params.gamma_plus(), params.gamma_minus());
    let (x, y, z) = (m.m_x, m.m_y, m.m_z);
    let g = gp - gm * z * z;
    let dg = -2.0 * gm * z;
    [
        [-g * z, -d, -x * (g + z * dg)],
        [d, -g * z, 0.5 * e - y * (g + z * dg)],
        [0.0, -0.5 * e, dg * (1.0 - z * z) - 2.0 * z * g],
    ]
}

/// Eigenvalues of the flow linearized at a fixed point, restricted to the
/// tangent plane of the sphere (the normal direction is excluded).
pub fn tangent_eigenvalues(m: &BlochVector, params: &ModelParams) -> [Complex64; 2] {
    let n = {
        let r = m.norm_sq().sqrt();
        [m.m_x / r, m.m_y / r, m.m_z / r]
    };
    // Any vector not parallel to n seeds the tangent basis.
    let seed = if n[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let proj = dot(&seed, &n);
    let mut e1 = [seed[0] - proj * n[0], seed[1] - proj * n[1], seed[2] - proj * n[2]];
    let l = dot(&e1, &e1).sqrt();
    e1.iter_mut().for_each(|v| *v /= l);
    let e2 = [
        n[1] * e1[2] - n[2] * e1[1],
        n[2] * e1[0] - n[0] * e1[2],
        n[0] * e1[1] - n[1] * e1[0],
    ];
    let j = jacobian(m, params);
    let apply = |v: &[f64; 3]| {
        [
            j[0][0] * v[0] + j[0][1] * v[1] + j[0][2] * v[2],
            j[1][0] * v[0] + j[1][1] * v[1] + j[1][2] * v[2],
            j[2][0] * v[0] + j[2][1] * v[1] + j[2][2] * v[2],
        ]
    };
    let je1 = apply(&e1);
    let je2 = apply(&e2);
    let (a, b, c, d) = (dot(&e1, &je1), dot(&e1, &je2), dot(&e2, &je1), dot(&e2, &je2));
    let tr = a + d;
    let det = a * d - b * c;
    let disc = Complex64::new(tr * tr / 4.0 - det, 0.0).sqrt();
    let half = Complex64::new(tr / 2.0, 0.0);
    [half + disc, half - disc]
}

/// Off-sphere extension of the mean-field vector field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorField {
    /// The flow with its radial component replaced by a unit-rate pull
    /// toward `|m| = 1`. Identical to the literal flow on the unit sphere;
    /// integration error along the normal decays instead of accumulating.
    #[default]
    Tangent,
    /// The right-hand side evaluated verbatim off the sphere, where the
    /// norm obeys `d|m|^2/dt = 2 m_z (1 - |m|^2)(G+ - G- m_z^2)`. The
    /// sphere is transversally repelling wherever `m_z (G+ - G- m_z^2) < 0`,
    /// so long runs on an oscillating background can leave it.
    Literal,
}

#[derive(Clone, Copy)]
struct CartesianSystem {
    detuning: f64,
    epsilon: f64,
    gamma_plus: f64,
    gamma_minus: f64,
    field: VectorField,
}

impl CartesianSystem {
    fn literal(&self, m: &BlochVector) -> BlochVector {
        rhs_with_drive(m, self.detuning, self.epsilon, self.gamma_plus, self.gamma_minus)
    }
}

impl OdeSystem for CartesianSystem {
    fn dim(&self) -> usize {
        3
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let m = BlochVector::new(y[0], y[1], y[2]);
        let f = self.literal(&m);
        let radial = match self.field {
            VectorField::Tangent => {
                let r2 = m.norm_sq();
                (m.m_x * f.m_x + m.m_y * f.m_y + m.m_z * f.m_z) / r2 + NORMAL_RELAXATION * (r2 - 1.0)
            }
            VectorField::Literal => 0.0,
        };
        dy[0] = f.m_x - radial * m.m_x;
        dy[1] = f.m_y - radial * m.m_y;
        dy[2] = f.m_z - radial * m.m_z;
    }
}

/// Sampled mean-field trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanFieldTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<BlochVector>,
    /// Cumulative azimuthal phase at each sample.
    pub phi_unwrapped: Vec<f64>,
    /// Largest `| |m|^2 - 1 |` seen at any accepted step or sample.
    pub max_norm_defect: f64,
    /// Largest `|m . F(m)|` of the literal right-hand side at accepted
    /// steps; nonzero only in proportion to the norm defect unless the
    /// right-hand side fails to be tangent to the sphere.
    pub max_radial_rate: f64,
    pub params: ModelParams,
}

impl MeanFieldTrajectory {
    pub fn m_z(&self) -> Vec<f64> {
        self.states.iter().map(|m| m.m_z).collect()
    }

    pub fn last(&self) -> BlochVector {
        *self.states.last().expect("trajectory has samples")
    }

    /// CSV with columns `t,m_x,m_y,m_z,theta,phi_unwrapped`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,m_x,m_y,m_z,theta,phi_unwrapped\n");
        for ((t, m), phi) in self.times.iter().zip(&self.states).zip(&self.phi_unwrapped) {
            let theta = m.to_angular().theta;
            out.push_str(&format!("{t},{},{},{},{theta},{phi}\n", m.m_x, m.m_y, m.m_z));
        }
        out
    }
}

struct MeanFieldObserver<'a> {
    times: &'a mut Vec<f64>,
    states: &'a mut Vec<BlochVector>,
    phis: &'a mut Vec<f64>,
    last_raw: f64,
    last_unwrapped: f64,
    max_defect: f64,
    max_radial: f64,
    system: CartesianSystem,
}

fn wrap_pi(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl MeanFieldObserver<'_> {
    fn unwrap_from_anchor(&self, y: &[f64]) -> (f64, f64) {
        let raw = y[1].atan2(y[0]);
        (raw, self.last_unwrapped + wrap_pi(raw - self.last_raw))
    }
}

impl Observer for MeanFieldObserver<'_> {
    fn on_step(&mut self, t: f64, y: &[f64]) -> Control {
        if !y.iter().all(|v| v.is_finite()) {
            return Control::Stop(Error::NonFinite { t });
        }
        let (raw, unwrapped) = self.unwrap_from_anchor(y);
        self.last_raw = raw;
        self.last_unwrapped = unwrapped;
        let m = BlochVector::new(y[0], y[1], y[2]);
        self.max_defect = self.max_defect.max((m.norm_sq() - 1.0).abs());
        let f = self.system.literal(&m);
        let radial = (m.m_x * f.m_x + m.m_y * f.m_y + m.m_z * f.m_z).abs();
        self.max_radial = self.max_radial.max(radial);
        Control::Continue
    }

    fn on_sample(&mut self, _index: usize, t: f64, y: &[f64]) -> Control {
        let (_, unwrapped) = self.unwrap_from_anchor(y);
        let m = BlochVector::new(y[0], y[1], y[2]);
        self.max_defect = self.max_defect.max((m.norm_sq() - 1.0).abs());
        self.times.push(t);
        self.states.push(m);
        self.phis.push(unwrapped);
        Control::Continue
    }
}

/// Mean-field integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldSolver {
    pub tol: Tolerances,
    /// Cap on the step size; keeps per-step azimuthal increments small for
    /// phase unwrapping.
    pub h_max: f64,
    pub field: VectorField,
}

impl Default for MeanFieldSolver {
    fn default() -> Self {
        Self {
            tol: Tolerances::MEAN_FIELD,
            h_max: 0.5,
            field: VectorField::Tangent,
        }
    }
}

impl MeanFieldSolver {
    pub fn integrate(
        &self,
        m0: BlochVector,
        params: &ModelParams,
        t_end: f64,
        grid: &[f64],
        protocol: DriveProtocol,
    ) -> Result<MeanFieldTrajectory> {
        if (m0.norm_sq() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                field: "m0",
                reason: format!("initial state must be a unit vector, |m|^2 = {}", m0.norm_sq()),
            });
        }
        if !(t_end > 0.0) {
            return Err(Error::InvalidParameter {
                field: "t_end",
                reason: format!("must be positive, got {t_end}"),
            });
        }
        let mut times = Vec::with_capacity(grid.len());
        let mut states = Vec::with_capacity(grid.len());
        let mut phis = Vec::with_capacity(grid.len());
        let raw0 = m0.m_y.atan2(m0.m_x);
        let system_for = |eps: f64| CartesianSystem {
            detuning: params.detuning(),
            epsilon: eps,
            gamma_plus: params.gamma_plus(),
            gamma_minus: params.gamma_minus(),
            field: self.field,
        };
        let mut obs = MeanFieldObserver {
            times: &mut times,
            states: &mut states,
            phis: &mut phis,
            last_raw: raw0,
            last_unwrapped: raw0,
            max_defect: (m0.norm_sq() - 1.0).abs(),
            max_radial: 0.0,
            system: system_for(params.epsilon()),
        };

        // Split at the drive switch so no step straddles the discontinuity.
        let mut segments: Vec<(f64, f64, f64)> = Vec::new();
        match protocol {
            DriveProtocol::Step { t_on } if t_on > 0.0 && t_on < t_end => {
                segments.push((0.0, t_on, protocol.epsilon_at(params.epsilon(), 0.0)));
                segments.push((t_on, t_end, params.epsilon()));
            }
            _ => segments.push((0.0, t_end, protocol.epsilon_at(params.epsilon(), 0.0))),
        }

        let solver = Dopri5::new(self.tol).with_h_max(self.h_max);
        let mut y = m0.as_array().to_vec();
        let n_seg = segments.len();
        for (k, (a, b, eps)) in segments.into_iter().enumerate() {
            let sys = system_for(eps);
            obs.system = sys;
            let lo = grid.partition_point(|&t| t < a);
            let hi = if k + 1 == n_seg { grid.len() } else { grid.partition_point(|&t| t < b) };
            let sub = &grid[lo..hi];
            let mut last = LastState::new(&mut obs, lo);
            solver.solve(&sys, a, &y, b, sub, &mut last)?;
            y = last.y;
        }
        let (max_norm_defect, max_radial_rate) = (obs.max_defect, obs.max_radial);
        Ok(MeanFieldTrajectory {
            times,
            states,
            phi_unwrapped: phis,
            max_norm_defect,
            max_radial_rate,
            params: *params,
        })
    }
}

/// Forwards to an inner observer and remembers the latest step state.
struct LastState<'a, 'b> {
    inner: &'a mut MeanFieldObserver<'b>,
    offset: usize,
    y: Vec<f64>,
}

impl<'a, 'b> LastState<'a, 'b> {
    fn new(inner: &'a mut MeanFieldObserver<'b>, offset: usize) -> Self {
        Self {
            inner,
            offset,
            y: Vec::new(),
        }
    }
}

impl Observer for LastState<'_, '_> {
    fn on_step(&mut self, t: f64, y: &[f64]) -> Control {
        self.y.clear();
        self.y.extend_from_slice(y);
        self.inner.on_step(t, y)
    }
    fn on_sample(&mut self, index: usize, t: f64, y: &[f64]) -> Control {
        self.inner.on_sample(index + self.offset, t, y)
    }
}

/// Adaptive integration of the mean-field flow with default tolerances.
pub fn integrate_meanfield(
    m0: BlochVector,
    params: &ModelParams,
    t_end: f64,
    grid: &[f64],
    protocol: DriveProtocol,
) -> Result<MeanFieldTrajectory> {
    MeanFieldSolver::default().integrate(m0, params, t_end, grid, protocol)
}

/// `(d theta/dt, d phi/dt)` of the angular form.
pub fn angular_rhs(state: &AngularState, params: &ModelParams) -> Result<(f64, f64)> {
    let (st, ct) = state.theta.sin_cos();
    if st.abs() < POLE_GUARD {
        return Err(Error::PoleProximity { t: f64::NAN, sin_theta: st });
    }
    let (sp, cp) = state.phi.sin_cos();
    let eps = params.epsilon();
    let theta_dot = 0.5 * eps * sp - st * (params.gamma_plus() - params.gamma_minus() * ct * ct);
    let phi_dot = params.detuning() + 0.5 * eps * (ct / st) * cp;
    Ok((theta_dot, phi_dot))
}

struct AngularSystem {
    params: ModelParams,
}

impl OdeSystem for AngularSystem {
    fn dim(&self) -> usize {
        2
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        // Past the guard the observer aborts; evaluate the raw formula so
        // trial stages stay finite.
        let (st, ct) = y[0].sin_cos();
        let (sp, cp) = y[1].sin_cos();
        let eps = self.params.epsilon();
        dy[0] = 0.5 * eps * sp - st * (self.params.gamma_plus() - self.params.gamma_minus() * ct * ct);
        dy[1] = self.params.detuning() + 0.5 * eps * (ct / st) * cp;
    }
}

/// Trajectory of the angular integrator; `phi` is cumulative.
#[derive(Debug, Clone)]
pub struct AngularTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<AngularState>,
}

struct AngularObserver {
    times: Vec<f64>,
    states: Vec<AngularState>,
}

impl Observer for AngularObserver {
    fn on_step(&mut self, t: f64, y: &[f64]) -> Control {
        let st = y[0].sin();
        if st.abs() < POLE_GUARD {
            return Control::Stop(Error::PoleProximity { t, sin_theta: st });
        }
        Control::Continue
    }
    fn on_sample(&mut self, _index: usize, t: f64, y: &[f64]) -> Control {
        self.times.push(t);
        self.states.push(AngularState::new(y[0], y[1]));
        Control::Continue
    }
}

/// Integrates the angular form; fails with [`Error::PoleProximity`] if the
/// trajectory approaches a pole, signalling a switch to Cartesian form.
pub fn integrate_angular(
    state0: AngularState,
    params: &ModelParams,
    t_end: f64,
    grid: &[f64],
    tol: Tolerances,
) -> Result<AngularTrajectory> {
    angular_rhs(&state0, params).map_err(|e| match e {
        Error::PoleProximity { sin_theta, .. } => Error::PoleProximity { t: 0.0, sin_theta },
        other => other,
    })?;
    let mut obs = AngularObserver {
        times: Vec::with_capacity(grid.len()),
        states: Vec::with_capacity(grid.len()),
    };
    Dopri5::new(tol).with_h_max(0.5).solve(
        &AngularSystem { params: *params },
        0.0,
        &[state0.theta, state0.phi],
        t_end,
        grid,
        &mut obs,
    )?;
    Ok(AngularTrajectory {
        times: obs.times,
        states: obs.states,
    })
}

/// The undriven finite-tilt oscillator latitude `sqrt(G+/G-)`, present
/// only when `G+ < G-`.
pub fn sso_fixed_point(params: &ModelParams) -> Option<f64> {
    sso_latitude(params.gamma_plus(), params.gamma_minus())
}

fn sso_latitude(gp: f64, gm: f64) -> Option<f64> {
    (gp < gm).then(|| (gp / gm).sqrt())
}

fn stationary_g(gp: f64, gm: f64, x: f64) -> f64 {
    (gp - gm * x).powi(2) * (1.0 - x)
}

/// Analytic maximum of `g(x) = (G+ - G- x)^2 (1 - x)` over `[0, 1]`.
fn stationary_g_max(gp: f64, gm: f64) -> f64 {
    let mut best = stationary_g(gp, gm, 0.0).max(stationary_g(gp, gm, 1.0));
    if gm > 0.0 {
        let interior = (2.0 * gm + gp) / (3.0 * gm);
        if interior > 0.0 && interior < 1.0 {
            best = best.max(stationary_g(gp, gm, interior));
        }
    }
    best
}

/// Resonant drive above which no stationary mean-field solution exists,
/// `2 sqrt(max_x g(x))`.
pub fn resonant_critical_drive(gamma_plus: f64, gamma_minus: f64) -> f64 {
    debug_assert!(gamma_plus > 0.0 || gamma_minus > 0.0, "at least one rate must be positive");
    2.0 * stationary_g_max(gamma_plus, gamma_minus).sqrt()
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut f_lo = f(lo);
    if f_lo == 0.0 {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || (hi - lo) < 1e-17 {
            return mid;
        }
        if (fm > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Stationary state on resonance, on the branch connected to the undriven
/// attractor.
///
/// With `x = m_z^2`, the branch is `x` in `[0, x_top]` with
/// `x_top = min(1, G+/G-)`, where `g` falls monotonically from `G+^2` to
/// zero. Drives between `2 G+` and the critical drive fall back to the
/// nearest root above `x_top`.
pub fn resonant_stationary_state(params: &ModelParams) -> Result<BlochVector> {
    if params.detuning() != 0.0 {
        return Err(Error::InvalidParameter {
            field: "detuning",
            reason: format!("resonant stationary state requires zero detuning, got {}", params.detuning()),
        });
    }
    let (gp, gm, eps) = (params.gamma_plus(), params.gamma_minus(), params.epsilon());
    let target = eps * eps / 4.0;
    let x_top = if gm > 0.0 { (gp / gm).min(1.0) } else { 1.0 };
    let f = |x: f64| stationary_g(gp, gm, x) - target;

    let x = if target <= gp * gp {
        if target == 0.0 {
            x_top
        } else {
            bisect(0.0, x_top, f)
        }
    } else if target <= stationary_g_max(gp, gm) && x_top < 1.0 {
        let peak = ((2.0 * gm + gp) / (3.0 * gm)).min(1.0);
        bisect(x_top, peak, f)
    } else {
        return Err(Error::NoStationarySolution {
            epsilon: eps,
            limit: resonant_critical_drive(gp, gm),
        });
    };

    let m_z = x.max(0.0).sqrt();
    let denom = gp - gm * x;
    let m_y = if eps == 0.0 || denom.abs() < 1e-300 {
        (1.0 - x).max(0.0).sqrt()
    } else {
        // eps / (2 denom) equals +-sqrt(1 - x) on the root; take the exact
        // magnitude with the relation's sign.
        (1.0 - x).max(0.0).sqrt().copysign(eps / (2.0 * denom))
    };
    Ok(BlochVector::new(0.0, m_y, m_z))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttractorKind {
    FixedPoint,
    LimitCycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    /// Half the peak-to-peak excursion of `m_z` in the tail.
    pub amplitude: f64,
    /// Oscillation frequency (cycles per unit time); zero if fewer than two
    /// crossings were seen.
    pub frequency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttractorReport {
    pub kind: AttractorKind,
    /// Final state, meaningful for fixed points.
    pub location: BlochVector,
    pub cycle: Option<CycleStats>,
    pub tail_variance: f64,
}

/// Mean and variance of `values`.
pub(crate) fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Frequency from mean crossings of `signal` sampled at `times`.
pub(crate) fn crossing_frequency(times: &[f64], signal: &[f64], level: f64) -> Option<f64> {
    let mut crossings = Vec::new();
    for i in 1..signal.len() {
        let (a, b) = (signal[i - 1] - level, signal[i] - level);
        if (a < 0.0 && b >= 0.0) || (a >= 0.0 && b < 0.0) {
            let frac = a / (a - b);
            crossings.push(times[i - 1] + frac * (times[i] - times[i - 1]));
        }
    }
    if crossings.len() < 3 {
        return None;
    }
    let span = crossings.last().unwrap() - crossings[0];
    Some((crossings.len() - 1) as f64 / (2.0 * span))
}

/// Labels the tail of a trajectory as a fixed point or a limit cycle by the
/// variance of `m_z` over the last `tail_fraction` of the samples.
pub fn classify_attractor(traj: &MeanFieldTrajectory, tail_fraction: f64) -> Result<AttractorReport> {
    let n = traj.states.len();
    let tail_len = ((n as f64) * tail_fraction.clamp(0.0, 1.0)).floor() as usize;
    if tail_len < 10 {
        return Err(Error::TooShort {
            samples: tail_len,
            required: 10,
        });
    }
    let start = n - tail_len;
    let mz: Vec<f64> = traj.states[start..].iter().map(|m| m.m_z).collect();
    let (mean, var) = mean_var(&mz);
    let location = traj.last();
    if var > LIMIT_CYCLE_VARIANCE {
        let (lo, hi) = mz.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let frequency = crossing_frequency(&traj.times[start..], &mz, mean).unwrap_or(0.0);
        Ok(AttractorReport {
            kind: AttractorKind::LimitCycle,
            location,
            cycle: Some(CycleStats {
                amplitude: 0.5 * (hi - lo),
                frequency,
            }),
            tail_variance: var,
        })
    } else {
        Ok(AttractorReport {
            kind: AttractorKind::FixedPoint,
            location,
            cycle: None,
            tail_variance: var,
        })
    }
}
