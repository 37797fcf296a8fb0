//! Dormand–Prince 5(4) integrator with continuous (dense) output.
//!
//! Shared by the mean-field and master-equation engines. States are flat
//! `f64` slices; complex matrices are integrated through their interleaved
//! real/imaginary view.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A first-order system `dy/dt = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

/// Decision returned by an observer.
#[derive(Debug, Clone, PartialEq)]
pub enum Control {
    Continue,
    Stop(Error),
}

/// Receives accepted steps and grid samples during integration.
pub trait Observer {
    /// Called after every accepted step with the step's end state.
    fn on_step(&mut self, _t: f64, _y: &[f64]) -> Control {
        Control::Continue
    }
    /// Called once per requested sample time, in grid order.
    fn on_sample(&mut self, index: usize, t: f64, y: &[f64]) -> Control;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Tolerances {
    pub const MEAN_FIELD: Tolerances = Tolerances { rtol: 1e-10, atol: 1e-12 };
    pub const MASTER_EQUATION: Tolerances = Tolerances { rtol: 1e-8, atol: 1e-10 };

    pub fn tightened(self, factor: f64) -> Self {
        Self {
            rtol: self.rtol / factor,
            atol: self.atol / factor,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Adaptive Dormand–Prince 5(4) pair with PI step-size control.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    pub tol: Tolerances,
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - BETA * 0.75;

impl Dopri5 {
    pub fn new(tol: Tolerances) -> Self {
        Self {
            tol,
            h_init: None,
            h_max: f64::INFINITY,
            h_min: 0.0,
            max_steps: 50_000_000,
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    fn error_norm(&self, y0: &[f64], y1: &[f64], err: &[f64]) -> f64 {
        let n = y0.len();
        let mut acc = 0.0;
        for i in 0..n {
            let sc = self.tol.atol + self.tol.rtol * y0[i].abs().max(y1[i].abs());
            let r = err[i] / sc;
            acc += r * r;
        }
        (acc / n as f64).sqrt()
    }

    fn initial_step<S: OdeSystem>(&self, sys: &S, t0: f64, y0: &[f64], f0: &[f64], span: f64) -> f64 {
        let n = y0.len();
        let sc: Vec<f64> = y0.iter().map(|y| self.tol.atol + self.tol.rtol * y.abs()).collect();
        let rms = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let d0 = rms(y0);
        let d1 = rms(f0);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(self.h_max).min(span);
        let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
        let mut f1 = vec![0.0; n];
        sys.rhs(t0 + h0, &y1, &mut f1);
        let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
        let d2 = rms(&diff) / h0;
        let dmax = d1.max(d2);
        let h1 = if dmax <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / dmax).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.h_max).min(span)
    }

    /// Integrates from `t0` to `t_end`, reporting samples at every `grid`
    /// time (which must be ascending and inside `[t0, t_end]`).
    pub fn solve<S: OdeSystem, O: Observer>(
        &self,
        sys: &S,
        t0: f64,
        y0: &[f64],
        t_end: f64,
        grid: &[f64],
        observer: &mut O,
    ) -> Result<SolveStats> {
        let n = sys.dim();
        assert_eq!(y0.len(), n, "state length does not match system dimension");
        let span = t_end - t0;
        if !(span > 0.0) {
            return Err(Error::InvalidParameter {
                field: "t_end",
                reason: format!("must exceed the start time {t0}, got {t_end}"),
            });
        }
        if let Some(w) = grid.windows(2).find(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter {
                field: "sample_grid",
                reason: format!("must be ascending ({} after {})", w[1], w[0]),
            });
        }
        if grid.first().is_some_and(|&g| g < t0) || grid.last().is_some_and(|&g| g > t_end) {
            return Err(Error::InvalidParameter {
                field: "sample_grid",
                reason: format!("must lie inside [{t0}, {t_end}]"),
            });
        }

        let mut stats = SolveStats::default();
        let mut y = y0.to_vec();
        let mut t = t0;
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut k5 = vec![0.0; n];
        let mut k6 = vec![0.0; n];
        let mut k7 = vec![0.0; n];
        let mut ytmp = vec![0.0; n];
        let mut ynew = vec![0.0; n];
        let mut err = vec![0.0; n];
        let mut dense = vec![0.0; n];
        let mut sample = vec![0.0; n];

        sys.rhs(t, &y, &mut k1);
        stats.rhs_evals += 1;

        let mut next_sample = 0usize;
        while next_sample < grid.len() && grid[next_sample] <= t0 {
            if let Control::Stop(e) = observer.on_sample(next_sample, grid[next_sample], &y) {
                return Err(e);
            }
            next_sample += 1;
        }

        let mut h = match self.h_init {
            Some(h) => h.min(span),
            None => {
                stats.rhs_evals += 1;
                self.initial_step(sys, t, &y, &k1, span)
            }
        };
        let mut err_old: f64 = 1e-4;
        let mut last_rejected = false;

        loop {
            if stats.accepted + stats.rejected >= self.max_steps {
                return Err(Error::MaxStepsExceeded { t });
            }
            let remaining = t_end - t;
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            if h < self.h_min.max(16.0 * f64::EPSILON * t.abs().max(1.0)) {
                return Err(Error::StepSizeUnderflow { t });
            }

            for i in 0..n {
                ytmp[i] = y[i] + h * A21 * k1[i];
            }
            sys.rhs(t + C2 * h, &ytmp, &mut k2);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            sys.rhs(t + C3 * h, &ytmp, &mut k3);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            sys.rhs(t + C4 * h, &ytmp, &mut k4);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            sys.rhs(t + C5 * h, &ytmp, &mut k5);
            for i in 0..n {
                ytmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let t_new = if last { t_end } else { t + h };
            sys.rhs(t_new, &ytmp, &mut k6);
            for i in 0..n {
                ynew[i] = y[i]
                    + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            sys.rhs(t_new, &ynew, &mut k7);
            stats.rhs_evals += 6;

            for i in 0..n {
                err[i] = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            }
            let err_norm = self.error_norm(&y, &ynew, &err);
            if !err_norm.is_finite() {
                if h <= self.h_min.max(1e-300) {
                    return Err(Error::NonFinite { t });
                }
                stats.rejected += 1;
                h *= FAC_MIN;
                last_rejected = true;
                continue;
            }

            if err_norm <= 1.0 {
                // Dense output over [t, t_new].
                while next_sample < grid.len() && grid[next_sample] <= t_new {
                    let ts = grid[next_sample];
                    let theta = ((ts - t) / h).clamp(0.0, 1.0);
                    let theta1 = 1.0 - theta;
                    for i in 0..n {
                        dense[i] =
                            h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                    }
                    for i in 0..n {
                        let ydiff = ynew[i] - y[i];
                        let bspl = h * k1[i] - ydiff;
                        let r4 = ydiff - h * k7[i] - bspl;
                        sample[i] = y[i] + theta * (ydiff + theta1 * (bspl + theta * (r4 + theta1 * dense[i])));
                    }
                    if let Control::Stop(e) = observer.on_sample(next_sample, ts, &sample) {
                        return Err(e);
                    }
                    next_sample += 1;
                }

                stats.accepted += 1;
                t = t_new;
                std::mem::swap(&mut y, &mut ynew);
                std::mem::swap(&mut k1, &mut k7);
                if let Control::Stop(e) = observer.on_step(t, &y) {
                    return Err(e);
                }
                if last {
                    break;
                }
                let mut fac = err_norm.max(1e-10).powf(EXPO) / err_old.powf(BETA);
                fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let mut h_new = h / fac;
                if last_rejected {
                    h_new = h_new.min(h);
                }
                err_old = err_norm.max(1e-4);
                last_rejected = false;
                h = h_new.min(self.h_max);
            } else {
                stats.rejected += 1;
                let fac = (err_norm.powf(EXPO) / SAFETY).min(1.0 / FAC_MIN);
                h /= fac;
                last_rejected = true;
            }
        }
        Ok(stats)
    }
}

/// Collects samples into a vector of states.
#[derive(Debug, Default)]
pub struct Recorder {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Observer for Recorder {
    fn on_sample(&mut self, _index: usize, t: f64, y: &[f64]) -> Control {
        self.times.push(t);
        self.states.push(y.to_vec());
        Control::Continue
    }
}

/// Uniform grid `t0, t0 + dt, ...` ending at (or just before) `t_end`.
pub fn uniform_grid(t0: f64, t_end: f64, dt: f64) -> Vec<f64> {
    let n = ((t_end - t0) / dt + 1e-9).floor() as usize;
    (0..=n).map(|i| t0 + i as f64 * dt).filter(|&t| t <= t_end).collect()
}
