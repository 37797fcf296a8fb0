//! Browser bindings: a mean-field trajectory, a small phase map and the
//! Liouvillian eigenvalue cloud of a small system. Results are JSON strings.

use serde::Serialize;
use spinsync::diagnostics::{classify_phase, ClassifyOptions};
use spinsync::liouvillian::{build_superoperator, full_spectrum, SolverOptions};
use spinsync::meanfield::{classify_attractor, integrate_meanfield, AttractorKind, BlochVector, DriveProtocol};
use spinsync::model::CollectiveSpinModel;
use spinsync::ode::uniform_grid;
use spinsync::{Error, ModelParams};
use wasm_bindgen::prelude::*;

/// Largest N offered by [`spectrum_cloud`]; keeps the dense problem below
/// a few hundred rows.
pub const MAX_CLOUD_N: usize = 16;

/// Largest side of the grid accepted by [`phase_map`].
pub const MAX_MAP_SIDE: usize = 61;

fn params(detuning: f64, epsilon: f64, gamma_plus: f64, gamma_minus: f64, n_spins: usize) -> Result<ModelParams, Error> {
    ModelParams::with_detuning(0.0, detuning, epsilon, gamma_plus, gamma_minus, n_spins)
}

fn to_js<T: Serialize>(r: Result<T, Error>) -> Result<String, JsError> {
    r.map(|v| serde_json::to_string(&v).expect("serializable"))
        .map_err(|e| JsError::new(&e.to_string()))
}

#[derive(Debug, Serialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub m_x: Vec<f64>,
    pub m_y: Vec<f64>,
    pub m_z: Vec<f64>,
    /// `"fixed_point"`, `"limit_cycle"`, or absent when the run is too short.
    pub attractor: Option<&'static str>,
}

pub fn trajectory_data(
    detuning: f64,
    epsilon: f64,
    gamma_plus: f64,
    gamma_minus: f64,
    theta0: f64,
    t_end: f64,
) -> Result<Trajectory, Error> {
    let p = params(detuning, epsilon, gamma_plus, gamma_minus, 1)?;
    if !(t_end > 0.0 && t_end <= 5000.0) {
        return Err(Error::InvalidParameter {
            field: "t_end",
            reason: format!("must lie in (0, 5000], got {t_end}"),
        });
    }
    let m0 = BlochVector::new(theta0.sin(), 0.0, theta0.cos());
    let grid = uniform_grid(0.0, t_end, (t_end / 2000.0).max(0.01));
    let traj = integrate_meanfield(m0, &p, t_end, &grid, DriveProtocol::Constant)?;
    let attractor = classify_attractor(&traj, 0.25).ok().map(|r| match r.kind {
        AttractorKind::FixedPoint => "fixed_point",
        AttractorKind::LimitCycle => "limit_cycle",
    });
    Ok(Trajectory {
        t: traj.times.clone(),
        m_x: traj.states.iter().map(|m| m.m_x).collect(),
        m_y: traj.states.iter().map(|m| m.m_y).collect(),
        m_z: traj.m_z(),
        attractor,
    })
}

/// Mean-field trajectory from the polar angle `theta0` at `phi = 0`.
#[wasm_bindgen]
pub fn trajectory(
    detuning: f64,
    epsilon: f64,
    gamma_plus: f64,
    gamma_minus: f64,
    theta0: f64,
    t_end: f64,
) -> Result<String, JsError> {
    to_js(trajectory_data(detuning, epsilon, gamma_plus, gamma_minus, theta0, t_end))
}

#[derive(Debug, Serialize)]
pub struct Map {
    pub epsilon: Vec<f64>,
    pub detuning: Vec<f64>,
    /// Detuning-major labels; `null` marks a point that could not be
    /// classified.
    pub labels: Vec<Option<&'static str>>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

pub fn phase_map_data(
    gamma_plus: f64,
    gamma_minus: f64,
    epsilon_max: f64,
    detuning_max: f64,
    side: usize,
    t_end: f64,
) -> Result<Map, Error> {
    if side == 0 || side > MAX_MAP_SIDE {
        return Err(Error::InvalidParameter {
            field: "side",
            reason: format!("must lie in 1..={MAX_MAP_SIDE}, got {side}"),
        });
    }
    params(0.0, epsilon_max, gamma_plus, gamma_minus, 1)?;
    let epsilon = linspace(epsilon_max / side as f64, epsilon_max, side);
    let detuning = linspace(-detuning_max, detuning_max, side);
    let options = ClassifyOptions {
        t_end,
        max_t_end: 10.0 * t_end,
        sample_dt: 0.1,
        ..ClassifyOptions::default()
    };
    let mut labels = Vec::with_capacity(side * side);
    for &d in &detuning {
        for &e in &epsilon {
            let label = params(d, e, gamma_plus, gamma_minus, 1)
                .and_then(|p| classify_phase(&p, &options))
                .ok()
                .map(|c| c.label.as_str());
            labels.push(label);
        }
    }
    Ok(Map {
        epsilon,
        detuning,
        labels,
    })
}

/// Mean-field phase labels on a `side x side` grid over
/// `epsilon in (0, epsilon_max]` and `detuning in [-detuning_max, detuning_max]`.
#[wasm_bindgen]
pub fn phase_map(
    gamma_plus: f64,
    gamma_minus: f64,
    epsilon_max: f64,
    detuning_max: f64,
    side: usize,
    t_end: f64,
) -> Result<String, JsError> {
    to_js(phase_map_data(gamma_plus, gamma_minus, epsilon_max, detuning_max, side, t_end))
}

#[derive(Debug, Serialize)]
pub struct Cloud {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub alpha_r: f64,
    pub alpha_i: f64,
    pub ratio: Option<f64>,
}

pub fn spectrum_cloud_data(
    detuning: f64,
    epsilon: f64,
    gamma_plus: f64,
    gamma_minus: f64,
    n_spins: usize,
) -> Result<Cloud, Error> {
    if n_spins > MAX_CLOUD_N {
        return Err(Error::InvalidParameter {
            field: "n_spins",
            reason: format!("at most {MAX_CLOUD_N} in the browser, got {n_spins}"),
        });
    }
    let model = CollectiveSpinModel::new(params(detuning, epsilon, gamma_plus, gamma_minus, n_spins)?)?;
    let options = SolverOptions::default();
    let s = full_spectrum(&build_superoperator(&model, &options)?, &options)?;
    Ok(Cloud {
        re: s.eigenvalues.iter().map(|z| z.re).collect(),
        im: s.eigenvalues.iter().map(|z| z.im).collect(),
        alpha_r: s.gap_real,
        alpha_i: s.gap_imag,
        ratio: s.ratio,
    })
}

/// All Liouvillian eigenvalues at `n_spins`, with the spectral gap.
#[wasm_bindgen]
pub fn spectrum_cloud(
    detuning: f64,
    epsilon: f64,
    gamma_plus: f64,
    gamma_minus: f64,
    n_spins: usize,
) -> Result<String, JsError> {
    to_js(spectrum_cloud_data(detuning, epsilon, gamma_plus, gamma_minus, n_spins))
}
