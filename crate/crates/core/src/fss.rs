//! Finite-size-scaling collapse of `mzbar(N, epsilon)`.
//!
//! The ansatz is `mzbar = N^(-beta/nu) f(N^(1/nu) (epsilon - eps_c))`. The
//! collapse quality of a trial `(eps_c, nu, beta)` compares every rescaled
//! point with a least-squares line through its nearest neighbors from the
//! other sizes.

use crate::error::{Error, Result};
use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One `(N, epsilon, mzbar)` record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    #[serde(rename = "N")]
    pub n_spins: usize,
    pub epsilon: f64,
    pub mzbar: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

/// Validated collapse input: at least three sizes with five drives each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingDataset {
    points: Vec<ScalingPoint>,
}

pub const MIN_SIZES: usize = 3;
pub const MIN_POINTS_PER_SIZE: usize = 5;

impl ScalingDataset {
    pub fn new(points: Vec<ScalingPoint>) -> Result<Self> {
        for p in &points {
            if p.n_spins == 0 || !p.epsilon.is_finite() || !p.mzbar.is_finite() {
                return Err(Error::InvalidDataset(format!("non-finite or empty record {p:?}")));
            }
            if let Some(s) = p.sigma {
                if !(s >= 0.0) {
                    return Err(Error::InvalidDataset(format!("negative sigma in {p:?}")));
                }
            }
        }
        let groups = group(&points);
        if groups.len() < MIN_SIZES {
            return Err(Error::InvalidDataset(format!(
                "{} distinct sizes, need at least {MIN_SIZES}",
                groups.len()
            )));
        }
        for (n, pts) in &groups {
            let mut eps: Vec<f64> = pts.iter().map(|p| p.0).collect();
            eps.dedup();
            if eps.len() < MIN_POINTS_PER_SIZE {
                return Err(Error::InvalidDataset(format!(
                    "size {n} has {} distinct drives, need at least {MIN_POINTS_PER_SIZE}",
                    eps.len()
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[ScalingPoint] {
        &self.points
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.points.iter().map(|p| p.n_spins).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn epsilon_range(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.epsilon), b.max(p.epsilon)))
    }

    /// Parses CSV with header `N,epsilon,mzbar` and an optional `sigma`
    /// column.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut points = Vec::new();
        for (i, row) in reader.deserialize::<ScalingPoint>().enumerate() {
            points.push(row.map_err(|e| Error::InvalidDataset(format!("row {}: {e}", i + 1)))?);
        }
        Self::new(points)
    }

    pub fn to_csv(&self) -> String {
        let with_sigma = self.points.iter().any(|p| p.sigma.is_some());
        let mut out = String::from(if with_sigma { "N,epsilon,mzbar,sigma\n" } else { "N,epsilon,mzbar\n" });
        for p in &self.points {
            if with_sigma {
                let s = p.sigma.map_or_else(String::new, |s| s.to_string());
                out.push_str(&format!("{},{},{},{}\n", p.n_spins, p.epsilon, p.mzbar, s));
            } else {
                out.push_str(&format!("{},{},{}\n", p.n_spins, p.epsilon, p.mzbar));
            }
        }
        out
    }
}

/// `(N, [(epsilon, mzbar)])` sorted by size, then by drive.
type Groups = Vec<(usize, Vec<(f64, f64)>)>;

fn group(points: &[ScalingPoint]) -> Groups {
    let mut sorted: Vec<&ScalingPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.n_spins.cmp(&b.n_spins).then(a.epsilon.total_cmp(&b.epsilon)));
    let mut out: Groups = Vec::new();
    for p in sorted {
        match out.last_mut() {
            Some((n, v)) if *n == p.n_spins => v.push((p.epsilon, p.mzbar)),
            _ => out.push((p.n_spins, vec![(p.epsilon, p.mzbar)])),
        }
    }
    out
}

/// Smallest fraction of points that must be bracketed by other sizes.
/// Without it the minimizer can shrink the overlap to a few flat points.
pub const MIN_COVERAGE: f64 = 0.5;

/// Points from other sizes in each local line fit.
pub const NEIGHBORS: usize = 6;

fn objective_groups(groups: &Groups, eps_c: f64, nu: f64, beta: f64) -> Result<f64> {
    // (x, y, size index), sorted by x.
    let mut pooled: Vec<(f64, f64, usize)> = Vec::new();
    for (g, (n, pts)) in groups.iter().enumerate() {
        let n = *n as f64;
        let sx = n.powf(1.0 / nu);
        let sy = n.powf(beta / nu);
        pooled.extend(pts.iter().map(|p| (sx * (p.0 - eps_c), sy * p.1, g)));
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut sum, mut count) = (0.0, 0usize);
    let mut compared = Vec::new();
    let mut nbrs: Vec<(f64, f64)> = Vec::with_capacity(NEIGHBORS);
    for (i, &(x, y, g)) in pooled.iter().enumerate() {
        nbrs.clear();
        let (mut lo, mut hi) = (i, i + 1);
        let (mut left, mut right) = (false, false);
        while nbrs.len() < NEIGHBORS {
            let l = (0..lo).rev().find(|&j| pooled[j].2 != g);
            let r = (hi..pooled.len()).find(|&j| pooled[j].2 != g);
            let pick = match (l, r) {
                (Some(a), Some(b)) => if x - pooled[a].0 <= pooled[b].0 - x { a } else { b },
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => break,
            };
            if pick < i {
                left = true;
                lo = pick;
            } else {
                right = true;
                hi = pick + 1;
            }
            nbrs.push((pooled[pick].0, pooled[pick].1));
        }
        if !(left && right) || nbrs.len() < 2 {
            continue;
        }
        let k = nbrs.len() as f64;
        let mx = nbrs.iter().map(|p| p.0).sum::<f64>() / k;
        let my = nbrs.iter().map(|p| p.1).sum::<f64>() / k;
        let sxx = nbrs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        let sxy = nbrs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
        let pred = if sxx > 0.0 { my + sxy / sxx * (x - mx) } else { my };
        sum += (y - pred).powi(2);
        count += 1;
        compared.push(y);
        compared.push(pred);
    }
    if count == 0 || (count as f64) < MIN_COVERAGE * pooled.len() as f64 {
        return Err(Error::InsufficientOverlap);
    }
    let mean = compared.iter().sum::<f64>() / compared.len() as f64;
    let var = compared.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / compared.len() as f64;
    if var == 0.0 {
        return Ok(0.0);
    }
    Ok(sum / count as f64 / var)
}

/// Mean squared deviation of every rescaled point from the line fitted to
/// its [`NEIGHBORS`] nearest rescaled points of other sizes, divided by the
/// variance of the values that enter those comparisons. A point counts only
/// when its neighbors lie on both sides of it. Fails with
/// `InsufficientOverlap` when fewer than [`MIN_COVERAGE`] of the points
/// count.
pub fn collapse_objective(data: &ScalingDataset, eps_c: f64, nu: f64, beta: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter {
            field: "nu",
            reason: format!("must be positive, got {nu}"),
        });
    }
    objective_groups(&group(&data.points), eps_c, nu, beta)
}

/// Box constraints of the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    pub eps_c: (f64, f64),
    pub nu: (f64, f64),
    pub beta: (f64, f64),
}

impl FitBounds {
    /// `nu in [0.2, 10]`, `beta in [0, 5]`, `eps_c` over the data's drives.
    pub fn for_data(data: &ScalingDataset) -> Self {
        Self {
            eps_c: data.epsilon_range(),
            nu: (0.2, 10.0),
            beta: (0.0, 5.0),
        }
    }

    fn as_array(&self) -> [(f64, f64); 3] {
        [self.eps_c, self.nu, self.beta]
    }

    fn contains(&self, p: &[f64]) -> bool {
        self.as_array().iter().zip(p).all(|((lo, hi), v)| *v >= *lo && *v <= *hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub seed: u64,
    pub restarts: usize,
    pub bootstrap: usize,
    pub max_iters: u64,
    /// Best residuals above this count as a failed fit.
    pub residual_ceiling: f64,
    pub bounds: Option<FitBounds>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            seed: 20240917,
            restarts: 16,
            bootstrap: 200,
            max_iters: 3000,
            residual_ceiling: 0.5,
            bounds: None,
        }
    }
}

/// Fitted exponents with bootstrap standard errors; also the JSON record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseFit {
    pub eps_c: f64,
    pub nu: f64,
    pub beta: f64,
    pub eps_c_err: f64,
    pub nu_err: f64,
    pub beta_err: f64,
    pub residual: f64,
    pub seed: u64,
    pub bootstrap: usize,
    /// Resamples dropped because they lost the size overlap.
    pub bootstrap_failed: usize,
}

const OUTSIDE: f64 = 1e6;

struct Cost<'a> {
    groups: &'a Groups,
    bounds: FitBounds,
}

impl CostFunction for Cost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        if !self.bounds.contains(p) {
            return Ok(OUTSIDE);
        }
        Ok(objective_groups(self.groups, p[0], p[1], p[2])
            .ok()
            .filter(|v| v.is_finite())
            .unwrap_or(OUTSIDE))
    }
}

fn simplex(groups: &Groups, bounds: FitBounds, start: [f64; 3], max_iters: u64) -> Option<([f64; 3], f64)> {
    let mut vertices = vec![start.to_vec()];
    for (k, (lo, hi)) in bounds.as_array().iter().enumerate() {
        let step = 0.1 * (hi - lo);
        let mut v = start.to_vec();
        v[k] = if v[k] + step <= *hi { v[k] + step } else { v[k] - step };
        vertices.push(v);
    }
    let solver = NelderMead::new(vertices).with_sd_tolerance(1e-14).ok()?;
    let res = Executor::new(Cost { groups, bounds }, solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
        .ok()?;
    let best = res.state().get_best_param()?.clone();
    let cost = res.state().get_best_cost();
    (cost < OUTSIDE).then(|| ([best[0], best[1], best[2]], cost))
}

/// Simplex from `start`, then a second simplex from its optimum.
fn polish(groups: &Groups, bounds: FitBounds, start: [f64; 3], max_iters: u64) -> Option<([f64; 3], f64)> {
    let first = simplex(groups, bounds, start, max_iters)?;
    match simplex(groups, bounds, first.0, max_iters) {
        Some(second) if second.1 <= first.1 => Some(second),
        _ => Some(first),
    }
}

fn latin_hypercube(bounds: &FitBounds, count: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]; count];
    for (k, (lo, hi)) in bounds.as_array().iter().enumerate() {
        let mut strata: Vec<usize> = (0..count).collect();
        strata.shuffle(rng);
        for (i, s) in strata.into_iter().enumerate() {
            let u = (s as f64 + rng.gen::<f64>()) / count as f64;
            out[i][k] = lo + u * (hi - lo);
        }
    }
    out
}

fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Minimizes [`collapse_objective`] from Latin-hypercube starts and
/// estimates errors by refitting point resamples.
pub fn fit_collapse(data: &ScalingDataset, options: &FitOptions) -> Result<CollapseFit> {
    let bounds = options.bounds.unwrap_or_else(|| FitBounds::for_data(data));
    let groups = group(&data.points);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let starts = latin_hypercube(&bounds, options.restarts.max(1), &mut rng);
    let runs: Vec<Option<([f64; 3], f64)>> = starts
        .par_iter()
        .map(|s| polish(&groups, bounds, *s, options.max_iters))
        .collect();
    let (best, residual) = runs
        .into_iter()
        .flatten()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::NoConvergence("no simplex run stayed inside the bounds".into()))?;
    if residual > options.residual_ceiling {
        return Err(Error::NoConvergence(format!(
            "best collapse residual {residual:.3e} exceeds the ceiling {}",
            options.residual_ceiling
        )));
    }

    let points = &data.points;
    let refits: Vec<Option<[f64; 3]>> = (0..options.bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(b as u64 + 1)));
            let sample: Vec<ScalingPoint> = (0..points.len()).map(|_| points[rng.gen_range(0..points.len())]).collect();
            let g = group(&sample);
            if g.len() < 2 {
                return None;
            }
            polish(&g, bounds, best, options.max_iters).map(|r| r.0)
        })
        .collect();
    let ok: Vec<[f64; 3]> = refits.iter().flatten().copied().collect();
    let column = |k: usize| -> Vec<f64> { ok.iter().map(|p| p[k]).collect() };
    Ok(CollapseFit {
        eps_c: best[0],
        nu: best[1],
        beta: best[2],
        eps_c_err: std_dev(&column(0)),
        nu_err: std_dev(&column(1)),
        beta_err: std_dev(&column(2)),
        residual,
        seed: options.seed,
        bootstrap: options.bootstrap,
        bootstrap_failed: options.bootstrap - ok.len(),
    })
}

/// Scaling function used by the synthetic generator.
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + x.exp())
}

/// Data drawn from the ansatz with scaling function `f`, with optional
/// multiplicative Gaussian noise of relative size `noise`.
pub fn synthetic_dataset(
    truth: (f64, f64, f64),
    sizes: &[usize],
    epsilons: &[f64],
    f: impl Fn(f64) -> f64,
    noise: f64,
    seed: u64,
) -> Result<ScalingDataset> {
    let (eps_c, nu, beta) = truth;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(sizes.len() * epsilons.len());
    for &n in sizes {
        let nf = n as f64;
        for &e in epsilons {
            let clean = nf.powf(-beta / nu) * f(nf.powf(1.0 / nu) * (e - eps_c));
            let xi: f64 = StandardNormal.sample(&mut rng);
            points.push(ScalingPoint {
                n_spins: n,
                epsilon: e,
                mzbar: clean * (1.0 + noise * xi),
                sigma: (noise > 0.0).then(|| noise * clean.abs()),
            });
        }
    }
    ScalingDataset::new(points)
}
