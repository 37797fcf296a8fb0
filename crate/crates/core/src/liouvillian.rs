//! Vectorized Liouvillian, its spectrum and the gap `alpha_r +- i alpha_i`.
//!
//! Vectorization stacks columns: `vec(rho)[i + D j] = rho[i, j]`, so that
//! `vec(A X B) = (B^T (x) A) vec(X)`. In this convention
//!
//! ```text
//! L = -i (I (x) H - H^T (x) I)
//!     + sum_k [ conj(L_k) (x) L_k - 1/2 (I (x) L_k^dag L_k + (L_k^dag L_k)^T (x) I) ]
//! ```
//!
//! The superoperator is banded with half-bandwidth `D + 1` and is stored by
//! diagonals.

use crate::band::BandMatrix;
use crate::error::{Error, Result};
use crate::lu::BandLu;
use crate::model::CollectiveSpinModel;
use crate::params::ModelParams;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Eigenvalues with both `|Re|` and `|Im|` below this count as stationary.
pub const STEADY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vectorization {
    ColumnStacking,
}

/// Solver and resource settings shared by the spectral routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Upper bound on the bytes any single routine may allocate.
    pub memory_budget_bytes: u64,
    /// Largest superoperator dimension accepted by [`full_spectrum`].
    pub dense_max_dim: usize,
    /// Real shift of the shift-invert transformation.
    pub shift: f64,
    /// Krylov subspace dimension per restart cycle.
    pub krylov_dim: usize,
    pub max_restarts: usize,
    /// Convergence threshold on the eigenvalue error estimate.
    pub tol: f64,
    /// Seed of the Krylov start vector.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            memory_budget_bytes: 4 << 30,
            dense_max_dim: 4096,
            shift: 1e-3,
            krylov_dim: 80,
            max_restarts: 40,
            tol: 1e-10,
            seed: 0x5eed,
        }
    }
}

/// Column-stacked Liouvillian of one parameter point.
#[derive(Debug, Clone)]
pub struct Superoperator {
    n_spins: usize,
    hilbert_dim: usize,
    matrix: BandMatrix,
    pub vectorization: Vectorization,
}

/// `vec(rho)` in column-stacking order.
pub fn vectorize(rho: &DMatrix<Complex64>) -> Vec<Complex64> {
    rho.as_slice().to_vec()
}

pub fn unvectorize(v: &[Complex64], dim: usize) -> Result<DMatrix<Complex64>> {
    if v.len() != dim * dim {
        return Err(Error::DimensionMismatch {
            expected: dim * dim,
            found: v.len(),
        });
    }
    Ok(DMatrix::from_column_slice(dim, dim, v))
}

/// Adds `(B (x) A)` to `acc`, for banded `A` (D x D) acting on the row index
/// and `B` acting on the column index.
fn add_kron(acc: &mut Vec<(isize, Vec<Complex64>)>, b: &BandMatrix, a: &BandMatrix, scale: Complex64) {
    let d = a.dim();
    let big = d * d;
    for (kb, db) in b.diagonals() {
        for (ka, da) in a.diagonals() {
            let offset = ka + kb * d as isize;
            let pos = match acc.binary_search_by_key(&offset, |(o, _)| *o) {
                Ok(p) => p,
                Err(p) => {
                    acc.insert(p, (offset, vec![ZERO; big]));
                    p
                }
            };
            let target = &mut acc[pos].1;
            for j in 0..d {
                let bj = db[j];
                if bj == ZERO {
                    continue;
                }
                for i in 0..d {
                    let ai = da[i];
                    if ai != ZERO {
                        target[i + d * j] += scale * bj * ai;
                    }
                }
            }
        }
    }
}

fn conj(m: &BandMatrix) -> BandMatrix {
    m.transpose().adjoint()
}

pub fn build_superoperator(model: &CollectiveSpinModel, options: &SolverOptions) -> Result<Superoperator> {
    let d = model.dim();
    let big = d * d;
    // At most seven diagonals of length D^2.
    let required = (7 * big * std::mem::size_of::<Complex64>()) as u64;
    if required > options.memory_budget_bytes {
        return Err(Error::MemoryBudget {
            required_bytes: required,
            budget_bytes: options.memory_budget_bytes,
        });
    }
    let id = BandMatrix::identity(d);
    let k = model.effective_generator(&model.hamiltonian);
    let mut diags = Vec::new();
    // K rho + rho K^dagger + sum L rho L^dagger
    add_kron(&mut diags, &id, &k, ONE);
    add_kron(&mut diags, &conj(&k), &id, ONE);
    for l in model.jumps() {
        if l.max_abs() > 0.0 {
            add_kron(&mut diags, &conj(l), l, ONE);
        }
    }
    let mut matrix = BandMatrix::zeros(big);
    for (offset, values) in diags {
        matrix = matrix.add(&BandMatrix::from_offset(big, offset, values));
    }
    Ok(Superoperator {
        n_spins: model.params.n_spins(),
        hilbert_dim: d,
        matrix: matrix.pruned(),
        vectorization: Vectorization::ColumnStacking,
    })
}

impl Superoperator {
    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn hilbert_dim(&self) -> usize {
        self.hilbert_dim
    }

    /// Dimension `D^2` of the vectorized space.
    pub fn dim(&self) -> usize {
        self.hilbert_dim * self.hilbert_dim
    }

    pub fn band(&self) -> &BandMatrix {
        &self.matrix
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.matrix.apply(v)
    }

    fn bandwidths(&self) -> (usize, usize) {
        let lo = self.matrix.offsets().min().unwrap_or(0).min(0).unsigned_abs();
        let hi = self.matrix.offsets().max().unwrap_or(0).max(0) as usize;
        (lo, hi)
    }

    fn dense_bytes(&self) -> u64 {
        (self.dim() as u64).pow(2) * std::mem::size_of::<Complex64>() as u64
    }

    pub fn to_dense(&self, options: &SolverOptions) -> Result<DMatrix<Complex64>> {
        if self.dense_bytes() > options.memory_budget_bytes {
            return Err(Error::MemoryBudget {
                required_bytes: self.dense_bytes(),
                budget_bytes: options.memory_budget_bytes,
            });
        }
        Ok(self.matrix.to_dense())
    }

    /// Factors `L - shift * I`.
    fn shifted_lu(&self, shift: f64, options: &SolverOptions) -> Result<BandLu> {
        let (kl, ku) = self.bandwidths();
        let n = self.dim();
        let required = (n * (2 * kl + ku + 1) * std::mem::size_of::<Complex64>()) as u64;
        if required > options.memory_budget_bytes {
            return Err(Error::MemoryBudget {
                required_bytes: required,
                budget_bytes: options.memory_budget_bytes,
            });
        }
        let s = Complex64::new(shift, 0.0);
        BandLu::factor(n, kl, ku, |i, j| {
            let v = self.matrix.get(i, j);
            if i == j {
                v - s
            } else {
                v
            }
        })
    }

    fn scale(&self) -> f64 {
        self.matrix.norm_bound().max(1.0)
    }

    /// Normalized right null vector by inverse iteration; fails with
    /// [`Error::DegenerateSteadyState`] when a second, independent null
    /// direction exists.
    pub fn null_vector(&self) -> Result<Vec<Complex64>> {
        let scale = self.scale();
        let lu = self.shifted_lu(1e-10 * scale, &SolverOptions::default())?;
        let n = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5ca1ab1e);
        let mut start = || -> Vec<Complex64> {
            (0..n).map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect()
        };
        let resid = |x: &[Complex64]| norm(&self.apply(x));

        let mut x = start();
        normalize(&mut x);
        for _ in 0..30 {
            lu.solve(&mut x);
            normalize(&mut x);
            if resid(&x) < 1e-13 * scale {
                break;
            }
        }
        let r = resid(&x);
        if r > 1e-9 * scale {
            return Err(Error::NoConvergence(format!("null vector residual {r:e}")));
        }

        let mut y = start();
        for _ in 0..12 {
            project_out(&mut y, &x);
            normalize(&mut y);
            lu.solve(&mut y);
            project_out(&mut y, &x);
            normalize(&mut y);
        }
        if resid(&y) < 1e-9 * scale {
            return Err(Error::DegenerateSteadyState { count: 2 });
        }
        Ok(x)
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(a: &mut [Complex64]) {
    let n = norm(a);
    a.iter_mut().for_each(|z| *z /= n);
}

fn project_out(y: &mut [Complex64], x: &[Complex64]) {
    let c = dot(x, y) / dot(x, x);
    y.iter_mut().zip(x).for_each(|(v, u)| *v -= c * u);
}

/// Sorted eigenvalues with the extracted gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    /// Descending real part; ties broken by descending imaginary part.
    pub eigenvalues: Vec<Complex64>,
    /// `alpha_r >= 0`, the slowest nonzero decay rate.
    pub gap_real: f64,
    /// `alpha_i >= 0`, the oscillation rate of the gap mode.
    pub gap_imag: f64,
    /// `R = alpha_i / alpha_r`; `None` when `alpha_r` vanishes.
    pub ratio: Option<f64>,
    /// Slowest decaying pair with a nonzero frequency. Differs from the gap
    /// when a purely real mode is slower.
    pub oscillatory: Option<OscillatoryMode>,
}

/// Decay rate and frequency of a conjugate eigenvalue pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatoryMode {
    pub alpha_r: f64,
    pub alpha_i: f64,
}

/// Imaginary parts below this count as real.
pub const OSCILLATORY_TOL: f64 = 1e-8;

impl SpectrumResult {
    pub fn from_eigenvalues(mut eigenvalues: Vec<Complex64>) -> Result<Self> {
        eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
        let gap = eigenvalues
            .iter()
            .find(|z| !(z.re.abs() < STEADY_TOL && z.im.abs() < STEADY_TOL))
            .copied()
            .ok_or_else(|| Error::NoConvergence("no eigenvalue separated from the steady state".into()))?;
        let gap_real = (-gap.re).max(0.0);
        let gap_imag = gap.im.abs();
        let ratio = (gap_real > 0.0).then(|| gap_imag / gap_real);
        let oscillatory = eigenvalues
            .iter()
            .find(|z| z.im.abs() > OSCILLATORY_TOL)
            .map(|z| OscillatoryMode {
                alpha_r: (-z.re).max(0.0),
                alpha_i: z.im.abs(),
            });
        Ok(Self {
            eigenvalues,
            gap_real,
            gap_imag,
            ratio,
            oscillatory,
        })
    }

    /// Number of eigenvalues counted as stationary.
    pub fn steady_count(&self) -> usize {
        self.eigenvalues
            .iter()
            .filter(|z| z.re.abs() < STEADY_TOL && z.im.abs() < STEADY_TOL)
            .count()
    }

    /// CSV `re,im`, one eigenvalue per line.
    pub fn cloud_csv(&self) -> String {
        let mut out = String::from("re,im\n");
        for z in &self.eigenvalues {
            out.push_str(&format!("{},{}\n", z.re, z.im));
        }
        out
    }
}

/// All eigenvalues by dense diagonalization.
pub fn full_spectrum(sup: &Superoperator, options: &SolverOptions) -> Result<SpectrumResult> {
    let n = sup.dim();
    if n > options.dense_max_dim {
        return Err(Error::InvalidParameter {
            field: "n_spins",
            reason: format!(
                "dense spectrum limited to superoperator dimension {}, got {n}",
                options.dense_max_dim
            ),
        });
    }
    if sup.dense_bytes() > options.memory_budget_bytes {
        return Err(Error::MemoryBudget {
            required_bytes: sup.dense_bytes(),
            budget_bytes: options.memory_budget_bytes,
        });
    }
    let mut m = faer::Mat::<Complex64>::zeros(n, n);
    for (k, diag) in sup.matrix.diagonals() {
        for (i, v) in diag.iter().enumerate() {
            if *v != ZERO {
                m[(i, (i as isize + k) as usize)] = *v;
            }
        }
    }
    let ev = m
        .eigenvalues()
        .map_err(|e| Error::NoConvergence(format!("dense eigensolver: {e:?}")))?;
    SpectrumResult::from_eigenvalues(ev)
}

/// Eigenvalues of a small dense matrix with right eigenvectors.
fn small_eigen(h: &DMatrix<Complex64>) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    let m = h.nrows();
    let f = faer::Mat::<Complex64>::from_fn(m, m, |i, j| h[(i, j)]);
    let eig = f
        .eigen()
        .map_err(|e| Error::NoConvergence(format!("projected eigenproblem: {e:?}")))?;
    let vals: Vec<Complex64> = (0..m).map(|i| eig.S()[i]).collect();
    let vecs = DMatrix::from_fn(m, m, |i, j| eig.U()[(i, j)]);
    Ok((vals, vecs))
}

/// `count` eigenvalues of largest real part, by restarted shift-invert
/// Arnoldi about `options.shift`.
///
/// Shift-invert ranks eigenvalues by distance to the shift; the routine
/// converges a few more than requested and keeps the `count` with the
/// largest real part.
pub fn leading_eigenvalues(sup: &Superoperator, count: usize, options: &SolverOptions) -> Result<SpectrumResult> {
    if count < 2 {
        return Err(Error::InvalidParameter {
            field: "count",
            reason: format!("need at least 2 eigenvalues, got {count}"),
        });
    }
    let n = sup.dim();
    let lu = sup.shifted_lu(options.shift, options)?;
    let want = (count + (count / 2).max(4)).min(n);
    let m = options.krylov_dim.max(2 * want + 10).min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut v0: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
    normalize(&mut v0);

    for _restart in 0..=options.max_restarts {
        let mut basis: Vec<Vec<Complex64>> = vec![v0.clone()];
        let mut h = DMatrix::<Complex64>::zeros(m + 1, m);
        let mut size = m;
        for j in 0..m {
            let mut w = basis[j].clone();
            lu.solve(&mut w);
            // Two passes of classical Gram-Schmidt.
            for _ in 0..2 {
                for (i, b) in basis.iter().enumerate() {
                    let c = dot(b, &w);
                    h[(i, j)] += c;
                    w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let beta = norm(&w);
            h[(j + 1, j)] = Complex64::new(beta, 0.0);
            if beta < 1e-13 {
                size = j + 1;
                break;
            }
            w.iter_mut().for_each(|z| *z /= beta);
            basis.push(w);
        }
        let hm = h.view((0, 0), (size, size)).into_owned();
        let beta_last = h[(size, size - 1)].norm();
        let (theta, y) = small_eigen(&hm)?;

        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| theta[b].norm().total_cmp(&theta[a].norm()).then(a.cmp(&b)));
        let take = want.min(size);
        let mut lambdas = Vec::with_capacity(take);
        let mut all_converged = true;
        for &k in &order[..take] {
            let col = y.column(k);
            let y_norm = col.norm();
            let resid = beta_last * col[size - 1].norm() / y_norm;
            // |d lambda| ~ |d theta| / |theta|^2 for lambda = shift + 1/theta.
            let err = resid / theta[k].norm_sqr();
            if err > options.tol * (1.0 + (1.0 / theta[k]).norm()) && beta_last >= 1e-13 {
                all_converged = false;
            }
            lambdas.push(Complex64::new(options.shift, 0.0) + ONE / theta[k]);
        }
        if all_converged {
            let mut res = SpectrumResult::from_eigenvalues(lambdas)?;
            res.eigenvalues.truncate(count);
            return Ok(res);
        }
        // Explicit restart from the sum of wanted Ritz vectors.
        let mut next = vec![ZERO; n];
        for &k in &order[..take] {
            let col = y.column(k);
            let s = 1.0 / col.norm();
            for (i, b) in basis.iter().take(size).enumerate() {
                let c = col[i] * s;
                next.iter_mut().zip(b).for_each(|(x, v)| *x += c * v);
            }
        }
        normalize(&mut next);
        v0 = next;
    }
    Err(Error::NoConvergence(format!(
        "shift-invert Arnoldi did not converge {want} eigenvalues in {} restarts",
        options.max_restarts
    )))
}

/// Eigenvalues requested per size in [`gap_scaling`]; enough to reach the
/// slowest oscillatory pair at the drives of interest up to N = 80.
pub const GAP_EIGENVALUES: usize = 12;

/// Gap data for one system size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub n_spins: usize,
    pub alpha_r: f64,
    pub alpha_i: f64,
    pub ratio: Option<f64>,
    pub oscillatory: Option<OscillatoryMode>,
    pub error: Option<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "inf".to_string(), |x| x.to_string())
}

/// CSV `N,alpha_r,alpha_i,R,osc_r,osc_i`; the last two columns describe the
/// slowest oscillatory pair. Failed sizes carry `nan`, vanishing `alpha_r`
/// gives `R = inf`.
pub fn gap_csv(points: &[GapPoint]) -> String {
    let mut out = String::from("N,alpha_r,alpha_i,R,osc_r,osc_i\n");
    for p in points {
        if p.error.is_some() {
            out.push_str(&format!("{},nan,nan,nan,nan,nan\n", p.n_spins));
        } else {
            let (or, oi) = p.oscillatory.map_or((f64::NAN, f64::NAN), |o| (o.alpha_r, o.alpha_i));
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.n_spins,
                p.alpha_r,
                p.alpha_i,
                fmt_opt(p.ratio),
                or,
                oi
            ));
        }
    }
    out
}

/// Gap for each N in `n_list`; solver failures are recorded per point.
pub fn gap_scaling(params: &ModelParams, n_list: &[usize], options: &SolverOptions) -> Result<Vec<GapPoint>> {
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter {
            field: "n_list",
            reason: "system sizes must be strictly ascending".into(),
        });
    }
    let points = n_list
        .par_iter()
        .map(|&n| {
            let run = || -> Result<SpectrumResult> {
                let model = CollectiveSpinModel::new(params.with_n_spins(n)?)?;
                let sup = build_superoperator(&model, options)?;
                leading_eigenvalues(&sup, GAP_EIGENVALUES, options)
            };
            match run() {
                Ok(s) => GapPoint {
                    n_spins: n,
                    alpha_r: s.gap_real,
                    alpha_i: s.gap_imag,
                    ratio: s.ratio,
                    oscillatory: s.oscillatory,
                    error: None,
                },
                Err(e) => GapPoint {
                    n_spins: n,
                    alpha_r: f64::NAN,
                    alpha_i: f64::NAN,
                    ratio: None,
                    oscillatory: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(points)
}

/// `exp(A)` by scaling and squaring with a degree-18 Taylor polynomial.
pub fn expm(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a * Complex64::new(0.5f64.powi(squarings), 0.0);
    let mut result = DMatrix::<Complex64>::identity(n, n);
    let mut term = DMatrix::<Complex64>::identity(n, n);
    for k in 1..=18 {
        term = &term * &scaled / Complex64::new(k as f64, 0.0);
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// `rho(t) = unvec(exp(L t) vec(rho0))` with a dense exponential.
pub fn propagate_dense(
    sup: &Superoperator,
    rho0: &DMatrix<Complex64>,
    t: f64,
    options: &SolverOptions,
) -> Result<DMatrix<Complex64>> {
    let l = sup.to_dense(options)? * Complex64::new(t, 0.0);
    let e = expm(&l);
    let v = nalgebra::DVector::from_vec(vectorize(rho0));
    unvectorize((e * v).as_slice(), sup.hilbert_dim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::{coherent_state, lindblad_rhs, steady_state, DensityMatrix};
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn model(detuning: f64, eps: f64, gp: f64, gm: f64, n: usize) -> CollectiveSpinModel {
        CollectiveSpinModel::new(ModelParams::with_detuning(0.0, detuning, eps, gp, gm, n).unwrap()).unwrap()
    }

    fn random_hermitian(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        let a = DMatrix::from_fn(d, d, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let mut h = &a * a.adjoint();
        let tr = h.trace();
        h /= tr;
        h
    }

    #[test]
    fn vec_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [1, 2, 5] {
            let m = DMatrix::from_fn(d, d, |_, _| Complex64::new(rng.gen(), rng.gen()));
            assert_eq!(unvectorize(&vectorize(&m), d).unwrap(), m);
        }
        assert!(unvectorize(&[ZERO; 3], 2).is_err());
    }

    #[test]
    fn action_matches_rhs_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.gen_range(1..=10);
            let m = model(rng.gen_range(-2.0..2.0), rng.gen_range(0.0..5.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..3.0), n);
            let sup = build_superoperator(&m, &SolverOptions::default()).unwrap();
            assert_eq!(sup.vectorization, Vectorization::ColumnStacking);
            let rho = random_hermitian(n + 1, &mut rng);
            let direct = lindblad_rhs(&DensityMatrix::new(rho.clone(), n).unwrap(), &m).unwrap();
            let via = unvectorize(&sup.apply(&vectorize(&rho)), n + 1).unwrap();
            let diff = (&direct - &via).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-12, "n={n}: {diff:e}");
        }
    }

    #[test]
    fn trace_is_a_left_null_vector() {
        let m = model(0.4, 2.0, 1.0, 2.0, 7);
        let sup = build_superoperator(&m, &SolverOptions::default()).unwrap();
        let dense = sup.to_dense(&SolverOptions::default()).unwrap();
        let id = vectorize(&DMatrix::identity(8, 8));
        for col in 0..sup.dim() {
            let s: Complex64 = (0..sup.dim()).map(|r| id[r].conj() * dense[(r, col)]).sum();
            assert!(s.norm() < 1e-10);
        }
    }

    #[test]
    fn bandwidth_is_d_plus_one() {
        let m = model(0.4, 2.0, 1.0, 2.0, 5);
        let sup = build_superoperator(&m, &SolverOptions::default()).unwrap();
        assert_eq!(sup.bandwidths(), (7, 7));
    }

    #[test]
    fn memory_budget_names_required_bytes() {
        let m = model(0.0, 1.0, 1.0, 2.0, 30);
        let opts = SolverOptions { memory_budget_bytes: 1000, ..Default::default() };
        match build_superoperator(&m, &opts) {
            Err(Error::MemoryBudget { required_bytes, budget_bytes }) => {
                assert_eq!(required_bytes, 7 * 31 * 31 * 16);
                assert_eq!(budget_bytes, 1000);
            }
            other => panic!("{other:?}"),
        }
    }

    /// Brute-force characteristic polynomial roots are overkill for 4x4; the
    /// amplitude-damping channel has the closed form {0, -g/2, -g/2, -g}.
    #[test]
    fn single_spin_gain_spectrum() {
        let m = model(0.0, 0.0, 1.0, 0.0, 1);
        let sup = build_superoperator(&m, &SolverOptions::default()).unwrap();
        let s = full_spectrum(&sup, &SolverOptions::default()).unwrap();
        let expect = [0.0, -1.0, -1.0, -2.0];
        for (z, e) in s.eigenvalues.iter().zip(expect) {
            assert!((z - Complex64::new(e, 0.0)).norm() < 1e-12, "{:?}", s.eigenvalues);
        }
        assert!((s.gap_real - 1.0).abs() < 1e-12);
        assert_eq!(s.gap_imag, 0.0);
        assert_eq!(s.ratio, Some(0.0));
    }

    #[test]
    fn closed_system_spectrum_is_energy_differences() {
        let m = model(0.7, 1.3, 0.0, 0.0, 4);
        let sup = build_superoperator(&m, &SolverOptions::default()).unwrap();
        let mut ev: Vec<Complex64> = faer_eigen(&sup);
        let h = m.hamiltonian.to_dense();
        let hf = faer::Mat::<Complex64>::from_fn(5, 5, |i, j| h[(i, j)]);
        let e = hf.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        let mut expect: Vec<Complex64> = Vec::new();
        for a in &e {
            for b in &e {
                expect.push(Complex64::new(0.0, -(a - b)));
            }
        }
        let key = |z: &Complex64| (z.im * 1e6).round() as i64;
        ev.sort_by_key(key);
        expect.sort_by_key(key);
        for (a, b) in ev.iter().zip(&expect) {
            assert!(a.re.abs() < 1e-10);
            assert!((a - b).norm() < 1e-9, "{a} vs {b}");
        }
    }

    fn faer_eigen(sup: &Superoperator) -> Vec<Complex64> {
        full_spectrum(sup, &SolverOptions::default()).unwrap().eigenvalues
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn spectrum_is_contractive_and_conjugation_symmetric(
            n in 1usize..7,
            delta in -2.0f64..2.0,
            eps in 0.0f64..5.0,
            gp in 0.1f64..2.0,
            gm in 0.0f64..3.0,
        ) {
            let m = model(delta, eps, gp, gm, n);
            let sup = build_superoperator(&m, &SolverOptions::default()).unwrap();
            let s = full_spectrum(&sup, &SolverOptions::default()).unwrap();
            prop_assert!(s.eigenvalues[0].re <= 1e-9);
            prop_assert!(s.eigenvalues[0].norm() <= 1e-9);
            let mut used = vec![false; s.eigenvalues.len()];
            for z in &s.eigenvalues {
                let c = z.conj();
                let hit = s.eigenvalues.iter().enumerate().position(|(i, w)| !used[i] && (w - c).norm() < 1e-9);
                prop_assert!(hit.is_some(), "no conjugate for {z}");
                used[hit.unwrap()] = true;
            }
            prop_assert!(s.gap_real >= 0.0 && s.gap_imag >= 0.0);
        }
    }

    #[test]
    fn iterative_matches_dense_leading_eigenvalues() {
        for (eps, delta, n) in [(1.0, 0.0, 10), (4.0, 0.0, 20), (0.6, 1.2, 15), (4.0, 0.0, 8)] {
            let m = model(delta, eps, 1.0, 2.0, n);
            let opts = SolverOptions::default();
            let sup = build_superoperator(&m, &opts).unwrap();
            let dense = full_spectrum(&sup, &opts).unwrap();
            let iter = leading_eigenvalues(&sup, 6, &opts).unwrap();
            assert_eq!(iter.eigenvalues.len(), 6);
            // Conjugate partners share a real part, so compare the sorted
            // real parts and the moduli of the imaginary parts.
            for (a, b) in iter.eigenvalues.iter().zip(&dense.eigenvalues) {
                assert!((a.re - b.re).abs() < 1e-7, "eps={eps} n={n}: {a} vs {b}");
                assert!((a.im.abs() - b.im.abs()).abs() < 1e-7, "eps={eps} n={n}: {a} vs {b}");
            }
            assert!((iter.gap_real - dense.gap_real).abs() < 1e-7);
            assert!((iter.gap_imag - dense.gap_imag).abs() < 1e-7);
        }
    }

    #[test]
    fn null_vector_is_a_state() {
        let m = model(0.0, 4.0, 1.0, 2.0, 9);
        let ss = steady_state(&m).unwrap();
        let sup = build_superoperator(&m, &SolverOptions::default()).unwrap();
        let r = sup.apply(&vectorize(ss.matrix()));
        assert!(norm(&r) < 1e-9);
        assert!(DensityMatrix::new(ss.into_matrix(), 9).is_ok());
    }

    #[test]
    fn dense_propagation_agrees_with_generator() {
        let m = model(0.3, 1.5, 1.0, 2.0, 3);
        let opts = SolverOptions::default();
        let sup = build_superoperator(&m, &opts).unwrap();
        let rho0 = coherent_state(1.0, 0.5, 3).unwrap();
        let h = 1e-5;
        let a = propagate_dense(&sup, rho0.matrix(), h, &opts).unwrap();
        let b = propagate_dense(&sup, rho0.matrix(), -h, &opts).unwrap();
        let deriv = (a - b) / Complex64::new(2.0 * h, 0.0);
        let direct = lindblad_rhs(&rho0, &m).unwrap();
        let diff = (&deriv - &direct).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "{diff:e}");
        let long = propagate_dense(&sup, rho0.matrix(), 50.0, &opts).unwrap();
        assert!((long.trace() - ONE).norm() < 1e-10);
    }

    #[test]
    fn gap_scaling_requires_ascending_sizes() {
        let p = ModelParams::with_detuning(0.0, 0.0, 1.0, 1.0, 2.0, 1).unwrap();
        assert!(gap_scaling(&p, &[4, 2], &SolverOptions::default()).is_err());
        let pts = gap_scaling(&p, &[1, 3], &SolverOptions::default()).unwrap();
        assert_eq!(pts.len(), 2);
        assert!(pts.iter().all(|g| g.error.is_none()));
        let csv = gap_csv(&pts);
        assert!(csv.starts_with("N,alpha_r,alpha_i,R,osc_r,osc_i\n1,"));
    }

    #[test]
    fn single_channel_gap_from_series() {
        let p = ModelParams::with_detuning(0.0, 0.0, 0.0, 1.0, 0.0, 1).unwrap();
        let pts = gap_scaling(&p, &[1], &SolverOptions::default()).unwrap();
        assert!((pts[0].alpha_r - 1.0).abs() < 1e-9, "{pts:?}");
    }
}
