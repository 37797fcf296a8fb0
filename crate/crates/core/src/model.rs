//! Collective-spin operator algebra in the Dicke basis and the model's
//! Hamiltonians and jump operators.
//!
//! The basis is ordered north pole first: index `k` holds `|S, m>` with
//! `m = S - k`. Every engine in the crate shares this ordering.

use crate::band::BandMatrix;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use num_complex::Complex64;

/// Collective spin operators for `N` spin-1/2 particles in the maximal
/// `S = N/2` manifold.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub n_spins: usize,
    pub s_plus: BandMatrix,
    pub s_minus: BandMatrix,
    pub s_z: BandMatrix,
    pub s_x: BandMatrix,
    pub s_y: BandMatrix,
}

impl SpinOperators {
    pub fn dim(&self) -> usize {
        self.n_spins + 1
    }

    pub fn total_spin(&self) -> f64 {
        self.n_spins as f64 / 2.0
    }

    /// Magnetic quantum number of basis index `k`.
    pub fn m_of(&self, k: usize) -> f64 {
        self.total_spin() - k as f64
    }

    fn check(&self, params: &ModelParams) -> Result<()> {
        if params.n_spins() != self.n_spins {
            return Err(Error::DimensionMismatch {
                expected: params.dim(),
                found: self.dim(),
            });
        }
        Ok(())
    }
}

pub fn build_spin_operators(n_spins: usize) -> Result<SpinOperators> {
    if n_spins == 0 {
        return Err(Error::InvalidParameter {
            field: "n_spins",
            reason: "must be at least 1".into(),
        });
    }
    let dim = n_spins + 1;
    let s = n_spins as f64 / 2.0;
    let m = |k: usize| s - k as f64;

    let sz = BandMatrix::from_diagonal((0..dim).map(|k| Complex64::new(m(k), 0.0)).collect());
    // <m+1| S+ |m> sits at row k-1, column k.
    let raise: Vec<Complex64> = (0..dim)
        .map(|row| {
            if row + 1 < dim {
                let mk = m(row + 1);
                Complex64::new((s * (s + 1.0) - mk * (mk + 1.0)).max(0.0).sqrt(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let s_plus = BandMatrix::from_offset(dim, 1, raise);
    let s_minus = s_plus.adjoint();
    let s_x = s_plus.add(&s_minus).scale_real(0.5);
    let s_y = s_plus.sub(&s_minus).scale(Complex64::new(0.0, -0.5));

    Ok(SpinOperators {
        n_spins,
        s_plus,
        s_minus,
        s_z: sz,
        s_x,
        s_y,
    })
}

/// `H = detuning * S_z - (epsilon / 2) * S_x`.
pub fn rotating_frame_hamiltonian(params: &ModelParams, ops: &SpinOperators) -> Result<BandMatrix> {
    ops.check(params)?;
    Ok(ops
        .s_z
        .scale_real(params.detuning())
        .sub(&ops.s_x.scale_real(params.epsilon() / 2.0))
        .pruned())
}

/// Linear gain `sqrt(G+/S) S+` and nonlinear decay `sqrt(G-/S^3) S- S_z`.
pub fn jump_operators(params: &ModelParams, ops: &SpinOperators) -> Result<(BandMatrix, BandMatrix)> {
    ops.check(params)?;
    let s = ops.total_spin();
    let l_plus = ops.s_plus.scale_real((params.gamma_plus() / s).sqrt());
    let l_minus = ops
        .s_minus
        .matmul(&ops.s_z)
        .scale_real((params.gamma_minus() / (s * s * s)).sqrt());
    Ok((l_plus, l_minus))
}

/// Full lab-frame Hamiltonian `omega0 S_z - epsilon cos(omega_d t) S_x`.
pub fn lab_frame_drive(params: &ModelParams, ops: &SpinOperators, t: f64) -> Result<BandMatrix> {
    ops.check(params)?;
    let drive = params.epsilon() * (params.omega_d() * t).cos();
    Ok(ops
        .s_z
        .scale_real(params.omega0())
        .sub(&ops.s_x.scale_real(drive)))
}

/// Operators of one parameter point, assembled once and shared by the
/// quantum engines.
#[derive(Debug, Clone)]
pub struct CollectiveSpinModel {
    pub params: ModelParams,
    pub ops: SpinOperators,
    pub hamiltonian: BandMatrix,
    pub l_plus: BandMatrix,
    pub l_minus: BandMatrix,
}

impl CollectiveSpinModel {
    pub fn new(params: ModelParams) -> Result<Self> {
        let ops = build_spin_operators(params.n_spins())?;
        Self::with_operators(params, ops)
    }

    pub fn with_operators(params: ModelParams, ops: SpinOperators) -> Result<Self> {
        let hamiltonian = rotating_frame_hamiltonian(&params, &ops)?;
        let (l_plus, l_minus) = jump_operators(&params, &ops)?;
        Ok(Self {
            params,
            ops,
            hamiltonian,
            l_plus,
            l_minus,
        })
    }

    pub fn dim(&self) -> usize {
        self.ops.dim()
    }

    pub fn jumps(&self) -> [&BandMatrix; 2] {
        [&self.l_plus, &self.l_minus]
    }

    /// Non-Hermitian effective generator `-iH - 1/2 sum L^dagger L`, so that
    /// the master equation reads `K rho + rho K^dagger + sum L rho L^dagger`.
    pub fn effective_generator(&self, hamiltonian: &BandMatrix) -> BandMatrix {
        let mut k = hamiltonian.scale(Complex64::new(0.0, -1.0));
        for l in self.jumps() {
            k = k.sub(&l.adjoint().matmul(l).scale_real(0.5));
        }
        k.pruned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn params(detuning: f64, epsilon: f64, gp: f64, gm: f64, n: usize) -> ModelParams {
        ModelParams::with_detuning(0.0, detuning, epsilon, gp, gm, n).unwrap()
    }

    #[test]
    fn spin_one_sz_is_diag_one_zero_minus_one() {
        let ops = build_spin_operators(2).unwrap();
        let d = ops.s_z.to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 - i as f64 } else { 0.0 };
                assert_eq!(d[(i, j)], c(expect, 0.0));
            }
        }
    }

    #[test]
    fn spin_half_operators_are_half_paulis() {
        let ops = build_spin_operators(1).unwrap();
        let (x, y, z) = (ops.s_x.to_dense(), ops.s_y.to_dense(), ops.s_z.to_dense());
        let pauli_x = [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]];
        let pauli_y = [[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]];
        let pauli_z = [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((x[(i, j)] - pauli_x[i][j] * 0.5).norm() < 1e-15);
                assert!((y[(i, j)] - pauli_y[i][j] * 0.5).norm() < 1e-15);
                assert!((z[(i, j)] - pauli_z[i][j] * 0.5).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_spins_rejected() {
        assert!(matches!(
            build_spin_operators(0),
            Err(Error::InvalidParameter { field: "n_spins", .. })
        ));
    }

    #[test]
    fn algebra_holds_up_to_four_hundred_spins() {
        for n in [1usize, 2, 3, 10, 57, 200, 400] {
            let ops = build_spin_operators(n).unwrap();
            let s = ops.total_spin();
            let tol = 1e-12 * n as f64;
            let comm_pm = ops.s_plus.commutator(&ops.s_minus).sub(&ops.s_z.scale_real(2.0));
            assert!(comm_pm.max_abs() < tol, "n={n}: [S+,S-]-2Sz = {}", comm_pm.max_abs());
            let comm_zp = ops.s_z.commutator(&ops.s_plus).sub(&ops.s_plus);
            assert!(comm_zp.max_abs() < tol);
            let comm_zm = ops.s_z.commutator(&ops.s_minus).add(&ops.s_minus);
            assert!(comm_zm.max_abs() < tol);
            let casimir = ops
                .s_x
                .matmul(&ops.s_x)
                .add(&ops.s_y.matmul(&ops.s_y))
                .add(&ops.s_z.matmul(&ops.s_z))
                .sub(&BandMatrix::identity(n + 1).scale_real(s * (s + 1.0)));
            assert!(casimir.max_abs() < tol, "n={n}: casimir {}", casimir.max_abs());
        }
    }

    #[test]
    fn hamiltonian_examples() {
        let ops = build_spin_operators(2).unwrap();
        let h = rotating_frame_hamiltonian(&params(0.0, 0.0, 1.0, 1.0, 2), &ops).unwrap();
        assert_eq!(h.max_abs(), 0.0);
        let h = rotating_frame_hamiltonian(&params(1.0, 0.0, 1.0, 1.0, 2), &ops).unwrap();
        assert!(h.sub(&ops.s_z).max_abs() < 1e-15);

        let ops1 = build_spin_operators(1).unwrap();
        let h = rotating_frame_hamiltonian(&params(0.0, 4.0, 1.0, 1.0, 1), &ops1).unwrap();
        let d = h.to_dense();
        assert!((d[(0, 1)] - c(-1.0, 0.0)).norm() < 1e-15);
        assert!((d[(1, 0)] - c(-1.0, 0.0)).norm() < 1e-15);
        assert!(d[(0, 0)].norm() < 1e-15 && d[(1, 1)].norm() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let ops = build_spin_operators(3).unwrap();
        assert!(matches!(
            rotating_frame_hamiltonian(&params(0.0, 1.0, 1.0, 1.0, 4), &ops),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(jump_operators(&params(0.0, 1.0, 1.0, 1.0, 4), &ops).is_err());
    }

    #[test]
    fn jump_operator_examples() {
        let ops = build_spin_operators(2).unwrap();
        let (lp, lm) = jump_operators(&params(0.0, 0.0, 1.0, 0.0, 2), &ops).unwrap();
        assert_eq!(lm.max_abs(), 0.0);
        assert!(lp.sub(&ops.s_plus).max_abs() < 1e-15);

        // S = 1/2: L- = sqrt(8) S- S_z maps |up> to sqrt(2)|down>.
        let ops = build_spin_operators(1).unwrap();
        let (_, lm) = jump_operators(&params(0.0, 0.0, 0.0, 1.0, 1), &ops).unwrap();
        let up = [c(1.0, 0.0), c(0.0, 0.0)];
        let down = [c(0.0, 0.0), c(1.0, 0.0)];
        let a = lm.apply(&up);
        assert!(a[0].norm() < 1e-15);
        assert!((a[1] - c(2f64.sqrt(), 0.0)).norm() < 1e-14);
        let b = lm.apply(&down);
        assert!(b[0].norm() < 1e-15 && b[1].norm() < 1e-15);
    }

    #[test]
    fn jump_norms_grow_sublinearly() {
        let norm = |n: usize| {
            let ops = build_spin_operators(n).unwrap();
            let (lp, lm) = jump_operators(&params(0.0, 0.0, 1.0, 2.0, n), &ops).unwrap();
            (lp.norm_bound(), lm.norm_bound())
        };
        let mut prev = norm(10);
        for n in [20, 40, 80, 160, 320] {
            let cur = norm(n);
            assert!(cur.0 < 2.0 * prev.0 && cur.1 < 2.0 * prev.1, "n={n}: {cur:?} vs {prev:?}");
            prev = cur;
        }
    }

    #[test]
    fn lab_frame_examples() {
        let p = ModelParams::new(3.0, 2.0, 0.7, 1.0, 1.0, 3).unwrap();
        let ops = build_spin_operators(3).unwrap();
        let h0 = lab_frame_drive(&p, &ops, 0.0).unwrap();
        assert!(h0.sub(&ops.s_z.scale_real(3.0)).add(&ops.s_x.scale_real(0.7)).max_abs() < 1e-15);
        let t = std::f64::consts::FRAC_PI_2 / 2.0;
        let hq = lab_frame_drive(&p, &ops, t).unwrap();
        assert!(hq.sub(&ops.s_z.scale_real(3.0)).max_abs() < 1e-15);
        let p0 = p.with_epsilon(0.0).unwrap();
        for t in [0.0, 0.3, 11.0] {
            let h = lab_frame_drive(&p0, &ops, t).unwrap();
            assert!(h.sub(&ops.s_z.scale_real(3.0)).max_abs() == 0.0);
        }
    }

    proptest! {
        #[test]
        fn hamiltonians_are_hermitian(
            n in 1usize..60,
            detuning in -5.0f64..5.0,
            epsilon in 0.0f64..6.0,
            t in 0.0f64..10.0,
        ) {
            let p = ModelParams::with_detuning(20.0 * std::f64::consts::PI, detuning, epsilon, 1.0, 2.0, n).unwrap();
            let ops = build_spin_operators(n).unwrap();
            let h = rotating_frame_hamiltonian(&p, &ops).unwrap();
            let scale = h.max_abs().max(1.0);
            prop_assert!(h.hermiticity_defect() <= 1e-14 * scale);
            let hl = lab_frame_drive(&p, &ops, t).unwrap();
            prop_assert!(hl.hermiticity_defect() <= 1e-14 * hl.max_abs().max(1.0));
        }
    }
}
