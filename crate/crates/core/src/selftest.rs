//! Runtime oracle checks behind the `selftest` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::grid::coeff_grid;
use crate::linalg::{thin_svd, Matrix};
use crate::operators::{
    adjoint_gap, op_norm_estimate, BlurOp, GaussKernel, GradientOp, LiftingOp, LinearOperator, MomentOp, SymJacobianOp,
};
use crate::prox::{prox_nuclear, prox_scalar_phi, Phi};

/// Outcome of one oracle suite: the worst observed error against a tolerance.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

fn worst_gap<B: LinearOperator<f64>>(op: &B, pairs: usize, seed: u64) -> f64 {
    let norm = op_norm_estimate(op, 30, seed);
    (0..pairs as u64).map(|k| adjoint_gap(op, norm, seed.wrapping_add(k))).fold(0.0, f64::max)
}

/// Adjoint identity for every operator pair on `pairs` seeded random inputs.
pub fn adjoint_checks(pairs: usize, seed: u64) -> Vec<Check> {
    let (rows, cols) = (32, 37);
    let grid = coeff_grid(rows, cols, 15, 3).expect("valid grid");
    let kernel = GaussKernel::new(9, 1.8).expect("valid kernel");
    let check = |name: &str, worst: f64| Check { name: name.into(), worst, tolerance: 1e-10 };
    vec![
        check("lifting", worst_gap(&LiftingOp { grid }, pairs, seed)),
        check("gradient", worst_gap(&GradientOp { rows, cols }, pairs, seed)),
        check("sym_jacobian", worst_gap(&SymJacobianOp { rows, cols }, pairs, seed)),
        check("moments", worst_gap(&MomentOp { grid }, pairs, seed)),
        check("blur", worst_gap(&BlurOp { kernel, rows, cols }, pairs, seed)),
    ]
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (a, b) = (hi - r * (hi - lo), lo + r * (hi - lo));
        if f(a) <= f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect())
}

/// Scalar prox against golden-section search, nuclear prox against random
/// perturbations, and singular value soft-thresholding.
pub fn prox_checks(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut scalar = 0.0f64;
    for k in 0..200 {
        let phi: Phi<f64> = if k % 2 == 0 {
            Phi::Linear
        } else {
            Phi::semiconvex(rng.random_range(0.05..3.0), rng.random_range(0.0..0.99)).expect("valid potential")
        };
        let bound: f64 = phi.max_tau_rho().unwrap_or(5.0).min(5.0);
        let tr = rng.random_range(0.0..0.95) * bound;
        let x0 = rng.random_range(0.0..6.0);
        let got = prox_scalar_phi(x0, tr, &phi).expect("within bound");
        let want = golden_min(|x| 0.5 * (x - x0) * (x - x0) + tr * phi.value(x), 0.0, x0 + 1.0);
        scalar = scalar.max((got - want).abs());
    }

    // positive value = some perturbation beat the prox
    let mut descent = f64::NEG_INFINITY;
    let mut soft = 0.0f64;
    for k in 0..50 {
        let x = random_matrix(6, 4, &mut rng);
        let tr: f64 = rng.random_range(0.1..1.5);
        let phi: Phi<f64> = if k % 2 == 0 { Phi::Linear } else { Phi::semiconvex(0.5, 0.9).expect("valid potential") };
        let tr = phi.max_tau_rho().map_or(tr, |b| tr.min(0.9 * b));
        let y = prox_nuclear(&x, tr, &phi).expect("within bound");
        let objective = |z: &Matrix<f64>| {
            let diff: f64 = z.as_slice().iter().zip(x.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
            0.5 * diff + tr * phi.energy(&thin_svd(z).values)
        };
        let base = objective(&y);
        for _ in 0..1000 {
            let scale = 10f64.powf(rng.random_range(-4.0..-1.0));
            let p = random_matrix(6, 4, &mut rng);
            let z = Matrix::from_vec(6, 4, y.as_slice().iter().zip(p.as_slice()).map(|(a, b)| a + scale * b).collect());
            descent = descent.max((base - objective(&z)) / base.abs().max(1.0));
        }
        if matches!(phi, Phi::Linear) {
            let (sx, sy) = (thin_svd(&x).values, thin_svd(&y).values);
            for (i, s) in sx.iter().enumerate() {
                soft = soft.max(((s - tr).max(0.0) - sy.get(i).copied().unwrap_or(0.0)).abs());
            }
        }
    }
    vec![
        Check { name: "prox_scalar_phi".into(), worst: scalar, tolerance: 1e-6 },
        Check { name: "prox_nuclear_descent".into(), worst: descent.max(0.0), tolerance: 1e-12 },
        Check { name: "soft_threshold".into(), worst: soft, tolerance: 1e-10 },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in adjoint_checks(10, 1).into_iter().chain(prox_checks(2)) {
            assert!(c.passed(), "{c:?}");
        }
    }
}
