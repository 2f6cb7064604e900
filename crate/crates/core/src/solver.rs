//! First-order primal-dual iteration for the lifted decomposition model.
//!
//! Primal unknowns are the image `u`, the second-order TGV field `v` and
//! the lifted atom tensor `C`; duals are `p` (for `∇(u - KC) - v`), `q`
//! (for `ℰv`), `d` (for a data term handled on the dual side), `r` (for
//! the l1,2 norm of `C`) and `m` (for the moment constraint). Variants
//! switch blocks on and off.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{reshape_to_matrix, Array, CoeffGrid, Image, LiftedTensor, Mask, MomentField, SymField, VecField};
use crate::operators::{
    blur, blur_adjoint, divergence_into, gradient_into, lift_adjoint_into, lift_forward_into, moments,
    op_norm_estimate, sym_divergence_into, sym_jacobian_into, GaussKernel, LinearOperator, VectorSpace,
    WhitenedMoments,
};
use crate::prox::{
    prox_conj_l2_data, prox_l2_data, prox_nuclear_tensor, project_atom_slices, project_sym_field,
    project_vec_field, Phi,
};
use crate::scalar::Scalar;

/// Model variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Second-order TGV only; the atom tensor stays zero.
    Tgv,
    /// Texture only: the image is `KC`.
    Txt,
    /// Cartoon plus texture with the convex nuclear penalty.
    CtCvx,
    /// Cartoon plus texture with the semiconvex singular value penalty.
    CtScvx,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Tgv, Variant::Txt, Variant::CtCvx, Variant::CtScvx];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Tgv => "tgv",
            Variant::Txt => "txt",
            Variant::CtCvx => "ct_cvx",
            Variant::CtScvx => "ct_scvx",
        }
    }

    pub fn has_cartoon(self) -> bool {
        self != Variant::Txt
    }

    pub fn has_texture(self) -> bool {
        self != Variant::Tgv
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s || v.name().replace('_', "-") == s)
            .ok_or_else(|| Error::param("variant", format!("unknown variant `{s}` (tgv, txt, ct_cvx, ct_scvx)")))
    }
}

/// How the reconstruction is tied to the observation `f0`.
#[derive(Clone, Debug, PartialEq)]
pub enum Fidelity<T> {
    /// Hard equality everywhere.
    Equality,
    /// Hard equality on the observed pixels only.
    Masked(Mask),
    /// `lambda / 2 * |w - f0|^2`.
    Quadratic { lambda: T },
}

/// How the moment constraint `MC = 0` enters the iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMode {
    /// Folded into the primal prox of `C`: every slice is projected onto the
    /// moment-free subspace before singular value shrinkage. Iterates are
    /// feasible up to rounding.
    #[default]
    Projected,
    /// Dualized through the multiplier `m`; feasibility only holds in the limit.
    Dual,
}

impl MomentMode {
    pub const ALL: [MomentMode; 2] = [MomentMode::Projected, MomentMode::Dual];

    pub fn name(self) -> &'static str {
        match self {
            MomentMode::Projected => "projected",
            MomentMode::Dual => "dual",
        }
    }
}

impl fmt::Display for MomentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MomentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::param("moment_mode", format!("unknown mode {s:?} (expected projected or dual)")))
    }
}

/// How step sizes are chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `sigma = tau = step_factor / L` on every block.
    Uniform,
    /// Block-diagonal scaling by reciprocal absolute column sums (primal)
    /// and row sums (dual) of the coupling, then normalized so that
    /// `||Sigma^1/2 B T^1/2|| = step_factor`.
    #[default]
    Preconditioned,
}

impl StepRule {
    pub const ALL: [StepRule; 2] = [StepRule::Uniform, StepRule::Preconditioned];

    pub fn name(self) -> &'static str {
        match self {
            StepRule::Uniform => "uniform",
            StepRule::Preconditioned => "preconditioned",
        }
    }
}

impl fmt::Display for StepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::param("step_rule", format!("unknown rule {s:?} (expected uniform or preconditioned)")))
    }
}

/// Numerical parameters of one solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverParams<T> {
    pub alpha0: T,
    pub alpha1: T,
    /// Balance between cartoon and texture penalties.
    pub mu: T,
    /// Split of the texture penalty between l1,2 and singular values.
    pub nu: T,
    pub phi: Phi<T>,
    /// Enforce vanishing zeroth and first atom moments.
    pub moment: bool,
    pub moment_mode: MomentMode,
    pub iterations: usize,
    /// Stop early once the fixed-point residual falls below this value.
    pub tol: T,
    pub power_iterations: usize,
    pub power_seed: u64,
    pub step_rule: StepRule,
    /// Primal steps are multiplied and dual steps divided by this.
    pub primal_dual_ratio: T,
    /// Over-relaxation factor in (0, 2); 1 is the plain iteration.
    pub relaxation: T,
    /// Steps are normalized so that `sigma * tau * L^2 = step_factor^2`.
    pub step_factor: T,
    /// Number of atoms extracted from the final tensor.
    pub atoms: usize,
}

impl<T: Scalar> Default for SolverParams<T> {
    fn default() -> Self {
        Self {
            alpha0: T::SQRT_2(),
            alpha1: T::one(),
            mu: T::zero(),
            nu: T::lit(0.975),
            phi: Phi::Linear,
            moment: true,
            moment_mode: MomentMode::Projected,
            iterations: 3000,
            tol: T::zero(),
            power_iterations: 50,
            power_seed: 0,
            step_rule: StepRule::Preconditioned,
            primal_dual_ratio: T::lit(0.03),
            relaxation: T::lit(1.8),
            step_factor: T::lit(0.98),
            atoms: 9,
        }
    }
}

impl<T: Scalar> SolverParams<T> {
    /// Weight `s1` on the cartoon penalty.
    pub fn s1(&self) -> T {
        T::one() - self.mu.min(T::zero())
    }

    /// Weight `s2` on the texture penalty.
    pub fn s2(&self) -> T {
        T::one() + self.mu.max(T::zero())
    }
}

/// A fully specified instance handed to [`solve`].
#[derive(Clone, Debug)]
pub struct Problem<T> {
    pub f0: Image<T>,
    pub grid: CoeffGrid,
    pub variant: Variant,
    pub fidelity: Fidelity<T>,
    /// Forward blur; when present the data term is handled on the dual side.
    pub kernel: Option<GaussKernel<T>>,
    pub params: SolverParams<T>,
}

impl<T: Scalar> Problem<T> {
    fn data_on_dual(&self) -> bool {
        self.kernel.is_some() || self.variant == Variant::Txt
    }

    fn moment_active(&self) -> bool {
        self.variant.has_texture() && self.params.moment
    }

    fn moment_dual(&self) -> bool {
        self.moment_active() && self.params.moment_mode == MomentMode::Dual
    }
}

// ---------------------------------------------------------------------------
// composite primal / dual vectors

/// Primal iterate; absent blocks are `None`.
#[derive(Clone, Debug)]
pub struct Primal<T> {
    pub u: Option<Image<T>>,
    pub v: Option<VecField<T>>,
    pub c: Option<LiftedTensor<T>>,
}

/// Dual iterate; absent blocks are `None`.
#[derive(Clone, Debug)]
pub struct Dual<T> {
    pub p: Option<VecField<T>>,
    pub q: Option<SymField<T>>,
    pub d: Option<Image<T>>,
    pub r: Option<LiftedTensor<T>>,
    pub m: Option<MomentField<T>>,
}

fn opt_dot<T: Scalar, V: VectorSpace<T>>(a: &Option<V>, b: &Option<V>) -> T {
    match (a, b) {
        (Some(x), Some(y)) => x.dot(y),
        _ => T::zero(),
    }
}

fn opt_axpy<T: Scalar, A: Array<T>>(y: &mut Option<A>, alpha: T, x: &Option<A>) {
    if let (Some(y), Some(x)) = (y.as_mut(), x.as_ref()) {
        y.axpy(alpha, x);
    }
}

macro_rules! composite {
    ($ty:ident, $steps:ident { $($f:ident),* }) => {
        /// One scalar per block.
        #[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
        pub struct $steps<T> {
            $(pub $f: T,)*
        }

        impl<T: Scalar> $steps<T> {
            pub fn splat(x: T) -> Self {
                Self { $($f: x,)* }
            }

            pub fn map(&self, f: impl Fn(T) -> T) -> Self {
                Self { $($f: f(self.$f),)* }
            }
        }

        impl<T: Scalar> VectorSpace<T> for $ty<T> {
            fn dot(&self, other: &Self) -> T {
                T::zero() $(+ opt_dot(&self.$f, &other.$f))*
            }
            fn scale_mut(&mut self, alpha: T) {
                $(if let Some(x) = self.$f.as_mut() { x.scale(alpha); })*
            }
            fn randomize(&mut self, rng: &mut rand_chacha::ChaCha8Rng) {
                $(if let Some(x) = self.$f.as_mut() { x.randomize(rng); })*
            }
        }

        impl<T: Scalar> $ty<T> {
            /// `self += alpha * x`, blockwise.
            pub fn axpy(&mut self, alpha: T, x: &Self) {
                $(opt_axpy(&mut self.$f, alpha, &x.$f);)*
            }

            /// Multiply every block by its own weight.
            pub fn scale_blocks(&mut self, w: &$steps<T>) {
                $(if let Some(x) = self.$f.as_mut() { x.scale(w.$f); })*
            }

            fn is_finite(&self) -> bool {
                true $(&& self.$f.as_ref().map_or(true, |x| x.as_slice().iter().all(|v| v.is_finite())))*
            }
        }
    };
}

composite!(Primal, PrimalSteps { u, v, c });
composite!(Dual, DualSteps { p, q, d, r, m });

impl<T: Scalar> Primal<T> {
    fn zeros_like(problem: &Problem<T>) -> Self {
        let (rows, cols) = problem.f0.dims();
        let cartoon = problem.variant.has_cartoon();
        Self {
            u: cartoon.then(|| Image::zeros(rows, cols)),
            v: cartoon.then(|| VecField::zeros(rows, cols)),
            c: problem.variant.has_texture().then(|| LiftedTensor::zeros(problem.grid)),
        }
    }

    fn scaled_distance(&self, other: &Self, w: &PrimalSteps<T>) -> T {
        let mut d = self.clone();
        d.axpy(-T::one(), other);
        d.scale_blocks(w);
        d.norm()
    }
}

impl<T: Scalar> Dual<T> {
    fn zeros_like(problem: &Problem<T>) -> Self {
        let (rows, cols) = problem.f0.dims();
        let g = problem.grid;
        let cartoon = problem.variant.has_cartoon();
        Self {
            p: cartoon.then(|| VecField::zeros(rows, cols)),
            q: cartoon.then(|| SymField::zeros(rows, cols)),
            d: problem.data_on_dual().then(|| Image::zeros(rows, cols)),
            r: problem.variant.has_texture().then(|| LiftedTensor::zeros(g)),
            m: problem.moment_dual().then(|| MomentField::zeros(g.nc, g.mc)),
        }
    }

    fn scaled_distance(&self, other: &Self, w: &DualSteps<T>) -> T {
        let mut d = self.clone();
        d.axpy(-T::one(), other);
        d.scale_blocks(w);
        d.norm()
    }
}

/// The full coupling operator from primal to dual blocks.
pub struct Coupling<'a, T: Scalar> {
    problem: &'a Problem<T>,
    moments: Option<WhitenedMoments<T>>,
}

impl<'a, T: Scalar> Coupling<'a, T> {
    pub fn new(problem: &'a Problem<T>) -> Self {
        let moments = problem.moment_dual().then(|| WhitenedMoments::new(problem.grid));
        Self { problem, moments }
    }

    fn blur(&self, x: &Image<T>) -> Image<T> {
        match &self.problem.kernel {
            Some(k) => blur(x, k),
            None => x.clone(),
        }
    }

    fn blur_adjoint(&self, y: &Image<T>) -> Image<T> {
        match &self.problem.kernel {
            Some(k) => blur_adjoint(y, k),
            None => y.clone(),
        }
    }
}

impl<T: Scalar> LinearOperator<T> for Coupling<'_, T> {
    type Domain = Primal<T>;
    type Range = Dual<T>;

    fn domain_zero(&self) -> Primal<T> {
        Primal::zeros_like(self.problem)
    }

    fn range_zero(&self) -> Dual<T> {
        Dual::zeros_like(self.problem)
    }

    fn apply(&self, x: &Primal<T>) -> Dual<T> {
        let mut y = self.range_zero();
        let kc = x.c.as_ref().map(|c| {
            let mut img = Image::zeros(self.problem.grid.rows, self.problem.grid.cols);
            lift_forward_into(c, &mut img);
            img
        });
        if let (Some(p), Some(u), Some(v)) = (y.p.as_mut(), x.u.as_ref(), x.v.as_ref()) {
            let w = match &kc {
                Some(kc) => u.sub(kc),
                None => u.clone(),
            };
            gradient_into(&w, p);
            p.axpy(-T::one(), v);
        }
        if let (Some(q), Some(v)) = (y.q.as_mut(), x.v.as_ref()) {
            sym_jacobian_into(v, q);
        }
        if let Some(d) = y.d.as_mut() {
            let src = if self.problem.variant == Variant::Txt { kc.as_ref() } else { x.u.as_ref() };
            if let Some(src) = src {
                *d = self.blur(src);
            }
        }
        if let (Some(r), Some(c)) = (y.r.as_mut(), x.c.as_ref()) {
            r.as_mut_slice().copy_from_slice(c.as_slice());
        }
        if let (Some(m), Some(c), Some(w)) = (y.m.as_mut(), x.c.as_ref(), self.moments.as_ref()) {
            *m = w.apply_to(c);
        }
        y
    }

    fn adjoint(&self, y: &Dual<T>) -> Primal<T> {
        let mut x = self.domain_zero();
        let (rows, cols) = self.problem.f0.dims();
        // image-space gradient of the coupling: grad^T p (+ A^T d)
        let mut img_grad = Image::zeros(rows, cols);
        if let Some(p) = y.p.as_ref() {
            divergence_into(p, &mut img_grad);
            img_grad.scale(-T::one());
        }
        let data_back = y.d.as_ref().map(|d| self.blur_adjoint(d));
        if let Some(u) = x.u.as_mut() {
            *u = img_grad.clone();
            if let Some(db) = &data_back {
                u.axpy(T::one(), db);
            }
        }
        if let Some(v) = x.v.as_mut() {
            if let Some(q) = y.q.as_ref() {
                sym_divergence_into(q, v);
                v.scale(-T::one());
            }
            if let Some(p) = y.p.as_ref() {
                v.axpy(-T::one(), p);
            }
        }
        if let Some(c) = x.c.as_mut() {
            // -K^T grad^T p (+ K^T A^T d for the texture-only model)
            let mut back = img_grad;
            back.scale(-T::one());
            if self.problem.variant == Variant::Txt {
                if let Some(db) = &data_back {
                    back.axpy(T::one(), db);
                }
            }
            lift_adjoint_into(&back, c);
            if let Some(r) = y.r.as_ref() {
                c.axpy(T::one(), r);
            }
            if let (Some(m), Some(w)) = (y.m.as_ref(), self.moments.as_ref()) {
                c.axpy(T::one(), &w.adjoint_of(m));
            }
        }
        x
    }
}

// ---------------------------------------------------------------------------
// results

/// Per-iteration diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub energy: Vec<f64>,
    pub residual: Vec<f64>,
    /// Seconds since the start of the solve.
    pub wall_time: Vec<f64>,
}

/// Right singular vector of the final tensor, reshaped to `n x n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom<T> {
    pub n: usize,
    pub sigma: T,
    pub values: Vec<T>,
}

/// How far the final duals sit outside their constraint sets, relative
/// to the radius (zero when feasible).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl Feasibility {
    pub fn worst(&self) -> f64 {
        self.p.max(self.q).max(self.r)
    }
}

#[derive(Clone, Debug)]
pub struct Solution<T> {
    /// Full reconstruction.
    pub u: Image<T>,
    pub cartoon: Image<T>,
    pub texture: Image<T>,
    pub v: Option<VecField<T>>,
    pub c: Option<LiftedTensor<T>>,
    pub dual: Dual<T>,
    pub atoms: Vec<Atom<T>>,
    pub history: History,
    pub iterations: usize,
    pub tau: PrimalSteps<T>,
    pub sigma: DualSteps<T>,
    /// Norm of the weighted coupling the steps were normalized by.
    pub op_norm: T,
    pub objective: T,
    pub feasibility: Feasibility,
    /// `max |MC| / max |C|` with the plain moment operator.
    pub moment_residual: T,
}

// ---------------------------------------------------------------------------

// Coupling with block weights applied on both sides.
struct Scaled<'a, T: Scalar> {
    op: &'a Coupling<'a, T>,
    primal: PrimalSteps<T>,
    dual: DualSteps<T>,
}

impl<T: Scalar> LinearOperator<T> for Scaled<'_, T> {
    type Domain = Primal<T>;
    type Range = Dual<T>;

    fn domain_zero(&self) -> Primal<T> {
        self.op.domain_zero()
    }

    fn range_zero(&self) -> Dual<T> {
        self.op.range_zero()
    }

    fn apply(&self, x: &Primal<T>) -> Dual<T> {
        let mut x = x.clone();
        x.scale_blocks(&self.primal);
        let mut y = self.op.apply(&x);
        y.scale_blocks(&self.dual);
        y
    }

    fn adjoint(&self, y: &Dual<T>) -> Primal<T> {
        let mut y = y.clone();
        y.scale_blocks(&self.dual);
        let mut x = self.op.adjoint(&y);
        x.scale_blocks(&self.primal);
        x
    }
}

// Reciprocal absolute column (primal) and row (dual) sums of the coupling,
// bounded from the stencils.
fn block_weights<T: Scalar>(problem: &Problem<T>) -> (PrimalSteps<T>, DualSteps<T>) {
    if problem.params.step_rule == StepRule::Uniform {
        return (PrimalSteps::splat(T::one()), DualSteps::splat(T::one()));
    }
    let g = problem.grid;
    let cover = g.n.div_ceil(g.eta).pow(2) as f64;
    let cartoon = problem.variant.has_cartoon();
    let txt = problem.variant == Variant::Txt;
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let col_u = 4.0 + flag(problem.data_on_dual() && !txt);
    let col_v = 4.0;
    let col_c = 4.0 * flag(cartoon) + 1.0 + flag(txt && problem.data_on_dual()) + flag(problem.moment_dual());
    let row_p = 3.0 + 2.0 * cover * flag(problem.variant.has_texture());
    let row_q = 2.0;
    let row_d = if txt { cover } else { 1.0 };
    // whitened moment rows have unit norm over n^2 entries
    let row_m = g.n as f64;
    let w = |x: f64| T::lit(1.0 / x);
    (
        PrimalSteps { u: w(col_u), v: w(col_v), c: w(col_c) },
        DualSteps { p: w(row_p), q: w(row_q), d: w(row_d), r: T::one(), m: w(row_m) },
    )
}

/// Block step sizes `(tau, sigma, L)` for a problem, where `L` is the norm
/// of the weighted coupling.
pub fn step_sizes<T: Scalar>(problem: &Problem<T>) -> Result<(PrimalSteps<T>, DualSteps<T>, T)> {
    let params = &problem.params;
    let (wp, wd) = block_weights(problem);
    let op = Coupling::new(problem);
    let scaled = Scaled { op: &op, primal: wp.map(|x| x.sqrt()), dual: wd.map(|x| x.sqrt()) };
    let l = op_norm_estimate(&scaled, params.power_iterations, params.power_seed);
    let base = params.step_factor / l;
    let mut tau = wp.map(|x| x * base);
    let mut sigma = wd.map(|x| x * base);
    let k = params.primal_dual_ratio;
    tau = tau.map(|x| x * k);
    sigma = sigma.map(|x| x / k);
    if problem.variant.has_texture() {
        let rho = params.s2() * (T::one() - params.nu);
        if let Some(bound) = params.phi.max_tau_rho() {
            if rho > T::zero() && tau.c * rho >= bound {
                // keep every sigma * tau product
                let f = T::lit(0.99) * bound / (rho * tau.c);
                tau = tau.map(|x| x * f);
                sigma = sigma.map(|x| x / f);
            }
        }
    }
    Ok((tau, sigma, l))
}

fn validate<T: Scalar>(problem: &Problem<T>) -> Result<()> {
    let p = &problem.params;
    let (rows, cols) = problem.f0.dims();
    if (problem.grid.rows, problem.grid.cols) != (rows, cols) {
        return Err(Error::ShapeMismatch { expected: vec![problem.grid.rows, problem.grid.cols], got: vec![rows, cols] });
    }
    problem.f0.check_finite()?;
    if !(p.nu > T::zero() && p.nu < T::one()) {
        return Err(Error::param("nu", "must lie in (0, 1)"));
    }
    if !(p.primal_dual_ratio > T::zero() && p.primal_dual_ratio.is_finite()) {
        return Err(Error::param("primal_dual_ratio", "must be positive and finite"));
    }
    if !(p.step_factor > T::zero() && p.step_factor < T::one()) {
        return Err(Error::param("step_factor", "must lie in (0, 1)"));
    }
    if !(p.relaxation > T::zero() && p.relaxation < T::lit(2.0)) {
        return Err(Error::param("relaxation", "must lie in (0, 2)"));
    }
    if !(p.alpha0 > T::zero() && p.alpha1 > T::zero()) {
        return Err(Error::param("alpha", "must be positive"));
    }
    if !p.mu.is_finite() {
        return Err(Error::param("mu", "must be finite"));
    }
    match &problem.fidelity {
        Fidelity::Quadratic { lambda } if !(*lambda > T::zero()) || !lambda.is_finite() => {
            return Err(Error::param("lambda", "must be positive and finite"))
        }
        Fidelity::Masked(mask) if mask.dims() != (rows, cols) => {
            return Err(Error::ShapeMismatch { expected: vec![rows, cols], got: vec![mask.dims().0, mask.dims().1] })
        }
        _ => {}
    }
    Ok(())
}

/// Run the primal-dual iteration.
pub fn solve<T: Scalar>(problem: &Problem<T>) -> Result<Solution<T>> {
    validate(problem)?;
    let start = Instant::now();
    let params = &problem.params;
    let (tau, sigma, l) = step_sizes(problem)?;
    let op = Coupling::new(problem);
    let (inv_tau, inv_sigma) = (tau.map(|x| T::one() / x), sigma.map(|x| T::one() / x));
    let (s1, s2) = (params.s1(), params.s2());
    let f0 = &problem.f0;

    let mut x = initial_primal(problem);
    let mut y = Dual::zeros_like(problem);
    let mut history = History::default();
    let mut sigmas: Vec<T> = Vec::new();
    let mut iterations = 0;

    let l1_radius_p = params.alpha1 * s1;
    let l1_radius_q = params.alpha0 * s1;
    let r_radius = s2 * params.nu;
    let nuc_weight = s2 * (T::one() - params.nu);
    let projector = (problem.moment_active() && params.moment_mode == MomentMode::Projected)
        .then(|| WhitenedMoments::new(problem.grid));
    let rho = params.relaxation;

    let dual_step = |y: &Dual<T>, xbar: &Primal<T>| -> Dual<T> {
        let mut y = y.clone();
        let mut kx = op.apply(xbar);
        kx.scale_blocks(&sigma);
        y.axpy(T::one(), &kx);
        if let Some(p) = y.p.as_mut() {
            project_vec_field(p, l1_radius_p);
        }
        if let Some(q) = y.q.as_mut() {
            project_sym_field(q, l1_radius_q);
        }
        if let Some(d) = y.d.as_mut() {
            prox_dual_data(d, f0, &problem.fidelity, sigma.d);
        }
        if let Some(r) = y.r.as_mut() {
            project_atom_slices(r, r_radius);
        }
        y
    };

    // Written primal-first so that relaxation acts on a matched pair; with
    // `rho = 1` the iterates are exactly those of the dual-first scheme
    // started at `xbar = x`.
    y = dual_step(&y, &x);
    let mut xt = x.clone();
    let mut yt = y.clone();
    for it in 0..params.iterations {
        let mut g = op.adjoint(&y);
        g.scale_blocks(&tau);
        xt = x.clone();
        xt.axpy(-T::one(), &g);
        if let Some(u) = xt.u.as_mut() {
            if !problem.data_on_dual() {
                prox_primal_data(u, f0, &problem.fidelity, tau.u);
            }
        }
        if let Some(c) = xt.c.as_mut() {
            if let Some(w) = &projector {
                w.project_out(c);
            }
            sigmas = prox_nuclear_tensor(c, tau.c * nuc_weight, &params.phi)?;
        }
        let mut xbar = xt.clone();
        xbar.scale_mut(T::lit(2.0));
        xbar.axpy(-T::one(), &x);
        yt = dual_step(&y, &xbar);
        if !xt.is_finite() || !yt.is_finite() {
            return Err(Error::NonfiniteIterate { iteration: it + 1 });
        }

        let residual = xt.scaled_distance(&x, &inv_tau) + yt.scaled_distance(&y, &inv_sigma);
        if rho == T::one() {
            x = xt.clone();
            y = yt.clone();
        } else {
            x.scale_mut(T::one() - rho);
            x.axpy(rho, &xt);
            y.scale_mut(T::one() - rho);
            y.axpy(rho, &yt);
        }
        iterations = it + 1;

        let energy = objective_with_sigmas(problem, &xt, &sigmas);
        history.energy.push(energy.to_f64_lossy());
        history.residual.push(residual.to_f64_lossy());
        history.wall_time.push(start.elapsed().as_secs_f64());
        if residual < params.tol {
            break;
        }
    }
    // report the prox outputs; relaxed points may sit outside the sets
    let (x, y) = (xt, yt);

    let objective = objective_with_sigmas(problem, &x, &sigmas);
    let texture = match &x.c {
        Some(c) => {
            let mut img = Image::zeros(f0.rows(), f0.cols());
            lift_forward_into(c, &mut img);
            img
        }
        None => Image::zeros(f0.rows(), f0.cols()),
    };
    let (u, cartoon) = match &x.u {
        Some(u) => (u.clone(), u.sub(&texture)),
        None => (texture.clone(), Image::zeros(f0.rows(), f0.cols())),
    };
    let atoms = match &x.c {
        Some(c) => atoms_from_tensor(c, params.atoms),
        None => Vec::new(),
    };
    let moment_residual = match &x.c {
        Some(c) => {
            let cmax = c.max_abs();
            if cmax > T::zero() {
                moments(c).max_abs() / cmax
            } else {
                T::zero()
            }
        }
        None => T::zero(),
    };
    let feasibility = dual_feasibility(problem, &y);
    Ok(Solution {
        u,
        cartoon,
        texture,
        v: x.v,
        c: x.c,
        dual: y,
        atoms,
        history,
        iterations,
        tau,
        sigma,
        op_norm: l,
        objective,
        feasibility,
        moment_residual,
    })
}

/// Starting point of the iteration: `u = f0` (unobserved pixels set to the
/// mean of the observed ones), everything else zero.
pub fn initial_primal<T: Scalar>(problem: &Problem<T>) -> Primal<T> {
    let f0 = &problem.f0;
    let mut x = Primal::zeros_like(problem);
    if let Some(u) = x.u.as_mut() {
        *u = f0.clone();
        if let Fidelity::Masked(mask) = &problem.fidelity {
            // unobserved pixels start at the mean of the observed ones
            let (sum, cnt) = f0
                .as_slice()
                .iter()
                .zip(mask.as_slice())
                .filter(|(_, &k)| k)
                .fold((T::zero(), 0usize), |(s, c), (&v, _)| (s + v, c + 1));
            let fill = if cnt > 0 { sum / T::from_usize_lossy(cnt) } else { T::zero() };
            for (v, &k) in u.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                if !k {
                    *v = fill;
                }
            }
        }
    }
    x
}

fn prox_primal_data<T: Scalar>(u: &mut Image<T>, f0: &Image<T>, fidelity: &Fidelity<T>, tau: T) {
    match fidelity {
        Fidelity::Equality => u.as_mut_slice().copy_from_slice(f0.as_slice()),
        Fidelity::Masked(mask) => crate::prox::project_inpaint(u, f0, mask),
        Fidelity::Quadratic { lambda } => {
            let tl = tau * *lambda;
            for (x, &f) in u.as_mut_slice().iter_mut().zip(f0.as_slice()) {
                *x = prox_l2_data(*x, f, tl);
            }
        }
    }
}

fn prox_dual_data<T: Scalar>(d: &mut Image<T>, f0: &Image<T>, fidelity: &Fidelity<T>, sigma: T) {
    match fidelity {
        Fidelity::Equality => d.axpy(-sigma, f0),
        Fidelity::Masked(mask) => {
            for ((x, &f), &k) in d.as_mut_slice().iter_mut().zip(f0.as_slice()).zip(mask.as_slice()) {
                *x = if k { *x - sigma * f } else { T::zero() };
            }
        }
        Fidelity::Quadratic { lambda } => {
            for (x, &f) in d.as_mut_slice().iter_mut().zip(f0.as_slice()) {
                *x = prox_conj_l2_data(*x, f, sigma, *lambda);
            }
        }
    }
}

fn dual_feasibility<T: Scalar>(problem: &Problem<T>, y: &Dual<T>) -> Feasibility {
    let params = &problem.params;
    let excess = |norm: T, radius: T| ((norm - radius) / radius).max(T::zero()).to_f64_lossy();
    let mut out = Feasibility::default();
    if let Some(p) = &y.p {
        out.p = excess(p.linf_norm(), params.alpha1 * params.s1());
    }
    if let Some(q) = &y.q {
        out.q = excess(q.linf_norm(), params.alpha0 * params.s1());
    }
    if let Some(r) = &y.r {
        let worst = r
            .as_slice()
            .chunks_exact(problem.grid.atom_len())
            .map(|s| s.iter().map(|&x| x * x).sum::<T>().sqrt())
            .fold(T::zero(), T::max);
        out.r = excess(worst, params.s2() * params.nu);
    }
    out
}

/// Model energy at a primal point (indicator data terms count as zero).
pub fn objective<T: Scalar>(problem: &Problem<T>, x: &Primal<T>) -> T {
    let sigmas = match &x.c {
        Some(c) => crate::linalg::thin_svd(&reshape_to_matrix(c)).values,
        None => Vec::new(),
    };
    objective_with_sigmas(problem, x, &sigmas)
}

fn objective_with_sigmas<T: Scalar>(problem: &Problem<T>, x: &Primal<T>, sigmas: &[T]) -> T {
    let params = &problem.params;
    let (rows, cols) = problem.f0.dims();
    let kc = x.c.as_ref().map(|c| {
        let mut img = Image::zeros(rows, cols);
        lift_forward_into(c, &mut img);
        img
    });
    let mut total = T::zero();

    if let Fidelity::Quadratic { lambda } = &problem.fidelity {
        let recon = match (&x.u, &kc) {
            (Some(u), _) => u.clone(),
            (None, Some(kc)) => kc.clone(),
            (None, None) => Image::zeros(rows, cols),
        };
        let observed = match &problem.kernel {
            Some(k) => blur(&recon, k),
            None => recon,
        };
        let r = observed.sub(&problem.f0);
        total += *lambda * T::lit(0.5) * r.norm_sq();
    }

    if let (Some(u), Some(v)) = (&x.u, &x.v) {
        let w = match &kc {
            Some(kc) => u.sub(kc),
            None => u.clone(),
        };
        let mut p = VecField::zeros(rows, cols);
        gradient_into(&w, &mut p);
        p.axpy(-T::one(), v);
        let mut q = SymField::zeros(rows, cols);
        sym_jacobian_into(v, &mut q);
        total += params.s1() * (params.alpha1 * p.l1_norm() + params.alpha0 * q.l1_norm());
    }

    if let Some(c) = &x.c {
        total += params.s2() * (params.nu * c.l12_norm() + (T::one() - params.nu) * params.phi.energy(sigmas));
    }
    total
}

/// Top-`k` right singular vectors of the tensor reshaped to `n x n` atoms,
/// each with its largest-magnitude entry made positive.
pub fn atoms_from_tensor<T: Scalar>(c: &LiftedTensor<T>, k: usize) -> Vec<Atom<T>> {
    let n = c.grid().n;
    let svd = crate::linalg::thin_svd(&reshape_to_matrix(c));
    // the Gram route leaves round-off singular values near sqrt(eps) * s_max
    let cut = T::lit(1e-6) * svd.values.first().copied().unwrap_or(T::zero());
    svd.values
        .iter()
        .enumerate()
        .take(k)
        .filter(|(_, &s)| s > cut)
        .map(|(j, &s)| {
            let mut values = svd.vt.row(j).to_vec();
            let pivot = values.iter().copied().fold(T::zero(), |m, x| if x.abs() > m.abs() { x } else { m });
            if pivot < T::zero() {
                values.iter_mut().for_each(|x| *x = -*x);
            }
            Atom { n, sigma: s, values }
        })
        .collect()
}
