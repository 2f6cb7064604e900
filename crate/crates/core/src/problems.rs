//! Task assembly: wires decomposition, inpainting, denoising and
//! deconvolution data terms into a [`Problem`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{coeff_grid, Image, Mask};
use crate::operators::GaussKernel;
use crate::prox::Phi;
use crate::scalar::Scalar;
use crate::solver::{Fidelity, Problem, SolverParams, Variant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Decompose,
    Inpaint,
    Denoise,
    Deconv,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Decompose, Task::Inpaint, Task::Denoise, Task::Deconv];

    pub fn name(self) -> &'static str {
        match self {
            Task::Decompose => "decompose",
            Task::Inpaint => "inpaint",
            Task::Denoise => "denoise",
            Task::Deconv => "deconv",
        }
    }

    /// Default `nu` per task and variant.
    pub fn default_nu(self, variant: Variant) -> f64 {
        match (self, variant) {
            (Task::Decompose, Variant::Txt) => 0.75,
            (Task::Decompose, _) => 0.95,
            _ => 0.975,
        }
    }

    /// Default `epsilon` of the semiconvex potential.
    pub fn default_epsilon(self) -> f64 {
        match self {
            Task::Inpaint => 0.1,
            _ => 2.0,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::param("task", format!("unknown task {s:?}")))
    }
}

/// Default `delta` of the semiconvex potential.
pub const DEFAULT_DELTA: f64 = 0.99;
/// Default data weight for the quadratic data terms.
pub const DEFAULT_LAMBDA: f64 = 10.0;

/// User-facing knobs; `None` picks the task default.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskConfig<T> {
    pub task: Task,
    pub variant: Variant,
    pub lambda: T,
    pub mu: T,
    pub nu: Option<T>,
    pub epsilon: Option<T>,
    pub delta: T,
    pub n: usize,
    pub eta: usize,
    /// Moment constraint; off for TXT unless set.
    pub moment: Option<bool>,
    /// Allow deconvolution with the TXT and CT-scvx variants.
    pub force: bool,
    /// Iteration budget, step and power-iteration settings. `nu`, `mu`,
    /// `phi` and `moment` are overwritten.
    pub solver: SolverParams<T>,
}

impl<T: Scalar> TaskConfig<T> {
    pub fn new(task: Task, variant: Variant) -> Self {
        Self {
            task,
            variant,
            lambda: T::lit(DEFAULT_LAMBDA),
            mu: T::zero(),
            nu: None,
            epsilon: None,
            delta: T::lit(DEFAULT_DELTA),
            n: 15,
            eta: 3,
            moment: None,
            force: false,
            solver: SolverParams::default(),
        }
    }

    pub fn nu(&self) -> T {
        self.nu.unwrap_or_else(|| T::lit(self.task.default_nu(self.variant)))
    }

    pub fn epsilon(&self) -> T {
        self.epsilon.unwrap_or_else(|| T::lit(self.task.default_epsilon()))
    }

    pub fn phi(&self) -> Result<Phi<T>> {
        match self.variant {
            Variant::CtScvx => Phi::semiconvex(self.epsilon(), self.delta),
            _ => Ok(Phi::Linear),
        }
    }

    pub fn params(&self) -> Result<SolverParams<T>> {
        Ok(SolverParams {
            mu: self.mu,
            nu: self.nu(),
            phi: self.phi()?,
            moment: self.moment.unwrap_or(self.variant != Variant::Txt),
            ..self.solver.clone()
        })
    }
}

/// An assembled problem together with the task that produced it.
#[derive(Clone, Debug)]
pub struct ProblemSpec<T> {
    pub task: Task,
    pub problem: Problem<T>,
}

impl<T> ProblemSpec<T> {
    pub fn mask(&self) -> Option<&Mask> {
        match &self.problem.fidelity {
            Fidelity::Masked(m) => Some(m),
            _ => None,
        }
    }
}

/// Assemble a problem. `mask` is required by (and only accepted for)
/// inpainting; `kernel` likewise for deconvolution.
pub fn build_problem<T: Scalar>(
    cfg: &TaskConfig<T>,
    f0: Image<T>,
    mask: Option<Mask>,
    kernel: Option<GaussKernel<T>>,
) -> Result<ProblemSpec<T>> {
    let (rows, cols) = f0.dims();
    let grid = coeff_grid(rows, cols, cfg.n, cfg.eta)?;
    if mask.is_some() && cfg.task != Task::Inpaint {
        return Err(Error::param("mask", format!("not used by {}", cfg.task)));
    }
    if kernel.is_some() && cfg.task != Task::Deconv {
        return Err(Error::param("kernel", format!("not used by {}", cfg.task)));
    }
    let fidelity = match cfg.task {
        Task::Decompose => Fidelity::Equality,
        Task::Inpaint => {
            let mask = mask.ok_or(Error::MissingMask)?;
            if mask.dims() != (rows, cols) {
                return Err(Error::ShapeMismatch { expected: vec![rows, cols], got: vec![mask.dims().0, mask.dims().1] });
            }
            Fidelity::Masked(mask)
        }
        Task::Denoise | Task::Deconv => {
            if !(cfg.lambda > T::zero()) || !cfg.lambda.is_finite() {
                return Err(Error::param("lambda", "must be positive and finite"));
            }
            Fidelity::Quadratic { lambda: cfg.lambda }
        }
    };
    if cfg.task == Task::Deconv {
        if kernel.is_none() {
            return Err(Error::MissingKernel);
        }
        if !cfg.force && !matches!(cfg.variant, Variant::Tgv | Variant::CtCvx) {
            return Err(Error::IncompatibleVariant { task: cfg.task.name().into(), variant: cfg.variant.name().into() });
        }
    }
    let params = cfg.params()?;
    Ok(ProblemSpec { task: cfg.task, problem: Problem { f0, grid, variant: cfg.variant, fidelity, kernel, params } })
}
