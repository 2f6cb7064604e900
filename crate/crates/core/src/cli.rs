//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Array, Image, Mask};
use crate::harness::{add_noise, atom_recovery, gen_mask, gen_patches_scene, gen_texture_scene, psnr, SyntheticScene};
use crate::io::{atom_sheet, read_mask, read_png, rescale_for_display, write_mask, write_png};
use crate::operators::{blur, GaussKernel};
use crate::problems::{build_problem, Task, TaskConfig};
use crate::selftest::{adjoint_checks, prox_checks, Check};
use crate::solver::{solve, Atom, DualSteps, Feasibility, Fidelity, MomentMode, PrimalSteps, Solution, StepRule, Variant};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const SCENE_SCHEMA_VERSION: u32 = 1;

/// Exit status for invalid flags or flag combinations.
pub const EXIT_USAGE: i32 = 2;
/// Exit status when the iteration diverges.
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "atomlift", version, about = "Cartoon/texture decomposition and reconstruction with learned convolutional atoms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split an image into cartoon and texture (u = f0 exactly).
    Decompose(SolveArgs),
    /// Quadratic data term; `--noise` first corrupts the input.
    Denoise(DenoiseArgs),
    /// Hard constraint on observed pixels (`--keep` or `--mask`).
    Inpaint(InpaintArgs),
    /// Quadratic data term on the blurred reconstruction.
    Deconv(DeconvArgs),
    /// Write a synthetic scene with its ground truth.
    Gen(GenArgs),
    /// Run the adjoint and prox oracle suites.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PhiKind {
    Linear,
    Semiconvex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SceneKind {
    Texture,
    Patches,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Input image (PNG; color is converted to gray).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// tgv | txt | ct-cvx | ct-scvx. Default: ct-scvx with `--phi semiconvex`, else ct-cvx.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    mu: f64,
    /// Default depends on task and variant.
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long, value_enum)]
    phi: Option<PhiKind>,
    /// Semiconvex potential scale; 0.1 for inpainting, 2.0 otherwise.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 0.99)]
    delta: f64,
    /// Atom size.
    #[arg(long, default_value_t = 15)]
    n: usize,
    /// Atom position stride; must divide `n`.
    #[arg(long, default_value_t = 3)]
    eta: usize,
    #[arg(long, default_value_t = 3000)]
    iterations: usize,
    /// Zero-moment constraint on atoms (default: off for txt, on otherwise).
    #[arg(long)]
    moment: Option<bool>,
    /// Number of atoms in the sheet and the report.
    #[arg(long, default_value_t = 9)]
    atoms: usize,
    /// Seed for simulated corruption (noise, mask).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    power_seed: u64,
    #[arg(long, default_value_t = 50)]
    power_iterations: usize,
    #[arg(long, default_value_t = 0.98)]
    step_factor: f64,
    /// Primal steps are multiplied and dual steps divided by this.
    #[arg(long, default_value_t = 0.03)]
    primal_dual_ratio: f64,
    /// Over-relaxation in (0, 2); 1 gives the plain iteration.
    #[arg(long, default_value_t = 1.8)]
    relaxation: f64,
    /// uniform (sigma = tau = step-factor / L) or preconditioned (per-block steps).
    #[arg(long, default_value_t = StepRule::Preconditioned)]
    step_rule: StepRule,
    /// projected (moment constraint inside the C prox) or dual (multiplier m).
    #[arg(long, default_value_t = MomentMode::Projected)]
    moment_mode: MomentMode,
    /// Stop once the fixed-point residual drops below this value.
    #[arg(long, default_value_t = 0.0)]
    tol: f64,
    /// Clean image for PSNR.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Scene sidecar JSON written by `gen`, for atom recovery scores.
    #[arg(long)]
    truth_atoms: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DenoiseArgs {
    #[command(flatten)]
    solve: SolveArgs,
    #[arg(long, default_value_t = crate::problems::DEFAULT_LAMBDA)]
    lambda: f64,
    /// Add Gaussian noise with this standard deviation (relative to range 1).
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Debug, Args)]
struct InpaintArgs {
    #[command(flatten)]
    solve: SolveArgs,
    /// Keep this fraction of pixels, chosen uniformly with `--seed`.
    #[arg(long, conflicts_with = "mask")]
    keep: Option<f64>,
    /// Mask PNG; nonzero pixels are observed.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Accepted for clarity: inpainting has no data weight.
    #[arg(long)]
    lambda_free: bool,
}

#[derive(Debug, Args)]
struct DeconvArgs {
    #[command(flatten)]
    solve: SolveArgs,
    #[arg(long, default_value_t = crate::problems::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = 9)]
    kernel_size: usize,
    /// Gaussian standard deviation in pixels (default 0.2 x kernel size).
    #[arg(long)]
    kernel_sigma: Option<f64>,
    /// Treat the input as clean: blur it, then add `--noise`.
    #[arg(long)]
    degrade: bool,
    #[arg(long, requires = "degrade")]
    noise: Option<f64>,
    /// Allow the txt and ct-scvx variants.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "texture")]
    scene: SceneKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "scene")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random pairs per adjoint check.
    #[arg(long, default_value_t = 100)]
    pairs: usize,
}

/// Parameters echoed into the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportParameters {
    pub lambda: Option<f64>,
    pub mu: f64,
    pub nu: f64,
    pub phi: String,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub alpha0: f64,
    pub alpha1: f64,
    pub n: usize,
    pub eta: usize,
    pub moment: bool,
    pub max_iterations: usize,
    pub step_factor: f64,
    pub power_iterations: usize,
    pub power_seed: u64,
    pub seed: u64,
    pub tol: f64,
    pub moment_mode: MomentMode,
    pub step_rule: StepRule,
    pub primal_dual_ratio: f64,
    pub relaxation: f64,
    pub tau: PrimalSteps<f64>,
    pub sigma: DualSteps<f64>,
    pub op_norm: f64,
    pub keep: Option<f64>,
    pub noise: Option<f64>,
    pub kernel_size: Option<usize>,
    pub kernel_sigma: Option<f64>,
}

/// Contents of `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub task: Task,
    pub variant: Variant,
    pub parameters: ReportParameters,
    pub iterations: usize,
    pub objective: f64,
    pub residual: f64,
    pub feasibility: Feasibility,
    pub moment_residual: f64,
    pub singular_values: Vec<f64>,
    pub psnr: Option<f64>,
    pub psnr_observed: Option<f64>,
    pub atom_recovery: Option<Vec<f64>>,
    pub wall_time: f64,
}

impl RunReport {
    fn numbers(&self) -> Vec<f64> {
        let p = &self.parameters;
        let mut v = vec![p.mu, p.nu, p.alpha0, p.alpha1, p.step_factor, p.tol, p.op_norm, p.primal_dual_ratio, p.relaxation];
        v.extend([p.tau.u, p.tau.v, p.tau.c, p.sigma.p, p.sigma.q, p.sigma.d, p.sigma.r, p.sigma.m]);
        v.extend([p.lambda, p.epsilon, p.delta, p.keep, p.noise, p.kernel_sigma].into_iter().flatten());
        v.extend([self.objective, self.residual, self.moment_residual, self.wall_time]);
        v.extend([self.feasibility.p, self.feasibility.q, self.feasibility.r]);
        v.extend(self.singular_values.iter().copied());
        v.extend([self.psnr, self.psnr_observed].into_iter().flatten());
        v.extend(self.atom_recovery.iter().flatten().copied());
        v
    }

    pub fn all_finite(&self) -> bool {
        self.numbers().iter().all(|x| x.is_finite())
    }
}

/// Sidecar of a generated scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSidecar {
    pub schema_version: u32,
    pub kind: String,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub atom_size: usize,
    pub stride: usize,
    /// Each atom as rows of values.
    pub atoms: Vec<Vec<Vec<f64>>>,
}

impl SceneSidecar {
    pub fn from_scene(scene: &SyntheticScene<f64>) -> Self {
        let (rows, cols) = scene.image.dims();
        let atoms = scene.true_atoms.iter().map(|a| a.values.chunks(a.n).map(<[f64]>::to_vec).collect()).collect();
        Self { schema_version: SCENE_SCHEMA_VERSION, kind: scene.kind.into(), seed: scene.seed, rows, cols, atom_size: crate::harness::TILE, stride: 3, atoms }
    }

    pub fn true_atoms(&self) -> Result<Vec<Atom<f64>>> {
        self.atoms
            .iter()
            .map(|rows| {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(Error::param("truth-atoms", "atoms must be square"));
                }
                let values: Vec<f64> = rows.concat();
                let sigma = values.iter().map(|x| x * x).sum::<f64>().sqrt();
                Ok(Atom { n, sigma, values })
            })
            .collect()
    }
}

/// Flag name shown to the user for a parameter error.
fn flag_for(name: &str) -> String {
    match name {
        "alpha" => "--alpha".into(),
        other => format!("--{}", other.replace('_', "-")),
    }
}

fn usage(flag: &str, reason: impl std::fmt::Display) -> Error {
    Error::InvalidParameter { name: "cli", reason: format!("{flag}: {reason}") }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonfiniteIterate { .. } | Error::StepsizeTooLarge { .. } => EXIT_DIVERGED,
        Error::InvalidParameter { .. }
        | Error::InvalidStride { .. }
        | Error::AtomTooLarge { .. }
        | Error::MissingMask
        | Error::MissingKernel
        | Error::IncompatibleVariant { .. } => EXIT_USAGE,
        Error::ShapeMismatch { .. } => EXIT_USAGE,
        _ => 1,
    }
}

fn describe(err: &Error) -> String {
    match err {
        Error::InvalidParameter { name: "cli", reason } => format!("invalid flag {reason}"),
        Error::InvalidParameter { name, reason } => format!("invalid flag {}: {reason}", flag_for(name)),
        Error::InvalidStride { .. } => format!("invalid flag --eta: {err}"),
        Error::AtomTooLarge { .. } => format!("invalid flag --n: {err}"),
        Error::MissingMask => "inpaint needs --keep or --mask".into(),
        Error::IncompatibleVariant { .. } => format!("invalid flag --variant: {err} (pass --force to override)"),
        Error::ShapeMismatch { .. } => format!("invalid flag --mask: {err}"),
        Error::NonfiniteIterate { .. } => format!("{err}; try a smaller --step-factor"),
        _ => err.to_string(),
    }
}

/// Cap rayon's global pool from `ATOMLIFT_THREADS`; returns the thread count
/// in effect. Later calls keep the first configuration.
pub fn init_threads() -> Result<usize> {
    if let Ok(raw) = std::env::var("ATOMLIFT_THREADS") {
        let threads: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| Error::param("threads", format!("ATOMLIFT_THREADS must be a positive integer, got {raw:?}")))?;
        // already initialized: keep the existing pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    Ok(rayon::current_num_threads())
}

/// Parse `argv` (including the program name) and run; returns the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = init_threads().and_then(|_| dispatch(cli.command));
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            exit_code(&err)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Decompose(a) => solve_command(Task::Decompose, a, Extra::default()),
        Command::Denoise(a) => solve_command(Task::Denoise, a.solve, Extra { lambda: Some(a.lambda), noise: a.noise, ..Default::default() }),
        Command::Inpaint(a) => {
            let _ = a.lambda_free;
            solve_command(Task::Inpaint, a.solve, Extra { keep: a.keep, mask: a.mask, ..Default::default() })
        }
        Command::Deconv(a) => solve_command(
            Task::Deconv,
            a.solve,
            Extra {
                lambda: Some(a.lambda),
                noise: a.noise,
                kernel: Some((a.kernel_size, a.kernel_sigma)),
                degrade: a.degrade,
                force: a.force,
                ..Default::default()
            },
        ),
        Command::Gen(a) => gen_command(a),
        Command::Selftest(a) => selftest_command(a),
    }
}

#[derive(Default)]
struct Extra {
    lambda: Option<f64>,
    noise: Option<f64>,
    keep: Option<f64>,
    mask: Option<PathBuf>,
    kernel: Option<(usize, Option<f64>)>,
    degrade: bool,
    force: bool,
}

fn resolve_variant(a: &SolveArgs) -> Result<Variant> {
    match (a.variant, a.phi) {
        (None, Some(PhiKind::Semiconvex)) => Ok(Variant::CtScvx),
        (None, _) => Ok(Variant::CtCvx),
        (Some(Variant::CtScvx), Some(PhiKind::Linear)) => Err(usage("--phi", "ct-scvx uses the semiconvex potential")),
        (Some(v), Some(PhiKind::Semiconvex)) if v != Variant::CtScvx => {
            Err(usage("--phi", format!("semiconvex potential requires --variant ct-scvx, got {v}")))
        }
        (Some(v), _) => Ok(v),
    }
}

fn check_range(flag: &str, value: Option<f64>, lo: f64, hi: f64) -> Result<()> {
    match value {
        Some(x) if !(x >= lo && x <= hi) => Err(usage(flag, format!("must lie in [{lo}, {hi}], got {x}"))),
        _ => Ok(()),
    }
}

fn solve_command(task: Task, a: SolveArgs, extra: Extra) -> Result<i32> {
    let start = Instant::now();
    let variant = resolve_variant(&a)?;
    check_range("--noise", extra.noise, 0.0, f64::INFINITY)?;
    check_range("--keep", extra.keep, 0.0, 1.0)?;
    if a.iterations == 0 {
        return Err(usage("--iterations", "must be at least 1"));
    }
    if !(a.step_factor > 0.0 && a.step_factor < 1.0) {
        return Err(usage("--step-factor", "must lie in (0, 1)"));
    }
    if !(a.delta >= 0.0 && a.delta < 1.0) {
        return Err(usage("--delta", "must lie in [0, 1)"));
    }
    if a.epsilon.is_some_and(|e| !(e > 0.0 && e.is_finite())) {
        return Err(usage("--epsilon", "must be positive"));
    }

    let input: Image<f64> = read_png(&a.input)?;
    let (rows, cols) = input.dims();
    let mut truth = match &a.truth {
        Some(p) => Some(read_png::<f64>(p)?),
        None => None,
    };
    let truth_atoms = match &a.truth_atoms {
        Some(p) => Some(serde_json::from_str::<SceneSidecar>(&fs::read_to_string(p)?)?.true_atoms()?),
        None => None,
    };

    let mut mask: Option<Mask> = None;
    let mut kernel: Option<GaussKernel<f64>> = None;
    let mut f0 = input.clone();
    match task {
        Task::Denoise => {
            if let Some(sigma) = extra.noise {
                f0 = add_noise(&input, sigma, a.seed);
                truth.get_or_insert_with(|| input.clone());
            }
        }
        Task::Inpaint => {
            let m = match (&extra.mask, extra.keep) {
                (Some(path), _) => read_mask(path)?,
                (None, Some(keep)) => {
                    truth.get_or_insert_with(|| input.clone());
                    gen_mask(rows, cols, keep, a.seed)?
                }
                (None, None) => return Err(Error::MissingMask),
            };
            for (x, &keep) in f0.as_mut_slice().iter_mut().zip(m.as_slice()) {
                if !keep {
                    *x = 0.0;
                }
            }
            mask = Some(m);
        }
        Task::Deconv => {
            let (size, sigma) = extra.kernel.expect("deconv carries a kernel");
            let k = match sigma {
                Some(s) => GaussKernel::new(size, s),
                None => GaussKernel::with_relative_sigma(size, 0.2),
            }
            .map_err(|e| usage("--kernel-size", e))?;
            if extra.degrade {
                f0 = blur(&input, &k);
                if let Some(sigma) = extra.noise {
                    f0 = add_noise(&f0, sigma, a.seed);
                }
                truth.get_or_insert_with(|| input.clone());
            }
            kernel = Some(k);
        }
        Task::Decompose => {}
    }

    let mut cfg = TaskConfig::new(task, variant);
    if let Some(l) = extra.lambda {
        cfg.lambda = l;
    }
    cfg.mu = a.mu;
    cfg.nu = a.nu;
    cfg.epsilon = a.epsilon;
    cfg.delta = a.delta;
    cfg.n = a.n;
    cfg.eta = a.eta;
    cfg.moment = a.moment;
    cfg.force = extra.force;
    cfg.solver.iterations = a.iterations;
    cfg.solver.power_iterations = a.power_iterations;
    cfg.solver.power_seed = a.power_seed;
    cfg.solver.step_factor = a.step_factor;
    cfg.solver.step_rule = a.step_rule;
    cfg.solver.primal_dual_ratio = a.primal_dual_ratio;
    cfg.solver.relaxation = a.relaxation;
    cfg.solver.moment_mode = a.moment_mode;
    cfg.solver.tol = a.tol;
    cfg.solver.atoms = a.atoms;
    let spec = build_problem(&cfg, f0.clone(), mask.clone(), kernel.clone())?;
    let sol = solve(&spec.problem)?;

    fs::create_dir_all(&a.out)?;
    write_outputs(&a.out, &sol, task, &f0, mask.as_ref())?;

    let psnr_value = truth.as_ref().map(|t| psnr(t, &sol.u)).transpose()?;
    let psnr_observed = match (task, truth.as_ref()) {
        (Task::Denoise | Task::Deconv, Some(t)) => Some(psnr(t, &f0)?),
        _ => None,
    };
    let params = &spec.problem.params;
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        task,
        variant,
        parameters: ReportParameters {
            lambda: match spec.problem.fidelity {
                Fidelity::Quadratic { lambda } => Some(lambda),
                _ => None,
            },
            mu: params.mu,
            nu: params.nu,
            phi: match params.phi {
                crate::prox::Phi::Linear => "linear".into(),
                crate::prox::Phi::Semiconvex { .. } => "semiconvex".into(),
            },
            epsilon: matches!(variant, Variant::CtScvx).then(|| cfg.epsilon()),
            delta: matches!(variant, Variant::CtScvx).then_some(cfg.delta),
            alpha0: params.alpha0,
            alpha1: params.alpha1,
            n: a.n,
            eta: a.eta,
            moment: params.moment && variant.has_texture(),
            max_iterations: params.iterations,
            step_factor: params.step_factor,
            power_iterations: params.power_iterations,
            power_seed: params.power_seed,
            seed: a.seed,
            tol: params.tol,
            moment_mode: params.moment_mode,
            step_rule: params.step_rule,
            primal_dual_ratio: params.primal_dual_ratio,
            relaxation: params.relaxation,
            tau: sol.tau,
            sigma: sol.sigma,
            op_norm: sol.op_norm,
            keep: extra.keep,
            noise: extra.noise,
            kernel_size: kernel.as_ref().map(|k| k.size()),
            kernel_sigma: kernel.as_ref().map(|k| k.sigma()),
        },
        iterations: sol.iterations,
        objective: sol.objective,
        residual: sol.history.residual.last().copied().unwrap_or(0.0),
        feasibility: sol.feasibility,
        moment_residual: sol.moment_residual,
        singular_values: sol.atoms.iter().map(|a| a.sigma).collect(),
        psnr: psnr_value,
        psnr_observed,
        atom_recovery: truth_atoms.map(|t| t.iter().map(|atom| atom_recovery(atom, &sol.atoms)).collect()),
        wall_time: start.elapsed().as_secs_f64(),
    };
    if !report.all_finite() {
        return Err(Error::NonfiniteIterate { iteration: sol.iterations });
    }
    fs::write(a.out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "{task} {variant}: {} iterations, objective {:.6}, residual {:.3e}{}",
        report.iterations,
        report.objective,
        report.residual,
        report.psnr.map(|p| format!(", psnr {p:.2} dB")).unwrap_or_default()
    );
    Ok(0)
}

fn write_outputs(out: &Path, sol: &Solution<f64>, task: Task, f0: &Image<f64>, mask: Option<&Mask>) -> Result<()> {
    write_png(out.join("recon.png"), &sol.u)?;
    write_png(out.join("cartoon.png"), &sol.cartoon)?;
    write_png(out.join("texture.png"), &rescale_for_display(&sol.texture))?;
    write_png(out.join("atoms.png"), &atom_sheet(&sol.atoms))?;
    if task != Task::Decompose {
        write_png(out.join("observed.png"), f0)?;
    }
    if let Some(m) = mask {
        write_mask(out.join("mask.png"), m)?;
    }
    Ok(())
}

fn gen_command(a: GenArgs) -> Result<i32> {
    let scene = match a.scene {
        SceneKind::Texture => gen_texture_scene::<f64>(a.seed),
        SceneKind::Patches => gen_patches_scene::<f64>(a.seed),
    };
    fs::create_dir_all(&a.out)?;
    write_png(a.out.join("scene.png"), &scene.image)?;
    write_png(a.out.join("cartoon.png"), &scene.cartoon)?;
    write_png(a.out.join("texture.png"), &rescale_for_display(&scene.texture))?;
    write_png(a.out.join("atoms.png"), &atom_sheet(&scene.true_atoms))?;
    let sidecar = SceneSidecar::from_scene(&scene);
    fs::write(a.out.join("scene.json"), serde_json::to_string_pretty(&sidecar)? + "\n")?;
    println!("{} scene (seed {}) written to {}", scene.kind, a.seed, a.out.display());
    Ok(0)
}

fn selftest_command(a: SelftestArgs) -> Result<i32> {
    let checks: Vec<Check> = adjoint_checks(a.pairs, a.seed).into_iter().chain(prox_checks(a.seed)).collect();
    let mut ok = true;
    for c in &checks {
        ok &= c.passed();
        println!("{} {:<22} worst {:.3e} (tol {:.0e})", if c.passed() { "PASS" } else { "FAIL" }, c.name, c.worst, c.tolerance);
    }
    Ok(if ok { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_resolution() {
        let parse = |extra: &[&str]| {
            let mut argv = vec!["atomlift", "decompose", "--input", "x.png"];
            argv.extend_from_slice(extra);
            match Cli::try_parse_from(argv).unwrap().command {
                Command::Decompose(a) => resolve_variant(&a),
                _ => unreachable!(),
            }
        };
        assert_eq!(parse(&[]).unwrap(), Variant::CtCvx);
        assert_eq!(parse(&["--phi", "semiconvex"]).unwrap(), Variant::CtScvx);
        assert_eq!(parse(&["--variant", "txt"]).unwrap(), Variant::Txt);
        assert!(parse(&["--variant", "tgv", "--phi", "semiconvex"]).is_err());
        assert!(parse(&["--variant", "ct-scvx", "--phi", "linear"]).is_err());
    }

    #[test]
    fn negative_mu_parses() {
        let cli = Cli::try_parse_from(["atomlift", "denoise", "--input", "x.png", "--mu", "-2"]).unwrap();
        match cli.command {
            Command::Denoise(a) => assert_eq!(a.solve.mu, -2.0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn messages_name_the_flag() {
        assert!(describe(&Error::param("nu", "must lie in (0, 1)")).contains("--nu"));
        assert!(describe(&Error::InvalidStride { n: 15, eta: 4 }).contains("--eta"));
        assert_eq!(exit_code(&Error::NonfiniteIterate { iteration: 3 }), EXIT_DIVERGED);
        assert_eq!(exit_code(&Error::MissingKernel), EXIT_USAGE);
    }

    #[test]
    fn sidecar_round_trip() {
        let scene = gen_texture_scene::<f64>(4);
        let side = SceneSidecar::from_scene(&scene);
        let back: SceneSidecar = serde_json::from_str(&serde_json::to_string(&side).unwrap()).unwrap();
        assert_eq!(back.true_atoms().unwrap(), scene.true_atoms);
    }
}
