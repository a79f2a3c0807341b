//! Minimisation of `Σ μ_i d(x_i; y_i) + TV_ε(x)`.
//!
//! Gaussian data use Nesterov/FISTA acceleration with the fixed step `1/L`,
//! `L = max μ + 8/ε`. Poisson data use projected acceleration onto `[0,1]`
//! with a non-monotone Armijo line search: a trial point is accepted when its
//! objective is below the maximum of the last `M` accepted objectives minus a
//! sufficient-decrease margin.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::fidelity::{self, FidelityKind};
use crate::image::Image;
use crate::noise::DEFAULT_ETA;
use crate::tv::{self, TvWorkspace, DEFAULT_EPS};

pub const MU_MIN: f64 = 0.01;
pub const MU_MAX: f64 = 240.0;

/// Backtracking gives up after this many consecutive step reductions.
pub const MAX_SHRINKS: usize = 60;

/// Per-pixel fidelity weights, each in `[MU_MIN, MU_MAX]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MuMap(Image);

impl MuMap {
    pub fn new(weights: Image) -> Result<Self> {
        if let Some((i, &v)) = weights
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, &v)| !(MU_MIN..=MU_MAX).contains(&v))
        {
            return Err(Error::Argument(format!(
                "mu[{i}] = {v} outside [{MU_MIN}, {MU_MAX}]"
            )));
        }
        Ok(MuMap(weights))
    }

    /// Clamps every weight into the admissible range.
    pub fn from_clamped(weights: Image) -> Self {
        MuMap(weights.clamped(MU_MIN, MU_MAX))
    }

    pub fn constant(width: usize, height: usize, mu: f64) -> Result<Self> {
        Self::new(Image::filled(width, height, mu))
    }

    pub fn as_image(&self) -> &Image {
        &self.0
    }

    pub fn into_image(self) -> Image {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn max(&self) -> f64 {
        self.0.as_slice().iter().copied().fold(f64::MIN, f64::max)
    }
}

/// Step-size policy for the projected (Poisson) path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backtracking {
    /// Fixed step equal to `SolverConfig::initial_step`.
    Off,
    NonMonotone {
        memory: usize,
        shrink: f64,
        grow: f64,
        sufficient_decrease: f64,
    },
}

impl Default for Backtracking {
    fn default() -> Self {
        Backtracking::NonMonotone {
            memory: 3,
            shrink: 0.5,
            grow: 1.05,
            sufficient_decrease: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub eps: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub backtrack: Backtracking,
    pub eta: f64,
    pub initial_step: f64,
    /// Keep a copy of every accepted iterate in the report.
    pub record_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            max_iters: 500,
            rel_tol: 1e-5,
            backtrack: Backtracking::default(),
            eta: DEFAULT_ETA,
            initial_step: 1.0,
            record_iterates: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.rel_tol > 0.0) {
            return bad(format!("rel_tol must be positive, got {}", self.rel_tol));
        }
        if !(self.eta > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.initial_step > 0.0) {
            return bad(format!(
                "initial step must be positive, got {}",
                self.initial_step
            ));
        }
        if let Backtracking::NonMonotone {
            memory,
            shrink,
            grow,
            sufficient_decrease,
        } = self.backtrack
        {
            if memory == 0 || !(shrink > 0.0 && shrink < 1.0) || !(grow > 1.0) {
                return bad(format!(
                    "backtracking needs memory >= 1 and 0 < shrink < 1 < grow, got M={memory} rho={shrink} tau={grow}"
                ));
            }
            if !(sufficient_decrease > 0.0) {
                return bad("sufficient-decrease constant must be positive".into());
            }
        }
        Ok(())
    }
}

/// One accepted line-search step of the projected solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptedStep {
    pub step: f64,
    /// Maximum objective over the memory window at the time of acceptance.
    pub reference: f64,
    /// `‖x⁺ − x̄‖²`.
    pub sq_dist: f64,
    pub objective: f64,
    pub shrinks: usize,
}

impl AcceptedStep {
    /// Whether the recorded values satisfy the non-monotone acceptance rule.
    pub fn satisfies_rule(&self, sufficient_decrease: f64) -> bool {
        self.objective <= self.reference - sufficient_decrease / (2.0 * self.step) * self.sq_dist
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_objective: f64,
    /// Objective at `x_0, x_1, …, x_k`.
    pub objective_trace: Vec<f64>,
    pub elapsed: Duration,
    pub grad_evals: usize,
    /// Gradient norm (Gaussian) or projected-gradient norm (Poisson) at the output.
    pub optimality_residual: f64,
    pub restarts: usize,
    pub accepted_steps: Vec<AcceptedStep>,
    pub iterates: Vec<Image>,
}

/// Objective `Σ μ_i d(x_i; y_i) + TV_ε(x)` with reusable scratch space.
struct Objective<'a> {
    width: usize,
    height: usize,
    y: &'a [f64],
    mu: &'a [f64],
    kind: FidelityKind,
    eps: f64,
    eta: f64,
    ws: TvWorkspace,
}

impl<'a> Objective<'a> {
    fn new(y: &'a Image, mu: &'a MuMap, kind: FidelityKind, cfg: &SolverConfig) -> Self {
        Self {
            width: y.width(),
            height: y.height(),
            y: y.as_slice(),
            mu: mu.as_slice(),
            kind,
            eps: cfg.eps,
            eta: cfg.eta,
            ws: TvWorkspace::new(y.len()),
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        let data = match self.kind {
            FidelityKind::Gaussian => fidelity::gaussian_value_slice(x, self.y, self.mu),
            FidelityKind::Poisson => fidelity::poisson_value_slice(x, self.y, self.mu, self.eta),
        };
        data + tv::tv_value_slice(self.width, self.height, x, self.eps)
    }

    fn value_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let data = match self.kind {
            FidelityKind::Gaussian => fidelity::gaussian_accumulate(x, self.y, self.mu, grad),
            FidelityKind::Poisson => {
                fidelity::poisson_accumulate(x, self.y, self.mu, self.eta, grad)
            }
        };
        data + tv::tv_accumulate(self.width, self.height, x, self.eps, &mut self.ws, grad)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

fn next_momentum(t: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
}

/// The objective jumped by more than a factor of ten.
fn objective_spiked(prev: f64, next: f64) -> bool {
    next - prev > 9.0 * prev.abs()
}

fn check_inputs(y: &Image, mu: &MuMap, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    y.check_same_shape(mu.as_image(), "mu map")
}

fn into_image(like: &Image, data: Vec<f64>) -> Image {
    Image::new(like.width(), like.height(), data).expect("solver iterates stay finite")
}

/// Lipschitz constant of the Gaussian objective's gradient.
pub fn gaussian_lipschitz(mu: &MuMap, eps: f64) -> f64 {
    mu.max() + 8.0 / eps
}

/// Accelerated gradient descent with fixed step `1/L` on the least-squares
/// problem, starting from `y`.
pub fn solve_gaussian(y: &Image, mu: &MuMap, cfg: &SolverConfig) -> Result<(Image, SolveReport)> {
    gaussian_descent(y, mu, cfg, true)
}

/// Non-accelerated variant of [`solve_gaussian`]; its objective trace is
/// monotonically non-increasing.
pub fn solve_gaussian_plain(
    y: &Image,
    mu: &MuMap,
    cfg: &SolverConfig,
) -> Result<(Image, SolveReport)> {
    gaussian_descent(y, mu, cfg, false)
}

fn gaussian_descent(
    y: &Image,
    mu: &MuMap,
    cfg: &SolverConfig,
    accelerate: bool,
) -> Result<(Image, SolveReport)> {
    check_inputs(y, mu, cfg)?;
    let start = Instant::now();
    let n = y.len();
    let step = 1.0 / gaussian_lipschitz(mu, cfg.eps);
    let mut obj = Objective::new(y, mu, FidelityKind::Gaussian, cfg);

    let mut x = y.as_slice().to_vec();
    let mut x_prev = x.clone();
    let mut x_bar = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut t = 1.0;

    let mut report = SolveReport::default();
    let mut f_x = obj.value(&x);
    report.objective_trace.push(f_x);
    if cfg.record_iterates {
        report.iterates.push(y.clone());
    }

    for _ in 0..cfg.max_iters {
        let t_next = next_momentum(t);
        let beta = if accelerate { (t - 1.0) / t_next } else { 0.0 };
        for i in 0..n {
            x_bar[i] = x[i] + beta * (x[i] - x_prev[i]);
        }
        obj.value_grad(&x_bar, &mut grad);
        report.grad_evals += 1;

        std::mem::swap(&mut x_prev, &mut x);
        for i in 0..n {
            x[i] = x_bar[i] - step * grad[i];
        }
        let f_next = obj.value(&x);
        report.iterations += 1;
        report.objective_trace.push(f_next);
        if cfg.record_iterates {
            report.iterates.push(into_image(y, x.clone()));
        }

        if accelerate && objective_spiked(f_x, f_next) {
            t = 1.0;
            report.restarts += 1;
        } else {
            t = t_next;
        }
        f_x = f_next;

        let change = diff_norm(&x, &x_prev) / norm(&x_prev).max(1e-12);
        if change < cfg.rel_tol {
            break;
        }
    }

    obj.value_grad(&x, &mut grad);
    report.optimality_residual = norm(&grad);
    report.final_objective = f_x;
    report.elapsed = start.elapsed();
    Ok((into_image(y, x), report))
}

/// Projected accelerated gradient on `[0,1]` with non-monotone backtracking
/// for the Kullback-Leibler problem, starting from `clamp(y, 0, 1)`.
pub fn solve_poisson(y: &Image, mu: &MuMap, cfg: &SolverConfig) -> Result<(Image, SolveReport)> {
    check_inputs(y, mu, cfg)?;
    if let Some(i) = y.as_slice().iter().position(|&v| v < 0.0) {
        return Err(Error::Domain(format!(
            "Poisson data must be non-negative; pixel {i} is {}",
            y.as_slice()[i]
        )));
    }
    let start = Instant::now();
    let n = y.len();
    let mut obj = Objective::new(y, mu, FidelityKind::Poisson, cfg);
    let project = |v: f64| v.clamp(0.0, 1.0);

    let mut x: Vec<f64> = y.as_slice().iter().map(|&v| project(v)).collect();
    let mut x_prev = x.clone();
    let mut x_bar = vec![0.0; n];
    let mut x_trial = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut t = 1.0;
    let mut step = cfg.initial_step;

    let mut report = SolveReport::default();
    let mut f_x = obj.value(&x);
    report.objective_trace.push(f_x);
    if cfg.record_iterates {
        report.iterates.push(into_image(y, x.clone()));
    }
    let memory = match cfg.backtrack {
        Backtracking::NonMonotone { memory, .. } => memory,
        Backtracking::Off => 1,
    };
    let mut history: VecDeque<f64> = VecDeque::with_capacity(memory);
    history.push_back(f_x);

    for iteration in 0..cfg.max_iters {
        let t_next = next_momentum(t);
        let beta = (t - 1.0) / t_next;
        for i in 0..n {
            x_bar[i] = project(x[i] + beta * (x[i] - x_prev[i]));
        }
        let mut f_bar = obj.value_grad(&x_bar, &mut grad);
        report.grad_evals += 1;
        let reference = history.iter().copied().fold(f64::MIN, f64::max);
        let mut restarted = false;

        let accepted = match cfg.backtrack {
            Backtracking::Off => {
                for i in 0..n {
                    x_trial[i] = project(x_bar[i] - step * grad[i]);
                }
                let f_trial = obj.value(&x_trial);
                AcceptedStep {
                    step,
                    reference,
                    sq_dist: diff_norm(&x_trial, &x_bar).powi(2),
                    objective: f_trial,
                    shrinks: 0,
                }
            }
            Backtracking::NonMonotone {
                shrink,
                grow,
                sufficient_decrease,
                ..
            } => {
                if f_bar > reference {
                    // extrapolated point already above the reference; restart from x
                    x_bar.copy_from_slice(&x);
                    f_bar = obj.value_grad(&x_bar, &mut grad);
                    report.grad_evals += 1;
                    report.restarts += 1;
                    restarted = true;
                }
                debug_assert!(f_bar <= reference);
                let mut shrinks = 0;
                loop {
                    for i in 0..n {
                        x_trial[i] = project(x_bar[i] - step * grad[i]);
                    }
                    let f_trial = obj.value(&x_trial);
                    let sq_dist = diff_norm(&x_trial, &x_bar).powi(2);
                    let candidate = AcceptedStep {
                        step,
                        reference,
                        sq_dist,
                        objective: f_trial,
                        shrinks,
                    };
                    if candidate.satisfies_rule(sufficient_decrease) {
                        step *= grow;
                        break candidate;
                    }
                    if shrinks == MAX_SHRINKS {
                        return Err(Error::StepFailure {
                            iteration,
                            shrinks,
                            iterate: Box::new(into_image(y, x)),
                        });
                    }
                    step *= shrink;
                    shrinks += 1;
                }
            }
        };

        std::mem::swap(&mut x_prev, &mut x);
        x.copy_from_slice(&x_trial);
        let f_next = accepted.objective;
        report.accepted_steps.push(accepted);
        report.iterations += 1;
        report.objective_trace.push(f_next);
        if cfg.record_iterates {
            report.iterates.push(into_image(y, x.clone()));
        }
        if history.len() == memory {
            history.pop_front();
        }
        history.push_back(f_next);

        if objective_spiked(f_x, f_next) {
            t = 1.0;
            report.restarts += 1;
        } else if restarted {
            t = 1.0;
        } else {
            t = t_next;
        }
        f_x = f_next;

        let change = diff_norm(&x, &x_prev) / norm(&x_prev).max(1e-12);
        if change < cfg.rel_tol {
            break;
        }
    }

    obj.value_grad(&x, &mut grad);
    report.optimality_residual = x
        .iter()
        .zip(&grad)
        .map(|(&xi, &gi)| (xi - project(xi - gi)).powi(2))
        .sum::<f64>()
        .sqrt();
    report.final_objective = f_x;
    report.elapsed = start.elapsed();
    Ok((into_image(y, x), report))
}

/// Dispatches on the fidelity kind.
pub fn solve(
    y: &Image,
    mu: &MuMap,
    kind: FidelityKind,
    cfg: &SolverConfig,
) -> Result<(Image, SolveReport)> {
    match kind {
        FidelityKind::Gaussian => solve_gaussian(y, mu, cfg),
        FidelityKind::Poisson => solve_poisson(y, mu, cfg),
    }
}

/// Scalar-μ convenience wrapper.
pub fn solve_scalar(
    y: &Image,
    mu: f64,
    kind: FidelityKind,
    cfg: &SolverConfig,
) -> Result<(Image, SolveReport)> {
    let map = MuMap::constant(y.width(), y.height(), mu)?;
    solve(y, &map, kind, cfg)
}

/// Objective value of `x` for data `y`, exposed for diagnostics and tests.
pub fn objective(
    x: &Image,
    y: &Image,
    mu: &MuMap,
    kind: FidelityKind,
    cfg: &SolverConfig,
) -> Result<f64> {
    check_inputs(y, mu, cfg)?;
    x.check_same_shape(y, "iterate")?;
    Ok(Objective::new(y, mu, kind, cfg).value(x.as_slice()))
}

/// `‖μ⊙(x−y) + ∇TV_ε(x)‖`, the first-order optimality residual of the
/// least-squares problem.
pub fn gaussian_residual(x: &Image, y: &Image, mu: &MuMap, eps: f64) -> Result<f64> {
    let (_, g_fid) = fidelity::gaussian_value_grad(x, y, mu)?;
    let (_, g_tv) = tv::tv_value_grad(x, eps)?;
    Ok(g_fid
        .as_slice()
        .iter()
        .zip(g_tv.as_slice())
        .map(|(a, b)| (a + b).powi(2))
        .sum::<f64>()
        .sqrt())
}
