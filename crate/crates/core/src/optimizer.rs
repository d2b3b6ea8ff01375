//! Quasi-Newton minimization and the sequential block-sweep controller.
//!
//! `bfgs_minimize` is a dense inverse-Hessian BFGS with a strong-Wolfe line
//! search. `sequential_sweep` cycles it over one block of layers at a time,
//! keeping every other parameter frozen, until the disentanglement cost drops
//! below the stage threshold or the sweep/restart budget runs out.

use std::time::Instant;

use serde::Serialize;

use crate::cost::StageEvaluator;
use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, RandomSource};
use crate::structure::{GateStructure, PARAMS_PER_LAYER};

#[derive(Debug, Clone, Serialize)]
pub struct OptimizerConfig {
    /// Stage stop threshold on the disentanglement cost.
    pub epsilon0: f64,
    pub max_sweeps: usize,
    /// BFGS iteration cap per block optimization.
    pub bfgs_max_iter: usize,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub grad_tol: f64,
    /// Layers optimized together in one block.
    pub block_size_layers: usize,
    /// Sweeps without relative improvement > 1e-3 before re-randomizing.
    pub restart_patience: usize,
    pub max_restarts: usize,
    pub seed: u64,
    /// Start from all-zero angles instead of uniform random ones.
    pub zero_init: bool,
    /// Visit blocks in a shuffled order each sweep (off for reproducibility).
    pub shuffle_blocks: bool,
    /// Close slow tails with one whole-stage block optimization once the cost
    /// falls below `polish_threshold` or on stagnation, before restarting.
    pub polish: bool,
    pub polish_threshold: f64,
    pub polish_max_iter: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            epsilon0: 1e-8,
            max_sweeps: 10_000,
            bfgs_max_iter: 100,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            grad_tol: 1e-10,
            block_size_layers: 1,
            restart_patience: 200,
            max_restarts: 5,
            seed: 0,
            zero_init: false,
            shuffle_blocks: false,
            polish: true,
            polish_threshold: 1e-1,
            polish_max_iter: 1000,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.wolfe_c1 > 0.0 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::Optimizer(format!(
                "need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.wolfe_c1, self.wolfe_c2
            )));
        }
        if self.epsilon0 <= 0.0 {
            return Err(Error::Optimizer("epsilon0 must be positive".into()));
        }
        if self.block_size_layers == 0 {
            return Err(Error::Optimizer("block size must be at least one layer".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradTol,
    MaxIter,
    LineSearchFailed,
    TargetReached,
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evals: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub c1: f64,
    pub c2: f64,
    /// Optional early stop once the best value reaches this level.
    pub target_value: Option<f64>,
}

impl From<&OptimizerConfig> for BfgsOptions {
    fn from(c: &OptimizerConfig) -> Self {
        BfgsOptions {
            max_iter: c.bfgs_max_iter,
            grad_tol: c.grad_tol,
            c1: c.wolfe_c1,
            c2: c.wolfe_c2,
            target_value: None,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimizes `objective` (returning value and gradient) from `x0` with BFGS
/// and a strong-Wolfe line search. Terminates on gradient norm, iteration
/// cap, or line-search failure, and always returns the best point seen, so
/// the result never exceeds the starting value.
pub fn bfgs_minimize<F>(mut objective: F, x0: &[f64], opts: &BfgsOptions) -> Result<BfgsOutcome>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> Result<(f64, Vec<f64>)> {
        let (v, g) = objective(x);
        *evals += 1;
        if !v.is_finite() || g.iter().any(|gi| !gi.is_finite()) {
            return Err(Error::Optimizer(format!(
                "non-finite objective value {v} at x = {x:?}"
            )));
        }
        Ok((v, g))
    };

    let mut x = x0.to_vec();
    let (mut fx, mut gx) = eval(&x, &mut evals)?;
    let mut best_x = x.clone();
    let mut best_f = fx;

    // Dense inverse-Hessian approximation, reset to identity on bad curvature.
    let mut h = vec![0.0; n * n];
    let reset = |h: &mut [f64]| {
        h.fill(0.0);
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
    };
    reset(&mut h);
    let mut first_update = true;

    let mut iterations = 0usize;
    let mut termination = Termination::MaxIter;
    for _ in 0..opts.max_iter {
        if opts.target_value.is_some_and(|t| best_f <= t) {
            termination = Termination::TargetReached;
            break;
        }
        if norm2(&gx) <= opts.grad_tol {
            termination = Termination::GradTol;
            break;
        }
        // Direction p = -H g.
        let mut p = vec![0.0; n];
        for i in 0..n {
            let row = &h[i * n..(i + 1) * n];
            p[i] = -dot(row, &gx);
        }
        let mut dphi0 = dot(&gx, &p);
        if dphi0 >= 0.0 {
            reset(&mut h);
            first_update = true;
            for (pi, gi) in p.iter_mut().zip(gx.iter()) {
                *pi = -gi;
            }
            dphi0 = dot(&gx, &p);
            if dphi0 >= 0.0 {
                termination = Termination::GradTol;
                break;
            }
        }
        match wolfe_line_search(
            &mut eval, &mut evals, &x, &p, fx, dphi0, opts.c1, opts.c2,
        )? {
            Some((alpha, f_new, g_new)) => {
                let x_new: Vec<f64> = x.iter().zip(p.iter()).map(|(xi, pi)| xi + alpha * pi).collect();
                let s: Vec<f64> = x_new.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(gx.iter()).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy <= 1e-14 {
                    reset(&mut h);
                    first_update = true;
                } else {
                    if first_update {
                        // Scale the initial inverse Hessian (Nocedal-Wright 6.20).
                        let yy = dot(&y, &y);
                        if yy > 0.0 {
                            let gamma = sy / yy;
                            h.fill(0.0);
                            for i in 0..n {
                                h[i * n + i] = gamma;
                            }
                        }
                        first_update = false;
                    }
                    bfgs_update(&mut h, &s, &y, sy);
                }
                x = x_new;
                fx = f_new;
                gx = g_new;
                if fx < best_f {
                    best_f = fx;
                    best_x = x.clone();
                }
                iterations += 1;
            }
            None => {
                termination = Termination::LineSearchFailed;
                break;
            }
        }
    }
    if termination == Termination::MaxIter && norm2(&gx) <= opts.grad_tol {
        termination = Termination::GradTol;
    }
    Ok(BfgsOutcome {
        x: best_x,
        value: best_f,
        iterations,
        evals,
        termination,
    })
}

/// H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T, in the expanded form.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let mut hy = vec![0.0; n];
    for i in 0..n {
        hy[i] = dot(&h[i * n..(i + 1) * n], y);
    }
    let yhy = dot(y, &hy);
    let coeff = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coeff * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

type EvalFn<'a> = dyn FnMut(&[f64], &mut usize) -> Result<(f64, Vec<f64>)> + 'a;

#[allow(clippy::too_many_arguments)]
fn wolfe_line_search(
    eval: &mut EvalFn<'_>,
    evals: &mut usize,
    x: &[f64],
    p: &[f64],
    phi0: f64,
    dphi0: f64,
    c1: f64,
    c2: f64,
) -> Result<Option<(f64, f64, Vec<f64>)>> {
    let probe = |alpha: f64, eval: &mut EvalFn<'_>, evals: &mut usize| -> Result<(f64, f64, Vec<f64>)> {
        let xt: Vec<f64> = x.iter().zip(p.iter()).map(|(xi, pi)| xi + alpha * pi).collect();
        let (v, g) = eval(&xt, evals)?;
        let slope = dot(&g, p);
        Ok((v, slope, g))
    };

    let mut alpha_prev = 0.0f64;
    let mut phi_prev = phi0;
    let mut dphi_prev = dphi0;
    let mut alpha = 1.0f64;
    for iter in 0..25 {
        let (phi_a, dphi_a, g_a) = probe(alpha, eval, evals)?;
        if approx_wolfe(phi0, dphi0, phi_a, dphi_a, c1, c2) {
            return Ok(Some((alpha, phi_a, g_a)));
        }
        if phi_a > phi0 + c1 * alpha * dphi0 || (iter > 0 && phi_a >= phi_prev) {
            return zoom(
                eval, evals, x, p, phi0, dphi0, c1, c2, alpha_prev, phi_prev, dphi_prev, alpha,
                phi_a,
            );
        }
        if dphi_a.abs() <= -c2 * dphi0 {
            return Ok(Some((alpha, phi_a, g_a)));
        }
        if dphi_a >= 0.0 {
            return zoom(
                eval, evals, x, p, phi0, dphi0, c1, c2, alpha, phi_a, dphi_a, alpha_prev, phi_prev,
            );
        }
        alpha_prev = alpha;
        phi_prev = phi_a;
        dphi_prev = dphi_a;
        alpha *= 2.0;
        if alpha > 1e6 {
            break;
        }
    }
    Ok(None)
}

/// Approximate Wolfe acceptance for steps at the floating-point floor, where
/// the Armijo decrease is smaller than rounding noise in the objective: the
/// slope conditions are checked exactly and the value is allowed a relative
/// epsilon of slack (Hager-Zhang).
fn approx_wolfe(phi0: f64, dphi0: f64, phi_a: f64, dphi_a: f64, c1: f64, c2: f64) -> bool {
    c1 < 0.5
        && phi_a <= phi0 + 1e-12 * phi0.abs()
        && dphi_a >= c2 * dphi0
        && dphi_a <= (2.0 * c1 - 1.0) * dphi0
}

/// Nocedal-Wright zoom: shrink [lo, hi] with cubic interpolation until the
/// strong Wolfe conditions hold.
#[allow(clippy::too_many_arguments)]
fn zoom(
    eval: &mut EvalFn<'_>,
    evals: &mut usize,
    x: &[f64],
    p: &[f64],
    phi0: f64,
    dphi0: f64,
    c1: f64,
    c2: f64,
    mut alpha_lo: f64,
    mut phi_lo: f64,
    mut dphi_lo: f64,
    mut alpha_hi: f64,
    mut phi_hi: f64,
) -> Result<Option<(f64, f64, Vec<f64>)>> {
    let probe = |alpha: f64, eval: &mut EvalFn<'_>, evals: &mut usize| -> Result<(f64, f64, Vec<f64>)> {
        let xt: Vec<f64> = x.iter().zip(p.iter()).map(|(xi, pi)| xi + alpha * pi).collect();
        let (v, g) = eval(&xt, evals)?;
        let slope = dot(&g, p);
        Ok((v, slope, g))
    };
    for _ in 0..40 {
        let width = (alpha_hi - alpha_lo).abs();
        if width <= 1e-16 * alpha_lo.abs().max(1.0) {
            return Ok(None);
        }
        // Quadratic minimizer through (lo, phi_lo, dphi_lo) and (hi, phi_hi);
        // bisection safeguard keeps the step interior.
        let denom = 2.0 * (phi_hi - phi_lo - dphi_lo * (alpha_hi - alpha_lo));
        let mut alpha = if denom.abs() > 1e-300 {
            alpha_lo - dphi_lo * (alpha_hi - alpha_lo).powi(2) / denom
        } else {
            0.5 * (alpha_lo + alpha_hi)
        };
        if !alpha.is_finite()
            || alpha <= alpha_lo.min(alpha_hi) + 0.1 * width
            || alpha >= alpha_lo.max(alpha_hi) - 0.1 * width
        {
            alpha = 0.5 * (alpha_lo + alpha_hi);
        }
        let (phi_a, dphi_a, g_a) = probe(alpha, eval, evals)?;
        if approx_wolfe(phi0, dphi0, phi_a, dphi_a, c1, c2) {
            return Ok(Some((alpha, phi_a, g_a)));
        }
        if phi_a > phi0 + c1 * alpha * dphi0 || phi_a >= phi_lo {
            alpha_hi = alpha;
            phi_hi = phi_a;
        } else {
            if dphi_a.abs() <= -c2 * dphi0 {
                return Ok(Some((alpha, phi_a, g_a)));
            }
            if dphi_a * (alpha_hi - alpha_lo) >= 0.0 {
                alpha_hi = alpha_lo;
                phi_hi = phi_lo;
            }
            alpha_lo = alpha;
            phi_lo = phi_a;
            dphi_lo = dphi_a;
        }
    }
    Ok(None)
}

/// Progress of one stage's sweep optimization.
#[derive(Debug, Clone)]
pub struct SweepState {
    /// Stage-local parameters of the best point found.
    pub params: Vec<f64>,
    pub best_value: f64,
    pub sweep_count: usize,
    /// (sweep index, best value after that sweep); entry 0 is the initial value.
    pub value_history: Vec<(usize, f64)>,
    pub restarts_used: usize,
    pub converged: bool,
    pub timed_out: bool,
}

/// Optimizes one block of layers in place on the global parameter vector;
/// everything outside the block is untouched bit-for-bit.
pub fn optimize_block(
    structure: &GateStructure,
    stage_index: usize,
    params: &mut [f64],
    block: std::ops::Range<usize>,
    u_initial: &ComplexMatrix,
    config: &OptimizerConfig,
) -> Result<f64> {
    config.validate()?;
    let range = structure.stage_param_range(stage_index);
    let stage_params: Vec<f64> = params[range.clone()].to_vec();
    let ev = StageEvaluator::new(structure, stage_index, u_initial, &stage_params, block.clone())?;
    let active_range =
        range.start + PARAMS_PER_LAYER * block.start..range.start + PARAMS_PER_LAYER * block.end;
    let x0: Vec<f64> = params[active_range.clone()].to_vec();
    let outcome = bfgs_minimize(|x| ev.value_and_grad(x), &x0, &BfgsOptions::from(config))?;
    params[active_range].copy_from_slice(&outcome.x);
    Ok(outcome.value)
}

/// One whole-stage block optimization from the current parameters; writes the
/// optimized point back and returns its value (never worse than the input,
/// by the BFGS best-seen contract).
fn run_polish(
    evaluator: &mut StageEvaluator<'_>,
    u_initial: &ComplexMatrix,
    stage_params: &mut [f64],
    n_layers: usize,
    opts: &BfgsOptions,
) -> Result<f64> {
    evaluator.rebuild(u_initial, stage_params, 0..n_layers);
    let outcome = bfgs_minimize(|x| evaluator.value_and_grad(x), stage_params, opts)?;
    stage_params.copy_from_slice(&outcome.x);
    Ok(outcome.value)
}

/// Cycles block optimizations over a stage until the cost reaches epsilon0,
/// the sweep budget runs out, or the restart budget is exhausted. Stagnation
/// triggers a re-randomization of the stage parameters; the best parameters
/// seen are always retained and returned.
pub fn sequential_sweep(
    structure: &GateStructure,
    stage_index: usize,
    u_initial: &ComplexMatrix,
    config: &OptimizerConfig,
    rng: &mut RandomSource,
    deadline: Option<Instant>,
) -> Result<SweepState> {
    config.validate()?;
    let stage = &structure.stages[stage_index];
    let n_layers = stage.layers.len();
    let n_params = PARAMS_PER_LAYER * n_layers;
    let n_blocks = n_layers.div_ceil(config.block_size_layers);
    let tau = 2.0 * std::f64::consts::PI;

    let mut stage_params = vec![0.0; n_params];
    // Restarts always re-randomize; zero_init only shapes the first attempt.
    let init = |params: &mut [f64], rng: &mut RandomSource, first: bool| {
        if config.zero_init && first {
            params.fill(0.0);
        } else {
            for p in params.iter_mut() {
                *p = rng.uniform(0.0, tau);
            }
        }
    };
    init(&mut stage_params, rng, true);

    let opts = BfgsOptions {
        target_value: Some(config.epsilon0),
        ..BfgsOptions::from(config)
    };
    let mut evaluator =
        StageEvaluator::new(structure, stage_index, u_initial, &stage_params, 0..1.min(n_layers))?;
    let initial_value = evaluator.value(&stage_params[..PARAMS_PER_LAYER.min(n_params)]);

    let mut best_params = stage_params.clone();
    let mut best_value = initial_value;
    let mut history = vec![(0usize, best_value)];
    let mut restarts_used = 0usize;
    let mut converged = best_value <= config.epsilon0;
    let mut timed_out = false;
    let mut sweep_count = 0usize;

    let polish_opts = BfgsOptions {
        max_iter: config.polish_max_iter,
        ..opts
    };
    let mut block_order: Vec<usize> = (0..n_blocks).collect();
    // Attempt-local progress trackers; the global best is kept separately so
    // a fresh restart is judged on its own slope, not against earlier runs.
    let mut attempt_value = initial_value;
    let mut anchor_value = initial_value;
    let mut anchor_sweep = 0usize;
    let mut last_polish_value = f64::INFINITY;
    'outer: while !converged && sweep_count < config.max_sweeps {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            timed_out = true;
            break;
        }
        sweep_count += 1;
        if config.shuffle_blocks {
            // Fisher-Yates from the sweep's RNG stream.
            for i in (1..block_order.len()).rev() {
                let j = rng.index(i + 1);
                block_order.swap(i, j);
            }
        }
        for &b in &block_order {
            let start = b * config.block_size_layers;
            let end = (start + config.block_size_layers).min(n_layers);
            evaluator.rebuild(u_initial, &stage_params, start..end);
            let x0: Vec<f64> =
                stage_params[PARAMS_PER_LAYER * start..PARAMS_PER_LAYER * end].to_vec();
            let outcome = bfgs_minimize(|x| evaluator.value_and_grad(x), &x0, &opts)?;
            stage_params[PARAMS_PER_LAYER * start..PARAMS_PER_LAYER * end]
                .copy_from_slice(&outcome.x);
            attempt_value = outcome.value;
            if outcome.value < best_value {
                best_value = outcome.value;
                best_params.copy_from_slice(&stage_params);
            }
            if best_value <= config.epsilon0 {
                history.push((sweep_count, best_value));
                converged = true;
                break 'outer;
            }
        }
        history.push((sweep_count, best_value));

        // Deep basin: one whole-stage block optimization closes the slowly
        // converging tail that per-layer sweeps zig-zag over. Geometric
        // spacing keeps the number of polish attempts logarithmic.
        if config.polish
            && attempt_value <= config.polish_threshold
            && attempt_value < last_polish_value / 3.0
        {
            attempt_value = run_polish(
                &mut evaluator,
                u_initial,
                &mut stage_params,
                n_layers,
                &polish_opts,
            )?;
            last_polish_value = attempt_value;
            if attempt_value < best_value {
                best_value = attempt_value;
                best_params.copy_from_slice(&stage_params);
                history.push((sweep_count, best_value));
            }
            if best_value <= config.epsilon0 {
                converged = true;
                break;
            }
        }

        // Stagnation: the current attempt made no relative improvement
        // > 1e-3 over the patience window. Polish it once from where it
        // stands; if that does not move it either, re-randomize.
        if anchor_value - attempt_value > 1e-3 * anchor_value.abs() {
            anchor_value = attempt_value;
            anchor_sweep = sweep_count;
        } else if config.restart_patience > 0
            && sweep_count - anchor_sweep >= config.restart_patience
        {
            if config.polish && attempt_value < 0.999 * last_polish_value {
                attempt_value = run_polish(
                    &mut evaluator,
                    u_initial,
                    &mut stage_params,
                    n_layers,
                    &polish_opts,
                )?;
                last_polish_value = attempt_value;
                if attempt_value < best_value {
                    best_value = attempt_value;
                    best_params.copy_from_slice(&stage_params);
                    history.push((sweep_count, best_value));
                }
                if best_value <= config.epsilon0 {
                    converged = true;
                    break;
                }
                if anchor_value - attempt_value > 1e-3 * anchor_value.abs() {
                    // The polish made real progress; resume sweeping from it.
                    anchor_value = attempt_value;
                    anchor_sweep = sweep_count;
                    continue;
                }
            }
            if restarts_used >= config.max_restarts {
                break;
            }
            restarts_used += 1;
            init(&mut stage_params, rng, false);
            attempt_value = f64::MAX;
            anchor_value = f64::MAX;
            anchor_sweep = sweep_count;
            last_polish_value = f64::INFINITY;
        }
    }
    Ok(SweepState {
        params: best_params,
        best_value,
        sweep_count,
        value_history: history,
        restarts_used,
        converged,
        timed_out,
    })
}
