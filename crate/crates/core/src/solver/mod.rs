//! Lower-level solver: joint convex minimization of the TGV^r denoising
//! functional over the signal and its auxiliary fields by a first-order
//! primal-dual (Chambolle-Pock type) method, plus standalone TGV^r seminorm
//! evaluation.
//!
//! The functional is `h sum (u - u_eta)^2 + |u|_{TGV^r}` with the TGV^r term
//! an infimal cascade; the joint problem over `(u, v_0, ..)` is convex, so a
//! single saddle-point solve covers the inner infimum as well. Dual blocks
//! are kept inside their balls by the projections in [`crate::prox`];
//! primal steps use the closed-form fidelity prox (identity on the
//! v-fields). Steps are `sigma = tau = 0.99 / ||K||` with over-relaxation
//! parameter 1.

pub mod energy;
pub mod operator;

pub use energy::discrete_energy;
pub use operator::{build_k, estimate_opnorm, TgvOperator};

use crate::config::SolverOptions;
use crate::error::{Error, Result};
use crate::prox::{clip_interval, lq_norm, project_lq_ball_cached};
use crate::signal::{tv, Signal};

/// Fractional parts below this snap to the neighbouring integer order,
/// avoiding the `p -> 1`, `q -> inf` conditioning blowup.
pub const SNAP_EPS: f64 = 1e-9;

/// A derivative order `r >= 1` split as `r = k + s` with `k = floor(r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracOrder {
    r: f64,
    k: usize,
    s: f64,
}

impl FracOrder {
    /// Splits and snaps the order: `s` within [`SNAP_EPS`] of an integer is
    /// treated as that integer.
    pub fn new(r: f64) -> Result<Self> {
        if !r.is_finite() || r < 1.0 {
            return Err(Error::invalid(format!("order r must be >= 1, got {r}")));
        }
        let mut k = r.floor() as usize;
        let mut s = r - k as f64;
        if s < SNAP_EPS {
            s = 0.0;
        } else if s > 1.0 - SNAP_EPS {
            k += 1;
            s = 0.0;
        }
        let r = k as f64 + s;
        Ok(FracOrder { r, k, s })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Integer part `floor(r)` (equal to `r` at integer orders).
    pub fn k(&self) -> usize {
        self.k
    }

    /// Fractional part, zero at integer orders.
    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn is_integer(&self) -> bool {
        self.s == 0.0
    }

    /// Length of the weight multi-index `alpha` under the box constraint.
    pub fn weight_count(&self) -> usize {
        self.k + 1
    }

    /// Number of auxiliary fields: `k` for fractional orders, `k - 1` for
    /// the classical integer chain.
    pub fn v_field_count(&self) -> usize {
        if self.is_integer() {
            self.k - 1
        } else {
            self.k
        }
    }
}

/// The weight multi-index `alpha = (alpha_0, .., alpha_k)`.
///
/// Positivity is required except for the all-zero vector, which the trainer
/// uses as the degenerate no-regularization grid point. At integer orders
/// the chain reads `alpha_0 .. alpha_{k-1}` and the final component is
/// inert, mirroring the `s -> 0` limit where the last weight drops out.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    alpha: Vec<f64>,
}

impl Weights {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::invalid("weights must not be empty"));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("weights must be finite"));
        }
        let zeros = alpha.iter().filter(|a| **a == 0.0).count();
        if zeros != 0 && zeros != alpha.len() {
            return Err(Error::invalid(
                "weights must be all positive or the degenerate all-zero vector",
            ));
        }
        if alpha.iter().any(|a| *a < 0.0) {
            return Err(Error::invalid("weights must be nonnegative"));
        }
        Ok(Weights { alpha })
    }

    /// A scalar weight broadcast to the required length.
    pub fn broadcast(a: f64, len: usize) -> Result<Self> {
        Weights::new(vec![a; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Degenerate all-zero mode: the solver is bypassed entirely.
    pub fn is_zero(&self) -> bool {
        self.alpha.iter().all(|a| *a == 0.0)
    }
}

/// A lower-level denoising instance.
#[derive(Debug, Clone)]
pub struct DenoiseProblem {
    pub u_eta: Signal,
    pub order: FracOrder,
    pub weights: Weights,
    pub opts: SolverOptions,
}

impl DenoiseProblem {
    pub fn new(
        u_eta: Signal,
        order: FracOrder,
        weights: Weights,
        opts: SolverOptions,
    ) -> Result<Self> {
        opts.validate()?;
        let want = order.weight_count();
        let ok = weights.len() == want || (order.is_integer() && weights.len() == order.k());
        if !ok {
            return Err(Error::invalid(format!(
                "order {} needs {want} weights (or {} at integer orders), got {}",
                order.r(),
                order.k(),
                weights.len()
            )));
        }
        Ok(DenoiseProblem {
            u_eta,
            order,
            weights,
            opts,
        })
    }
}

/// Diagnostics of the final iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// Relative energy change over the last stagnation window.
    pub energy_rel_change: f64,
    /// l2 norm of the v-block of `K* y` at the final iterate.
    pub dual_v_norm: f64,
}

/// Outcome of a denoising solve.
#[derive(Debug, Clone)]
pub struct DenoiseResult {
    pub u_opt: Signal,
    pub v_fields: Vec<Vec<f64>>,
    pub energy: f64,
    pub tgv_value: f64,
    pub fidelity: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Residuals,
}

/// Iteration state of the primal-dual method.
///
/// `psi` holds the fractional-difference dual folded to unordered pairs
/// `i < j`, grouped by index distance; with the `(2 w_d)^{1/p}` kernel the
/// folded q-norm equals the ordered-pair q-norm, so ball constraints read
/// identically.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub u: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub psi: Vec<f64>,
    pub tau: f64,
    pub sigma: f64,
    pub tau_step: f64,
    pub iter: usize,
    pub last_energy: f64,
}

/// Tolerance passed to the dual lq projection.
const PSI_PROJECTION_TOL: f64 = 1e-9;
const OPNORM_ITERS: usize = 100;

/// Solves the denoising problem, returning the best-energy iterate.
pub fn solve(problem: &DenoiseProblem) -> Result<DenoiseResult> {
    run_pd(problem, false).map(|(r, _)| r)
}

/// As [`solve`], additionally returning the final iteration state.
pub fn solve_traced(problem: &DenoiseProblem) -> Result<(DenoiseResult, SolverState)> {
    run_pd(problem, false)
}

/// Evaluates the TGV^r seminorm of `u`: the inner minimization over the
/// auxiliary fields with the signal block frozen.
pub fn tgv_seminorm(
    u: &Signal,
    order: &FracOrder,
    weights: &Weights,
    opts: &SolverOptions,
) -> Result<f64> {
    if weights.is_zero() {
        return Ok(0.0);
    }
    if order.is_integer() && order.k() == 1 {
        return Ok(weights.values()[0] * tv(u));
    }
    let problem = DenoiseProblem::new(u.clone(), *order, weights.clone(), *opts)?;
    run_pd(&problem, true).map(|(r, _)| r.tgv_value)
}

/// Seminorm table `(s, TGV^{1+s}(u))` over a list of fractional parts.
pub fn limit_sweep_tgv(
    u: &Signal,
    weights: &Weights,
    s_list: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<(f64, f64)>> {
    s_list
        .iter()
        .map(|&s| {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::invalid(format!("sweep s must lie in (0,1), got {s}")));
            }
            let order = FracOrder::new(1.0 + s)?;
            Ok((s, tgv_seminorm(u, &order, weights, opts)?))
        })
        .collect()
}

/// The TGV part of the objective read off `K x`: radius-weighted block
/// norms (l1 on measure blocks, lp on the pair block, absolute value on the
/// mean block).
pub(crate) fn objective_tgv_from_kx(op: &TgvOperator, kx: &[f64]) -> f64 {
    let n = op.n();
    let mut tgv = 0.0;
    for (bi, b) in op.blocks.iter().enumerate() {
        let block = &kx[bi * (n - 1)..(bi + 1) * (n - 1)];
        tgv += b.radius * block.iter().map(|v| v.abs()).sum::<f64>();
    }
    if let Some(f) = &op.frac {
        let psi = &kx[op.psi_offset()..op.psi_offset() + f.pairs];
        let lp = psi
            .iter()
            .map(|v| v.abs().powf(f.p))
            .sum::<f64>()
            .powf(1.0 / f.p);
        tgv += f.psi_radius * lp;
        tgv += f.tau_radius * kx[op.tau_offset()].abs();
    }
    tgv
}

fn degenerate_result(problem: &DenoiseProblem) -> DenoiseResult {
    let n = problem.u_eta.len();
    DenoiseResult {
        u_opt: problem.u_eta.clone(),
        v_fields: vec![vec![0.0; n]; problem.order.v_field_count()],
        energy: 0.0,
        tgv_value: 0.0,
        fidelity: 0.0,
        iterations: 0,
        converged: true,
        residuals: Residuals {
            energy_rel_change: 0.0,
            dual_v_norm: 0.0,
        },
    }
}

fn run_pd(problem: &DenoiseProblem, freeze_u: bool) -> Result<(DenoiseResult, SolverState)> {
    let opts = &problem.opts;
    opts.validate()?;
    if problem.weights.is_zero() {
        let res = degenerate_result(problem);
        let state = SolverState {
            u: res.u_opt.values().to_vec(),
            v: res.v_fields.clone(),
            phi: Vec::new(),
            psi: Vec::new(),
            tau: 0.0,
            sigma: 0.0,
            tau_step: 0.0,
            iter: 0,
            last_energy: 0.0,
        };
        return Ok((res, state));
    }

    let grid = *problem.u_eta.grid();
    let n = grid.len();
    let h = grid.spacing();
    let eta = problem.u_eta.values();

    let op = build_k(&problem.order, &problem.weights, &grid);
    let opnorm = estimate_opnorm(&op, OPNORM_ITERS, opts.safety);
    let step = if opnorm > 0.0 { 0.99 / opnorm } else { 1.0 };
    let sigma = step;
    let tau_step = step;

    let fields = op.field_count();
    let xl = op.x_len();
    let yl = op.y_len();

    // Primal starts at the noisy signal with zero fields; duals at zero.
    let mut x = vec![0.0; xl];
    x[..n].copy_from_slice(eta);
    let mut kx = vec![0.0; yl];
    op.apply(&x, &mut kx);
    let mut kx_prev = kx.clone();
    let mut y = vec![0.0; yl];
    let mut g = vec![0.0; xl];

    let fidelity_of = |u: &[f64]| -> f64 {
        h * u
            .iter()
            .zip(eta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    let objective = |x: &[f64], kx: &[f64]| -> (f64, f64) {
        let fid = if freeze_u { 0.0 } else { fidelity_of(&x[..n]) };
        (fid, objective_tgv_from_kx(&op, kx))
    };

    let (fid0, tgv0) = objective(&x, &kx);
    let mut best_key = fid0 + tgv0;
    let mut best_x = x.clone();
    let mut best_fid = fid0;
    let mut best_tgv = tgv0;

    let mut energies = Vec::with_capacity(opts.max_iter + 1);
    energies.push(best_key);

    let mut psi_lambda = f64::NEG_INFINITY;
    let mut psi_lambda_prev = f64::NEG_INFINITY;
    let mut psi_newton_cache: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iters_done = opts.max_iter;
    let mut last_rel_change = f64::INFINITY;
    let mut last_dual_v = f64::INFINITY;

    let psi_off = op.psi_offset();
    let tau_off = op.tau_offset();

    for it in 1..=opts.max_iter {
        // Dual ascent at the over-relaxed point: K xbar = 2 K x - K x_prev.
        for (bi, b) in op.blocks.iter().enumerate() {
            let start = bi * (n - 1);
            for i in start..start + n - 1 {
                let val = y[i] + sigma * (2.0 * kx[i] - kx_prev[i]);
                y[i] = val.clamp(-b.radius, b.radius);
            }
        }
        if let Some(f) = &op.frac {
            for i in psi_off..psi_off + f.pairs {
                y[i] += sigma * (2.0 * kx[i] - kx_prev[i]);
            }
            // Linear prediction of the multiplier drift across iterations.
            let mut guess = if psi_lambda.is_finite() && psi_lambda_prev.is_finite() {
                2.0 * psi_lambda - psi_lambda_prev
            } else {
                psi_lambda
            };
            project_lq_ball_cached(
                &mut y[psi_off..psi_off + f.pairs],
                f.q,
                f.psi_radius,
                PSI_PROJECTION_TOL,
                &mut guess,
                &mut psi_newton_cache,
            )?;
            psi_lambda_prev = psi_lambda;
            psi_lambda = guess;
            let val = y[tau_off] + sigma * (2.0 * kx[tau_off] - kx_prev[tau_off]);
            y[tau_off] = clip_interval(val, f.tau_radius);

            debug_assert!(
                lq_norm(&y[psi_off..psi_off + f.pairs], f.q)
                    <= f.psi_radius * (1.0 + PSI_PROJECTION_TOL) + 1e-12,
                "psi left its ball"
            );
            debug_assert!(y[tau_off].abs() <= f.tau_radius + 1e-15, "tau left its ball");
        }
        debug_assert!(op.blocks.iter().enumerate().all(|(bi, b)| {
            y[bi * (n - 1)..(bi + 1) * (n - 1)]
                .iter()
                .all(|v| v.abs() <= b.radius + 1e-15)
        }));

        // Primal descent.
        op.adjoint(&y, &mut g);
        let dual_v: f64 = g[n..].iter().map(|v| v * v).sum::<f64>().sqrt();
        last_dual_v = dual_v;

        std::mem::swap(&mut kx, &mut kx_prev);
        if !freeze_u {
            let c = 2.0 * tau_step * h;
            let denom = 1.0 + c;
            for i in 0..n {
                x[i] = (x[i] - tau_step * g[i] + c * eta[i]) / denom;
            }
        }
        for i in n..xl {
            x[i] -= tau_step * g[i];
        }
        op.apply(&x, &mut kx);

        let (fid, tgv) = objective(&x, &kx);
        let key = fid + tgv;
        if !key.is_finite() {
            return Err(Error::Numeric {
                msg: "objective became non-finite during iteration".into(),
                residual: key,
            });
        }
        if key < best_key {
            best_key = key;
            best_fid = fid;
            best_tgv = tgv;
            best_x.copy_from_slice(&x);
        }
        energies.push(key);

        if it >= opts.window {
            let prev = energies[it - opts.window];
            let rel = (key - prev).abs() / key.abs().max(1e-30);
            last_rel_change = rel;
            if rel < opts.tol_rel && dual_v < opts.tol_rel {
                converged = true;
                iters_done = it;
                break;
            }
        }
    }

    let u_opt = Signal::new(grid, best_x[..n].to_vec())?;
    let v_fields: Vec<Vec<f64>> = (0..fields)
        .map(|j| best_x[(1 + j) * n..(2 + j) * n].to_vec())
        .collect();
    let fidelity = if freeze_u { fidelity_of(&best_x[..n]) } else { best_fid };
    let result = DenoiseResult {
        u_opt,
        v_fields: v_fields.clone(),
        energy: fidelity + best_tgv,
        tgv_value: best_tgv,
        fidelity,
        iterations: iters_done,
        converged,
        residuals: Residuals {
            energy_rel_change: last_rel_change,
            dual_v_norm: last_dual_v,
        },
    };

    let state = SolverState {
        u: x[..n].to_vec(),
        v: (0..fields)
            .map(|j| x[(1 + j) * n..(2 + j) * n].to_vec())
            .collect(),
        phi: (0..op.blocks.len())
            .map(|bi| y[bi * (n - 1)..(bi + 1) * (n - 1)].to_vec())
            .collect(),
        psi: op
            .frac
            .as_ref()
            .map(|f| y[psi_off..psi_off + f.pairs].to_vec())
            .unwrap_or_default(),
        tau: if op.frac.is_some() { y[tau_off] } else { 0.0 },
        sigma,
        tau_step,
        iter: iters_done,
        last_energy: *energies.last().expect("at least the initial energy"),
    };

    Ok((result, state))
}
