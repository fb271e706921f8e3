//! Upper level of the bilevel training scheme: exhaustive grid search over
//! the weights and the derivative order under a box constraint, with
//! cost-landscape export and argmin refinement.
//!
//! Every cell is an independent lower-level solve; the reduction (argmin and
//! CSV row order) is performed in canonical grid order, so results do not
//! depend on the evaluation schedule or the worker count.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::config::SolverOptions;
use crate::error::{Error, Result};
use crate::signal::{l2_dist_sq, Signal};
use crate::solver::{solve, DenoiseProblem, DenoiseResult, FracOrder, Weights};

/// Hard cap on enumerated cells in vector mode.
const MAX_CELLS: usize = 1_000_000;
/// Slack for box membership checks on grid values assembled from
/// `min + i * step` arithmetic.
const BOX_EPS: f64 = 1e-9;

/// The discrete search box: weight values and order values, plus the box
/// parameter `P` bounding both.
///
/// Scalar mode (the default) ties every weight component to one value;
/// vector mode enumerates a Cartesian grid of `floor(r) + 1` components per
/// order band.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGrid {
    pub alpha_values: Vec<f64>,
    pub r_values: Vec<f64>,
    pub p_box: f64,
    pub vector_mode: bool,
}

impl BoxGrid {
    pub fn new(alpha_values: Vec<f64>, r_values: Vec<f64>, p_box: f64) -> Result<Self> {
        let grid = BoxGrid {
            alpha_values,
            r_values,
            p_box,
            vector_mode: false,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn with_vector_mode(mut self, on: bool) -> Self {
        self.vector_mode = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_box > 0.0 && self.p_box < 1.0) {
            return Err(Error::invalid(format!(
                "box parameter P must lie in (0,1), got {}",
                self.p_box
            )));
        }
        if self.alpha_values.is_empty() || self.r_values.is_empty() {
            return Err(Error::invalid("grid value lists must be nonempty"));
        }
        let inv_p = 1.0 / self.p_box;
        for w in self.alpha_values.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid("alpha values must be strictly increasing"));
            }
        }
        for w in self.r_values.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid("r values must be strictly increasing"));
            }
        }
        for &a in &self.alpha_values {
            let in_box = a == 0.0 || (a >= self.p_box - BOX_EPS && a <= inv_p + BOX_EPS);
            if !in_box {
                return Err(Error::invalid(format!(
                    "alpha {a} outside {{0}} union [{}, {inv_p}]",
                    self.p_box
                )));
            }
        }
        for &r in &self.r_values {
            if !(1.0 - BOX_EPS..=inv_p + BOX_EPS).contains(&r) {
                return Err(Error::invalid(format!(
                    "order {r} outside [1, {inv_p}]"
                )));
            }
        }
        Ok(())
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeCell {
    pub alpha: Vec<f64>,
    pub r: f64,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// An evaluated grid with its argmin and an input digest.
#[derive(Debug, Clone)]
pub struct Landscape {
    pub grid: BoxGrid,
    pub cells: Vec<LandscapeCell>,
    /// Index of the argmin cell in `cells`.
    pub argmin: usize,
    /// Fingerprint of the inputs (signals, grid shape, solver options).
    pub digest: String,
}

impl Landscape {
    pub fn argmin_cell(&self) -> &LandscapeCell {
        &self.cells[self.argmin]
    }
}

/// Evaluates the training cost `I(alpha, r) = ||u_{alpha,r} - u_c||^2` at
/// one cell. Solver failures are recorded as infinite-cost cells rather
/// than propagated.
pub fn cost(
    weights: &Weights,
    order: &FracOrder,
    u_eta: &Signal,
    u_c: &Signal,
    opts: &SolverOptions,
) -> LandscapeCell {
    let outcome: Result<DenoiseResult> =
        DenoiseProblem::new(u_eta.clone(), *order, weights.clone(), *opts).and_then(|p| solve(&p));
    match outcome {
        Ok(res) => {
            let cost = l2_dist_sq(&res.u_opt, u_c).unwrap_or(f64::INFINITY);
            LandscapeCell {
                alpha: weights.values().to_vec(),
                r: order.r(),
                cost,
                iterations: res.iterations,
                converged: res.converged,
            }
        }
        Err(_) => LandscapeCell {
            alpha: weights.values().to_vec(),
            r: order.r(),
            cost: f64::INFINITY,
            iterations: 0,
            converged: false,
        },
    }
}

/// Canonical cell enumeration: orders ascending (outer), weight tuples
/// ascending/lexicographic (inner).
fn enumerate_cells(grid: &BoxGrid) -> Result<Vec<(Vec<f64>, f64)>> {
    let mut cells = Vec::new();
    for &r in &grid.r_values {
        let order = FracOrder::new(r)?;
        let len = order.weight_count();
        if grid.vector_mode {
            let combos = grid.alpha_values.len().checked_pow(len as u32);
            let total = combos.map(|c| c.saturating_add(cells.len()));
            if total.is_none() || total.unwrap() > MAX_CELLS {
                return Err(Error::invalid(format!(
                    "vector-mode grid exceeds {MAX_CELLS} cells"
                )));
            }
            let mut idx = vec![0usize; len];
            loop {
                let alpha: Vec<f64> = idx.iter().map(|&i| grid.alpha_values[i]).collect();
                // Mixed zero/positive weight tuples are not valid cells.
                let zeros = alpha.iter().filter(|a| **a == 0.0).count();
                if zeros == 0 || zeros == len {
                    cells.push((alpha, r));
                }
                let mut carry = len;
                while carry > 0 {
                    idx[carry - 1] += 1;
                    if idx[carry - 1] < grid.alpha_values.len() {
                        break;
                    }
                    idx[carry - 1] = 0;
                    carry -= 1;
                }
                if carry == 0 {
                    break;
                }
            }
        } else {
            for &a in &grid.alpha_values {
                cells.push((vec![a; len], r));
            }
            if cells.len() > MAX_CELLS {
                return Err(Error::invalid(format!(
                    "grid exceeds {MAX_CELLS} cells"
                )));
            }
        }
    }
    Ok(cells)
}

fn fnv1a(bytes: impl Iterator<Item = u8>, mut hash: u64) -> u64 {
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn digest_inputs(u_eta: &Signal, u_c: &Signal, grid: &BoxGrid, opts: &SolverOptions) -> String {
    let mut h = 0xcbf29ce484222325u64;
    h = fnv1a(
        u_eta
            .values()
            .iter()
            .flat_map(|v| v.to_bits().to_le_bytes()),
        h,
    );
    h = fnv1a(u_c.values().iter().flat_map(|v| v.to_bits().to_le_bytes()), h);
    format!(
        "n={} alphas={} rs={} P={} vector={} max_iter={} tol_rel={} window={} safety={} signals={h:016x}",
        u_eta.len(),
        grid.alpha_values.len(),
        grid.r_values.len(),
        grid.p_box,
        grid.vector_mode,
        opts.max_iter,
        opts.tol_rel,
        opts.window,
        opts.safety
    )
}

/// Evaluates every cell of the box (optionally on `jobs` worker threads)
/// and extracts the argmin. Ties break toward smaller `r`, then
/// lexicographically smaller `alpha`. Fails only if every cell failed.
pub fn grid_search(
    grid: &BoxGrid,
    u_eta: &Signal,
    u_c: &Signal,
    opts: &SolverOptions,
    jobs: usize,
) -> Result<Landscape> {
    grid.validate()?;
    if u_eta.grid() != u_c.grid() {
        return Err(Error::invalid(
            "noisy and clean signals live on different grids",
        ));
    }
    let specs = enumerate_cells(grid)?;

    let eval = |(alpha, r): &(Vec<f64>, f64)| -> LandscapeCell {
        let order = FracOrder::new(*r).expect("validated order");
        match Weights::new(alpha.clone()) {
            Ok(w) => cost(&w, &order, u_eta, u_c, opts),
            Err(_) => LandscapeCell {
                alpha: alpha.clone(),
                r: *r,
                cost: f64::INFINITY,
                iterations: 0,
                converged: false,
            },
        }
    };

    let cells: Vec<LandscapeCell> = if jobs <= 1 {
        specs.iter().map(eval).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Training(format!("worker pool: {e}")))?;
        // par_iter + collect preserves canonical order regardless of the
        // execution schedule.
        pool.install(|| specs.par_iter().map(eval).collect())
    };

    let argmin = select_argmin(&cells)?;
    Ok(Landscape {
        grid: grid.clone(),
        cells,
        argmin,
        digest: digest_inputs(u_eta, u_c, grid, opts),
    })
}

fn select_argmin(cells: &[LandscapeCell]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, cell) in cells.iter().enumerate() {
        if !cell.cost.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let incumbent = &cells[b];
                cell.cost < incumbent.cost
                    || (cell.cost == incumbent.cost
                        && (cell.r < incumbent.r
                            || (cell.r == incumbent.r && cell.alpha < incumbent.alpha)))
            }
        };
        if better {
            best = Some(i);
        }
    }
    best.ok_or_else(|| Error::Training("every grid cell failed".into()))
}

fn format_alpha(alpha: &[f64]) -> String {
    if alpha.windows(2).all(|w| w[0] == w[1]) {
        format!("{}", alpha[0])
    } else {
        alpha
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Writes the landscape CSV: header, cells in canonical (row-major over r
/// then alpha) order, and an argmin footer comment. Failed cells carry
/// `inf` cost. Byte-identical across re-exports and worker counts.
pub fn export_landscape(landscape: &Landscape, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("alpha,r,cost,iterations,converged\n");
    for cell in &landscape.cells {
        writeln!(
            out,
            "{},{},{},{},{}",
            format_alpha(&cell.alpha),
            cell.r,
            cell.cost,
            cell.iterations,
            cell.converged
        )
        .expect("string write");
    }
    let best = landscape.argmin_cell();
    writeln!(
        out,
        "# argmin,{},{},{}",
        format_alpha(&best.alpha),
        best.r,
        best.cost
    )
    .expect("string write");
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A refined box covering the 3x3 neighborhood of the argmin at
/// `spacing / factor`, clipped to the original box. Positive weight values
/// stay clamped to `[P, 1/P]`; a zero argmin keeps the degenerate point.
pub fn refine_argmin(landscape: &Landscape, factor: usize) -> Result<BoxGrid> {
    if factor < 2 {
        return Err(Error::invalid(format!(
            "refinement factor must be >= 2, got {factor}"
        )));
    }
    let grid = &landscape.grid;
    if grid.vector_mode {
        return Err(Error::invalid(
            "argmin refinement is defined for scalar weight mode",
        ));
    }
    let best = landscape.argmin_cell();
    let alpha_star = best.alpha[0];
    let ia = grid
        .alpha_values
        .iter()
        .position(|&a| a == alpha_star)
        .ok_or_else(|| Error::invalid("argmin alpha missing from grid"))?;
    let ir = grid
        .r_values
        .iter()
        .position(|&r| r == best.r)
        .ok_or_else(|| Error::invalid("argmin r missing from grid"))?;

    let refined_axis = |values: &[f64], idx: usize, lo_cap: f64, hi_cap: f64| -> Vec<f64> {
        let lo = if idx > 0 { values[idx - 1] } else { values[idx] };
        let hi = if idx + 1 < values.len() {
            values[idx + 1]
        } else {
            values[idx]
        };
        let local = if values.len() > 1 {
            let right = if idx + 1 < values.len() {
                values[idx + 1] - values[idx]
            } else {
                values[idx] - values[idx - 1]
            };
            right
        } else {
            return vec![values[idx]];
        };
        let step = local / factor as f64;
        let mut out = Vec::new();
        let mut v = lo.max(lo_cap);
        let hi = hi.min(hi_cap);
        while v <= hi + step * 1e-9 {
            out.push(v);
            v += step;
        }
        out.dedup_by(|a, b| (*a - *b).abs() < step * 1e-9);
        out
    };

    let inv_p = 1.0 / grid.p_box;
    let mut alphas = refined_axis(&grid.alpha_values, ia, grid.p_box, inv_p);
    // Keep the degenerate origin when the coarse grid had it and the
    // neighborhood touches it.
    if grid.alpha_values[0] == 0.0 && ia <= 1 {
        alphas.retain(|&a| a >= grid.p_box - BOX_EPS);
        alphas.insert(0, 0.0);
    }
    let rs = refined_axis(&grid.r_values, ir, 1.0, inv_p);

    let refined = BoxGrid {
        alpha_values: alphas,
        r_values: rs,
        p_box: grid.p_box,
        vector_mode: false,
    };
    refined.validate()?;
    Ok(refined)
}
