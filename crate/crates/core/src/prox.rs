//! Proximal and projection operators for the primal-dual solver.
//!
//! The dual constraints of the TGV^r saddle-point problem are an l-infinity
//! ball (measure-residual blocks), an lq ball with `q = p/(p-1)` (the
//! Gagliardo block), and an interval (the mean term). The q arising from
//! `p = 1 + s(1-s)` lies in `[5, inf)`, so the lq projection must stay robust
//! for very large exponents.

use crate::error::{Error, Result};

/// Ball descriptions used by the dual updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BallSpec {
    Linf { radius: f64 },
    Lq { q: f64, radius: f64 },
    Interval { radius: f64 },
}

/// Componentwise clamp to `[-radius, radius]`.
pub fn clip_linf(z: &[f64], radius: f64) -> Vec<f64> {
    let mut out = z.to_vec();
    clip_linf_in_place(&mut out, radius);
    out
}

pub(crate) fn clip_linf_in_place(z: &mut [f64], radius: f64) {
    debug_assert!(radius >= 0.0);
    for v in z.iter_mut() {
        *v = v.clamp(-radius, radius);
    }
}

/// Scalar clamp to `[-radius, radius]`.
pub fn clip_interval(t: f64, radius: f64) -> f64 {
    t.clamp(-radius, radius)
}

/// Closed-form prox of the quadratic fidelity `h * sum (u_i - eta_i)^2`:
/// the minimizer of `(1/(2 step)) ||u - u_bar||^2 + h ||u - eta||^2` is
/// `(u_bar_i + 2 step h eta_i) / (1 + 2 step h)` componentwise.
pub fn prox_fidelity(u_bar: &[f64], u_eta: &[f64], h: f64, step: f64) -> Vec<f64> {
    debug_assert_eq!(u_bar.len(), u_eta.len());
    let c = 2.0 * step * h;
    let denom = 1.0 + c;
    u_bar
        .iter()
        .zip(u_eta)
        .map(|(b, e)| (b + c * e) / denom)
        .collect()
}

/// `||z||_q` with the largest magnitude factored out so huge `q` cannot
/// overflow.
pub fn lq_norm(z: &[f64], q: f64) -> f64 {
    let peak = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return 0.0;
    }
    let sum: f64 = z.iter().map(|v| (v.abs() / peak).powf(q)).sum();
    peak * sum.powf(1.0 / q)
}

// Above this exponent the lq ball is numerically indistinguishable from the
// l-infinity ball.
const Q_AS_LINF: f64 = 1e6;
const MAX_OUTER: usize = 200;
const MAX_INNER: usize = 80;

/// Euclidean projection onto `{ y : ||y||_q <= radius }`.
///
/// Points inside the ball are returned unchanged. Outside, the KKT system is
/// solved by an outer bracketing search on the multiplier `mu >= 0`
/// (bisection with a secant-accelerated midpoint) and an inner safeguarded
/// Newton solve of `y + mu q |y|^{q-1} sign(y) = z` per coordinate. The
/// outer loop stops when `| ||y(mu)||_q - radius | <= tol * radius`.
pub fn project_lq_ball(z: &[f64], q: f64, radius: f64, tol: f64) -> Result<Vec<f64>> {
    if !(q > 1.0) {
        return Err(Error::invalid(format!("lq projection needs q > 1, got {q}")));
    }
    if !(radius >= 0.0) {
        return Err(Error::invalid(format!("radius must be >= 0, got {radius}")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tol must be > 0, got {tol}")));
    }
    let mut out = z.to_vec();
    let mut lambda = f64::NEG_INFINITY;
    project_lq_ball_in_place(&mut out, q, radius, tol, &mut lambda)?;
    Ok(out)
}

/// In-place projection with a warm-started multiplier.
///
/// The KKT multiplier is searched in log space (`lambda = ln mu`), because
/// for conjugate exponents near l-infinity the multiplier scales like
/// `radius^{-(q-1)}` and can span hundreds of orders of magnitude. The
/// solver threads the previous iteration's `lambda` back in as a warm
/// start; pass `f64::NEG_INFINITY` when cold.
pub(crate) fn project_lq_ball_in_place(
    z: &mut [f64],
    q: f64,
    radius: f64,
    tol: f64,
    lambda_warm: &mut f64,
) -> Result<()> {
    let mut cache = Vec::new();
    project_lq_ball_cached(z, q, radius, tol, lambda_warm, &mut cache)
}

/// As [`project_lq_ball_in_place`], threading a per-coordinate Newton-start
/// cache across calls (the solver projects a slowly drifting dual every
/// iteration, so the previous roots are near-perfect starts).
pub(crate) fn project_lq_ball_cached(
    z: &mut [f64],
    q: f64,
    radius: f64,
    tol: f64,
    lambda_warm: &mut f64,
    w_cache: &mut Vec<f64>,
) -> Result<()> {
    if radius == 0.0 {
        z.iter_mut().for_each(|v| *v = 0.0);
        return Ok(());
    }
    if z.iter().all(|v| *v == 0.0) {
        return Ok(());
    }
    if q >= Q_AS_LINF {
        clip_linf_in_place(z, radius);
        return Ok(());
    }
    let norm = lq_norm(z, q);
    if norm <= radius {
        return Ok(());
    }
    if (q - 2.0).abs() < 1e-12 {
        // Radial closed form.
        let scale = radius / norm;
        z.iter_mut().for_each(|v| *v *= scale);
        *lambda_warm = ((1.0 / scale - 1.0) / 2.0).ln();
        return Ok(());
    }

    let signs: Vec<f64> = z.iter().map(|v| v.signum()).collect();
    let mag: Vec<f64> = z.iter().map(|v| v.abs()).collect();
    let mut y = vec![0.0; z.len()];
    let ln_q = q.ln();
    // Per-coordinate log-root cache: across outer evaluations (and across
    // solver iterations) the multiplier moves little, so the previous root
    // is an excellent Newton start, and Newton on the convex log-form is
    // globally safe from any start.
    if w_cache.len() != mag.len() {
        *w_cache = mag
            .iter()
            .map(|&z| if z > 0.0 { z.ln() } else { f64::NEG_INFINITY })
            .collect();
    }

    // The outer root-find runs on g(lambda) = ln(||y(lambda)||_q / radius),
    // which is close to linear with slope -1/(q-1); the raw residual is kept
    // alongside for the stopping test.
    let mut eval = |lambda: f64, y: &mut [f64]| -> (f64, f64) {
        let ln_c = lambda + ln_q;
        for ((yi, &zi), wi) in y.iter_mut().zip(&mag).zip(w_cache.iter_mut()) {
            *yi = shrink_coordinate(zi, ln_c, q, wi);
        }
        let norm = lq_norm(y, q);
        let g = if norm > 0.0 {
            (norm / radius).ln()
        } else {
            -1e6
        };
        (norm - radius, g)
    };
    let target = tol * radius;
    let commit = |lambda: f64, y: &[f64], z: &mut [f64], warm: &mut f64| {
        *warm = lambda;
        for ((zi, yi), si) in z.iter_mut().zip(y).zip(&signs) {
            *zi = yi * si;
        }
    };

    // Bracket lambda: g is continuous and decreasing, positive as
    // lambda -> -inf (projection approaches z) and negative once the shrink
    // multiplier overflows (projection collapses to 0). The near-linearity
    // of g makes a predictive jump of g * (q-1) land close to the root.
    let mut lam = if lambda_warm.is_finite() {
        *lambda_warm
    } else {
        0.0
    };
    let (f0, g0) = eval(lam, &mut y);
    if f0.abs() <= target {
        commit(lam, &y, z, lambda_warm);
        return Ok(());
    }
    let mut lo;
    let mut g_lo;
    let mut hi;
    let mut g_hi;
    let mut jump = (g0.abs() * (q - 1.0) * 1.25).clamp(1e-3, 1e5);
    if f0 > 0.0 {
        lo = lam;
        g_lo = g0;
        loop {
            lam += jump;
            jump *= 2.0;
            let (f, g) = eval(lam, &mut y);
            if f.abs() <= target {
                commit(lam, &y, z, lambda_warm);
                return Ok(());
            }
            if f <= 0.0 {
                hi = lam;
                g_hi = g;
                break;
            }
            lo = lam;
            g_lo = g;
            if jump > 1e7 {
                return Err(Error::Numeric {
                    msg: "lq projection could not bracket the multiplier".into(),
                    residual: f,
                });
            }
        }
    } else {
        hi = lam;
        g_hi = g0;
        loop {
            lam -= jump;
            jump *= 2.0;
            let (f, g) = eval(lam, &mut y);
            if f.abs() <= target {
                commit(lam, &y, z, lambda_warm);
                return Ok(());
            }
            if f > 0.0 {
                lo = lam;
                g_lo = g;
                break;
            }
            hi = lam;
            g_hi = g;
            if jump > 1e7 {
                return Err(Error::Numeric {
                    msg: "lq projection could not bracket the multiplier".into(),
                    residual: f,
                });
            }
        }
    }

    // Illinois-accelerated false position on (lambda, g).
    let mut residual = f64::INFINITY;
    let mut side = 0i8;
    for _ in 0..MAX_OUTER {
        let denom = g_lo - g_hi;
        let mut lam = if denom > 0.0 {
            lo + g_lo * (hi - lo) / denom
        } else {
            0.5 * (lo + hi)
        };
        if !(lam > lo && lam < hi) {
            lam = 0.5 * (lo + hi);
        }
        let (f, g) = eval(lam, &mut y);
        residual = f;
        if f.abs() <= target {
            commit(lam, &y, z, lambda_warm);
            return Ok(());
        }
        if g > 0.0 {
            if side == 1 {
                g_hi *= 0.5;
            }
            lo = lam;
            g_lo = g;
            side = 1;
        } else {
            if side == -1 {
                g_lo *= 0.5;
            }
            hi = lam;
            g_hi = g;
            side = -1;
        }
    }
    Err(Error::Numeric {
        msg: "lq projection did not converge".into(),
        residual,
    })
}

/// Root of `y + c y^{q-1} = z` on `(0, z]` for `z > 0`, with `c = mu q`
/// given through its logarithm and a Newton start threaded in via
/// `w_start` (updated to the found log-root).
///
/// Solved as Newton on `Q(w) = ln(e^w + c e^{(q-1)w}) - ln z` with
/// `w = ln y`: `Q` is convex and increasing with slope bounded by
/// `max(1, q-1)`, so the iteration cannot stall even when the root sits
/// hundreds of orders of magnitude below `z` (large `q`, large `mu`), and
/// any finite start is safe.
fn shrink_coordinate(z: f64, ln_c: f64, q: f64, w_start: &mut f64) -> f64 {
    if z == 0.0 || ln_c == f64::NEG_INFINITY {
        return z;
    }
    if !ln_c.is_finite() {
        return 0.0;
    }
    let a = q - 1.0;
    let ln_z = z.ln();
    let mut w = if w_start.is_finite() { (*w_start).min(ln_z) } else { ln_z };
    for _ in 0..MAX_INNER {
        let t_lin = w;
        let t_pow = ln_c + a * w;
        let m = t_lin.max(t_pow);
        let e_lin = (t_lin - m).exp();
        let e_pow = (t_pow - m).exp();
        let q_val = m + (e_lin + e_pow).ln() - ln_z;
        if q_val.abs() <= 1e-14 {
            break;
        }
        let slope = (e_lin + a * e_pow) / (e_lin + e_pow);
        w -= q_val / slope;
    }
    *w_start = w;
    w.exp().min(z)
}

/// Projection dispatch over [`BallSpec`].
pub fn project(z: &[f64], ball: &BallSpec, tol: f64) -> Result<Vec<f64>> {
    match *ball {
        BallSpec::Linf { radius } => Ok(clip_linf(z, radius)),
        BallSpec::Lq { q, radius } => project_lq_ball(z, q, radius, tol),
        BallSpec::Interval { radius } => {
            if z.len() != 1 {
                return Err(Error::invalid("interval projection expects a scalar"));
            }
            Ok(vec![clip_interval(z[0], radius)])
        }
    }
}
