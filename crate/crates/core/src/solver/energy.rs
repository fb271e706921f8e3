//! Direct evaluation of the discrete denoising objective.
//!
//! This route recomputes every term from its defining formula, independent
//! of the operator plumbing in [`super::operator`]; the solver cross-checks
//! the two in its tests.

use crate::error::{Error, Result};
use crate::fracnorm::{seminorm_power_from_profile, DistanceProfile, GagliardoParams};

use super::DenoiseProblem;

/// Sum of gap residuals `sum_i |a_{i+1} - a_i - c h b_i|`; `b` is read at
/// the left node of each gap.
fn residual_l1(a: &[f64], b: Option<&[f64]>, c_h: f64) -> f64 {
    match b {
        Some(b) => a
            .windows(2)
            .zip(b)
            .map(|(w, bi)| (w[1] - w[0] - c_h * bi).abs())
            .sum(),
        None => a.windows(2).map(|w| (w[1] - w[0]).abs()).sum(),
    }
}

/// Evaluates `(energy, fidelity, tgv_value)` of the functional at the given
/// primal variables.
pub fn discrete_energy(
    u: &[f64],
    v_fields: &[Vec<f64>],
    problem: &DenoiseProblem,
) -> Result<(f64, f64, f64)> {
    let n = problem.u_eta.len();
    let h = problem.u_eta.spacing();
    if u.len() != n {
        return Err(Error::invalid(format!(
            "u has {} samples, expected {n}",
            u.len()
        )));
    }
    let order = &problem.order;
    let expected_fields = order.v_field_count();
    if v_fields.len() != expected_fields {
        return Err(Error::invalid(format!(
            "order {} expects {expected_fields} auxiliary fields, got {}",
            order.r(),
            v_fields.len()
        )));
    }
    for (j, v) in v_fields.iter().enumerate() {
        if v.len() != n {
            return Err(Error::invalid(format!(
                "v_{j} has {} samples, expected {n}",
                v.len()
            )));
        }
    }

    let fidelity: f64 = h * u
        .iter()
        .zip(problem.u_eta.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>();

    let a = problem.weights.values();
    let k = order.k();
    let s = order.s();

    let tgv = if problem.weights.is_zero() {
        0.0
    } else if order.is_integer() {
        let m = k;
        if m == 1 {
            a[0] * residual_l1(u, None, 0.0)
        } else {
            let mut acc = a[0] * residual_l1(u, Some(&v_fields[0]), h);
            for j in 1..=m - 2 {
                acc += a[j] * residual_l1(&v_fields[j - 1], Some(&v_fields[j]), h);
            }
            acc + a[m - 1] * residual_l1(&v_fields[m - 2], None, 0.0)
        }
    } else {
        let ss = s * (1.0 - s);
        let last = &v_fields[k - 1];
        let mut acc = if k == 1 {
            a[0] * residual_l1(u, Some(last), s * h)
        } else {
            let mut acc = a[0] * residual_l1(u, Some(&v_fields[0]), h);
            for j in 1..=k - 2 {
                acc += a[j] * residual_l1(&v_fields[j - 1], Some(&v_fields[j]), h);
            }
            acc + a[k - 1] * residual_l1(&v_fields[k - 2], Some(last), s * h)
        };
        let params = GagliardoParams::from_order_fraction(s).expect("s in (0,1)");
        let profile = DistanceProfile::build(n, h, &params);
        let gagliardo =
            seminorm_power_from_profile(last, &profile, params.p()).powf(1.0 / params.p());
        acc += a[k] * ss * gagliardo;
        let mean: f64 = h * last.iter().sum::<f64>();
        acc += a[k - 1] * ss * mean.abs();
        acc
    };

    Ok((fidelity + tgv, fidelity, tgv))
}
