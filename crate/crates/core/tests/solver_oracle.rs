//! Cross-validation of the primal-dual solver against an independent
//! projected-subgradient minimizer on small problems.

#[path = "support/oracle.rs"]
mod oracle;

use fractgv::solver::solve;

#[test]
fn primal_dual_matches_subgradient_oracle_small() {
    // One representative member of the random family; the full ten-problem
    // sweep at the published budget runs in the acceptance suite.
    let problem = oracle::family_problem(1);
    let res = solve(&problem).unwrap();

    let oracle_best = oracle::oracle_energy(&problem, 200_000, 3);
    let rel = (res.energy - oracle_best).abs() / oracle_best.abs().max(1e-300);
    assert!(
        rel <= 2e-3,
        "solver {} vs oracle {} (rel {rel})",
        res.energy,
        oracle_best
    );

    // The oracle's independent energy evaluation agrees with the solver's
    // reported value at the solver's own iterate.
    let at_solution = oracle::oracle_energy_at(&problem, &res.u_opt, &res.v_fields[0]);
    let rel = (at_solution - res.energy).abs() / res.energy.abs().max(1e-300);
    assert!(rel <= 1e-9, "energy routes disagree: {at_solution} vs {}", res.energy);
}
