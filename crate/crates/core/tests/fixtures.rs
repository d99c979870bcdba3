use formopt_core::compiler::{compile, CanonicalModel, SolveSpec};
use formopt_core::fixtures;
use formopt_core::five_element::parse_five_element;
use formopt_core::solver::{execute_spec, solve, solve_enumerate, solve_milp, SolveStatus};

fn model(doc: &str) -> CanonicalModel {
    compile(&parse_five_element(doc).unwrap()).unwrap()
}

// Integer shipments make the reduced variant finite; transport problems with
// integral data have integral optima, so the optimum is unchanged.
fn reduced_distribution_integer() -> String {
    fixtures::DISTRIBUTION_SMALL.replace("x[I, J] : continuous", "x[I, J] : integer in 0..4")
}

#[test]
fn investment_matches_grid_oracle() {
    // xs = 100000 - xb, xb on an integer grid from 60000.
    let mut best = f64::NEG_INFINITY;
    for xb in 60_000..=100_000 {
        let xb = f64::from(xb);
        let xs = 100_000.0 - xb;
        if 0.08 * xs + 0.02 * xb <= 5000.0 + 1e-9 {
            best = best.max(0.08 * xs + 0.04 * xb);
        }
    }
    let out = solve(&model(fixtures::INVESTMENT));
    assert!((out.objective.unwrap() - best).abs() <= 1e-6);
    assert!((best - 5600.0).abs() <= 1e-6);
}

#[test]
fn workforce_matches_enumeration_oracle() {
    let mut best = (i64::MAX, 0, 0);
    for xf in 1..=50 {
        for xp in 1..=150 {
            if 8 * xf + 4 * xp >= 450 && 300 * xf + 100 * xp <= 15000 && xf + xp < best.0 {
                best = (xf + xp, xf, xp);
            }
        }
    }
    assert_eq!(best, (76, 37, 39));
    let out = solve_milp(&model(fixtures::WORKFORCE));
    assert_eq!(out.objective, Some(76.0));
    assert_eq!(out.values(), vec![37.0, 39.0]);
}

#[test]
fn knapsack_matches_sixteen_point_oracle() {
    let (w, v) = ([4, 3, 1, 1], [300, 200, 150, 200]);
    let best = (0..16u32)
        .filter(|m| (0..4).filter(|i| m & (1 << i) != 0).map(|i| w[i]).sum::<i32>() <= 5)
        .map(|m| (0..4).filter(|i| m & (1 << i) != 0).map(|i| v[i]).sum::<i32>())
        .max()
        .unwrap();
    assert_eq!(best, 550);
    let m = model(fixtures::KNAPSACK);
    assert_eq!(solve_milp(&m).objective, Some(550.0));
    assert_eq!(solve_enumerate(&m, 1_000_000).objective, Some(550.0));
}

#[test]
fn tsp_matches_tour_oracle() {
    let d = [[0, 10, 15, 20], [10, 0, 35, 25], [15, 35, 0, 30], [20, 25, 30, 0]];
    let tours = [[0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3]];
    let lengths: Vec<i32> = tours.iter().map(|t| (0..4).map(|k| d[t[k]][t[(k + 1) % 4]]).sum()).collect();
    assert_eq!(lengths, vec![95, 80, 95]);
    let out = solve(&model(fixtures::TSP));
    assert_eq!(out.objective, Some(80.0));
    let used: Vec<&str> = out.assignment.iter().filter(|(k, v)| k.starts_with('x') && **v == 1.0).map(|(k, _)| k.as_str()).collect();
    assert_eq!(used.len(), 4);
}

#[test]
fn distribution_fixtures() {
    let full = solve(&model(fixtures::DISTRIBUTION));
    assert!((full.objective.unwrap() - 469_200.0).abs() <= 1e-6);

    let small = solve_milp(&model(fixtures::DISTRIBUTION_SMALL));
    let oracle = solve_enumerate(&model(&reduced_distribution_integer()), 1_000_000);
    assert_eq!(oracle.status, SolveStatus::Optimal);
    assert!((small.objective.unwrap() - oracle.objective.unwrap()).abs() <= 1e-6);
    assert_eq!(oracle.objective, Some(379.0));
}

#[test]
fn maximize_fixtures_restore_sign() {
    for doc in [fixtures::KNAPSACK, fixtures::INVESTMENT] {
        let m = model(doc);
        let out = solve(&m);
        let canonical = formopt_core::compiler::evaluate(&m, &out.values()).unwrap().objective;
        assert!((out.objective.unwrap() + canonical).abs() <= 1e-9);
    }
}

#[test]
fn fixtures_execute_through_solve_spec() {
    for doc in fixtures::ALL {
        let m = model(doc);
        let direct = solve(&m);
        let via_spec = execute_spec(&SolveSpec::parse(&SolveSpec::from_model(&m).to_json()).unwrap());
        assert_eq!(direct.status, via_spec.status);
        assert!((direct.objective.unwrap() - via_spec.objective.unwrap()).abs() <= 1e-6);
    }
}
