//! Five-element optimization models: parsing, grounding and exact solving.

pub mod compiler;
pub mod expr;
pub mod five_element;
pub mod solver;
pub mod testing;

pub use compiler::{compile, compile_with, evaluate, CanonicalModel, CompileError, CompileOptions, SolveSpec};
pub use expr::GroundExpr;
pub use five_element::{parse_five_element, render_five_element, validate, Diagnostic, DiagnosticKind, FiveElementModel};
pub use solver::{solve, solve_enumerate, solve_lp, solve_milp, SolveOutcome, SolveStatus, SolverOptions};

/// Reference models used by tests, examples and the CLI's `--demo` inputs.
pub mod fixtures {
    pub const KNAPSACK: &str = include_str!("../fixtures/knapsack.fe");
    pub const INVESTMENT: &str = include_str!("../fixtures/investment.fe");
    pub const WORKFORCE: &str = include_str!("../fixtures/workforce.fe");
    pub const DISTRIBUTION: &str = include_str!("../fixtures/distribution.fe");
    pub const DISTRIBUTION_SMALL: &str = include_str!("../fixtures/distribution_small.fe");
    pub const TSP: &str = include_str!("../fixtures/tsp.fe");

    pub const ALL: [&str; 6] = [KNAPSACK, INVESTMENT, WORKFORCE, DISTRIBUTION, DISTRIBUTION_SMALL, TSP];
}
