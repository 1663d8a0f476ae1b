//! Fixtures shared by the benchmarks in `benches/`.

use ergolab_core::radial_solver::{build_grid, GridOptions};
use ergolab_core::{Grid, ProblemSpec};

/// One spec per drift regime: strong, moderate with a gap, moderate on the plateau.
pub fn regimes() -> [(&'static str, ProblemSpec); 3] {
    [
        ("strong", ProblemSpec::new(2.0, 3, 1.0, 1.0, 0.0, 2.0, 1.0)),
        ("gap", ProblemSpec::new(2.0, 3, 0.0, 1.0, 0.0, 2.0, 1.0)),
        ("plateau", ProblemSpec::new(2.0, 3, 0.0, 1.0, 2.0, 2.0, 1.0)),
    ]
}

pub fn grid(spec: &ProblemSpec, beta: f64, n: usize) -> Grid {
    build_grid(spec, beta, &GridOptions { n, ..Default::default() }).expect("benchmark grid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        for (_, spec) in regimes() {
            assert_eq!(grid(&spec, 100.0, 256).nodes().len(), 257);
        }
    }
}
