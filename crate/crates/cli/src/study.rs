//! Refinement studies against closed-form solutions.

use spme_core::refinement::{ErrorRow, ErrorTable};
use spme_core::solver::{run_with, RunOptions, SolverError};
use spme_core::travelling::{dirichlet_tw_run, TravellingError};
use spme_core::StateError;
use thiserror::Error;

use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("refinement needs at least 2 levels, got {0}")]
    Levels(usize),
    #[error("scenario `{0}` has no closed-form solution (needs barenblatt or travelling-wave data only)")]
    NoExactSolution(String),
    #[error("refinement needs a `t_end` horizon")]
    Horizon,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Travelling(#[from] TravellingError),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Error table over `levels` grids, the scenario grid being the coarsest and each level
/// halving the spacing.
pub fn refinement_study(scenario: &Scenario, levels: usize) -> Result<ErrorTable, StudyError> {
    if levels < 2 {
        return Err(StudyError::Levels(levels));
    }
    let t_end = scenario.t_end().ok_or(StudyError::Horizon)?;
    if let Some(tw) = scenario.travelling_wave() {
        return Ok(dirichlet_tw_run(&tw, &scenario.grid, scenario.t0, t_end, levels)?);
    }
    if !scenario.is_barenblatt() {
        return Err(StudyError::NoExactSolution(scenario.name.clone()));
    }
    let cfg = &scenario.solver;
    let mut table = ErrorTable::default();
    for level in 0..levels {
        let grid = scenario.grid.refined(1 << level);
        let initial = scenario.initial_state_on(&grid)?;
        let opts = RunOptions::until(t_end).with_stride(usize::MAX).without_invariants();
        let out = run_with(&initial, cfg, &opts, &mut [])?;
        let vol = grid.cell_volume();
        let dim = grid.dim();
        let mut l1_species = Vec::new();
        let mut linf_species = Vec::new();
        for (i, f) in out.state.fields().iter().enumerate() {
            let (mut l1, mut linf) = (0.0_f64, 0.0_f64);
            for (c, &u) in f.iter().enumerate() {
                let x = grid.center(c);
                let d = (u - scenario.data_value(i, &x[..dim], t_end)).abs();
                l1 += d;
                linf = linf.max(d);
            }
            l1_species.push(l1 * vol);
            linf_species.push(linf);
        }
        table.push(ErrorRow {
            h: grid.min_spacing(),
            l1: l1_species.iter().sum(),
            linf: linf_species.iter().copied().fold(0.0, f64::max),
            l1_species,
            linf_species,
        });
    }
    Ok(table)
}
