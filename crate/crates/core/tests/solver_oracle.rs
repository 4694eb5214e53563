use spme_core::barenblatt::BarenblattProfile;
use spme_core::{run, Grid, SolverConfig, SpeciesState};

fn barenblatt_l1_error(cells: usize, t1: f64) -> f64 {
    let p = BarenblattProfile::new(1.0, 2.0, 1).unwrap();
    let grid = Grid::from_bounds(&[cells], &[-4.0], &[4.0]).unwrap();
    let init = SpeciesState::from_fn(grid.clone(), 1, 1.0, |_, x| p.evaluate(x, 1.0).unwrap()).unwrap();
    let (out, _) = run(&init, &SolverConfig::default(), t1, &mut []).unwrap();
    let h = grid.spacing()[0];
    out.fields()[0]
        .iter()
        .enumerate()
        .map(|(c, &u)| (u - p.evaluate(&grid.center(c)[..1], t1).unwrap()).abs() * h)
        .sum()
}

#[test]
fn barenblatt_advance_regression() {
    // h = 1/256 on [-4, 4]
    let e1 = barenblatt_l1_error(2048, 1.5);
    let e2 = barenblatt_l1_error(4096, 1.5);
    assert!(e1 <= 5e-3, "{e1}");
    assert!(e2 <= 0.5 * e1 * 1.15, "{e1} {e2}");
}

#[test]
fn barenblatt_advance_order() {
    let errs: Vec<f64> = [512, 1024, 2048].iter().map(|&n| barenblatt_l1_error(n, 2.0)).collect();
    eprintln!("{errs:?}");
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 0.8, "{errs:?}");
    }
}
