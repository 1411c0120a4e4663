use std::sync::Arc;

use kdecay::operators::{axis_direction, build_mode_operator, build_model_l, to_coords};
use kdecay::semigroup::evolve_mode;
use kdecay::spectral::{track_branches, TrackOptions};
use kdecay::velocity::{build_hermite_grid, KernelParams};
use kdecay::C64;

// after the microscopic part has died out, e^{−tB̂} acts through the
// low-frequency branches alone
#[test]
fn small_kappa_semigroup_matches_branch_expansion() {
    let grid = Arc::new(build_hermite_grid(3, 6, 1.0).unwrap());
    let l = build_model_l(&KernelParams::infer(3, -0.5, 0.5).unwrap(), &grid).unwrap();
    let ks = [1e-3, 1.5e-3, 2e-3];
    let set = track_branches(&l, &ks, &TrackOptions::default()).unwrap();
    let f0 = grid.sample_real(|v| (1.0 + v[0] + v[1] * v[2]) * (-v.iter().map(|x| x * x).sum::<f64>() / 4.0).exp());
    let y0 = to_coords(&grid, &f0);
    let t = 60.0;
    for (i, &k) in ks.iter().enumerate() {
        let op = build_mode_operator(&l, k, &axis_direction(3, 0)).unwrap();
        let y = to_coords(&grid, &evolve_mode(&op, &f0, &[t]).unwrap().states[0]);
        let mut approx = vec![C64::new(0.0, 0.0); y.len()];
        for b in &set.branches {
            let py = b.projections[i].apply(&y0);
            let e = (-b.zeta[i] * t).exp();
            for (a, p) in approx.iter_mut().zip(&py) {
                *a += e * p;
            }
        }
        let err: f64 = y.iter().zip(&approx).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let scale: f64 = y0.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-9 * scale, "κ = {k}: {err:e}");
    }
}
