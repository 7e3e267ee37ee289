use std::f64::consts::PI;

use covkit::accframe::{
    local_frame_differentials, proper_time, solve_frame_map, FrameError, FrameGrid, FrameOptions, Trajectory,
};

#[test]
fn proper_time_closed_forms() {
    let rest = Trajectory::parse("1", 1.0).unwrap();
    assert!((proper_time(&rest, 0.0, 2.0, 1e-12).unwrap() - 2.0).abs() < 1e-14);
    let acc = Trajectory::parse("0.25*t^2", 1.0).unwrap();
    let tau = proper_time(&acc, 0.0, 1.0, 1e-13).unwrap();
    assert!((tau - (0.5 * 0.75f64.sqrt() + PI / 6.0)).abs() < 1e-9);
    let fast = Trajectory::parse("1.5*t", 1.0).unwrap();
    assert!(matches!(proper_time(&fast, 0.0, 1.0, 1e-10), Err(FrameError::Superluminal { .. })));
}

#[test]
fn lorentz_differentials() {
    let m = local_frame_differentials(0.6, 1.0).unwrap();
    let want = [[1.25, -0.75], [-0.75, 1.25]];
    for r in 0..2 {
        for k in 0..2 {
            assert!((m[r][k] - want[r][k]).abs() < 1e-15);
        }
    }
    assert!(local_frame_differentials(-2.0, 1.0).is_err());
}

#[test]
fn boosted_frame_is_exact() {
    let traj = Trajectory::parse("0.6*t", 1.0).unwrap();
    let grid = FrameGrid::new((0.0, 1.0), (-1.0, 1.0), 31, 21).unwrap();
    let map = solve_frame_map(&traj, &grid, &FrameOptions::default()).unwrap();
    assert!(map.converged && map.jerk_free);
    for i in 0..grid.nt {
        for j in 0..grid.nx {
            let (t, x) = (grid.t(i), grid.x(j));
            assert!((map.x_prime[i][j] - 1.25 * (x - 0.6 * t)).abs() < 1e-12);
            assert!((map.t_prime[i][j] - 1.25 * (t - 0.6 * x)).abs() < 1e-12);
        }
    }
}

#[test]
fn accelerated_frame_meets_boundary_conditions() {
    let traj = Trajectory::parse("0.05*t^2", 1.0).unwrap();
    let grid = FrameGrid::new((0.0, 2.0), (-1.0, 1.0), 41, 41).unwrap();
    let map = solve_frame_map(&traj, &grid, &FrameOptions::default()).unwrap();
    assert!(map.converged);
    assert!(map.boundary_x <= 1e-8 && map.boundary_t <= 1e-8);
    assert!(FrameGrid::new((1.0, 0.0), (-1.0, 1.0), 10, 10).is_err());
}
