//! Physical coordinates of an accelerated laboratory in one space dimension.
//!
//! The lab's centre of mass follows `x = f(t)`. Locally
//! `dx' = gamma (dx - v dt)`, `dt' = gamma (dt - v dx / c^2)`, and along
//! each `t`-slice this is integrated outward from the worldline, where
//! `x' = 0` and `t' = tau(t)`. The speed field `v(t, x)` is the speed of the
//! material point labelled `x'`, found by fixed-point iteration.

use thiserror::Error;

use crate::fieldcalc::{Chart, ExprError, Expression};
use crate::quad::{self, QuadError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("speed {v} reaches c = {c} at t = {t}")]
    Superluminal { t: f64, v: f64, c: f64 },
    #[error("c must be positive and finite")]
    InvalidSpeedOfLight,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("worldline x = {x} at t = {t} lies outside the grid")]
    AnchorOutside { t: f64, x: f64 },
    #[error("x' is not increasing in x on the slice t = {t}")]
    NonMonotone { t: f64 },
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("no convergence after {iterations} iterations (last change {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
}

impl From<QuadError<FrameError>> for FrameError {
    fn from(e: QuadError<FrameError>) -> Self {
        match e {
            QuadError::Integrand(inner) => inner,
            other => FrameError::Quadrature(other.to_string()),
        }
    }
}

/// Centre-of-mass worldline `x = f(t)`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    chart: Chart,
    f: Expression,
    velocity: Expression,
    jerk: Expression,
    c: f64,
}

impl Trajectory {
    pub fn new(f: Expression, c: f64) -> Result<Self, FrameError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(FrameError::InvalidSpeedOfLight);
        }
        let chart = Chart::new(&["t"]);
        for v in f.variables() {
            if v != "t" {
                return Err(ExprError::UnknownIdentifier { name: v, position: None }.into());
            }
        }
        let velocity = f.diff("t");
        let jerk = velocity.diff("t").diff("t");
        Ok(Trajectory {
            chart,
            f,
            velocity,
            jerk,
            c,
        })
    }

    pub fn parse(text: &str, c: f64) -> Result<Self, FrameError> {
        let f = Chart::new(&["t"]).parse(text)?;
        Trajectory::new(f, c)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn position(&self, t: f64) -> Result<f64, FrameError> {
        Ok(self.f.evaluate(&self.chart, &[t])?)
    }

    /// `f'(t)`, checked to be below `c`.
    pub fn velocity(&self, t: f64) -> Result<f64, FrameError> {
        let v = self.velocity.evaluate(&self.chart, &[t])?;
        if v.abs() >= self.c {
            return Err(FrameError::Superluminal { t, v, c: self.c });
        }
        Ok(v)
    }

    pub fn jerk(&self, t: f64) -> Result<f64, FrameError> {
        Ok(self.jerk.evaluate(&self.chart, &[t])?)
    }

    /// Whether `d^3 f/dt^3` vanishes (to 1e-12) at `samples` points of `[t0, t1]`.
    pub fn jerk_free_on(&self, t0: f64, t1: f64, samples: usize) -> Result<bool, FrameError> {
        if self.jerk.is_zero() {
            return Ok(true);
        }
        let n = samples.max(2);
        for k in 0..n {
            let t = t0 + (t1 - t0) * k as f64 / (n - 1) as f64;
            if self.jerk(t)?.abs() > 1e-12 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn gamma(v: f64, c: f64) -> f64 {
    1.0 / (1.0 - (v / c) * (v / c)).sqrt()
}

/// `tau = int_{t0}^{t1} sqrt(1 - v(u)^2/c^2) du`.
pub fn proper_time(traj: &Trajectory, t0: f64, t1: f64, tol: f64) -> Result<f64, FrameError> {
    let c = traj.c;
    let v = quad::integrate(
        |u| {
            let v = traj.velocity(u)?;
            Ok::<_, FrameError>((1.0 - (v / c) * (v / c)).sqrt())
        },
        t0,
        t1,
        tol,
        tol,
    )?;
    Ok(v)
}

/// Matrix taking `(dx, dt)` to `(dx', dt')`.
pub fn local_frame_differentials(v: f64, c: f64) -> Result<[[f64; 2]; 2], FrameError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(FrameError::InvalidSpeedOfLight);
    }
    if !(v.abs() < c) {
        return Err(FrameError::Superluminal { t: f64::NAN, v, c });
    }
    let g = gamma(v, c);
    Ok([[g, -g * v], [-g * v / (c * c), g]])
}

/// Uniform rectangle `[t0, t1] x [x0, x1]` with `nt x nx` nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameGrid {
    pub t0: f64,
    pub t1: f64,
    pub nt: usize,
    pub x0: f64,
    pub x1: f64,
    pub nx: usize,
}

impl FrameGrid {
    pub fn new(t: (f64, f64), x: (f64, f64), nt: usize, nx: usize) -> Result<Self, FrameError> {
        let g = FrameGrid {
            t0: t.0,
            t1: t.1,
            nt,
            x0: x.0,
            x1: x.1,
            nx,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        let finite = [self.t0, self.t1, self.x0, self.x1].iter().all(|v| v.is_finite());
        if !finite || !(self.t1 > self.t0) || !(self.x1 > self.x0) {
            return Err(FrameError::InvalidGrid("ranges must be finite and increasing".into()));
        }
        if self.nt < 3 || self.nx < 2 {
            return Err(FrameError::InvalidGrid("need at least 3 t-nodes and 2 x-nodes".into()));
        }
        Ok(())
    }

    pub fn t(&self, i: usize) -> f64 {
        self.t0 + (self.t1 - self.t0) * i as f64 / (self.nt - 1) as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x0 + (self.x1 - self.x0) * j as f64 / (self.nx - 1) as f64
    }

    fn dt(&self) -> f64 {
        (self.t1 - self.t0) / (self.nt - 1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameOptions {
    /// Stop when the largest change of the speed field is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Time at which `tau = 0`.
    pub t_ref: f64,
}

impl Default for FrameOptions {
    fn default() -> Self {
        FrameOptions {
            tol: 1e-8,
            max_iter: 100,
            t_ref: 0.0,
        }
    }
}

/// Solved frame on the grid; arrays are indexed `[i][j]` for `(t_i, x_j)`.
#[derive(Clone, Debug)]
pub struct FrameMap {
    pub grid: FrameGrid,
    pub x_prime: Vec<Vec<f64>>,
    pub t_prime: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Largest change of the speed field in the last iteration.
    pub residual: f64,
    pub converged: bool,
    /// `max_i |x'(t_i, f(t_i))|`.
    pub boundary_x: f64,
    /// `max_i |t'(t_i, f(t_i)) - tau(t_i)|`.
    pub boundary_t: f64,
    /// `d^3 f/dt^3 = 0` on the grid's time range: the regime where a fixed
    /// `x'` labels a material point of the lab.
    pub jerk_free: bool,
}

impl FrameMap {
    pub fn require_converged(self) -> Result<Self, FrameError> {
        if self.converged {
            Ok(self)
        } else {
            Err(FrameError::NotConverged {
                iterations: self.iterations,
                residual: self.residual,
            })
        }
    }

    /// CSV with header `t,x,x_prime,t_prime,v`, rows in `(t, x)` order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,x_prime,t_prime,v\n");
        for i in 0..self.grid.nt {
            for j in 0..self.grid.nx {
                out.push_str(&format!(
                    "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                    self.grid.t(i),
                    self.grid.x(j),
                    self.x_prime[i][j],
                    self.t_prime[i][j],
                    self.v[i][j]
                ));
            }
        }
        out
    }
}

struct Slice {
    xp: Vec<f64>,
    tp: Vec<f64>,
    /// values reconstructed at the anchor
    anchor_xp: f64,
    anchor_tp: f64,
}

/// Trapezoid integration of `dx'/dx = gamma`, `dt'/dx = -gamma v/c^2` along one
/// slice, from the anchor `xa` with `(x', t') = (0, tau)`, with `v` linear between nodes.
fn integrate_slice(grid: &FrameGrid, v: &[f64], xa: f64, tau: f64, c: f64) -> Slice {
    let n = grid.nx;
    let h = (grid.x1 - grid.x0) / (n - 1) as f64;
    let rates = |vv: f64| {
        let g = gamma(vv, c);
        (g, -g * vv / (c * c))
    };
    // segment k = [x_k, x_{k+1}] containing the anchor
    let k = (((xa - grid.x0) / h).floor() as usize).min(n - 2);
    let s = (xa - grid.x(k)) / h;
    let va = v[k] + s * (v[k + 1] - v[k]);
    let (ga, ta) = rates(va);

    let mut xp = vec![0.0; n];
    let mut tp = vec![0.0; n];
    // right of the anchor
    let (g1, t1) = rates(v[k + 1]);
    let d = grid.x(k + 1) - xa;
    xp[k + 1] = 0.5 * d * (ga + g1);
    tp[k + 1] = tau + 0.5 * d * (ta + t1);
    for j in k + 2..n {
        let (g0, t0) = rates(v[j - 1]);
        let (g1, t1) = rates(v[j]);
        xp[j] = xp[j - 1] + 0.5 * h * (g0 + g1);
        tp[j] = tp[j - 1] + 0.5 * h * (t0 + t1);
    }
    // left of the anchor
    let (g0, t0) = rates(v[k]);
    let d = xa - grid.x(k);
    xp[k] = -0.5 * d * (ga + g0);
    tp[k] = tau - 0.5 * d * (ta + t0);
    for j in (0..k).rev() {
        let (g0, t0) = rates(v[j]);
        let (g1, t1) = rates(v[j + 1]);
        xp[j] = xp[j + 1] - 0.5 * h * (g0 + g1);
        tp[j] = tp[j + 1] - 0.5 * h * (t0 + t1);
    }
    // walk back from node k + 1 to the anchor with the same rule
    let (g1, t1) = rates(v[k + 1]);
    let d = grid.x(k + 1) - xa;
    let anchor_xp = xp[k + 1] - 0.5 * d * (ga + g1);
    let anchor_tp = tp[k + 1] - 0.5 * d * (ta + t1);
    Slice {
        xp,
        tp,
        anchor_xp,
        anchor_tp,
    }
}

/// `X(t_i, x')`: inverse of the increasing piecewise-linear `x -> x'(t_i, x)`,
/// extended linearly beyond the ends.
fn invert_slice(grid: &FrameGrid, xp: &[f64], target: f64) -> f64 {
    let n = xp.len();
    let k = match xp.partition_point(|&v| v <= target) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    };
    let s = (target - xp[k]) / (xp[k + 1] - xp[k]);
    grid.x(k) + s * (grid.x(k + 1) - grid.x(k))
}

pub fn solve_frame_map(traj: &Trajectory, grid: &FrameGrid, opts: &FrameOptions) -> Result<FrameMap, FrameError> {
    grid.validate()?;
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(FrameError::InvalidGrid("tol must be positive and max_iter at least 1".into()));
    }
    let c = traj.c;
    let (nt, nx) = (grid.nt, grid.nx);
    let mut anchors = Vec::with_capacity(nt);
    let mut taus = Vec::with_capacity(nt);
    for i in 0..nt {
        let t = grid.t(i);
        let xa = traj.position(t)?;
        if !(xa >= grid.x0 && xa <= grid.x1) {
            return Err(FrameError::AnchorOutside { t, x: xa });
        }
        anchors.push(xa);
        taus.push(proper_time(traj, opts.t_ref, t, 1e-14)?);
    }
    let mut v: Vec<Vec<f64>> = (0..nt)
        .map(|i| traj.velocity(grid.t(i)).map(|vi| vec![vi; nx]))
        .collect::<Result<_, _>>()?;

    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut slices: Vec<Slice> = Vec::new();
    while iterations < opts.max_iter {
        iterations += 1;
        slices = (0..nt).map(|i| integrate_slice(grid, &v[i], anchors[i], taus[i], c)).collect();
        for (i, s) in slices.iter().enumerate() {
            if s.xp.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(FrameError::NonMonotone { t: grid.t(i) });
            }
        }
        let dt = grid.dt();
        let mut next = vec![vec![0.0; nx]; nt];
        for i in 0..nt {
            for j in 0..nx {
                let target = slices[i].xp[j];
                let x_at = |k: usize| invert_slice(grid, &slices[k].xp, target);
                let speed = if i == 0 {
                    (-3.0 * grid.x(j) + 4.0 * x_at(1) - x_at(2)) / (2.0 * dt)
                } else if i == nt - 1 {
                    (3.0 * grid.x(j) - 4.0 * x_at(nt - 2) + x_at(nt - 3)) / (2.0 * dt)
                } else {
                    (x_at(i + 1) - x_at(i - 1)) / (2.0 * dt)
                };
                if !(speed.abs() < c) {
                    return Err(FrameError::Superluminal {
                        t: grid.t(i),
                        v: speed,
                        c,
                    });
                }
                next[i][j] = speed;
            }
        }
        residual = v
            .iter()
            .flatten()
            .zip(next.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if residual < opts.tol {
            break;
        }
    }
    let boundary_x = slices.iter().map(|s| s.anchor_xp.abs()).fold(0.0, f64::max);
    let boundary_t = slices
        .iter()
        .zip(&taus)
        .map(|(s, tau)| (s.anchor_tp - tau).abs())
        .fold(0.0, f64::max);
    Ok(FrameMap {
        grid: *grid,
        x_prime: slices.iter().map(|s| s.xp.clone()).collect(),
        t_prime: slices.into_iter().map(|s| s.tp).collect(),
        v,
        iterations,
        residual,
        converged: residual < opts.tol,
        boundary_x,
        boundary_t,
        jerk_free: traj.jerk_free_on(grid.t0, grid.t1, 16)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proper_time_examples() {
        let rest = Trajectory::parse("0.3", 1.0).unwrap();
        assert!((proper_time(&rest, 0.5, 2.0, 1e-12).unwrap() - 1.5).abs() < 1e-14);
        let acc = Trajectory::parse("0.25*t^2", 1.0).unwrap();
        let want = 0.5 * 0.75f64.sqrt() + std::f64::consts::FRAC_PI_6;
        assert!((proper_time(&acc, 0.0, 1.0, 1e-13).unwrap() - want).abs() < 1e-12);
        let mut last = 0.0;
        for k in 1..=10 {
            let t1 = 0.1 * f64::from(k);
            let tau = proper_time(&acc, 0.0, t1, 1e-12).unwrap();
            assert!(tau > last && tau <= t1);
            last = tau;
        }
        let fast = Trajectory::parse("t^2", 1.0).unwrap();
        assert!(matches!(proper_time(&fast, 0.0, 1.0, 1e-10), Err(FrameError::Superluminal { .. })));
    }

    #[test]
    fn frame_matrix() {
        assert_eq!(local_frame_differentials(0.0, 1.0).unwrap(), [[1.0, 0.0], [0.0, 1.0]]);
        let m = local_frame_differentials(0.6, 1.0).unwrap();
        let want = [[1.25, -0.75], [-0.75, 1.25]];
        for r in 0..2 {
            for k in 0..2 {
                assert!((m[r][k] - want[r][k]).abs() < 1e-15);
            }
        }
        for v in [-0.99, -0.3, 0.1, 0.7, 0.95] {
            let a = local_frame_differentials(v, 1.0).unwrap();
            let b = local_frame_differentials(-v, 1.0).unwrap();
            assert!((a[0][0] * a[1][1] - a[0][1] * a[1][0] - 1.0).abs() < 1e-12);
            for r in 0..2 {
                for k in 0..2 {
                    let p: f64 = (0..2).map(|q| a[r][q] * b[q][k]).sum();
                    assert!((p - f64::from(u8::from(r == k))).abs() < 1e-12);
                }
            }
        }
        assert!(local_frame_differentials(1.0, 1.0).is_err());
    }

    #[test]
    fn rest_frame_is_identity() {
        let traj = Trajectory::parse("0", 1.0).unwrap();
        let grid = FrameGrid::new((0.0, 1.0), (-1.0, 1.0), 11, 21).unwrap();
        let map = solve_frame_map(&traj, &grid, &FrameOptions::default()).unwrap();
        assert!(map.converged && map.iterations == 1);
        for i in 0..grid.nt {
            for j in 0..grid.nx {
                assert!((map.x_prime[i][j] - grid.x(j)).abs() < 1e-14);
                assert!((map.t_prime[i][j] - grid.t(i)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn constant_velocity_gives_lorentz_map() {
        let traj = Trajectory::parse("0.6*t", 1.0).unwrap();
        let grid = FrameGrid::new((0.0, 1.0), (-1.0, 1.0), 41, 41).unwrap();
        let map = solve_frame_map(&traj, &grid, &FrameOptions::default()).unwrap();
        assert_eq!(map.iterations, 1);
        let mut worst = 0.0f64;
        for i in 0..grid.nt {
            for j in 0..grid.nx {
                let (t, x) = (grid.t(i), grid.x(j));
                worst = worst
                    .max((map.x_prime[i][j] - 1.25 * (x - 0.6 * t)).abs())
                    .max((map.t_prime[i][j] - 1.25 * (t - 0.6 * x)).abs());
            }
        }
        assert!(worst < 1e-12, "{worst}");
        assert!(map.jerk_free);
    }

    #[test]
    fn uniform_acceleration_converges() {
        let traj = Trajectory::parse("0.05*t^2", 1.0).unwrap();
        let grid = FrameGrid::new((0.0, 2.0), (-1.0, 1.0), 41, 41).unwrap();
        let map = solve_frame_map(&traj, &grid, &FrameOptions::default()).unwrap().require_converged().unwrap();
        assert!(map.boundary_x <= 1e-8 && map.boundary_t <= 1e-8);
        assert!(map.jerk_free);
        let csv = map.to_csv();
        assert!(csv.starts_with("t,x,x_prime,t_prime,v\n"));
        assert_eq!(csv.lines().count(), 1 + 41 * 41);
        let jerky = Trajectory::parse("0.02*t^3", 1.0).unwrap();
        let map = solve_frame_map(&jerky, &grid, &FrameOptions::default()).unwrap();
        assert!(!map.jerk_free);
    }

    #[test]
    fn invalid_inputs() {
        let traj = Trajectory::parse("2 + t", 2.0).unwrap();
        let grid = FrameGrid::new((0.0, 1.0), (-1.0, 1.0), 5, 5).unwrap();
        assert!(matches!(
            solve_frame_map(&traj, &grid, &FrameOptions::default()),
            Err(FrameError::AnchorOutside { .. })
        ));
        assert!(FrameGrid::new((0.0, 1.0), (1.0, -1.0), 5, 5).is_err());
        assert!(FrameGrid::new((0.0, 1.0), (-1.0, 1.0), 2, 5).is_err());
        assert!(Trajectory::parse("x*t", 1.0).is_err());
        assert_eq!(Trajectory::parse("t", 0.0).unwrap_err(), FrameError::InvalidSpeedOfLight);
    }
}
