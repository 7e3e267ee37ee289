//! Exponentials of first-order operators `B + C` through the flow of `B`.
//!
//! For a vector field `B` and a scalar `C`,
//! `exp(rho (B + C)) psi (x) = exp(T(x, rho)) psi(x'(x, rho))` where `x'` is
//! the flow of `B` and `T` the integral of `C` along it. The flow, its
//! Jacobian and the phase are advanced together as one augmented ODE system
//! by classic fourth-order Runge-Kutta with a step-doubling error estimate.
//! The Taylor series of the operator exponential is available as an
//! independent check.

use thiserror::Error;

use crate::fieldcalc::{check_size, ExprError, Expression, Point, ScalarField, VectorField};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("step limit {max_steps} reached with estimated error {error:e}")]
    StepLimit { max_steps: usize, error: f64 },
    #[error("flow blew up near s = {at} (|x| = {magnitude:e})")]
    BlowUp { at: f64, magnitude: f64 },
    #[error("invalid tolerance: {0}")]
    InvalidTolerance(&'static str),
    #[error("series order {order} exceeds the configured maximum {max}")]
    OrderLimit { order: usize, max: usize },
    #[error("fields are defined on different charts")]
    ChartMismatch,
    #[error("point has {got} coordinates, chart has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Error control for the integrators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub absolute: f64,
    pub relative: f64,
    pub max_steps: usize,
    /// Any coordinate exceeding this magnitude is reported as a blow-up.
    pub blowup_bound: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            absolute: 1e-10,
            relative: 1e-9,
            max_steps: 1_000_000,
            blowup_bound: 1e12,
        }
    }
}

impl Tolerance {
    pub fn new(absolute: f64, relative: f64, max_steps: usize) -> Result<Self, FlowError> {
        let tol = Tolerance {
            absolute,
            relative,
            max_steps,
            ..Tolerance::default()
        };
        tol.validate()?;
        Ok(tol)
    }

    pub fn with_blowup_bound(mut self, bound: f64) -> Self {
        self.blowup_bound = bound;
        self
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.absolute > 0.0) {
            return Err(FlowError::InvalidTolerance("absolute tolerance must be positive"));
        }
        if !(self.relative > 0.0) {
            return Err(FlowError::InvalidTolerance("relative tolerance must be positive"));
        }
        if self.max_steps == 0 {
            return Err(FlowError::InvalidTolerance("max_steps must be positive"));
        }
        if !(self.blowup_bound > 0.0) {
            return Err(FlowError::InvalidTolerance("blow-up bound must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FlowResult<R = f64> {
    /// `x'(x, rho)`.
    pub endpoint: Point<R>,
    /// `T(x, rho)`; zero when no scalar part was integrated.
    pub phase: R,
    /// Thinned `(s, x'(x, s))` samples from `s = 0` to `s = rho`.
    pub samples: Vec<(R, Point<R>)>,
    pub steps: usize,
    pub estimated_error: f64,
}

const MAX_SAMPLES: usize = 256;
const BLOWUP_RETRIES: u32 = 4;
/// Consecutive refinements whose endpoint magnitude grows by at least
/// `DIVERGENCE_FACTOR` signal a singularity inside `[0, rho]`: the discrete
/// solution then scales with the step count instead of converging.
const DIVERGENCE_STREAK: u32 = 4;
const DIVERGENCE_FACTOR: f64 = 1.8;

struct System<'a> {
    field: &'a VectorField,
    scalar: Option<&'a ScalarField>,
    /// `grad[nu][kappa] = d B^nu / d x^kappa` when the Jacobian is tracked.
    grad: Option<Vec<Vec<Expression>>>,
}

impl<'a> System<'a> {
    fn new(field: &'a VectorField, scalar: Option<&'a ScalarField>, jacobian: bool) -> Self {
        let grad = jacobian.then(|| {
            field
                .components()
                .iter()
                .map(|b| field.chart().names().iter().map(|v| b.diff(v)).collect())
                .collect()
        });
        System { field, scalar, grad }
    }

    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn phase_slot(&self) -> Option<usize> {
        self.scalar.map(|_| self.dim())
    }

    fn jac_offset(&self) -> usize {
        self.dim() + usize::from(self.scalar.is_some())
    }

    fn len(&self) -> usize {
        let d = self.dim();
        self.jac_offset() + if self.grad.is_some() { d * d } else { 0 }
    }

    fn initial<R: Real>(&self, x: &[R]) -> Vec<R> {
        let d = self.dim();
        let mut y = vec![R::zero(); self.len()];
        y[..d].copy_from_slice(x);
        if self.grad.is_some() {
            let off = self.jac_offset();
            for i in 0..d {
                y[off + i * d + i] = R::one();
            }
        }
        y
    }

    fn rhs<R: Real>(&self, y: &[R], dy: &mut [R]) -> Result<(), ExprError> {
        let d = self.dim();
        let chart = self.field.chart();
        let x = &y[..d];
        for (nu, b) in self.field.components().iter().enumerate() {
            dy[nu] = b.evaluate(chart, x)?;
        }
        if let (Some(slot), Some(c)) = (self.phase_slot(), self.scalar) {
            dy[slot] = c.expr().evaluate(chart, x)?;
        }
        if let Some(grad) = &self.grad {
            let off = self.jac_offset();
            let g: Vec<Vec<R>> = grad
                .iter()
                .map(|row| row.iter().map(|e| e.evaluate(chart, x)).collect())
                .collect::<Result<_, _>>()?;
            for nu in 0..d {
                for mu in 0..d {
                    let mut acc = R::zero();
                    for kappa in 0..d {
                        acc += g[nu][kappa] * y[off + kappa * d + mu];
                    }
                    dy[off + nu * d + mu] = acc;
                }
            }
        }
        Ok(())
    }
}

struct Run<R> {
    state: Vec<R>,
    samples: Vec<(R, Point<R>)>,
}

fn axpy<R: Real>(out: &mut [R], y: &[R], h: R, k: &[R]) {
    for ((o, &yi), &ki) in out.iter_mut().zip(y).zip(k) {
        *o = yi + h * ki;
    }
}

fn run_fixed<R: Real>(
    sys: &System<'_>,
    x: &[R],
    rho: R,
    steps: usize,
    bound: f64,
) -> Result<Run<R>, FlowError> {
    let d = sys.dim();
    let n = sys.len();
    let h = rho / R::from_f64(steps as f64);
    let half = h * R::from_f64(0.5);
    let sixth = h / R::from_f64(6.0);
    let two = R::from_f64(2.0);
    let stride = steps.div_ceil(MAX_SAMPLES).max(1);

    let mut y = sys.initial(x);
    let mut k1 = vec![R::zero(); n];
    let mut k2 = vec![R::zero(); n];
    let mut k3 = vec![R::zero(); n];
    let mut k4 = vec![R::zero(); n];
    let mut tmp = vec![R::zero(); n];
    let mut samples = vec![(R::zero(), Point::new(x.to_vec()))];

    let blowup = |y: &[R], step: usize| -> Result<(), FlowError> {
        let worst = y[..d].iter().map(|v| v.to_f64().abs()).fold(0.0, f64::max);
        let finite = y.iter().all(|v| v.is_finite());
        if !finite || worst > bound {
            Err(FlowError::BlowUp {
                at: (h * R::from_f64(step as f64)).to_f64(),
                magnitude: if finite { worst } else { f64::INFINITY },
            })
        } else {
            Ok(())
        }
    };
    let stage = |y: &[R], dy: &mut [R], step: usize| -> Result<(), FlowError> {
        blowup(y, step)?;
        sys.rhs(y, dy).map_err(|e| match e {
            ExprError::NonFinite { .. } => FlowError::BlowUp {
                at: (h * R::from_f64(step as f64)).to_f64(),
                magnitude: f64::INFINITY,
            },
            e => FlowError::Expr(e),
        })
    };

    for step in 0..steps {
        stage(&y, &mut k1, step)?;
        axpy(&mut tmp, &y, half, &k1);
        stage(&tmp, &mut k2, step)?;
        axpy(&mut tmp, &y, half, &k2);
        stage(&tmp, &mut k3, step)?;
        axpy(&mut tmp, &y, h, &k3);
        stage(&tmp, &mut k4, step)?;
        for i in 0..n {
            y[i] += sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        }
        blowup(&y, step + 1)?;
        if (step + 1) % stride == 0 || step + 1 == steps {
            let s = if step + 1 == steps {
                rho
            } else {
                h * R::from_f64((step + 1) as f64)
            };
            samples.push((s, Point::new(y[..d].to_vec())));
        }
    }
    Ok(Run { state: y, samples })
}

fn initial_steps(rho: f64) -> usize {
    ((rho.abs() / 0.05).ceil() as usize).max(4)
}

/// Integrates with successive step doubling until the Richardson estimate
/// `|y_2n - y_n| / 15` is within tolerance for every state component.
fn integrate_adaptive<R: Real>(
    sys: &System<'_>,
    x: &[R],
    rho: R,
    tol: &Tolerance,
) -> Result<(Run<R>, usize, f64), FlowError> {
    tol.validate()?;
    if x.len() != sys.dim() {
        return Err(FlowError::DimensionMismatch {
            expected: sys.dim(),
            got: x.len(),
        });
    }
    if rho == R::zero() {
        let run = Run {
            state: sys.initial(x),
            samples: vec![(R::zero(), Point::new(x.to_vec()))],
        };
        return Ok((run, 0, 0.0));
    }
    let mut steps = initial_steps(rho.to_f64()).min(tol.max_steps);
    let mut prev: Option<Run<R>> = None;
    let mut blowups = 0;
    let mut growth_streak = 0;
    let mut last_error = f64::INFINITY;
    let d = sys.dim();
    let magnitude = |y: &[R]| y[..d].iter().map(|v| v.abs().to_f64()).fold(0.0, f64::max);
    let start = magnitude(x).max(1.0);
    loop {
        match run_fixed(sys, x, rho, steps, tol.blowup_bound) {
            Ok(cur) => {
                if let Some(p) = &prev {
                    let (m_cur, m_prev) = (magnitude(&cur.state), magnitude(&p.state));
                    if m_cur > DIVERGENCE_FACTOR * m_prev && m_cur > 1e3 * start {
                        growth_streak += 1;
                        if growth_streak >= DIVERGENCE_STREAK {
                            return Err(FlowError::BlowUp {
                                at: rho.to_f64(),
                                magnitude: m_cur,
                            });
                        }
                    } else {
                        growth_streak = 0;
                    }
                    let mut ok = true;
                    let mut worst = 0.0f64;
                    for (a, b) in cur.state.iter().zip(&p.state) {
                        let err = (*a - *b).abs().to_f64() / 15.0;
                        worst = worst.max(err);
                        if err > tol.absolute + tol.relative * a.abs().to_f64() {
                            ok = false;
                        }
                    }
                    last_error = worst;
                    if ok {
                        return Ok((cur, steps, worst));
                    }
                }
                prev = Some(cur);
            }
            Err(FlowError::BlowUp { at, magnitude }) => {
                blowups += 1;
                if blowups > BLOWUP_RETRIES || steps * 2 > tol.max_steps {
                    return Err(FlowError::BlowUp { at, magnitude });
                }
                prev = None;
            }
            Err(e) => return Err(e),
        }
        if steps * 2 > tol.max_steps {
            return Err(FlowError::StepLimit {
                max_steps: tol.max_steps,
                error: last_error,
            });
        }
        steps *= 2;
    }
}

fn same_chart(b: &VectorField, other: &crate::fieldcalc::Chart) -> Result<(), FlowError> {
    if b.chart() == other {
        Ok(())
    } else {
        Err(FlowError::ChartMismatch)
    }
}

fn into_result<R: Real>(sys: &System<'_>, run: Run<R>, steps: usize, err: f64) -> FlowResult<R> {
    let d = sys.dim();
    FlowResult {
        endpoint: Point::new(run.state[..d].to_vec()),
        phase: sys.phase_slot().map(|i| run.state[i]).unwrap_or_else(R::zero),
        samples: run.samples,
        steps,
        estimated_error: err,
    }
}

/// Flow `x'(x, rho)` of `b`, solving `dx'/ds = B(x')`, `x'(x, 0) = x`.
pub fn integrate_flow<R: Real>(
    b: &VectorField,
    x: &Point<R>,
    rho: R,
    tol: &Tolerance,
) -> Result<FlowResult<R>, FlowError> {
    let sys = System::new(b, None, false);
    let (run, steps, err) = integrate_adaptive(&sys, &x.coords, rho, tol)?;
    Ok(into_result(&sys, run, steps, err))
}

/// Flow of `b` together with the phase `T = int_0^rho C(x'(x, s)) ds`.
pub fn integrate_flow_with_phase<R: Real>(
    b: &VectorField,
    c: &ScalarField,
    x: &Point<R>,
    rho: R,
    tol: &Tolerance,
) -> Result<FlowResult<R>, FlowError> {
    same_chart(b, c.chart())?;
    let sys = System::new(b, Some(c), false);
    let (run, steps, err) = integrate_adaptive(&sys, &x.coords, rho, tol)?;
    Ok(into_result(&sys, run, steps, err))
}

/// Single RK4 pass with a prescribed number of steps and no error control.
pub fn integrate_fixed_steps<R: Real>(
    b: &VectorField,
    c: Option<&ScalarField>,
    x: &Point<R>,
    rho: R,
    steps: usize,
    blowup_bound: f64,
) -> Result<FlowResult<R>, FlowError> {
    if let Some(c) = c {
        same_chart(b, c.chart())?;
    }
    let sys = System::new(b, c, false);
    let run = run_fixed(&sys, &x.coords, rho, steps.max(1), blowup_bound)?;
    Ok(into_result(&sys, run, steps.max(1), f64::NAN))
}

/// `T(x, rho)`, the integral of `c` along the flow of `b`.
pub fn accumulate_phase<R: Real>(
    b: &VectorField,
    c: &ScalarField,
    x: &Point<R>,
    rho: R,
    tol: &Tolerance,
) -> Result<R, FlowError> {
    integrate_flow_with_phase(b, c, x, rho, tol).map(|r| r.phase)
}

/// `J[nu][mu] = d x'^nu / d x^mu`, from the variational system
/// `dJ/ds = (dB/dx)(x'(s)) J`, `J(0) = 1`.
pub fn flow_jacobian<R: Real>(
    b: &VectorField,
    x: &Point<R>,
    rho: R,
    tol: &Tolerance,
) -> Result<Vec<Vec<R>>, FlowError> {
    flow_and_jacobian(b, x, rho, tol).map(|(_, j)| j)
}

fn flow_and_jacobian<R: Real>(
    b: &VectorField,
    x: &Point<R>,
    rho: R,
    tol: &Tolerance,
) -> Result<(Point<R>, Vec<Vec<R>>), FlowError> {
    let sys = System::new(b, None, true);
    let (run, _, _) = integrate_adaptive(&sys, &x.coords, rho, tol)?;
    let d = sys.dim();
    let off = sys.jac_offset();
    let jac = (0..d)
        .map(|nu| run.state[off + nu * d..off + (nu + 1) * d].to_vec())
        .collect();
    Ok((Point::new(run.state[..d].to_vec()), jac))
}

/// `exp(rho (B + C)) psi` at `x`, computed as `exp(T(x, rho)) psi(x'(x, rho))`.
pub fn apply_exponential<R: Real>(
    b: &VectorField,
    c: &ScalarField,
    psi: &ScalarField,
    x: &Point<R>,
    rho: R,
    tol: &Tolerance,
) -> Result<R, FlowError> {
    same_chart(b, psi.chart())?;
    let flow = integrate_flow_with_phase(b, c, x, rho, tol)?;
    let value = psi.evaluate(&flow.endpoint)?;
    let weight = flow.phase.exp();
    if !weight.is_finite() {
        return Err(ExprError::NonFinite { op: "exp" }.into());
    }
    Ok(weight * value)
}

/// Limits for the symbolic series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesLimits {
    pub max_order: usize,
    pub max_size: usize,
}

impl Default for SeriesLimits {
    fn default() -> Self {
        SeriesLimits {
            max_order: 8,
            max_size: 20_000_000,
        }
    }
}

/// `(B + C)^n psi` for `n = 0..=order`, each built by exact differentiation.
pub fn operator_powers(
    b: &VectorField,
    c: &ScalarField,
    psi: &ScalarField,
    order: usize,
    limits: &SeriesLimits,
) -> Result<Vec<Expression>, FlowError> {
    same_chart(b, c.chart())?;
    same_chart(b, psi.chart())?;
    if order > limits.max_order {
        return Err(FlowError::OrderLimit {
            order,
            max: limits.max_order,
        });
    }
    let mut terms = vec![psi.expr().clone()];
    for _ in 0..order {
        let last = terms.last().expect("non-empty");
        let next = b.apply(last) + c.expr().clone() * last.clone();
        terms.push(check_size(next, limits.max_size)?);
    }
    Ok(terms)
}

fn taylor_sum<R: Real>(values: &[R], rho: R, first_power: usize) -> R {
    let mut sum = R::zero();
    let mut weight = R::one();
    for n in 1..first_power {
        weight = weight * rho / R::from_f64(n as f64);
    }
    for (k, v) in values.iter().enumerate() {
        let n = first_power + k;
        if n > 0 {
            weight = weight * rho / R::from_f64(n as f64);
        }
        sum += weight * *v;
    }
    sum
}

/// Truncated operator exponential `sum_{n<=order} rho^n/n! ((B + C)^n psi)(x)`.
pub fn series_oracle<R: Real>(
    b: &VectorField,
    c: &ScalarField,
    psi: &ScalarField,
    x: &Point<R>,
    rho: R,
    order: usize,
) -> Result<R, FlowError> {
    series_oracle_with(b, c, psi, x, rho, order, &SeriesLimits::default())
}

pub fn series_oracle_with<R: Real>(
    b: &VectorField,
    c: &ScalarField,
    psi: &ScalarField,
    x: &Point<R>,
    rho: R,
    order: usize,
    limits: &SeriesLimits,
) -> Result<R, FlowError> {
    let terms = operator_powers(b, c, psi, order, limits)?;
    let values = terms
        .iter()
        .map(|t| t.evaluate(b.chart(), &x.coords))
        .collect::<Result<Vec<R>, _>>()?;
    Ok(taylor_sum(&values, rho, 0))
}

/// Truncated displacement `A^mu = sum_{n=1}^{order} rho^n/n! ((B.d)^{n-1} B^mu)(x)`,
/// an approximation of `x'(x, rho) - x`.
pub fn displacement_series<R: Real>(
    b: &VectorField,
    x: &Point<R>,
    rho: R,
    order: usize,
) -> Result<Vec<R>, FlowError> {
    let limits = SeriesLimits::default();
    if order > limits.max_order {
        return Err(FlowError::OrderLimit {
            order,
            max: limits.max_order,
        });
    }
    b.components()
        .iter()
        .map(|comp| {
            let mut values = Vec::with_capacity(order);
            let mut term = comp.clone();
            for n in 1..=order {
                values.push(term.evaluate(b.chart(), &x.coords)?);
                if n < order {
                    term = check_size(b.apply(&term), limits.max_size)?;
                }
            }
            Ok(taylor_sum(&values, rho, 1))
        })
        .collect()
}

/// `max_nu |B^nu(x') - sum_mu B^mu(x) J^nu_mu|`: how far the flow fails to
/// carry `B` at the origin onto `B` at the image.
pub fn pushforward_residual<R: Real>(
    b: &VectorField,
    x: &Point<R>,
    rho: R,
    tol: &Tolerance,
) -> Result<R, FlowError> {
    let (image, jac) = flow_and_jacobian(b, x, rho, tol)?;
    let at_origin = b.evaluate(x)?;
    let at_image = b.evaluate(&image)?;
    let mut worst = R::zero();
    for (nu, row) in jac.iter().enumerate() {
        let mut pushed = R::zero();
        for (mu, j) in row.iter().enumerate() {
            pushed += at_origin[mu] * *j;
        }
        let r = (at_image[nu] - pushed).abs();
        if r > worst {
            worst = r;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldcalc::Chart;
    use crate::Dd;
    use std::f64::consts::E;

    fn t_chart() -> Chart {
        Chart::new(&["t"])
    }

    fn field(chart: &Chart, comps: &[&str]) -> VectorField {
        VectorField::parse(chart, comps).unwrap()
    }

    fn tight() -> Tolerance {
        Tolerance::new(1e-13, 1e-13, 1_000_000).unwrap()
    }

    #[test]
    fn translation_flow() {
        let c = t_chart();
        let r = integrate_flow(&field(&c, &["1"]), &Point::new(vec![1.0]), 0.5, &Tolerance::default()).unwrap();
        assert!((r.endpoint.coords[0] - 1.5).abs() < 1e-14);
        assert_eq!(r.phase, 0.0);
        assert_eq!(r.samples.first().unwrap().0, 0.0);
        assert_eq!(r.samples.first().unwrap().1.coords, vec![1.0]);
        assert_eq!(r.samples.last().unwrap().0, 0.5);
        assert_eq!(r.samples.last().unwrap().1, r.endpoint);
    }

    #[test]
    fn dilation_flow_matches_closed_form() {
        let c = t_chart();
        let r = integrate_flow(&field(&c, &["t"]), &Point::new(vec![2.0]), 1.0, &tight()).unwrap();
        assert!((r.endpoint.coords[0] - 2.0 * E).abs() < 1e-11);
        assert!(r.estimated_error <= 1e-13 + 1e-13 * 2.0 * E);
    }

    #[test]
    fn quadratic_field_blows_up_before_rho_two() {
        let c = t_chart();
        let err = integrate_flow(&field(&c, &["t^2"]), &Point::new(vec![1.0]), 2.0, &Tolerance::default()).unwrap_err();
        match err {
            FlowError::BlowUp { at, .. } => assert!(at > 0.9 && at <= 2.0, "{at}"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn step_limit_and_domain_errors() {
        let c = t_chart();
        let tol = Tolerance::new(1e-14, 1e-14, 16).unwrap();
        assert!(matches!(
            integrate_flow(&field(&c, &["t"]), &Point::new(vec![1.0]), 1.0, &tol),
            Err(FlowError::StepLimit { .. })
        ));
        // the flow heads through t = 0 where the field is undefined
        let r = integrate_flow(&field(&c, &["-sqrt(t)/sqrt(t)"]), &Point::new(vec![0.5]), 1.0, &Tolerance::default());
        assert!(matches!(r, Err(FlowError::Expr(_))), "{r:?}");
        assert!(Tolerance::new(-1.0, 1e-9, 10).is_err());
    }

    #[test]
    fn jacobian_cases() {
        let c = t_chart();
        let j = flow_jacobian(&field(&c, &["1"]), &Point::new(vec![0.3]), 2.0, &Tolerance::default()).unwrap();
        assert!((j[0][0] - 1.0).abs() < 1e-14);
        let j = flow_jacobian(&field(&c, &["t"]), &Point::new(vec![1.7]), 1.0, &tight()).unwrap();
        assert!((j[0][0] - E).abs() < 1e-11);
        let c2 = Chart::new(&["x", "y"]);
        let j = flow_jacobian(&field(&c2, &["x*y", "sin(x)"]), &Point::new(vec![0.3, 0.4]), 0.0, &tight()).unwrap();
        assert_eq!(j, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn phase_cases() {
        let c = t_chart();
        let x = Point::new(vec![1.0]);
        let zero = ScalarField::zero(&c);
        assert_eq!(accumulate_phase(&field(&c, &["t"]), &zero, &x, 1.0, &tight()).unwrap(), 0.0);
        let c0 = ScalarField::parse(&c, "2.5").unwrap();
        let p = accumulate_phase(&field(&c, &["1"]), &c0, &x, 0.8, &tight()).unwrap();
        assert!((p - 2.0).abs() < 1e-13);
        let inv = ScalarField::parse(&c, "1/t").unwrap();
        let p = accumulate_phase(&field(&c, &["t"]), &inv, &x, 1.0, &tight()).unwrap();
        assert!((p - (1.0 - 1.0 / E)).abs() < 1e-12, "{p}");
    }

    #[test]
    fn exponential_cases() {
        let c = t_chart();
        let b = field(&c, &["1"]);
        let c0 = ScalarField::parse(&c, "0.7").unwrap();
        let psi = ScalarField::parse(&c, "t^2").unwrap();
        let x = Point::new(vec![1.0]);
        let v = apply_exponential(&b, &c0, &psi, &x, 0.0, &tight()).unwrap();
        assert_eq!(v, 1.0);
        let v = apply_exponential(&b, &c0, &psi, &x, 0.5, &tight()).unwrap();
        assert!((v - (0.35f64).exp() * 2.25).abs() < 1e-12);
    }

    #[test]
    fn series_low_orders_and_closed_form() {
        let c = Chart::new(&["t", "r"]);
        let b = field(&c, &["t*r", "1 + t"]);
        let cc = ScalarField::parse(&c, "r^2").unwrap();
        let psi = ScalarField::parse(&c, "exp(t)*r").unwrap();
        let x = Point::new(vec![0.4, 0.9]);
        let rho = 0.3;
        let psi0 = psi.evaluate(&x).unwrap();
        assert_eq!(series_oracle(&b, &cc, &psi, &x, rho, 0).unwrap(), psi0);
        // first order by hand: B psi = t r exp(t) r + (1 + t) exp(t), C psi = r^2 exp(t) r
        let (t, r) = (0.4f64, 0.9f64);
        let lpsi = t * r * t.exp() * r + (1.0 + t) * t.exp() + r * r * t.exp() * r;
        let s1 = series_oracle(&b, &cc, &psi, &x, rho, 1).unwrap();
        assert!((s1 - (psi0 + rho * lpsi)).abs() < 1e-14);
        assert!(matches!(
            series_oracle(&b, &cc, &psi, &x, rho, 9),
            Err(FlowError::OrderLimit { order: 9, max: 8 })
        ));

        let ct = t_chart();
        let dil = field(&ct, &["t"]);
        let z = ScalarField::zero(&ct);
        let id = ScalarField::parse(&ct, "t").unwrap();
        let one = Point::new(vec![1.0]);
        let s = series_oracle(&dil, &z, &id, &one, 0.5, 8).unwrap();
        let partial: f64 = (0..=8).map(|n| 0.5f64.powi(n) / (1..=n).map(f64::from).product::<f64>()).sum();
        assert!((s - partial).abs() < 1e-15);
        assert!((s - 0.5f64.exp()).abs() < 1e-7);
    }

    #[test]
    fn displacement_cases() {
        let c = t_chart();
        let one = Point::new(vec![1.0]);
        let a = displacement_series(&field(&c, &["1"]), &one, 0.7, 5).unwrap();
        assert!((a[0] - 0.7).abs() < 1e-15);
        let a = displacement_series(&field(&c, &["t"]), &one, 0.5, 8).unwrap();
        let partial: f64 = (1..=8).map(|n| 0.5f64.powi(n) / (1..=n).map(f64::from).product::<f64>()).sum();
        assert!((a[0] - partial).abs() < 1e-15);
    }

    /// Least-squares slope of log|err| against log rho.
    fn loglog_slope(rhos: &[f64], errs: &[f64]) -> f64 {
        let xs: Vec<f64> = rhos.iter().map(|r| r.ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn displacement_truncation_order() {
        let c = Chart::new(&["x", "y"]);
        let b = field(&c, &["1 + y^2", "x*y"]);
        let x = Point::new(vec![Dd::new(0.3), Dd::new(0.5)]);
        let order = 3;
        let rhos = [1e-3, 3e-3, 1e-2, 3e-2];
        let tol = Tolerance::new(1e-28, 1e-28, 1 << 22).unwrap();
        let errs: Vec<f64> = rhos
            .iter()
            .map(|&rho| {
                let rho = Dd::new(rho);
                let a = displacement_series(&b, &x, rho, order).unwrap();
                let f = integrate_flow(&b, &x, rho, &tol).unwrap();
                (f.endpoint.coords[0] - x.coords[0] - a[0]).abs().to_f64()
            })
            .collect();
        let slope = loglog_slope(&rhos, &errs);
        assert!((slope - 4.0).abs() < 0.1, "slope {slope}, errs {errs:?}");
    }

    #[test]
    fn exponential_agrees_with_series_to_order() {
        let c = Chart::new(&["x", "y"]);
        let b = field(&c, &["y", "-x + 0.5*y^2"]);
        let cc = ScalarField::parse(&c, "0.3*x*y").unwrap();
        let psi = ScalarField::parse(&c, "exp(x)*(1 + y)").unwrap();
        let x = Point::new(vec![Dd::new(0.2), Dd::new(-0.4)]);
        for order in [2usize, 4] {
            let rhos = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1];
            let errs: Vec<f64> = rhos
                .iter()
                .map(|&r| {
                    let rho = Dd::new(r);
                    let tol = Tolerance::new(1e-6 * r.powi(order as i32 + 1), 1e-30, 1 << 22).unwrap();
                    let exact = apply_exponential(&b, &cc, &psi, &x, rho, &tol).unwrap();
                    let series = series_oracle(&b, &cc, &psi, &x, rho, order).unwrap();
                    (exact - series).abs().to_f64()
                })
                .collect();
            let slope = loglog_slope(&rhos, &errs);
            assert!((slope - (order as f64 + 1.0)).abs() < 0.1, "order {order}: slope {slope} {errs:?}");
        }
    }

    #[test]
    fn pushforward_cases() {
        let c = t_chart();
        let r = pushforward_residual(&field(&c, &["1"]), &Point::new(vec![0.4]), 3.0, &Tolerance::default()).unwrap();
        assert!(r < 1e-14);
        let c2 = Chart::new(&["t", "r"]);
        let b = field(&c2, &["t", "r"]);
        let x = Point::new(vec![0.8, 1.3]);
        assert_eq!(pushforward_residual(&b, &x, 0.0, &Tolerance::default()).unwrap(), 0.0);
        assert!(pushforward_residual(&b, &x, 0.7, &Tolerance::default()).unwrap() <= 1e-8);
    }

    #[test]
    fn semigroup_and_phase_additivity() {
        let c = Chart::new(&["x", "y"]);
        let b = field(&c, &["sin(y) + 0.2*x", "1 + x^2/4"]);
        let cc = ScalarField::parse(&c, "x - y^2").unwrap();
        let x = Point::new(vec![0.1, -0.3]);
        let tol = tight();
        let (r1, r2) = (0.23, 0.31);
        let whole = integrate_flow_with_phase(&b, &cc, &x, r1 + r2, &tol).unwrap();
        let first = integrate_flow_with_phase(&b, &cc, &x, r1, &tol).unwrap();
        let second = integrate_flow_with_phase(&b, &cc, &first.endpoint, r2, &tol).unwrap();
        for i in 0..2 {
            assert!((whole.endpoint.coords[i] - second.endpoint.coords[i]).abs() < 1e-11);
        }
        assert!((whole.phase - (first.phase + second.phase)).abs() < 1e-11);
    }

    #[test]
    fn endpoint_independent_of_scalar_part() {
        let c = Chart::new(&["x", "y"]);
        let b = field(&c, &["y", "-x"]);
        let cc = ScalarField::parse(&c, "exp(x*y)").unwrap();
        let x = Point::new(vec![1.0, 0.5]);
        for steps in [7, 64, 1000] {
            let bare = integrate_fixed_steps(&b, None, &x, 0.9, steps, 1e12).unwrap();
            let with_c = integrate_fixed_steps(&b, Some(&cc), &x, 0.9, steps, 1e12).unwrap();
            assert_eq!(bare.endpoint.coords, with_c.endpoint.coords);
        }
    }

    #[test]
    fn chart_mismatch_is_rejected() {
        let b = field(&t_chart(), &["1"]);
        let other = ScalarField::parse(&Chart::new(&["s"]), "s").unwrap();
        assert!(matches!(
            accumulate_phase(&b, &other, &Point::new(vec![0.0]), 1.0, &Tolerance::default()),
            Err(FlowError::ChartMismatch)
        ));
    }
}
