//! Non-relativistic limit: the lift `phi_t(x0, x) = exp(2 pi m c x0 / h) psi(t + x0/c, x)`,
//! the contraction identity, the Klein–Gordon / diffusion operator identity, and
//! the Barut special case of the flow factorisation.
//!
//! Wavefunctions are real-valued fields on the chart `(t, x)`; the lift lives
//! on `(t, x0, x)`. Exponentials are real, not phases.

use std::f64::consts::PI;

use thiserror::Error;

use crate::fieldcalc::{Chart, ExprError, Expression, Point, ScalarField, VectorField};
use crate::flowexp::{self, FlowError, Tolerance};
use crate::quad::{self, QuadError};

/// Largest `|exponent|` accepted before `exp` is declared an overflow.
pub const DEFAULT_EXP_CAP: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NrError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("m, c and h must be positive and finite")]
    InvalidParams,
    #[error("wavefunction must be defined on the chart (t, x), got ({0})")]
    WrongChart(String),
    #[error("exponent {exponent} exceeds the cap {cap}")]
    ExponentOverflow { exponent: f64, cap: f64 },
    #[error("need at least 3 speeds spanning two decades")]
    TooFewSpeeds,
    #[error("degenerate fit: the 1/c^2 term vanishes at c = {c}")]
    DegenerateFit { c: f64 },
    #[error("f vanishes on the path near t = {t}")]
    FRoot { t: f64 },
    #[error("could not solve for t' ({0})")]
    TPrime(String),
}

impl From<QuadError<NrError>> for NrError {
    fn from(e: QuadError<NrError>) -> Self {
        match e {
            QuadError::Integrand(inner) => inner,
            other => NrError::TPrime(other.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelParams {
    pub m: f64,
    pub c: f64,
    pub h: f64,
}

impl RelParams {
    pub fn new(m: f64, c: f64, h: f64) -> Result<Self, NrError> {
        let p = RelParams { m, c, h };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), NrError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.m) && ok(self.c) && ok(self.h) {
            Ok(())
        } else {
            Err(NrError::InvalidParams)
        }
    }

    pub fn with_c(self, c: f64) -> Self {
        RelParams { c, ..self }
    }

    /// `2 pi m c / h`, the `x0` rate of the lift.
    pub fn momentum_rate(&self) -> f64 {
        2.0 * PI * self.m * self.c / self.h
    }

    /// `2 pi m c^2 / h`.
    pub fn rest_rate(&self) -> f64 {
        self.momentum_rate() * self.c
    }
}

/// The `(t, x)` chart of wavefunctions.
pub fn wave_chart() -> Chart {
    Chart::new(&["t", "x"])
}

/// The `(t, x0, x)` chart of lifted fields.
pub fn lift_chart() -> Chart {
    Chart::new(&["t", "x0", "x"])
}

fn check_chart(psi: &ScalarField) -> Result<(), NrError> {
    if psi.chart().names() == wave_chart().names() {
        Ok(())
    } else {
        Err(NrError::WrongChart(psi.chart().names().join(", ")))
    }
}

/// `phi_t(x0, x)` as an expression on [`lift_chart`].
pub fn lifted_expression(psi: &ScalarField, p: &RelParams) -> Result<Expression, NrError> {
    check_chart(psi)?;
    p.validate()?;
    let t = Expression::var("t");
    let x0 = Expression::var("x0");
    let shifted = psi.expr().substitute("t", &(t + x0.clone() / p.c));
    Ok((p.momentum_rate() * x0).exp() * shifted)
}

pub fn lift_wavefunction(psi: &ScalarField, p: &RelParams, t: f64, x0: f64, x: f64) -> Result<f64, NrError> {
    lift_wavefunction_capped(psi, p, t, x0, x, DEFAULT_EXP_CAP)
}

pub fn lift_wavefunction_capped(
    psi: &ScalarField,
    p: &RelParams,
    t: f64,
    x0: f64,
    x: f64,
    cap: f64,
) -> Result<f64, NrError> {
    check_chart(psi)?;
    p.validate()?;
    let exponent = p.momentum_rate() * x0;
    if exponent.abs() > cap {
        return Err(NrError::ExponentOverflow { exponent, cap });
    }
    let value = psi.evaluate(&Point::new(vec![t + x0 / p.c, x]))?;
    Ok(exponent.exp() * value)
}

fn eval_lift(e: &Expression, t: f64, x0: f64, x: f64) -> Result<f64, NrError> {
    Ok(e.evaluate(&lift_chart(), &[t, x0, x])?)
}

/// `|d phi/d x0 - (2 pi m c/h + (1/c) d_t) phi|` at `(t, x0, x)`.
pub fn contraction_residual(psi: &ScalarField, p: &RelParams, t: f64, x0: f64, x: f64) -> Result<f64, NrError> {
    let phi = lifted_expression(psi, p)?;
    let lhs = eval_lift(&phi.diff("x0"), t, x0, x)?;
    let rhs = p.momentum_rate() * eval_lift(&phi, t, x0, x)? + eval_lift(&phi.diff("t"), t, x0, x)? / p.c;
    Ok((lhs - rhs).abs())
}

/// Result of [`kg_diffusion_residual`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KgCheck {
    /// Mismatch of the operator identity; vanishes for every smooth `psi`.
    pub identity_residual: f64,
    /// `|((4 pi m/h) d_t - d_x^2) Psi|`.
    pub diffusion_term: f64,
    /// `|(1/c^2) d_t^2 Psi|`.
    pub relativistic_term: f64,
}

impl KgCheck {
    pub fn diffusion_defect(&self) -> f64 {
        self.diffusion_term + self.relativistic_term
    }
}

/// Compares `(d_0^2 - d_x^2 - 4 pi^2 m^2 c^2/h^2) phi` with
/// `((4 pi m/h) d_t - d_x^2 + (1/c^2) d_t^2) Psi`, where `d_0 = d/dx0`.
pub fn kg_diffusion_residual(psi: &ScalarField, p: &RelParams, point: (f64, f64, f64)) -> Result<KgCheck, NrError> {
    let (t, x0, x) = point;
    let phi = lifted_expression(psi, p)?;
    let at = |e: &Expression| eval_lift(e, t, x0, x);
    let value = at(&phi)?;
    let d00 = at(&phi.diff("x0").diff("x0"))?;
    let dxx = at(&phi.diff("x").diff("x"))?;
    let dt = at(&phi.diff("t"))?;
    let dtt = at(&phi.diff("t").diff("t"))?;
    let a = p.momentum_rate();
    let kg = d00 - dxx - a * a * value;
    let diffusion = 4.0 * PI * p.m / p.h * dt - dxx;
    let relativistic = dtt / (p.c * p.c);
    Ok(KgCheck {
        identity_residual: (kg - (diffusion + relativistic)).abs(),
        diffusion_term: diffusion.abs(),
        relativistic_term: relativistic.abs(),
    })
}

/// Least-squares slope of `log |(1/c^2) d_t^2 Psi|` against `log c`.
pub fn diffusion_defect_scaling(
    psi: &ScalarField,
    template: &RelParams,
    c_values: &[f64],
    point: (f64, f64, f64),
) -> Result<f64, NrError> {
    if c_values.len() < 3 || c_values.iter().any(|&c| !(c > 0.0)) {
        return Err(NrError::TooFewSpeeds);
    }
    let (lo, hi) = c_values
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    if hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(NrError::TooFewSpeeds);
    }
    let mut pts = Vec::with_capacity(c_values.len());
    for &c in c_values {
        let term = kg_diffusion_residual(psi, &template.with_c(c), point)?.relativistic_term;
        if !(term > 0.0) || !term.is_finite() {
            return Err(NrError::DegenerateFit { c });
        }
        pts.push((c.ln(), term.ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Outcome of [`barut_flow_identity`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarutCheck {
    /// `|exp(rho f (k + d_t)) psi - exp(k (t' - t)) psi(t')|`, `k = 2 pi m c^2/h`.
    pub residual: f64,
    /// `|T(t, rho) - k (t' - t)|` for the accumulated flow phase `T`.
    pub phase_residual: f64,
    pub t_prime: f64,
    pub phase: f64,
}

/// `t'` with `int_t^{t'} du / f(u) = rho`, by Newton iteration on the
/// quadrature; independent of the flow integrator.
pub fn barut_tprime(f: &Expression, t: f64, rho: f64, tol: f64) -> Result<f64, NrError> {
    let chart = Chart::new(&["t"]);
    let fv = |u: f64| -> Result<f64, NrError> {
        let v = f.evaluate(&chart, &[u])?;
        if v == 0.0 {
            Err(NrError::FRoot { t: u })
        } else {
            Ok(v)
        }
    };
    let f0 = fv(t)?;
    let mut tp = t + rho * f0;
    let mut prev_step = f64::INFINITY;
    for _ in 0..100 {
        let fe = fv(tp)?;
        if fe.signum() != f0.signum() {
            return Err(NrError::FRoot { t: tp });
        }
        let g = quad::integrate(|u| fv(u).map(|v| 1.0 / v), t, tp, 1e-3 * tol, 1e-3 * tol)? - rho;
        let step = g * fe;
        tp -= step;
        if step.abs() <= tol * tp.abs().max(1.0) {
            return Ok(tp);
        }
        if step.abs() > prev_step && step.abs() > 1.0 {
            break;
        }
        prev_step = step.abs();
    }
    Err(NrError::TPrime("Newton iteration did not converge".into()))
}

/// Checks `exp(rho f(t)(k + d_t)) psi = exp(k (t' - t)) psi(t')` for a
/// wavefunction of `t` alone; the left side runs through the flow with
/// `B = f d_t`, `C = k f`.
pub fn barut_flow_identity(
    f: &Expression,
    psi: &ScalarField,
    p: &RelParams,
    t: f64,
    rho: f64,
    tol: &Tolerance,
) -> Result<BarutCheck, NrError> {
    p.validate()?;
    let chart = Chart::new(&["t"]);
    if psi.chart().names() != chart.names() {
        return Err(NrError::WrongChart(psi.chart().names().join(", ")));
    }
    let k = p.rest_rate();
    let b = VectorField::new(chart.clone(), vec![f.clone()])?;
    let c = ScalarField::new(chart, k * f.clone())?;
    let x = Point::new(vec![t]);
    let flow = flowexp::integrate_flow_with_phase(&b, &c, &x, rho, tol)?;
    let lhs = flowexp::apply_exponential(&b, &c, psi, &x, rho, tol)?;
    let t_prime = barut_tprime(f, t, rho, tol.absolute.max(1e-14))?;
    let exponent = k * (t_prime - t);
    if exponent.abs() > DEFAULT_EXP_CAP {
        return Err(NrError::ExponentOverflow {
            exponent,
            cap: DEFAULT_EXP_CAP,
        });
    }
    let rhs = exponent.exp() * psi.evaluate(&Point::new(vec![t_prime]))?;
    Ok(BarutCheck {
        residual: (lhs - rhs).abs(),
        phase_residual: (flow.phase - exponent).abs(),
        t_prime,
        phase: flow.phase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wave(text: &str) -> ScalarField {
        ScalarField::parse(&wave_chart(), text).unwrap()
    }

    fn unit() -> RelParams {
        RelParams::new(1.0, 1.0, 1.0).unwrap()
    }

    fn moderate() -> RelParams {
        RelParams::new(0.5, 3.0, 1.0).unwrap()
    }

    #[test]
    fn params_validated() {
        assert_eq!(RelParams::new(0.0, 1.0, 1.0), Err(NrError::InvalidParams));
        assert_eq!(RelParams::new(1.0, -1.0, 1.0), Err(NrError::InvalidParams));
        assert!((unit().rest_rate() - 2.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn lift_examples() {
        let psi = wave("sin(t)*exp(-x^2)");
        let p = moderate();
        assert_eq!(lift_wavefunction(&psi, &p, 0.3, 0.0, 0.7).unwrap(), psi.evaluate(&Point::new(vec![0.3, 0.7])).unwrap());
        let v = lift_wavefunction(&wave("1"), &unit(), 0.0, 1.0, 0.0).unwrap();
        assert!((v - 535.491_655_524_764_7).abs() < 1e-9);
        assert!(matches!(
            lift_wavefunction(&wave("1"), &unit(), 0.0, 200.0, 0.0),
            Err(NrError::ExponentOverflow { .. })
        ));
        let bad = ScalarField::parse(&Chart::new(&["x", "t"]), "x").unwrap();
        assert!(matches!(lift_wavefunction(&bad, &p, 0.0, 0.0, 0.0), Err(NrError::WrongChart(_))));
    }

    #[test]
    fn lift_is_additive_in_x0() {
        // lifting at a then b equals lifting at a + b
        let p = moderate();
        let psi = wave("cos(2*t)*x + t^2");
        let phi = lifted_expression(&psi, &p).unwrap();
        let (t, x, a, b) = (0.4, 0.9, 0.13, -0.27);
        let once = lift_wavefunction(&psi, &p, t, a + b, x).unwrap();
        let inner = ScalarField::new(wave_chart(), phi.substitute("x0", &Expression::constant(a))).unwrap();
        let twice = lift_wavefunction(&inner, &p, t, b, x).unwrap();
        assert!((once - twice).abs() <= 1e-12 * once.abs().max(1.0));
    }

    #[test]
    fn contraction_identity() {
        let p = moderate();
        assert_eq!(contraction_residual(&wave("t"), &p, 0.5, 0.2, 0.1).unwrap(), 0.0);
        for text in ["exp(-x^2)*sin(t)", "t^3*x - x^2", "1/(1 + t^2 + x^2)"] {
            assert!(contraction_residual(&wave(text), &p, 0.3, 0.1, 0.4).unwrap() <= 1e-12, "{text}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let (k, w): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let psi = wave(&format!("exp({k}*x + {w}*t)"));
            assert!(contraction_residual(&psi, &p, 0.2, 0.05, 0.3).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn kg_identity_and_heat_kernel() {
        let p = moderate();
        for text in ["exp(-x^2)*sin(t)", "t^3*x - x^2", "cos(x)*exp(-t)"] {
            let r = kg_diffusion_residual(&wave(text), &p, (0.3, 0.1, 0.4)).unwrap();
            assert!(r.identity_residual <= 1e-10, "{text}: {}", r.identity_residual);
        }
        let heat = wave(&format!("t^(-0.5)*exp(-pi*{}*x^2/({}*t))", p.m, p.h));
        let r = kg_diffusion_residual(&heat, &p, (0.8, 0.0, 0.3)).unwrap();
        assert!(r.diffusion_term <= 1e-10);
        assert!(r.relativistic_term > 0.0);
        assert!((r.diffusion_defect() - r.relativistic_term).abs() <= 1e-10);

        // plane wave solving the diffusion equation
        let k = 0.7;
        let w = p.h * k * k / (4.0 * PI * p.m);
        let plane = wave(&format!("exp({k}*x + {w}*t)"));
        let r = kg_diffusion_residual(&plane, &p, (0.2, 0.0, -0.5)).unwrap();
        assert!(r.diffusion_term <= 1e-10);
        assert!((r.relativistic_term - w * w * (k * -0.5 + w * 0.2f64).exp() / 9.0).abs() < 1e-12);
    }

    #[test]
    fn defect_scaling() {
        let p = RelParams::new(0.5, 1.0, 1.0).unwrap();
        let heat = wave("t^(-0.5)*exp(-pi*0.5*x^2/t)");
        let slope = diffusion_defect_scaling(&heat, &p, &[10.0, 100.0, 1000.0], (0.8, 0.0, 0.3)).unwrap();
        assert!((slope + 2.0).abs() < 1e-9);
        assert!(matches!(
            diffusion_defect_scaling(&wave("1"), &p, &[10.0, 100.0, 1000.0], (0.8, 0.0, 0.3)),
            Err(NrError::DegenerateFit { .. })
        ));
        assert_eq!(
            diffusion_defect_scaling(&heat, &p, &[10.0, 20.0, 30.0], (0.8, 0.0, 0.3)),
            Err(NrError::TooFewSpeeds)
        );
        let term = |c: f64| kg_diffusion_residual(&heat, &p.with_c(c), (0.8, 0.0, 0.3)).unwrap().relativistic_term;
        assert!((term(20.0) * 4.0 - term(10.0)).abs() < 1e-14);
    }

    #[test]
    fn barut_examples() {
        let tol = Tolerance::new(1e-12, 1e-12, 1 << 20).unwrap();
        let tc = Chart::new(&["t"]);
        let p = RelParams::new(0.3, 1.0, 1.0).unwrap();
        let k = p.rest_rate();
        let psi = ScalarField::parse(&tc, "cos(t) + t^2").unwrap();

        let one = Expression::constant(1.0);
        let r = barut_flow_identity(&one, &psi, &p, 0.2, 0.5, &tol).unwrap();
        assert!((r.t_prime - 0.7).abs() < 1e-12);
        assert!((r.phase - k * 0.5).abs() < 1e-10);
        assert!(r.residual <= 1e-8);

        let t = Expression::var("t");
        let r = barut_flow_identity(&t, &psi, &p, 1.0, 0.5, &tol).unwrap();
        assert!((r.t_prime - 0.5f64.exp()).abs() < 1e-10);
        assert!((r.phase - k * (0.5f64.exp() - 1.0)).abs() < 1e-9);
        assert!(r.residual <= 1e-8 && r.phase_residual <= 1e-9);

        let quad = tc.parse("1 + t^2").unwrap();
        let r = barut_flow_identity(&quad, &psi, &p, 0.1, 0.4, &tol).unwrap();
        assert!(r.residual <= 1e-8);
        assert!((r.t_prime - (0.1f64.atan() + 0.4).tan()).abs() < 1e-10);

        assert!(matches!(barut_flow_identity(&t, &psi, &p, 0.0, 0.5, &tol), Err(NrError::FRoot { .. })));
    }

    #[test]
    fn barut_against_series() {
        let tol = Tolerance::new(1e-13, 1e-13, 1 << 20).unwrap();
        let tc = Chart::new(&["t"]);
        let p = RelParams::new(0.1, 1.0, 1.0).unwrap();
        let f = tc.parse("1 + t^2").unwrap();
        let psi = ScalarField::parse(&tc, "exp(-t)").unwrap();
        let b = VectorField::new(tc.clone(), vec![f.clone()]).unwrap();
        let c = ScalarField::new(tc.clone(), p.rest_rate() * f.clone()).unwrap();
        let x = Point::new(vec![0.3]);
        let mut errs = Vec::new();
        for rho in [0.02, 0.04] {
            let r = barut_flow_identity(&f, &psi, &p, 0.3, rho, &tol).unwrap();
            let series = flowexp::series_oracle(&b, &c, &psi, &x, rho, 6).unwrap();
            let exact = (p.rest_rate() * (r.t_prime - 0.3)).exp() * (-r.t_prime).exp();
            errs.push((exact - series).abs());
        }
        // doubling rho multiplies the truncation error by about 2^7
        let ratio = errs[1] / errs[0];
        assert!(ratio > 90.0 && ratio < 180.0, "{ratio}");
    }
}
