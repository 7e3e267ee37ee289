//! Schrödinger–Virasoro generators
//!
//! `-X_eps = eps(t) d_t + (N/2) eps'(t) (r d_r + chi) + (m r^{2/N} / 4) eps''(t)`
//!
//! on the chart `(t, r)`, for Laurent polynomials `eps(t) = sum_n eps_n t^{n+1}`.
//! They close into the centreless Virasoro algebra
//! `[X_eps, X_eta] = X_{eps' eta - eps eta'}`, i.e. `[X_m, X_n] = (m - n) X_{m+n}`.
//!
//! `exp(-X_eps)` acts on a field as a primary transformation: a time
//! reparametrisation `t -> t'`, a dilation of `r` and a weight, all in closed
//! form once `t'` is known.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::fieldcalc::{BinaryOp, Chart, ExprError, Expression, Kind, Point, ScalarField, UnaryOp, VectorField};
use crate::flowexp::{self, FlowError, Tolerance};
use crate::quad::{self, QuadError};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SvError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("epsilon must have at least one non-zero finite coefficient")]
    ZeroEpsilon,
    #[error("epsilon has a negative power and cannot be evaluated at t = 0")]
    SingularAtOrigin,
    #[error("epsilon vanishes at t = {t}")]
    EpsilonRoot { t: f64 },
    #[error("eps(t')/eps(t) = {ratio} is not positive")]
    NegativeRatio { ratio: f64 },
    #[error("scale sigma = log eps needs eps > 0, got eps({t}) = {value}")]
    NonPositiveScale { t: f64, value: f64 },
    #[error("r must be positive when 2/N = {exponent} is not an integer (r = {r})")]
    NonIntegerPower { r: f64, exponent: f64 },
    #[error("defining integral residual {residual:e} exceeds {bound:e}")]
    IntegralResidual { residual: f64, bound: f64 },
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("correlator is singular at r' = 0, t' = T'")]
    SingularPoint,
}

impl From<QuadError<SvError>> for SvError {
    fn from(e: QuadError<SvError>) -> Self {
        match e {
            QuadError::Integrand(inner) => inner,
            other => SvError::Quadrature(other.to_string()),
        }
    }
}

/// `eps(t) = sum_n eps_n t^{n+1}` with finitely many non-zero `eps_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonFn {
    coeffs: BTreeMap<i32, f64>,
}

impl EpsilonFn {
    pub fn new(coeffs: impl IntoIterator<Item = (i32, f64)>) -> Result<Self, SvError> {
        let mut map = BTreeMap::new();
        for (n, c) in coeffs {
            if !c.is_finite() {
                return Err(SvError::ZeroEpsilon);
            }
            *map.entry(n).or_insert(0.0) += c;
        }
        map.retain(|_, c| *c != 0.0);
        if map.is_empty() {
            return Err(SvError::ZeroEpsilon);
        }
        Ok(EpsilonFn { coeffs: map })
    }

    /// `eps(t) = c t^{n+1}`.
    pub fn monomial(n: i32, c: f64) -> Result<Self, SvError> {
        EpsilonFn::new([(n, c)])
    }

    /// Builds from ordinary polynomial coefficients `a_0 + a_1 t + a_2 t^2 + ...`.
    pub fn polynomial(coeffs: &[f64]) -> Result<Self, SvError> {
        EpsilonFn::new(coeffs.iter().enumerate().map(|(k, &a)| (k as i32 - 1, a)))
    }

    /// Reads a Laurent polynomial in `t` from a formula built from `+ - * /`
    /// and integer powers. Division is only allowed by a single monomial.
    pub fn parse(text: &str) -> Result<Self, SvError> {
        let chart = Chart::new(&["t"]);
        let e = chart.parse(text)?;
        let map = laurent(&e).ok_or(SvError::InvalidParameter(
            "epsilon must be a Laurent polynomial in t with integer powers",
        ))?;
        // stored by n with eps = sum eps_n t^{n+1}
        EpsilonFn::new(map.into_iter().map(|(k, c)| (k - 1, c)))
    }

    pub fn coefficients(&self) -> &BTreeMap<i32, f64> {
        &self.coeffs
    }

    fn has_negative_powers(&self) -> bool {
        self.coeffs.keys().any(|&n| n + 1 < 0)
    }

    /// k-th derivative of `eps` at `t`.
    pub fn derivative<R: Real>(&self, t: R, k: u32) -> Result<R, SvError> {
        if t == R::zero() && self.coeffs.keys().any(|&n| n + 1 - (k as i32) < 0 && !vanishes(n + 1, k)) {
            return Err(SvError::SingularAtOrigin);
        }
        let mut acc = R::zero();
        for (&n, &c) in &self.coeffs {
            let p = n + 1;
            if vanishes(p, k) {
                continue;
            }
            let falling: f64 = (0..k as i32).map(|j| f64::from(p - j)).product();
            acc += R::from_f64(c * falling) * t.powi(p - k as i32);
        }
        Ok(acc)
    }

    pub fn value<R: Real>(&self, t: R) -> Result<R, SvError> {
        self.derivative(t, 0)
    }

    /// `sum_n eps_n t^{n+1}` as an expression in `var`.
    pub fn expression(&self, var: &str) -> Expression {
        let t = Expression::var(var);
        self.coeffs.iter().fold(Expression::zero(), |acc, (&n, &c)| {
            acc + c * t.clone().powf(f64::from(n + 1))
        })
    }

    /// `eps' eta - eps eta'`, or `None` when it vanishes identically.
    pub fn bracket(&self, other: &EpsilonFn) -> Option<EpsilonFn> {
        // t^{a+1}, t^{b+1} -> (a - b) t^{a+b+1}
        let mut out: BTreeMap<i32, f64> = BTreeMap::new();
        for (&a, &ca) in &self.coeffs {
            for (&b, &cb) in &other.coeffs {
                *out.entry(a + b).or_insert(0.0) += f64::from(a - b) * ca * cb;
            }
        }
        EpsilonFn::new(out).ok()
    }

    pub fn scaled(&self, s: f64) -> Option<EpsilonFn> {
        EpsilonFn::new(self.coeffs.iter().map(|(&n, &c)| (n, s * c))).ok()
    }

    pub fn sum(&self, other: &EpsilonFn) -> Option<EpsilonFn> {
        EpsilonFn::new(self.coeffs.iter().chain(&other.coeffs).map(|(&n, &c)| (n, c))).ok()
    }
}

/// d^k/dt^k t^p is identically zero for non-negative integer p < k.
fn vanishes(p: i32, k: u32) -> bool {
    p >= 0 && p < k as i32
}

type Laurent = BTreeMap<i32, f64>;

/// Power -> coefficient, or `None` if `e` is not a Laurent polynomial.
fn laurent(e: &Expression) -> Option<Laurent> {
    let combine = |a: Laurent, b: Laurent, sign: f64| {
        let mut out = a;
        for (k, c) in b {
            *out.entry(k).or_insert(0.0) += sign * c;
        }
        out
    };
    let mul = |a: &Laurent, b: &Laurent| {
        let mut out = Laurent::new();
        for (ka, ca) in a {
            for (kb, cb) in b {
                *out.entry(ka + kb).or_insert(0.0) += ca * cb;
            }
        }
        out
    };
    let mut out = match e.kind() {
        Kind::Const(c) => Laurent::from([(0, *c)]),
        Kind::Var(_) => Laurent::from([(1, 1.0)]),
        Kind::Unary(UnaryOp::Neg, a) => laurent(a)?.into_iter().map(|(k, c)| (k, -c)).collect(),
        Kind::Unary(..) => return None,
        Kind::Binary(op, a, b) => {
            let la = laurent(a)?;
            match op {
                BinaryOp::Add => combine(la, laurent(b)?, 1.0),
                BinaryOp::Sub => combine(la, laurent(b)?, -1.0),
                BinaryOp::Mul => mul(&la, &laurent(b)?),
                BinaryOp::Div => {
                    let mut lb = laurent(b)?;
                    lb.retain(|_, c| *c != 0.0);
                    if lb.len() != 1 {
                        return None;
                    }
                    let (k, c) = lb.into_iter().next()?;
                    la.into_iter().map(|(j, d)| (j - k, d / c)).collect()
                }
                BinaryOp::Pow => {
                    let p = b.as_const()?;
                    if p.fract() != 0.0 || p.abs() > 64.0 {
                        return None;
                    }
                    let mut base = la;
                    base.retain(|_, c| *c != 0.0);
                    if p < 0.0 {
                        if base.len() != 1 {
                            return None;
                        }
                        let (k, c) = base.into_iter().next()?;
                        Laurent::from([(k * p as i32, c.powi(p as i32))])
                    } else {
                        (0..p as i32).fold(Laurent::from([(0, 1.0)]), |acc, _| mul(&acc, &base))
                    }
                }
            }
        }
    };
    out.retain(|_, c| *c != 0.0);
    Some(out)
}

/// Physical parameters of the generators. `n` is the anisotropy `N = 2/theta`;
/// `theta = 2` (`N = 1`) is the diffusive case.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvParams {
    pub m: f64,
    pub chi: f64,
    pub n: f64,
}

impl Default for SvParams {
    fn default() -> Self {
        SvParams {
            m: 0.0,
            chi: 0.0,
            n: 1.0,
        }
    }
}

impl SvParams {
    pub fn new(m: f64, chi: f64, n: f64) -> Result<Self, SvError> {
        let p = SvParams { m, chi, n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SvError> {
        if self.n == 0.0 || !self.n.is_finite() {
            return Err(SvError::InvalidParameter("N must be finite and non-zero"));
        }
        if !self.m.is_finite() || !self.chi.is_finite() {
            return Err(SvError::InvalidParameter("m and chi must be finite"));
        }
        Ok(())
    }

    pub fn theta(&self) -> f64 {
        2.0 / self.n
    }

    fn r_exponent(&self) -> f64 {
        2.0 / self.n
    }
}

/// The `(t, r)` chart the generators act on.
pub fn sv_chart() -> Chart {
    Chart::new(&["t", "r"])
}

/// `(B, C)` with `-X_eps = B + C`: `B = eps d_t + (N/2) eps' r d_r`,
/// `C = (N/2) eps' chi + (m r^{2/N} / 4) eps''`.
pub fn build_generator(eps: &EpsilonFn, p: &SvParams) -> Result<(VectorField, ScalarField), SvError> {
    p.validate()?;
    let chart = sv_chart();
    let e = eps.expression("t");
    let e1 = e.diff("t");
    let e2 = e1.diff("t");
    let r = Expression::var("r");
    let half_n = p.n / 2.0;
    let b = VectorField::new(chart.clone(), vec![e, half_n * e1.clone() * r.clone()])?;
    let c = half_n * p.chi * e1 + (p.m / 4.0) * r.powf(p.r_exponent()) * e2;
    Ok((b, ScalarField::new(chart, c)?))
}

/// `X_eps f` as an expression.
pub fn apply_generator(eps: &EpsilonFn, p: &SvParams, f: &Expression) -> Result<Expression, SvError> {
    let (b, c) = build_generator(eps, p)?;
    Ok(-(b.apply(f) + c.expr().clone() * f.clone()))
}

/// `max |(X_eps X_eta - X_eta X_eps) psi - X_{eps' eta - eps eta'} psi|` over `points`.
pub fn bracket_residual(
    eps: &EpsilonFn,
    eta: &EpsilonFn,
    p: &SvParams,
    test: &ScalarField,
    points: &[Point],
) -> Result<f64, SvError> {
    let psi = test.expr();
    let lhs = apply_generator(eps, p, &apply_generator(eta, p, psi)?)?
        - apply_generator(eta, p, &apply_generator(eps, p, psi)?)?;
    let rhs = match eps.bracket(eta) {
        Some(zeta) => apply_generator(&zeta, p, psi)?,
        None => Expression::zero(),
    };
    let diff = lhs - rhs;
    let chart = sv_chart();
    let mut worst = 0.0f64;
    for pt in points {
        worst = worst.max(diff.evaluate(&chart, &pt.coords)?.abs());
    }
    Ok(worst)
}

/// `[X_m, X_n] = c X_k`, returned as `(c, k)`, read off the Laurent
/// bracket of the monomials `t^{m+1}` and `t^{n+1}`.
pub fn monomial_bracket(m_idx: i32, n_idx: i32) -> (f64, i32) {
    let em = EpsilonFn::monomial(m_idx, 1.0).expect("non-zero monomial");
    let en = EpsilonFn::monomial(n_idx, 1.0).expect("non-zero monomial");
    let k = m_idx + n_idx;
    let c = em
        .bracket(&en)
        .and_then(|z| z.coefficients().get(&k).copied())
        .unwrap_or(0.0);
    (c, k)
}

fn time_field(eps: &EpsilonFn) -> VectorField {
    VectorField::new(Chart::new(&["t"]), vec![eps.expression("t")]).expect("t-only expression")
}

/// `int_t^{t'} dtau / eps(tau)` by adaptive quadrature.
pub fn inverse_eps_integral(eps: &EpsilonFn, t: f64, t_prime: f64, tol: f64) -> Result<f64, SvError> {
    let v = quad::integrate(
        |tau| {
            let e = eps.value(tau)?;
            if e == 0.0 {
                Err(SvError::EpsilonRoot { t: tau })
            } else {
                Ok(1.0 / e)
            }
        },
        t,
        t_prime,
        tol,
        tol,
    )?;
    Ok(v)
}

/// `t'` with `int_t^{t'} dtau / eps(tau) = rho`, obtained by flowing
/// `dt'/ds = eps(t')` for a parameter time `rho`; the defining integral is
/// then checked by quadrature.
pub fn solve_tprime(eps: &EpsilonFn, t: f64, rho: f64, tol: &Tolerance) -> Result<f64, SvError> {
    if eps.has_negative_powers() && t == 0.0 {
        return Err(SvError::SingularAtOrigin);
    }
    let e0 = eps.value(t)?;
    if e0 == 0.0 {
        return Err(SvError::EpsilonRoot { t });
    }
    let flow = flowexp::integrate_flow(&time_field(eps), &Point::new(vec![t]), rho, tol)?;
    let t_prime = flow.endpoint.coords[0];
    if rho == 0.0 {
        return Ok(t_prime);
    }
    // eps keeps its sign along the path (its roots are fixed points of the flow)
    for (_, pt) in &flow.samples {
        let e = eps.value(pt.coords[0])?;
        if e == 0.0 || e.signum() != e0.signum() {
            return Err(SvError::EpsilonRoot { t: pt.coords[0] });
        }
    }
    let e_end = eps.value(t_prime)?.abs();
    let quad_tol = 1e-3 * tol.absolute;
    let integral = inverse_eps_integral(eps, t, t_prime, quad_tol)?;
    let residual = (integral - rho).abs();
    let bound = 10.0 * (tol.absolute + tol.relative * t_prime.abs()) / e_end.min(e0.abs()) + 10.0 * quad_tol;
    if residual > bound {
        return Err(SvError::IntegralResidual { residual, bound });
    }
    Ok(t_prime)
}

/// Coordinates and weight of `exp(-rho X_eps) psi (t, r) = prefactor * psi(t', r')`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrimaryTransform {
    pub t_prime: f64,
    pub r_prime: f64,
    pub prefactor: f64,
}

/// `r^{2/N}` with the integer/positive-base rule of the expression engine.
fn r_power(r: f64, p: &SvParams) -> Result<f64, SvError> {
    let k = p.r_exponent();
    if k.fract() == 0.0 {
        Ok(r.powi(k as i32))
    } else if r > 0.0 {
        Ok(r.powf(k))
    } else {
        Err(SvError::NonIntegerPower { r, exponent: k })
    }
}

pub fn primary_transform(
    eps: &EpsilonFn,
    p: &SvParams,
    t: f64,
    r: f64,
    rho: f64,
    tol: &Tolerance,
) -> Result<PrimaryTransform, SvError> {
    p.validate()?;
    let t_prime = solve_tprime(eps, t, rho, tol)?;
    let (e_t, e_tp) = (eps.value(t)?, eps.value(t_prime)?);
    let ratio = e_tp / e_t;
    if !(ratio > 0.0) {
        return Err(SvError::NegativeRatio { ratio });
    }
    let r_prime = r * ratio.powf(p.n / 2.0);
    let (d_t, d_tp) = (eps.derivative(t, 1)?, eps.derivative(t_prime, 1)?);
    let exponent = (p.m / 4.0) * (r_power(r_prime, p)? * d_tp / e_tp - r_power(r, p)? * d_t / e_t);
    let prefactor = ratio.powf(p.n * p.chi / 2.0) * exponent.exp();
    Ok(PrimaryTransform {
        t_prime,
        r_prime,
        prefactor,
    })
}

/// `|exp(B + C) psi (t, r) - prefactor * psi(t', r')|`: the flow route of
/// the operator exponential against the closed-form transformation law.
pub fn primary_vs_flow_residual(
    eps: &EpsilonFn,
    p: &SvParams,
    psi: &ScalarField,
    t: f64,
    r: f64,
    tol: &Tolerance,
) -> Result<f64, SvError> {
    let (b, c) = build_generator(eps, p)?;
    let via_flow = flowexp::apply_exponential(&b, &c, psi, &Point::new(vec![t, r]), 1.0, tol)?;
    let tr = primary_transform(eps, p, t, r, 1.0, tol)?;
    let closed = tr.prefactor * psi.evaluate(&Point::new(vec![tr.t_prime, tr.r_prime]))?;
    Ok((via_flow - closed).abs())
}

/// The two parts of the time-dependent-scale check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightFormCheck {
    /// `|dt'/dt - eps(t')/eps(t)|`, with `dt'/dt` from the variational flow.
    pub jacobian_residual: f64,
    /// Mismatch of `phi dt^{N chi/2} exp(m r^{2/N} sigma'(t)/4)` between the
    /// two sides of the transformation (taking `psi = 1`).
    pub form_residual: f64,
    pub dtprime_dt: f64,
}

impl WeightFormCheck {
    pub fn total(&self) -> f64 {
        self.jacobian_residual + self.form_residual
    }
}

/// Checks the transformation law rewritten with `sigma = log eps`.
pub fn weight_form_check(
    eps: &EpsilonFn,
    p: &SvParams,
    t: f64,
    r: f64,
    tol: &Tolerance,
) -> Result<WeightFormCheck, SvError> {
    let tr = primary_transform(eps, p, t, r, 1.0, tol)?;
    for s in [t, tr.t_prime] {
        let v = eps.value(s)?;
        if !(v > 0.0) {
            return Err(SvError::NonPositiveScale { t: s, value: v });
        }
    }
    let jac = flowexp::flow_jacobian(&time_field(eps), &Point::new(vec![t]), 1.0, tol)?[0][0];
    let ratio = eps.value(tr.t_prime)? / eps.value(t)?;

    let chart = Chart::new(&["t"]);
    let sigma_dot = eps.expression("t").log().diff("t");
    let sd = |s: f64| sigma_dot.evaluate(&chart, &[s]);
    let weight = |r: f64, s: f64| -> Result<f64, SvError> { Ok((p.m * r_power(r, p)? * sd(s)? / 4.0).exp()) };

    let lhs = tr.prefactor * weight(r, t)?;
    let rhs = jac.powf(p.n * p.chi / 2.0) * weight(tr.r_prime, tr.t_prime)?;
    Ok(WeightFormCheck {
        jacobian_residual: (jac - ratio).abs(),
        form_residual: (lhs - rhs).abs(),
        dtprime_dt: jac,
    })
}

pub fn weight_form_residual(eps: &EpsilonFn, p: &SvParams, t: f64, r: f64, tol: &Tolerance) -> Result<f64, SvError> {
    weight_form_check(eps, p, t, r, tol).map(|c| c.total())
}

fn check_scales(big_t: f64, big_t_prime: f64) -> Result<(), SvError> {
    if big_t > 0.0 && big_t_prime > 0.0 && big_t.is_finite() && big_t_prime.is_finite() {
        Ok(())
    } else {
        Err(SvError::InvalidParameter("T and T' must be positive"))
    }
}

/// `t' = T' exp(t/T)`, `r' = r sqrt(T'/T) exp(t/2T)`: the plane onto the half-space `t' > 0`.
pub fn map_halfspace(t: f64, r: f64, big_t: f64, big_t_prime: f64) -> Result<(f64, f64), SvError> {
    check_scales(big_t, big_t_prime)?;
    let t_prime = big_t_prime * (t / big_t).exp();
    let r_prime = r * (big_t_prime / big_t).sqrt() * (t / (2.0 * big_t)).exp();
    Ok((t_prime, r_prime))
}

/// Inverse of [`map_halfspace`]: `t = T log(t'/T')`, `r = r' sqrt(T/t')`.
pub fn halfspace_preimage(t_prime: f64, r_prime: f64, big_t: f64, big_t_prime: f64) -> Result<(f64, f64), SvError> {
    check_scales(big_t, big_t_prime)?;
    if !(t_prime > 0.0) {
        return Err(SvError::InvalidParameter("t' must be positive"));
    }
    Ok((big_t * (t_prime / big_t_prime).ln(), r_prime * (big_t / t_prime).sqrt()))
}

/// Massless propagator `(r^2 + t^2)^{-(d-2)/2}` on the plane.
pub fn flat_propagator(t: f64, r: f64, d: u32) -> Result<f64, SvError> {
    let s = r * r + t * t;
    if s == 0.0 && d > 2 {
        return Err(SvError::SingularPoint);
    }
    Ok(s.powf(-(f64::from(d) - 2.0) / 2.0))
}

/// `[(T/t') r'^2 + T^2 log^2(t'/T')]^{-(d-2)/2}`.
pub fn halfspace_power_factor(t_prime: f64, r_prime: f64, big_t: f64, big_t_prime: f64, d: u32) -> Result<f64, SvError> {
    check_scales(big_t, big_t_prime)?;
    if !(t_prime > 0.0 && t_prime.is_finite()) {
        return Err(SvError::InvalidParameter("t' must lie in (0, inf)"));
    }
    let log = (t_prime / big_t_prime).ln();
    let s = (big_t / t_prime) * r_prime * r_prime + big_t * big_t * log * log;
    if s == 0.0 {
        return Err(SvError::SingularPoint);
    }
    Ok(s.powf(-(f64::from(d) - 2.0) / 2.0))
}

/// Two-point function predicted on the half-space:
/// power factor `* (T/t')^{chi/2} * exp(-m r'^2 / (4 t'))`.
pub fn halfspace_correlator(
    t_prime: f64,
    r_prime: f64,
    p: &SvParams,
    big_t: f64,
    big_t_prime: f64,
    d: u32,
) -> Result<f64, SvError> {
    let power = halfspace_power_factor(t_prime, r_prime, big_t, big_t_prime, d)?;
    Ok(power * (big_t / t_prime).powf(p.chi / 2.0) * (-p.m * r_prime * r_prime / (4.0 * t_prime)).exp())
}
