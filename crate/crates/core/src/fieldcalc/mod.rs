//! Expression engine: parsing, evaluation, exact differentiation and the
//! chart-bound scalar/vector field wrappers everything else is built from.

mod expr;
mod parse;

use std::sync::Arc;

use thiserror::Error;

use crate::real::Real;

pub use expr::{BinaryOp, Expression, Kind, UnaryOp};
pub use parse::parse_expression;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown identifier '{name}'{}", position.map(|p| format!(" at {p}")).unwrap_or_default())]
    UnknownIdentifier {
        name: String,
        position: Option<usize>,
    },
    #[error("unknown function '{name}' at {position}")]
    UnknownFunction { name: String, position: usize },
    #[error("domain error: {op} of {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result in {op}")]
    NonFinite { op: &'static str },
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("expression size {size} exceeds limit {limit}")]
    SizeLimit { size: usize, limit: usize },
    #[error("fields live on different charts")]
    ChartMismatch,
}

/// Ordered list of coordinate names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chart {
    names: Arc<[String]>,
}

impl Chart {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Self {
        Chart {
            names: names.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name_refs(&self) -> Vec<&str> {
        self.names.iter().map(String::as_str).collect()
    }

    pub fn parse(&self, text: &str) -> Result<Expression, ExprError> {
        parse_expression(text, &self.name_refs())
    }

    fn check(&self, e: &Expression) -> Result<(), ExprError> {
        match e.variables().into_iter().find(|v| self.index_of(v).is_none()) {
            Some(name) => Err(ExprError::UnknownIdentifier {
                name,
                position: None,
            }),
            None => Ok(()),
        }
    }
}

/// Coordinates of a point on a chart.
#[derive(Clone, Debug, PartialEq)]
pub struct Point<R = f64> {
    pub coords: Vec<R>,
}

impl<R: Real> Point<R> {
    pub fn new(coords: Vec<R>) -> Self {
        Point { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn to_f64(&self) -> Point<f64> {
        Point::new(self.coords.iter().map(|c| c.to_f64()).collect())
    }

    pub fn from_f64(p: &Point<f64>) -> Self {
        Point::new(p.coords.iter().map(|&c| R::from_f64(c)).collect())
    }
}

impl From<Vec<f64>> for Point<f64> {
    fn from(v: Vec<f64>) -> Self {
        Point::new(v)
    }
}

#[derive(Clone, Debug)]
pub struct ScalarField {
    chart: Chart,
    expr: Expression,
}

impl ScalarField {
    pub fn new(chart: Chart, expr: Expression) -> Result<Self, ExprError> {
        chart.check(&expr)?;
        Ok(ScalarField { chart, expr })
    }

    pub fn parse(chart: &Chart, text: &str) -> Result<Self, ExprError> {
        Ok(ScalarField {
            chart: chart.clone(),
            expr: chart.parse(text)?,
        })
    }

    pub fn zero(chart: &Chart) -> Self {
        ScalarField {
            chart: chart.clone(),
            expr: Expression::zero(),
        }
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn expr(&self) -> &Expression {
        &self.expr
    }

    pub fn evaluate<R: Real>(&self, p: &Point<R>) -> Result<R, ExprError> {
        self.expr.evaluate(&self.chart, &p.coords)
    }

    pub fn differentiate(&self, var: &str) -> Result<ScalarField, ExprError> {
        differentiate(&self.expr, &self.chart, var).map(|expr| ScalarField {
            chart: self.chart.clone(),
            expr,
        })
    }
}

/// First-order operator `B = sum_mu B^mu d_mu` on a chart.
#[derive(Clone, Debug)]
pub struct VectorField {
    chart: Chart,
    components: Vec<Expression>,
}

impl VectorField {
    pub fn new(chart: Chart, components: Vec<Expression>) -> Result<Self, ExprError> {
        if components.len() != chart.dim() {
            return Err(ExprError::DimensionMismatch {
                expected: chart.dim(),
                got: components.len(),
            });
        }
        for c in &components {
            chart.check(c)?;
        }
        Ok(VectorField { chart, components })
    }

    pub fn parse<S: AsRef<str>>(chart: &Chart, texts: &[S]) -> Result<Self, ExprError> {
        let components = texts
            .iter()
            .map(|t| chart.parse(t.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        VectorField::new(chart.clone(), components)
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expression] {
        &self.components
    }

    pub fn evaluate<R: Real>(&self, p: &Point<R>) -> Result<Vec<R>, ExprError> {
        self.evaluate_slice(&p.coords)
    }

    pub(crate) fn evaluate_slice<R: Real>(&self, coords: &[R]) -> Result<Vec<R>, ExprError> {
        self.components
            .iter()
            .map(|c| c.evaluate(&self.chart, coords))
            .collect()
    }

    /// Directional derivative `sum_mu B^mu d_mu e`, built symbolically.
    pub fn apply(&self, e: &Expression) -> Expression {
        self.components
            .iter()
            .zip(self.chart.names())
            .fold(Expression::zero(), |acc, (b, name)| {
                let de = e.diff(name);
                if de.is_zero() {
                    acc
                } else {
                    acc + b.clone() * de
                }
            })
    }
}

/// Exact partial derivative of `e` with respect to chart variable `var`.
pub fn differentiate(e: &Expression, chart: &Chart, var: &str) -> Result<Expression, ExprError> {
    if chart.index_of(var).is_none() {
        return Err(ExprError::UnknownIdentifier {
            name: var.to_string(),
            position: None,
        });
    }
    Ok(e.diff(var))
}

/// Evaluates `e` at `p`, whose coordinates are ordered as in `chart`.
pub fn evaluate<R: Real>(e: &Expression, chart: &Chart, p: &Point<R>) -> Result<R, ExprError> {
    e.evaluate(chart, &p.coords)
}

/// Returns `e` unchanged if its tree size is within `limit`.
pub fn check_size(e: Expression, limit: usize) -> Result<Expression, ExprError> {
    if e.size() > limit {
        Err(ExprError::SizeLimit {
            size: e.size(),
            limit,
        })
    } else {
        Ok(e)
    }
}
