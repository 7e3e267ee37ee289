use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::ops;
use std::sync::Arc;

use crate::real::Real;

use super::{Chart, ExprError};

/// Trees larger than this are evaluated with a per-call cache keyed on
/// shared subtrees; derivative towers share heavily.
const MEMO_THRESHOLD: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sqrt" => UnaryOp::Sqrt,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug)]
pub enum Kind {
    Const(f64),
    Var(Arc<str>),
    Unary(UnaryOp, Expression),
    Binary(BinaryOp, Expression, Expression),
}

#[derive(Debug)]
struct Node {
    kind: Kind,
    size: usize,
}

/// Immutable scalar expression tree. Cloning is cheap; subtrees are shared.
#[derive(Clone)]
pub struct Expression(Arc<Node>);

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({self})")
    }
}

impl Expression {
    fn from_kind(kind: Kind) -> Self {
        let size = match &kind {
            Kind::Const(_) | Kind::Var(_) => 1,
            Kind::Unary(_, a) => a.size().saturating_add(1),
            Kind::Binary(_, a, b) => a.size().saturating_add(b.size()).saturating_add(1),
        };
        Expression(Arc::new(Node { kind, size }))
    }

    pub fn constant(value: f64) -> Self {
        Expression::from_kind(Kind::Const(value))
    }

    pub fn var(name: &str) -> Self {
        Expression::from_kind(Kind::Var(Arc::from(name)))
    }

    pub fn zero() -> Self {
        Expression::constant(0.0)
    }

    pub fn one() -> Self {
        Expression::constant(1.0)
    }

    pub fn kind(&self) -> &Kind {
        &self.0.kind
    }

    /// Number of nodes counting shared subtrees once per occurrence.
    pub fn size(&self) -> usize {
        self.0.size
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.kind() {
            Kind::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    pub fn unary(op: UnaryOp, a: Expression) -> Self {
        if let Some(c) = a.as_const() {
            let folded = match op {
                UnaryOp::Neg => Some(-c),
                UnaryOp::Exp => Some(c.exp()),
                UnaryOp::Log if c > 0.0 => Some(c.ln()),
                UnaryOp::Sqrt if c >= 0.0 => Some(c.sqrt()),
                UnaryOp::Sin => Some(c.sin()),
                UnaryOp::Cos => Some(c.cos()),
                _ => None,
            };
            if let Some(v) = folded.filter(|v| v.is_finite()) {
                return Expression::constant(v);
            }
        }
        if op == UnaryOp::Neg {
            if let Kind::Unary(UnaryOp::Neg, inner) = a.kind() {
                return inner.clone();
            }
        }
        Expression::from_kind(Kind::Unary(op, a))
    }

    pub fn binary(op: BinaryOp, a: Expression, b: Expression) -> Self {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            let folded = match op {
                BinaryOp::Add => Some(x + y),
                BinaryOp::Sub => Some(x - y),
                BinaryOp::Mul => Some(x * y),
                BinaryOp::Div if y != 0.0 => Some(x / y),
                BinaryOp::Pow => pow_f64(x, y).ok(),
                _ => None,
            };
            if let Some(v) = folded.filter(|v| v.is_finite()) {
                return Expression::constant(v);
            }
        }
        match op {
            BinaryOp::Add if a.is_zero() => return b,
            BinaryOp::Add | BinaryOp::Sub if b.is_zero() => return a,
            BinaryOp::Sub if a.is_zero() => return Expression::unary(UnaryOp::Neg, b),
            BinaryOp::Mul if a.is_zero() || b.is_zero() => return Expression::zero(),
            BinaryOp::Mul if a.is_one() => return b,
            BinaryOp::Mul if b.is_one() => return a,
            BinaryOp::Mul if a.as_const() == Some(-1.0) => return Expression::unary(UnaryOp::Neg, b),
            BinaryOp::Mul if b.as_const() == Some(-1.0) => return Expression::unary(UnaryOp::Neg, a),
            BinaryOp::Div if b.is_one() => return a,
            BinaryOp::Div if a.is_zero() && !b.is_zero() => return Expression::zero(),
            BinaryOp::Pow if b.is_one() => return a,
            BinaryOp::Pow if b.is_zero() => return Expression::one(),
            _ => {}
        }
        Expression::from_kind(Kind::Binary(op, a, b))
    }

    pub fn exp(self) -> Self {
        Expression::unary(UnaryOp::Exp, self)
    }

    pub fn log(self) -> Self {
        Expression::unary(UnaryOp::Log, self)
    }

    pub fn sqrt(self) -> Self {
        Expression::unary(UnaryOp::Sqrt, self)
    }

    pub fn sin(self) -> Self {
        Expression::unary(UnaryOp::Sin, self)
    }

    pub fn cos(self) -> Self {
        Expression::unary(UnaryOp::Cos, self)
    }

    pub fn pow(self, exponent: Expression) -> Self {
        Expression::binary(BinaryOp::Pow, self, exponent)
    }

    pub fn powf(self, exponent: f64) -> Self {
        self.pow(Expression::constant(exponent))
    }

    /// Names of all variables occurring in the tree.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut seen = HashSet::new();
        self.collect_vars(&mut out, &mut seen);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>, seen: &mut HashSet<*const Node>) {
        if !seen.insert(Arc::as_ptr(&self.0)) {
            return;
        }
        match self.kind() {
            Kind::Const(_) => {}
            Kind::Var(v) => {
                out.insert(v.to_string());
            }
            Kind::Unary(_, a) => a.collect_vars(out, seen),
            Kind::Binary(_, a, b) => {
                a.collect_vars(out, seen);
                b.collect_vars(out, seen);
            }
        }
    }

    /// Exact partial derivative with respect to `var`.
    pub fn diff(&self, var: &str) -> Expression {
        let mut memo = HashMap::new();
        self.diff_memo(var, &mut memo)
    }

    fn diff_memo(&self, var: &str, memo: &mut HashMap<*const Node, Expression>) -> Expression {
        let key = Arc::as_ptr(&self.0);
        if let Some(d) = memo.get(&key) {
            return d.clone();
        }
        let d = match self.kind() {
            Kind::Const(_) => Expression::zero(),
            Kind::Var(v) => {
                if &**v == var {
                    Expression::one()
                } else {
                    Expression::zero()
                }
            }
            Kind::Unary(op, a) => {
                let da = a.diff_memo(var, memo);
                if da.is_zero() {
                    Expression::zero()
                } else {
                    match op {
                        UnaryOp::Neg => -da,
                        UnaryOp::Exp => self.clone() * da,
                        UnaryOp::Log => da / a.clone(),
                        UnaryOp::Sqrt => da / (Expression::constant(2.0) * self.clone()),
                        UnaryOp::Sin => a.clone().cos() * da,
                        UnaryOp::Cos => -(a.clone().sin() * da),
                    }
                }
            }
            Kind::Binary(op, a, b) => {
                let da = a.diff_memo(var, memo);
                let db = b.diff_memo(var, memo);
                match op {
                    BinaryOp::Add => da + db,
                    BinaryOp::Sub => da - db,
                    BinaryOp::Mul => da * b.clone() + a.clone() * db,
                    BinaryOp::Div => {
                        if db.is_zero() {
                            da / b.clone()
                        } else {
                            (da * b.clone() - a.clone() * db) / b.clone().powf(2.0)
                        }
                    }
                    BinaryOp::Pow => match b.as_const() {
                        Some(c) => {
                            if da.is_zero() {
                                Expression::zero()
                            } else {
                                Expression::constant(c) * a.clone().powf(c - 1.0) * da
                            }
                        }
                        None => {
                            // d(a^b) = a^b (b' log a + b a'/a)
                            let term_b = if db.is_zero() {
                                Expression::zero()
                            } else {
                                db * a.clone().log()
                            };
                            let term_a = if da.is_zero() {
                                Expression::zero()
                            } else {
                                b.clone() * da / a.clone()
                            };
                            self.clone() * (term_b + term_a)
                        }
                    },
                }
            }
        };
        memo.insert(key, d.clone());
        d
    }

    /// Replaces every occurrence of `var` by `replacement`.
    pub fn substitute(&self, var: &str, replacement: &Expression) -> Expression {
        let mut memo = HashMap::new();
        self.substitute_memo(var, replacement, &mut memo)
    }

    fn substitute_memo(
        &self,
        var: &str,
        replacement: &Expression,
        memo: &mut HashMap<*const Node, Expression>,
    ) -> Expression {
        let key = Arc::as_ptr(&self.0);
        if let Some(e) = memo.get(&key) {
            return e.clone();
        }
        let e = match self.kind() {
            Kind::Const(_) => self.clone(),
            Kind::Var(v) => {
                if &**v == var {
                    replacement.clone()
                } else {
                    self.clone()
                }
            }
            Kind::Unary(op, a) => Expression::unary(*op, a.substitute_memo(var, replacement, memo)),
            Kind::Binary(op, a, b) => Expression::binary(
                *op,
                a.substitute_memo(var, replacement, memo),
                b.substitute_memo(var, replacement, memo),
            ),
        };
        memo.insert(key, e.clone());
        e
    }

    /// Evaluates with variables bound by position in `chart`.
    pub fn evaluate<R: Real>(&self, chart: &Chart, coords: &[R]) -> Result<R, ExprError> {
        if coords.len() != chart.dim() {
            return Err(ExprError::DimensionMismatch {
                expected: chart.dim(),
                got: coords.len(),
            });
        }
        if self.size() > MEMO_THRESHOLD {
            let mut memo = HashMap::new();
            self.eval_memo(chart, coords, &mut memo)
        } else {
            self.eval_plain(chart, coords)
        }
    }

    fn eval_plain<R: Real>(&self, chart: &Chart, coords: &[R]) -> Result<R, ExprError> {
        match self.kind() {
            Kind::Const(c) => Ok(R::from_f64(*c)),
            Kind::Var(v) => lookup(chart, coords, v),
            Kind::Unary(op, a) => apply_unary(*op, a.eval_plain(chart, coords)?),
            Kind::Binary(op, a, b) => {
                apply_binary(*op, a.eval_plain(chart, coords)?, b.eval_plain(chart, coords)?, b)
            }
        }
    }

    fn eval_memo<R: Real>(
        &self,
        chart: &Chart,
        coords: &[R],
        memo: &mut HashMap<*const Node, R>,
    ) -> Result<R, ExprError> {
        let key = Arc::as_ptr(&self.0);
        if let Some(v) = memo.get(&key) {
            return Ok(*v);
        }
        let v = match self.kind() {
            Kind::Const(c) => R::from_f64(*c),
            Kind::Var(v) => lookup(chart, coords, v)?,
            Kind::Unary(op, a) => apply_unary(*op, a.eval_memo(chart, coords, memo)?)?,
            Kind::Binary(op, a, b) => {
                let x = a.eval_memo(chart, coords, memo)?;
                let y = b.eval_memo(chart, coords, memo)?;
                apply_binary(*op, x, y, b)?
            }
        };
        if self.size() > 1 {
            memo.insert(key, v);
        }
        Ok(v)
    }
}

fn lookup<R: Real>(chart: &Chart, coords: &[R], name: &str) -> Result<R, ExprError> {
    chart
        .index_of(name)
        .map(|i| coords[i])
        .ok_or_else(|| ExprError::UnknownIdentifier {
            name: name.to_string(),
            position: None,
        })
}

fn finite<R: Real>(v: R, op: &'static str) -> Result<R, ExprError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::NonFinite { op })
    }
}

fn apply_unary<R: Real>(op: UnaryOp, a: R) -> Result<R, ExprError> {
    match op {
        UnaryOp::Neg => Ok(-a),
        UnaryOp::Exp => finite(a.exp(), "exp"),
        UnaryOp::Log => {
            if a > R::zero() {
                finite(a.ln(), "log")
            } else {
                Err(ExprError::Domain {
                    op: "log",
                    value: a.to_f64(),
                })
            }
        }
        UnaryOp::Sqrt => {
            if a >= R::zero() {
                Ok(a.sqrt())
            } else {
                Err(ExprError::Domain {
                    op: "sqrt",
                    value: a.to_f64(),
                })
            }
        }
        UnaryOp::Sin => Ok(a.sin()),
        UnaryOp::Cos => Ok(a.cos()),
    }
}

/// Integer-valued exponents use repeated multiplication for any base;
/// anything else needs a positive base.
fn integer_exponent(y: f64) -> Option<i32> {
    if y.fract() == 0.0 && y.abs() <= i32::MAX as f64 {
        Some(y as i32)
    } else {
        None
    }
}

fn pow_real<R: Real>(x: R, y: R, y_const: Option<f64>) -> Result<R, ExprError> {
    let yf = y_const.unwrap_or_else(|| y.to_f64());
    // An exponent that is integral in f64 may still carry a dd tail.
    let exact_int = integer_exponent(yf).filter(|&n| y == R::from_f64(n as f64));
    match exact_int {
        Some(n) => {
            if n < 0 && x == R::zero() {
                Err(ExprError::DivisionByZero)
            } else {
                finite(x.powi(n), "pow")
            }
        }
        None => {
            if x > R::zero() {
                finite((y * x.ln()).exp(), "pow")
            } else if x == R::zero() && yf > 0.0 {
                Ok(R::zero())
            } else {
                Err(ExprError::Domain {
                    op: "pow",
                    value: x.to_f64(),
                })
            }
        }
    }
}

fn pow_f64(x: f64, y: f64) -> Result<f64, ExprError> {
    pow_real(x, y, Some(y))
}

fn apply_binary<R: Real>(op: BinaryOp, a: R, b: R, b_expr: &Expression) -> Result<R, ExprError> {
    match op {
        BinaryOp::Add => finite(a + b, "add"),
        BinaryOp::Sub => finite(a - b, "sub"),
        BinaryOp::Mul => finite(a * b, "mul"),
        BinaryOp::Div => {
            if b == R::zero() {
                Err(ExprError::DivisionByZero)
            } else {
                finite(a / b, "div")
            }
        }
        BinaryOp::Pow => pow_real(a, b, b_expr.as_const()),
    }
}

macro_rules! expr_binop {
    ($tr:ident, $m:ident, $op:expr) => {
        impl ops::$tr for Expression {
            type Output = Expression;
            fn $m(self, rhs: Expression) -> Expression {
                Expression::binary($op, self, rhs)
            }
        }
        impl ops::$tr<f64> for Expression {
            type Output = Expression;
            fn $m(self, rhs: f64) -> Expression {
                Expression::binary($op, self, Expression::constant(rhs))
            }
        }
        impl ops::$tr<Expression> for f64 {
            type Output = Expression;
            fn $m(self, rhs: Expression) -> Expression {
                Expression::binary($op, Expression::constant(self), rhs)
            }
        }
    };
}
expr_binop!(Add, add, BinaryOp::Add);
expr_binop!(Sub, sub, BinaryOp::Sub);
expr_binop!(Mul, mul, BinaryOp::Mul);
expr_binop!(Div, div, BinaryOp::Div);

impl ops::Neg for Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        Expression::unary(UnaryOp::Neg, self)
    }
}

// Precedence levels used when printing.
const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

impl Expression {
    fn precedence(&self) -> u8 {
        match self.kind() {
            Kind::Const(c) if *c < 0.0 || c.is_sign_negative() => PREC_NEG,
            Kind::Const(_) | Kind::Var(_) => PREC_ATOM,
            Kind::Unary(UnaryOp::Neg, _) => PREC_NEG,
            Kind::Unary(_, _) => PREC_ATOM,
            Kind::Binary(BinaryOp::Add | BinaryOp::Sub, _, _) => PREC_ADD,
            Kind::Binary(BinaryOp::Mul | BinaryOp::Div, _, _) => PREC_MUL,
            Kind::Binary(BinaryOp::Pow, _, _) => PREC_POW,
        }
    }

    fn write_with(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let paren = self.precedence() < min_prec;
        if paren {
            f.write_str("(")?;
        }
        match self.kind() {
            Kind::Const(c) => write!(f, "{c:?}")?,
            Kind::Var(v) => f.write_str(v)?,
            Kind::Unary(UnaryOp::Neg, a) => {
                f.write_str("-")?;
                a.write_with(f, PREC_POW)?;
            }
            Kind::Unary(op, a) => {
                write!(f, "{}(", op.name())?;
                a.write_with(f, 0)?;
                f.write_str(")")?;
            }
            Kind::Binary(op, a, b) => {
                let (sym, lp, rp) = match op {
                    BinaryOp::Add => (" + ", PREC_ADD, PREC_MUL),
                    BinaryOp::Sub => (" - ", PREC_ADD, PREC_MUL),
                    BinaryOp::Mul => ("*", PREC_MUL, PREC_NEG),
                    BinaryOp::Div => ("/", PREC_MUL, PREC_NEG),
                    BinaryOp::Pow => ("^", PREC_ATOM, PREC_ATOM),
                };
                a.write_with(f, lp)?;
                f.write_str(sym)?;
                b.write_with(f, rp)?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_with(f, 0)
    }
}
