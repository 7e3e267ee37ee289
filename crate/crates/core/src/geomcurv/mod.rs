//! Curvature of a metric given by component formulas, and the block-diagonal
//! decomposition of Riemann, Ricci and scalar curvature.
//!
//! Conventions: `Gamma^a_{bc} = 1/2 g^{ad} (d_b g_{dc} + d_c g_{db} - d_d g_{bc})`,
//! `R^a_{bcd} = d_c Gamma^a_{db} - d_d Gamma^a_{cb} + Gamma^a_{ce} Gamma^e_{db} - Gamma^a_{de} Gamma^e_{cb}`,
//! `R_{abcd} = g_{ae} R^e_{bcd}`, `R_{bd} = R^a_{bad}`, `R = g^{bd} R_{bd}`.
//! The unit 2-sphere has `R = +2`.

mod block;
mod suite;

pub use block::{
    block_vs_direct_residual, mixed_block, ricci_block, riemann_block, scalar_block, BlockReport, BlockRow,
    BlockSplit, Formula,
};
pub use suite::{metric_suite, parse_metric_file, suite_source, MetricSpec, SuiteEntry, SUITE_VERSION};

use thiserror::Error;

use crate::fieldcalc::{check_size, Chart, ExprError, Expression, Point};

/// Default cap on the size of a symbolic metric derivative.
pub const MAX_EXPRESSION_SIZE: usize = 2_000_000;
/// Smallest `|det g|` accepted at an evaluation point.
pub const DET_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurvError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("metric is degenerate at {point:?} (|det| = {det:e})")]
    Degenerate { point: Vec<f64>, det: f64 },
    #[error("metric needs {expected} rows of {expected} components, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("component ({0}, {1}) is given twice with different formulas")]
    Conflict(usize, usize),
    #[error("invalid block split: {0}")]
    Split(String),
    #[error("component ({row}, {col}) couples the two blocks")]
    OffBlock { row: usize, col: usize },
    #[error("metric file line {line}: {message}")]
    File { line: usize, message: String },
}

/// Symmetric `D x D` metric of component expressions.
#[derive(Clone, Debug)]
pub struct MetricField {
    chart: Chart,
    g: Vec<Vec<Expression>>,
}

impl MetricField {
    /// Full matrix form; only the upper triangle is read, the lower is mirrored.
    pub fn new(chart: Chart, rows: Vec<Vec<Expression>>) -> Result<Self, CurvError> {
        let n = chart.dim();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(CurvError::Shape {
                expected: n,
                got: rows.len(),
            });
        }
        let mut g = rows;
        for i in 0..n {
            for j in 0..i {
                g[i][j] = g[j][i].clone();
            }
        }
        for row in &g {
            for e in row {
                check_vars(&chart, e)?;
            }
        }
        Ok(MetricField { chart, g })
    }

    /// From `(i, j, G_ij)` entries; unlisted components are zero.
    pub fn from_entries(chart: Chart, entries: Vec<(usize, usize, Expression)>) -> Result<Self, CurvError> {
        let n = chart.dim();
        let mut g: Vec<Vec<Option<Expression>>> = vec![vec![None; n]; n];
        for (i, j, e) in entries {
            if i >= n || j >= n {
                return Err(CurvError::Shape { expected: n, got: i.max(j) + 1 });
            }
            let (a, b) = (i.min(j), i.max(j));
            match &g[a][b] {
                Some(old) if old.to_string() != e.to_string() => return Err(CurvError::Conflict(a, b)),
                _ => g[a][b] = Some(e),
            }
        }
        let rows = g
            .into_iter()
            .map(|r| r.into_iter().map(|e| e.unwrap_or_else(Expression::zero)).collect())
            .collect();
        MetricField::new(chart, rows)
    }

    pub fn diagonal(chart: Chart, diag: Vec<Expression>) -> Result<Self, CurvError> {
        let entries = diag.into_iter().enumerate().map(|(i, e)| (i, i, e)).collect();
        MetricField::from_entries(chart, entries)
    }

    /// Parses a diagonal metric from formula strings.
    pub fn parse_diagonal<S: AsRef<str>>(chart: &Chart, diag: &[S]) -> Result<Self, CurvError> {
        let exprs = diag.iter().map(|s| chart.parse(s.as_ref())).collect::<Result<Vec<_>, _>>()?;
        MetricField::diagonal(chart.clone(), exprs)
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn component(&self, i: usize, j: usize) -> &Expression {
        &self.g[i][j]
    }
}

fn check_vars(chart: &Chart, e: &Expression) -> Result<(), CurvError> {
    for v in e.variables() {
        if chart.index_of(&v).is_none() {
            return Err(ExprError::UnknownIdentifier { name: v, position: None }.into());
        }
    }
    Ok(())
}

/// Metric values and first/second partial derivatives at one point.
#[derive(Clone, Debug)]
pub struct Jet {
    n: usize,
    g: Vec<f64>,
    /// `dg[(c, a, b)] = d_c g_ab`
    dg: Vec<f64>,
    /// `ddg[(c, d, a, b)] = d_c d_d g_ab`
    ddg: Vec<f64>,
}

impl Jet {
    fn i2(&self, a: usize, b: usize) -> usize {
        a * self.n + b
    }

    fn i3(&self, c: usize, a: usize, b: usize) -> usize {
        (c * self.n + a) * self.n + b
    }

    fn i4(&self, c: usize, d: usize, a: usize, b: usize) -> usize {
        ((c * self.n + d) * self.n + a) * self.n + b
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn g(&self, a: usize, b: usize) -> f64 {
        self.g[self.i2(a, b)]
    }

    pub fn dg(&self, c: usize, a: usize, b: usize) -> f64 {
        self.dg[self.i3(c, a, b)]
    }

    pub fn ddg(&self, c: usize, d: usize, a: usize, b: usize) -> f64 {
        self.ddg[self.i4(c, d, a, b)]
    }

    /// Restriction to the coordinates `idx`: components and derivatives
    /// along the other coordinates are dropped (those are frozen parameters).
    pub fn restrict(&self, idx: &[usize]) -> Jet {
        let k = idx.len();
        let mut out = Jet {
            n: k,
            g: vec![0.0; k * k],
            dg: vec![0.0; k * k * k],
            ddg: vec![0.0; k * k * k * k],
        };
        for a in 0..k {
            for b in 0..k {
                let gi = out.i2(a, b);
                out.g[gi] = self.g(idx[a], idx[b]);
                for c in 0..k {
                    let di = out.i3(c, a, b);
                    out.dg[di] = self.dg(idx[c], idx[a], idx[b]);
                    for d in 0..k {
                        let ddi = out.i4(c, d, a, b);
                        out.ddg[ddi] = self.ddg(idx[c], idx[d], idx[a], idx[b]);
                    }
                }
            }
        }
        out
    }
}

/// Curvature at a point.
#[derive(Clone, Debug)]
pub struct CurvatureBundle {
    n: usize,
    pub metric: Vec<Vec<f64>>,
    pub inverse: Vec<Vec<f64>>,
    /// `christoffel[a][b][c] = Gamma^a_{bc}`
    pub christoffel: Vec<Vec<Vec<f64>>>,
    riemann: Vec<f64>,
    pub ricci: Vec<Vec<f64>>,
    pub scalar: f64,
}

impl CurvatureBundle {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// All-lower `R_{abcd}`.
    pub fn riemann(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        self.riemann[((a * self.n + b) * self.n + c) * self.n + d]
    }

    /// Largest violation of `R_abcd = -R_bacd = -R_abdc = R_cdab` and the
    /// first Bianchi identity `R_abcd + R_acdb + R_adbc = 0`.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let r = self.riemann(a, b, c, d);
                        worst = worst
                            .max((r + self.riemann(b, a, c, d)).abs())
                            .max((r + self.riemann(a, b, d, c)).abs())
                            .max((r - self.riemann(c, d, a, b)).abs())
                            .max((r + self.riemann(a, c, d, b) + self.riemann(a, d, b, c)).abs());
                    }
                }
            }
        }
        worst
    }

    pub fn ricci_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..self.n {
            for b in 0..self.n {
                worst = worst.max((self.ricci[a][b] - self.ricci[b][a]).abs());
            }
        }
        worst
    }
}

/// Inverse and determinant by Gauss–Jordan elimination with partial pivoting.
pub(crate) fn invert(m: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[piv][col] == 0.0 {
            return (inv, 0.0);
        }
        if piv != col {
            a.swap(piv, col);
            inv.swap(piv, col);
            det = -det;
        }
        let p = a[col][col];
        det *= p;
        for k in 0..n {
            a[col][k] /= p;
            inv[col][k] /= p;
        }
        for row in 0..n {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for k in 0..n {
                        a[row][k] -= f * a[col][k];
                        inv[row][k] -= f * inv[col][k];
                    }
                }
            }
        }
    }
    (inv, det)
}

/// Curvature from a jet. `at` is only used to label errors.
pub fn curvature_from_jet(jet: &Jet, at: &[f64]) -> Result<CurvatureBundle, CurvError> {
    let n = jet.n;
    let metric: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| jet.g(a, b)).collect()).collect();
    let (ginv, det) = invert(&metric);
    if !(det.abs() > DET_THRESHOLD) || !det.is_finite() {
        return Err(CurvError::Degenerate {
            point: at.to_vec(),
            det: det.abs(),
        });
    }
    let i3 = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let i4 = |a: usize, b: usize, c: usize, d: usize| ((a * n + b) * n + c) * n + d;

    // Gamma_{d,bc} with the index lowered
    let mut low = vec![0.0; n * n * n];
    for d in 0..n {
        for b in 0..n {
            for c in 0..n {
                low[i3(d, b, c)] = 0.5 * (jet.dg(b, d, c) + jet.dg(c, d, b) - jet.dg(d, b, c));
            }
        }
    }
    let mut gam = vec![0.0; n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                gam[i3(a, b, c)] = (0..n).map(|d| ginv[a][d] * low[i3(d, b, c)]).sum();
            }
        }
    }
    // d_e g^{ad} = -g^{ap} d_e g_pq g^{qd}
    let mut dginv = vec![0.0; n * n * n];
    for e in 0..n {
        for a in 0..n {
            for d in 0..n {
                let mut s = 0.0;
                for p in 0..n {
                    for q in 0..n {
                        s += ginv[a][p] * jet.dg(e, p, q) * ginv[q][d];
                    }
                }
                dginv[i3(e, a, d)] = -s;
            }
        }
    }
    // dgam[(e, a, b, c)] = d_e Gamma^a_{bc}
    let mut dgam = vec![0.0; n * n * n * n];
    for e in 0..n {
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let mut s = 0.0;
                    for d in 0..n {
                        let dlow = 0.5 * (jet.ddg(e, b, d, c) + jet.ddg(e, c, d, b) - jet.ddg(e, d, b, c));
                        s += dginv[i3(e, a, d)] * low[i3(d, b, c)] + ginv[a][d] * dlow;
                    }
                    dgam[i4(e, a, b, c)] = s;
                }
            }
        }
    }
    // R^a_{bcd}
    let mut rup = vec![0.0; n * n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut s = dgam[i4(c, a, d, b)] - dgam[i4(d, a, c, b)];
                    for e in 0..n {
                        s += gam[i3(a, c, e)] * gam[i3(e, d, b)] - gam[i3(a, d, e)] * gam[i3(e, c, b)];
                    }
                    rup[i4(a, b, c, d)] = s;
                }
            }
        }
    }
    let mut riemann = vec![0.0; n * n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    riemann[i4(a, b, c, d)] = (0..n).map(|e| metric[a][e] * rup[i4(e, b, c, d)]).sum();
                }
            }
        }
    }
    let ricci: Vec<Vec<f64>> = (0..n)
        .map(|b| (0..n).map(|d| (0..n).map(|a| rup[i4(a, b, a, d)]).sum()).collect())
        .collect();
    let scalar = (0..n)
        .flat_map(|b| (0..n).map(move |d| (b, d)))
        .map(|(b, d)| ginv[b][d] * ricci[b][d])
        .sum();
    let christoffel = (0..n)
        .map(|a| (0..n).map(|b| (0..n).map(|c| gam[i3(a, b, c)]).collect()).collect())
        .collect();
    Ok(CurvatureBundle {
        n,
        metric,
        inverse: ginv,
        christoffel,
        riemann,
        ricci,
        scalar,
    })
}

/// Precomputed symbolic first and second derivatives of a metric; evaluates
/// jets and curvature at points.
#[derive(Clone, Debug)]
pub struct Curvature {
    metric: MetricField,
    dg: Vec<Expression>,
    ddg: Vec<Expression>,
}

/// Prepares the direct curvature computation for `metric`.
pub fn curvature_direct(metric: &MetricField) -> Result<Curvature, CurvError> {
    Curvature::new(metric, MAX_EXPRESSION_SIZE)
}

impl Curvature {
    pub fn new(metric: &MetricField, max_size: usize) -> Result<Self, CurvError> {
        let n = metric.dim();
        let names = metric.chart().names().to_vec();
        let mut dg = Vec::with_capacity(n * n * n);
        let mut ddg = Vec::with_capacity(n * n * n * n);
        for c in 0..n {
            for a in 0..n {
                for b in 0..n {
                    dg.push(check_size(metric.g[a][b].diff(&names[c]), max_size)?);
                }
            }
        }
        for c in 0..n {
            for d in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        let first = &dg[(d * n + a) * n + b];
                        ddg.push(check_size(first.diff(&names[c]), max_size)?);
                    }
                }
            }
        }
        Ok(Curvature {
            metric: metric.clone(),
            dg,
            ddg,
        })
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn jet(&self, p: &Point) -> Result<Jet, CurvError> {
        let n = self.metric.dim();
        if p.dim() != n {
            return Err(ExprError::DimensionMismatch {
                expected: n,
                got: p.dim(),
            }
            .into());
        }
        let chart = self.metric.chart();
        let ev = |e: &Expression| e.evaluate(chart, &p.coords);
        let mut g = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                g.push(ev(&self.metric.g[a][b])?);
            }
        }
        Ok(Jet {
            n,
            g,
            dg: self.dg.iter().map(ev).collect::<Result<_, _>>()?,
            ddg: self.ddg.iter().map(ev).collect::<Result<_, _>>()?,
        })
    }

    pub fn at(&self, p: &Point) -> Result<CurvatureBundle, CurvError> {
        curvature_from_jet(&self.jet(p)?, &p.coords)
    }
}

/// Deterministic low-discrepancy points (Halton, bases 2, 3, 5, ...) in a box.
pub fn halton_points(lo: &[f64], hi: &[f64], count: usize) -> Vec<Point> {
    const PRIMES: [u32; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    let radical = |mut i: u32, base: u32| {
        let (mut f, mut r) = (1.0, 0.0);
        while i > 0 {
            f /= f64::from(base);
            r += f * f64::from(i % base);
            i /= base;
        }
        r
    };
    (1..=count as u32)
        .map(|i| {
            Point::new(
                lo.iter()
                    .zip(hi)
                    .enumerate()
                    .map(|(k, (&l, &h))| l + (h - l) * radical(i, PRIMES[k % PRIMES.len()]))
                    .collect(),
            )
        })
        .collect()
}
