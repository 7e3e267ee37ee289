//! Block-diagonal metrics `G = g(x, y) + h(x, y)` on coordinates `(x^mu, y^m)`.
//!
//! Greek indices run over the first block, latin over the second. `r(g(x,(y)))`
//! is the curvature of `g` with `y` frozen, i.e. computed from the restricted
//! jet without `y`-derivatives; likewise for `h` with `x` frozen.

use std::fmt;

use super::{curvature_from_jet, CurvError, Curvature, CurvatureBundle, Jet, MetricField};
use crate::fieldcalc::Point;

/// Partition of the coordinate indices into two blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSplit {
    first: Vec<usize>,
    second: Vec<usize>,
}

impl BlockSplit {
    /// Validates the partition and that no component couples the blocks
    /// (checked structurally: the coupling components must be literally zero).
    pub fn new(metric: &MetricField, first: Vec<usize>, second: Vec<usize>) -> Result<Self, CurvError> {
        let n = metric.dim();
        if first.is_empty() || second.is_empty() {
            return Err(CurvError::Split("both blocks must be non-empty".into()));
        }
        let mut seen = vec![false; n];
        for &i in first.iter().chain(&second) {
            if i >= n {
                return Err(CurvError::Split(format!("index {i} out of range for dimension {n}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(CurvError::Split(format!("index {i} appears twice")));
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(CurvError::Split(format!("index {i} is not covered")));
        }
        for &i in &first {
            for &j in &second {
                if !metric.component(i, j).is_zero() {
                    return Err(CurvError::OffBlock { row: i, col: j });
                }
            }
        }
        Ok(BlockSplit { first, second })
    }

    /// Split by coordinate names.
    pub fn by_names<S: AsRef<str>>(metric: &MetricField, first: &[S], second: &[S]) -> Result<Self, CurvError> {
        let look = |names: &[S]| {
            names
                .iter()
                .map(|s| {
                    metric
                        .chart()
                        .index_of(s.as_ref())
                        .ok_or_else(|| CurvError::Split(format!("unknown coordinate '{}'", s.as_ref())))
                })
                .collect::<Result<Vec<_>, _>>()
        };
        BlockSplit::new(metric, look(first)?, look(second)?)
    }

    pub fn first(&self) -> &[usize] {
        &self.first
    }

    pub fn second(&self) -> &[usize] {
        &self.second
    }
}

/// Everything the block formulas need at one point.
struct Ctx {
    jet: Jet,
    x: Vec<usize>,
    y: Vec<usize>,
    /// curvature of g with y frozen, indexed within the first block
    rg: CurvatureBundle,
    /// curvature of h with x frozen, indexed within the second block
    rh: CurvatureBundle,
}

impl Ctx {
    fn new(curv: &Curvature, split: &BlockSplit, p: &Point) -> Result<Self, CurvError> {
        let jet = curv.jet(p)?;
        let rg = curvature_from_jet(&jet.restrict(&split.first), &p.coords)?;
        let rh = curvature_from_jet(&jet.restrict(&split.second), &p.coords)?;
        Ok(Ctx {
            jet,
            x: split.first.clone(),
            y: split.second.clone(),
            rg,
            rh,
        })
    }

    fn nx(&self) -> usize {
        self.x.len()
    }

    fn ny(&self) -> usize {
        self.y.len()
    }

    fn ginv(&self, a: usize, b: usize) -> f64 {
        self.rg.inverse[a][b]
    }

    fn hinv(&self, a: usize, b: usize) -> f64 {
        self.rh.inverse[a][b]
    }

    /// `d_a g_{mu nu}`, `a` in the second block.
    fn dy_g(&self, a: usize, mu: usize, nu: usize) -> f64 {
        self.jet.dg(self.y[a], self.x[mu], self.x[nu])
    }

    /// `d_mu h_{ab}`, `mu` in the first block.
    fn dx_h(&self, mu: usize, a: usize, b: usize) -> f64 {
        self.jet.dg(self.x[mu], self.y[a], self.y[b])
    }

    /// `d_a log g = g^{mu nu} d_a g_{mu nu}`.
    fn dlog_g(&self, a: usize) -> f64 {
        let nx = self.nx();
        (0..nx)
            .flat_map(|m| (0..nx).map(move |n| (m, n)))
            .map(|(m, n)| self.ginv(m, n) * self.dy_g(a, m, n))
            .sum()
    }

    /// `d_alpha log h = h^{mn} d_alpha h_{mn}`.
    fn dlog_h(&self, alpha: usize) -> f64 {
        let ny = self.ny();
        (0..ny)
            .flat_map(|m| (0..ny).map(move |n| (m, n)))
            .map(|(m, n)| self.hinv(m, n) * self.dx_h(alpha, m, n))
            .sum()
    }

    /// `df . dj = h^{ab} d_a f d_b j` for second-block gradients.
    fn hdot(&self, f: &[f64], j: &[f64]) -> f64 {
        let ny = self.ny();
        let mut s = 0.0;
        for a in 0..ny {
            for b in 0..ny {
                s += self.hinv(a, b) * f[a] * j[b];
            }
        }
        s
    }

    /// `delta f . delta j = g^{mu nu} d_mu f d_nu j` for first-block gradients.
    fn gdot(&self, f: &[f64], j: &[f64]) -> f64 {
        let nx = self.nx();
        let mut s = 0.0;
        for a in 0..nx {
            for b in 0..nx {
                s += self.ginv(a, b) * f[a] * j[b];
            }
        }
        s
    }

    fn grad_y_g(&self, mu: usize, nu: usize) -> Vec<f64> {
        (0..self.ny()).map(|a| self.dy_g(a, mu, nu)).collect()
    }

    fn riemann37(&self, l: usize, m: usize, s: usize, n: usize) -> f64 {
        let corr = self.hdot(&self.grad_y_g(m, s), &self.grad_y_g(n, l))
            - self.hdot(&self.grad_y_g(m, n), &self.grad_y_g(l, s));
        self.rg.riemann(l, m, s, n) + 0.25 * corr
    }

    fn mixed38(&self, l: usize, m: usize, s: usize, n: usize) -> f64 {
        let nx = self.nx();
        let ny = self.ny();
        let mut first = 0.0;
        for al in 0..nx {
            for be in 0..nx {
                first += self.ginv(al, be)
                    * (self.dy_g(s, al, m) * self.dy_g(n, be, l) - self.dy_g(n, al, m) * self.dy_g(s, be, l));
            }
        }
        let mut second = 0.0;
        for a in 0..ny {
            for b in 0..ny {
                second += self.hinv(a, b)
                    * (self.dx_h(m, a, s) * self.dx_h(l, b, n) - self.dx_h(m, a, n) * self.dx_h(l, b, s));
            }
        }
        0.25 * (first + second)
    }

    fn ricci39(&self, mu: usize, nu: usize) -> f64 {
        let (nx, ny) = (self.nx(), self.ny());
        let gam_h = &self.rh.christoffel;
        let gam_g = &self.rg.christoffel;
        let mut val = self.rg.ricci[mu][nu];

        let mut t = 0.0;
        for l in 0..ny {
            for s in 0..ny {
                let dd = self.jet.ddg(self.y[l], self.y[s], self.x[mu], self.x[nu]);
                let conn: f64 = (0..ny).map(|a| gam_h[a][l][s] * self.dy_g(a, mu, nu)).sum();
                t += self.hinv(l, s) * (dd - conn);
            }
        }
        val -= 0.5 * t;

        let mut t = 0.0;
        for al in 0..nx {
            for be in 0..nx {
                t += self.ginv(al, be) * self.hdot(&self.grad_y_g(mu, al), &self.grad_y_g(nu, be));
            }
        }
        val += 0.5 * t;

        let dlog: Vec<f64> = (0..ny).map(|a| self.dlog_g(a)).collect();
        val -= 0.25 * self.hdot(&self.grad_y_g(mu, nu), &dlog);

        let mut t = 0.0;
        for l in 0..ny {
            for s in 0..ny {
                for a in 0..ny {
                    for b in 0..ny {
                        t += self.hinv(l, s) * self.hinv(a, b) * self.dx_h(mu, a, s) * self.dx_h(nu, b, l);
                    }
                }
            }
        }
        val += 0.25 * t;

        let mut t = 0.0;
        for l in 0..ny {
            for s in 0..ny {
                let dd = self.jet.ddg(self.x[mu], self.x[nu], self.y[l], self.y[s]);
                let conn: f64 = (0..nx).map(|al| gam_g[al][mu][nu] * self.dx_h(al, l, s)).sum();
                t += self.hinv(l, s) * (dd - conn);
            }
        }
        val - 0.5 * t
    }

    fn scalar40(&self) -> f64 {
        let (nx, ny) = (self.nx(), self.ny());
        let gam_h = &self.rh.christoffel;
        let gam_g = &self.rg.christoffel;
        let dlog_g: Vec<f64> = (0..ny).map(|a| self.dlog_g(a)).collect();
        let dlog_h: Vec<f64> = (0..nx).map(|a| self.dlog_h(a)).collect();

        let mut val = self.rg.scalar + self.rh.scalar;
        val -= 0.25 * (self.hdot(&dlog_g, &dlog_g) + self.gdot(&dlog_h, &dlog_h));
        for a in 0..ny {
            let trace: f64 = (0..ny)
                .flat_map(|m| (0..ny).map(move |n| (m, n)))
                .map(|(m, n)| self.hinv(m, n) * gam_h[a][m][n])
                .sum();
            val += dlog_g[a] * trace;
        }
        for al in 0..nx {
            let trace: f64 = (0..nx)
                .flat_map(|m| (0..nx).map(move |n| (m, n)))
                .map(|(m, n)| self.ginv(m, n) * gam_g[al][m][n])
                .sum();
            val += dlog_h[al] * trace;
        }
        let mut second = 0.0;
        let mut quad = 0.0;
        for mu in 0..nx {
            for nu in 0..nx {
                for a in 0..ny {
                    for b in 0..ny {
                        let w = self.ginv(mu, nu) * self.hinv(a, b);
                        if w == 0.0 {
                            continue;
                        }
                        second += w
                            * (self.jet.ddg(self.y[a], self.y[b], self.x[mu], self.x[nu])
                                + self.jet.ddg(self.x[mu], self.x[nu], self.y[a], self.y[b]));
                        let mut inner = 0.0;
                        for al in 0..nx {
                            for be in 0..nx {
                                inner += self.ginv(al, be) * self.dy_g(a, mu, al) * self.dy_g(b, nu, be);
                            }
                        }
                        // the printed alpha/beta on this term are read as mu/nu
                        for m in 0..ny {
                            for n in 0..ny {
                                inner += self.hinv(m, n) * self.dx_h(mu, a, m) * self.dx_h(nu, b, n);
                            }
                        }
                        quad += w * inner;
                    }
                }
            }
        }
        val - second + 0.75 * quad
    }
}

/// All-first-block Riemann components `R_{lambda mu sigma nu}` from the
/// block formula, as `[l][m][s][n]` over first-block positions.
pub fn riemann_block(curv: &Curvature, split: &BlockSplit, p: &Point) -> Result<Vec<f64>, CurvError> {
    let ctx = Ctx::new(curv, split, p)?;
    let nx = ctx.nx();
    let mut out = Vec::with_capacity(nx.pow(4));
    for l in 0..nx {
        for m in 0..nx {
            for s in 0..nx {
                for n in 0..nx {
                    out.push(ctx.riemann37(l, m, s, n));
                }
            }
        }
    }
    Ok(out)
}

/// Mixed components `R_{lambda mu, s n}` as `[l][m][s][n]`, `l, m` in the
/// first block and `s, n` in the second.
pub fn mixed_block(curv: &Curvature, split: &BlockSplit, p: &Point) -> Result<Vec<f64>, CurvError> {
    let ctx = Ctx::new(curv, split, p)?;
    let (nx, ny) = (ctx.nx(), ctx.ny());
    let mut out = Vec::with_capacity(nx * nx * ny * ny);
    for l in 0..nx {
        for m in 0..nx {
            for s in 0..ny {
                for n in 0..ny {
                    out.push(ctx.mixed38(l, m, s, n));
                }
            }
        }
    }
    Ok(out)
}

/// First-block Ricci components from the block formula.
pub fn ricci_block(curv: &Curvature, split: &BlockSplit, p: &Point) -> Result<Vec<Vec<f64>>, CurvError> {
    let ctx = Ctx::new(curv, split, p)?;
    let nx = ctx.nx();
    Ok((0..nx).map(|m| (0..nx).map(|n| ctx.ricci39(m, n)).collect()).collect())
}

/// Scalar curvature from the block formula.
pub fn scalar_block(curv: &Curvature, split: &BlockSplit, p: &Point) -> Result<f64, CurvError> {
    Ok(Ctx::new(curv, split, p)?.scalar40())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    /// first-block Riemann
    Riemann,
    /// mixed Riemann
    Mixed,
    /// first-block Ricci
    Ricci,
    Scalar,
}

impl Formula {
    pub const ALL: [Formula; 4] = [Formula::Riemann, Formula::Mixed, Formula::Ricci, Formula::Scalar];

    pub fn label(self) -> &'static str {
        match self {
            Formula::Riemann => "riemann_block",
            Formula::Mixed => "mixed_block",
            Formula::Ricci => "ricci_block",
            Formula::Scalar => "scalar_block",
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockRow {
    pub formula: Formula,
    pub point: Vec<f64>,
    /// Largest absolute difference with the direct computation at this point.
    pub residual: f64,
}

/// Per-point, per-formula differences between the block formulas and the
/// direct curvature.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BlockReport {
    pub rows: Vec<BlockRow>,
}

impl BlockReport {
    pub fn max(&self, formula: Formula) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.formula == formula)
            .map(|r| r.residual)
            .fold(0.0, f64::max)
    }

    /// CSV with header `formula,point,residual`; point coordinates are
    /// space-separated inside the field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("formula,point,residual\n");
        for r in &self.rows {
            let pt: Vec<String> = r.point.iter().map(|v| format!("{v:.12e}")).collect();
            out.push_str(&format!("{},{},{:.6e}\n", r.formula, pt.join(" "), r.residual));
        }
        out
    }
}

pub fn block_vs_direct_residual(
    curv: &Curvature,
    split: &BlockSplit,
    points: &[Point],
) -> Result<BlockReport, CurvError> {
    let mut report = BlockReport::default();
    for p in points {
        let ctx = Ctx::new(curv, split, p)?;
        let direct = curvature_from_jet(&ctx.jet, &p.coords)?;
        let (x, y) = (&ctx.x, &ctx.y);
        let (nx, ny) = (ctx.nx(), ctx.ny());
        let mut worst = [0.0f64; 4];
        for l in 0..nx {
            for m in 0..nx {
                for s in 0..nx {
                    for n in 0..nx {
                        let d = direct.riemann(x[l], x[m], x[s], x[n]);
                        worst[0] = worst[0].max((ctx.riemann37(l, m, s, n) - d).abs());
                    }
                }
                for s in 0..ny {
                    for n in 0..ny {
                        let d = direct.riemann(x[l], x[m], y[s], y[n]);
                        worst[1] = worst[1].max((ctx.mixed38(l, m, s, n) - d).abs());
                    }
                }
                worst[2] = worst[2].max((ctx.ricci39(l, m) - direct.ricci[x[l]][x[m]]).abs());
            }
        }
        worst[3] = (ctx.scalar40() - direct.scalar).abs();
        for (formula, residual) in Formula::ALL.into_iter().zip(worst) {
            report.rows.push(BlockRow {
                formula,
                point: p.coords.clone(),
                residual,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldcalc::Chart;
    use crate::geomcurv::{curvature_direct, halton_points};

    fn warped() -> (Curvature, BlockSplit) {
        let chart = Chart::new(&["x1", "x2", "y"]);
        let g = MetricField::parse_diagonal(&chart, &["exp(2*y)", "exp(2*y)", "1"]).unwrap();
        let split = BlockSplit::new(&g, vec![0, 1], vec![2]).unwrap();
        (curvature_direct(&g).unwrap(), split)
    }

    #[test]
    fn split_validation() {
        let chart = Chart::new(&["a", "b", "c"]);
        let e = |s: &str| chart.parse(s).unwrap();
        let g = MetricField::from_entries(chart.clone(), vec![(0, 0, e("1")), (1, 1, e("1")), (2, 2, e("1")), (0, 2, e("a"))])
            .unwrap();
        assert_eq!(BlockSplit::new(&g, vec![0, 1], vec![2]), Err(CurvError::OffBlock { row: 0, col: 2 }));
        assert!(BlockSplit::new(&g, vec![0, 2], vec![1]).is_ok());
        assert!(matches!(BlockSplit::new(&g, vec![0], vec![1]), Err(CurvError::Split(_))));
        assert!(matches!(BlockSplit::new(&g, vec![0, 0], vec![1, 2]), Err(CurvError::Split(_))));
        assert!(matches!(BlockSplit::by_names(&g, &["a", "q"], &["b"]), Err(CurvError::Split(_))));
    }

    #[test]
    fn warped_correction_term() {
        let (curv, split) = warped();
        for p in halton_points(&[-1.0, -1.0, -0.5], &[1.0, 1.0, 0.5], 5) {
            let y = p.coords[2];
            let block = riemann_block(&curv, &split, &p).unwrap();
            let direct = curv.at(&p).unwrap();
            let delta = |a: usize, b: usize| f64::from(u8::from(a == b));
            for l in 0..2 {
                for m in 0..2 {
                    for s in 0..2 {
                        for n in 0..2 {
                            let want = (4.0 * y).exp() * (delta(m, s) * delta(n, l) - delta(m, n) * delta(l, s));
                            let got = block[((l * 2 + m) * 2 + s) * 2 + n];
                            assert!((got - want).abs() < 1e-12);
                            assert!((got - direct.riemann(l, m, s, n)).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn product_metric_decouples() {
        let chart = Chart::new(&["t1", "p1", "t2", "p2"]);
        let g = MetricField::parse_diagonal(&chart, &["2.25", "2.25*sin(t1)^2", "0.64", "0.64*sin(t2)^2"]).unwrap();
        let split = BlockSplit::new(&g, vec![0, 1], vec![2, 3]).unwrap();
        let curv = curvature_direct(&g).unwrap();
        let pts = halton_points(&[0.3, -3.0, 0.3, -3.0], &[2.8, 3.0, 2.8, 3.0], 6);
        let report = block_vs_direct_residual(&curv, &split, &pts).unwrap();
        for f in Formula::ALL {
            assert!(report.max(f) <= 1e-9, "{f}: {}", report.max(f));
        }
        for p in &pts {
            let want = 2.0 / 2.25 + 2.0 / 0.64;
            assert!((scalar_block(&curv, &split, p).unwrap() - want).abs() < 1e-9);
            assert!(mixed_block(&curv, &split, p).unwrap().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn mixed_block_antisymmetric_in_second_pair() {
        let chart = Chart::new(&["x", "u", "v"]);
        let g = MetricField::parse_diagonal(&chart, &["1 + u^2*v", "2 + x^2", "1 + exp(x)"]).unwrap();
        let split = BlockSplit::new(&g, vec![0], vec![1, 2]).unwrap();
        let curv = curvature_direct(&g).unwrap();
        let m = mixed_block(&curv, &split, &Point::new(vec![0.3, 0.4, -0.2])).unwrap();
        // layout [l][m][s][n] with nx = 1, ny = 2
        assert_eq!(m[1], -m[2]);
        assert_eq!(m[0], 0.0);
    }

    #[test]
    fn report_csv_shape() {
        let (curv, split) = warped();
        let pts = halton_points(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], 2);
        let report = block_vs_direct_residual(&curv, &split, &pts).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "formula,point,residual");
        assert_eq!(lines.len(), 1 + 2 * 4);
        assert!(lines[1].starts_with("riemann_block,"));
        assert!(report.max(Formula::Riemann) < 1e-9);
    }
}
