//! Metric input files and the fixed test-metric suite.
//!
//! File format (one item per line, `#` starts a comment):
//!
//! ```text
//! dimension = 4
//! coords = t1, p1, t2, p2
//! param a = 1.5                 # named constant usable in formulas
//! split = t1, p1 | t2, p2       # optional block split
//! region = 0.3:2.8, -3:3, 0.3:2.8, -3:3   # optional sampling box
//! G(t1,t1) = a^2
//! G(p1,p1) = a^2*sin(t1)^2
//! ```
//!
//! Components not listed are zero; `G(a,b)` and `G(b,a)` name the same entry.

use std::collections::BTreeMap;

use super::{halton_points, BlockSplit, CurvError, MetricField};
use crate::fieldcalc::{parse_expression, Chart, Expression, Point};

/// A parsed metric file.
#[derive(Clone, Debug)]
pub struct MetricSpec {
    pub metric: MetricField,
    pub split: Option<BlockSplit>,
    /// Sampling box `(lo, hi)` per coordinate.
    pub region: Option<(Vec<f64>, Vec<f64>)>,
}

impl MetricSpec {
    /// `count` quasi-random points in the region (or the unit box around 0.5).
    pub fn sample_points(&self, count: usize) -> Vec<Point> {
        let n = self.metric.dim();
        match &self.region {
            Some((lo, hi)) => halton_points(lo, hi, count),
            None => halton_points(&vec![0.0; n], &vec![1.0; n], count),
        }
    }
}

fn file_err(line: usize, message: impl Into<String>) -> CurvError {
    CurvError::File {
        line,
        message: message.into(),
    }
}

fn names_list(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

pub fn parse_metric_file(text: &str) -> Result<MetricSpec, CurvError> {
    let mut dimension: Option<(usize, usize)> = None;
    let mut coords: Option<(Vec<String>, usize)> = None;
    let mut params: BTreeMap<String, f64> = BTreeMap::new();
    let mut split: Option<(Vec<String>, Vec<String>, usize)> = None;
    let mut region: Option<(String, usize)> = None;
    let mut comps: Vec<(String, String, String, usize)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| file_err(line, "expected 'key = value'"))?;
        let (key, value) = (key.trim(), value.trim());
        if let Some(inner) = key.strip_prefix("G(").and_then(|k| k.strip_suffix(')')) {
            let (a, b) = inner
                .split_once(',')
                .ok_or_else(|| file_err(line, "component must be written G(a,b)"))?;
            comps.push((a.trim().into(), b.trim().into(), value.into(), line));
        } else if let Some(name) = key.strip_prefix("param ") {
            let v: f64 = value
                .parse()
                .map_err(|_| file_err(line, format!("parameter value '{value}' is not a number")))?;
            params.insert(name.trim().into(), v);
        } else {
            match key {
                "dimension" => {
                    let d = value
                        .parse()
                        .map_err(|_| file_err(line, format!("dimension '{value}' is not an integer")))?;
                    dimension = Some((d, line));
                }
                "coords" => coords = Some((names_list(value), line)),
                "split" => {
                    let (a, b) = value
                        .split_once('|')
                        .ok_or_else(|| file_err(line, "split must be 'a, b | c'"))?;
                    split = Some((names_list(a), names_list(b), line));
                }
                "region" => region = Some((value.into(), line)),
                other => return Err(file_err(line, format!("unknown key '{other}'"))),
            }
        }
    }

    let (names, coords_line) = coords.ok_or_else(|| file_err(0, "missing 'coords'"))?;
    if let Some((d, line)) = dimension {
        if d != names.len() {
            return Err(file_err(line, format!("dimension {d} but {} coordinates", names.len())));
        }
    }
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(file_err(coords_line, format!("coordinate '{n}' repeated")));
        }
        if params.contains_key(n) {
            return Err(file_err(coords_line, format!("'{n}' is both a coordinate and a parameter")));
        }
    }
    let chart = Chart::new(&names);
    let mut vars: Vec<&str> = names.iter().map(String::as_str).collect();
    vars.extend(params.keys().map(String::as_str));

    let mut entries = Vec::new();
    for (a, b, formula, line) in comps {
        let idx = |s: &str| {
            chart
                .index_of(s)
                .ok_or_else(|| file_err(line, format!("unknown coordinate '{s}'")))
        };
        let (ia, ib) = (idx(&a)?, idx(&b)?);
        let mut e = parse_expression(&formula, &vars).map_err(|err| file_err(line, err.to_string()))?;
        for (k, v) in &params {
            e = e.substitute(k, &Expression::constant(*v));
        }
        entries.push((ia, ib, e, line));
    }
    let mut seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (a, b, _, line) in &entries {
        if let Some(first) = seen.insert(((*a).min(*b), (*a).max(*b)), *line) {
            return Err(file_err(*line, format!("component already given on line {first}")));
        }
    }
    let metric = MetricField::from_entries(chart, entries.into_iter().map(|(a, b, e, _)| (a, b, e)).collect())?;

    let split = match split {
        Some((a, b, line)) => Some(BlockSplit::by_names(&metric, &a, &b).map_err(|e| file_err(line, e.to_string()))?),
        None => None,
    };
    let region = match region {
        Some((text, line)) => {
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            for part in text.split(',') {
                let (l, h) = part
                    .split_once(':')
                    .ok_or_else(|| file_err(line, "region entries are 'lo:hi'"))?;
                let parse = |s: &str| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| file_err(line, format!("'{}' is not a number", s.trim())))
                };
                lo.push(parse(l)?);
                hi.push(parse(h)?);
            }
            if lo.len() != names.len() {
                return Err(file_err(line, format!("region has {} ranges for {} coordinates", lo.len(), names.len())));
            }
            Some((lo, hi))
        }
        None => None,
    };
    Ok(MetricSpec { metric, split, region })
}

/// One metric of the fixed suite.
#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub spec: MetricSpec,
}

/// Version of [`metric_suite`]; bump when an entry changes.
pub const SUITE_VERSION: u32 = 1;

const SUITE: [(&str, &str); 7] = [
    (
        "flat3",
        "coords = x, y, z\nsplit = x, y | z\nregion = -1:1, -1:1, -1:1\n\
         G(x,x) = 1\nG(y,y) = 1\nG(z,z) = 1\n",
    ),
    (
        "sphere",
        "coords = th, ph\nsplit = th | ph\nregion = 0.3:2.8, -3:3\n\
         G(th,th) = 1\nG(ph,ph) = sin(th)^2\n",
    ),
    (
        "sphere_product",
        "coords = t1, p1, t2, p2\nparam a = 1.5\nparam b = 0.8\nsplit = t1, p1 | t2, p2\n\
         region = 0.3:2.8, -3:3, 0.3:2.8, -3:3\n\
         G(t1,t1) = a^2\nG(p1,p1) = a^2*sin(t1)^2\nG(t2,t2) = b^2\nG(p2,p2) = b^2*sin(t2)^2\n",
    ),
    (
        "warped",
        "coords = x1, x2, y\nsplit = x1, x2 | y\nregion = -1:1, -1:1, -0.5:0.5\n\
         G(x1,x1) = exp(2*y)\nG(x2,x2) = exp(2*y)\nG(y,y) = 1\n",
    ),
    (
        "warped_xh",
        "coords = x1, x2, y\nsplit = x1, x2 | y\nregion = -1:1, -1:1, -0.5:0.5\n\
         G(x1,x1) = exp(2*y)\nG(x2,x2) = exp(2*y)*(1 + 0.5*x1^2)\nG(y,y) = 1 + x1^2 + 0.3*x2\n",
    ),
    (
        "offdiag",
        "coords = x1, x2, y\nsplit = x1, x2 | y\nregion = -0.5:0.5, -0.5:0.5, -0.5:0.5\n\
         G(x1,x1) = 1 + y^2\nG(x1,x2) = 0.3*x1*y\nG(x2,x2) = 2 + x2^2*exp(y)\nG(y,y) = exp(0.5*x1)\n",
    ),
    (
        "coupled4",
        "coords = x1, x2, y1, y2\nsplit = x1, x2 | y1, y2\nregion = -0.5:0.5, -0.5:0.5, -0.5:0.5, -0.5:0.5\n\
         G(x1,x1) = 1 + 0.3*y1^2\nG(x1,x2) = 0.2*y1*y2\nG(x2,x2) = 1 + 0.2*y2^2 + 0.1*y1\n\
         G(y1,y1) = 1 + 0.2*x1^2\nG(y1,y2) = 0.1*x1*x2\nG(y2,y2) = 1 + 0.3*x2^2 + 0.1*x1\n",
    ),
];

/// The fixed test metrics, each with its block split and sampling region.
pub fn metric_suite() -> Vec<SuiteEntry> {
    SUITE
        .iter()
        .map(|(name, text)| SuiteEntry {
            name,
            spec: parse_metric_file(text).expect("suite metrics are well-formed"),
        })
        .collect()
}

/// The source text of a suite metric, in the metric file format.
pub fn suite_source(name: &str) -> Option<&'static str> {
    SUITE.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geomcurv::{block_vs_direct_residual, curvature_direct, Formula};

    #[test]
    fn parses_full_file() {
        let text = "# product of spheres\ndimension = 4\ncoords = t1, p1, t2, p2\nparam a = 2\n\
                    split = t1, p1 | t2, p2\nG(t1,t1) = a^2   # radius a\nG(p1,p1) = a^2*sin(t1)^2\n\
                    G(t2,t2) = 1\nG(p2,p2) = sin(t2)^2\n";
        let spec = parse_metric_file(text).unwrap();
        assert_eq!(spec.metric.dim(), 4);
        assert_eq!(spec.metric.component(0, 0).as_const(), Some(4.0));
        assert!(spec.metric.component(0, 2).is_zero());
        assert_eq!(spec.split.as_ref().unwrap().second(), &[2, 3]);
        assert!(spec.region.is_none());
        assert_eq!(spec.sample_points(3).len(), 3);
    }

    #[test]
    fn file_errors_carry_line_numbers() {
        let err = |t: &str| parse_metric_file(t).unwrap_err();
        assert!(matches!(err("coords = x\nG(x,x) = 1 +"), CurvError::File { line: 2, .. }));
        assert!(matches!(err("coords = x\nG(x,q) = 1"), CurvError::File { line: 2, .. }));
        assert!(matches!(err("dimension = 2\ncoords = x"), CurvError::File { line: 1, .. }));
        assert!(matches!(err("coords = x\nbogus = 3"), CurvError::File { line: 2, .. }));
        assert!(matches!(err("coords = x, y\nG(x,y) = 1\nG(y,x) = 2"), CurvError::File { line: 3, .. }));
        assert!(matches!(err("coords = x, y\nG(x,y) = 1\nsplit = x | y"), CurvError::File { line: 3, .. }));
        assert!(matches!(err("G(x,x) = 1"), CurvError::File { line: 0, .. }));
        assert!(matches!(err("coords = x\nregion = 0:1, 0:1"), CurvError::File { line: 2, .. }));
    }

    #[test]
    fn suite_is_complete_and_gauss_formula_holds() {
        let suite = metric_suite();
        assert_eq!(suite.len(), 7);
        for entry in &suite {
            let curv = curvature_direct(&entry.spec.metric).unwrap();
            let split = entry.spec.split.as_ref().unwrap();
            let report = block_vs_direct_residual(&curv, split, &entry.spec.sample_points(20)).unwrap();
            assert!(report.max(Formula::Riemann) <= 1e-7, "{}: {}", entry.name, report.max(Formula::Riemann));
            for p in entry.spec.sample_points(5) {
                assert!(curv.at(&p).unwrap().symmetry_residual() <= 1e-9, "{}", entry.name);
            }
        }
        assert!(suite_source("sphere").unwrap().contains("sin(th)^2"));
    }
}
