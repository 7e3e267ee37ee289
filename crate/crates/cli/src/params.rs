//! Parameter tables: every subcommand option is both a `--flag` and a
//! config-file key, with one default and one validation rule.

/// How a raw string value is checked.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kind {
    Float,
    Positive,
    /// Integer `>= min`.
    Int(i64),
    /// Comma-separated floats, optionally of a fixed length.
    Floats(Option<usize>),
    /// Formula over fixed variables.
    Formula(&'static [&'static str]),
    /// `;`-separated formulas over fixed variables.
    FormulaList(&'static [&'static str]),
    /// `;`-separated formulas over the coordinates named by another parameter.
    Formulas(&'static str),
    /// Formula over the coordinates named by another parameter.
    FormulaIn(&'static str),
    /// Comma-separated identifiers.
    Names,
    Text,
}

#[derive(Clone, Copy, Debug)]
pub struct Param {
    pub name: &'static str,
    pub kind: Kind,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn p(name: &'static str, kind: Kind, default: &'static str, help: &'static str) -> Param {
    Param {
        name,
        kind,
        default: Some(default),
        help,
    }
}

/// Options shared by every subcommand.
pub const COMMON: &[Param] = &[
    p("seed", Kind::Int(0), "42", "seed for sampled test points"),
    Param {
        name: "output",
        kind: Kind::Text,
        default: None,
        help: "CSV report path (default: CSV on stdout, summary on stderr)",
    },
];

const TOLERANCES: [Param; 3] = [
    p("tol", Kind::Positive, "1e-10", "absolute integrator tolerance"),
    p("rtol", Kind::Positive, "1e-9", "relative integrator tolerance"),
    p("max-steps", Kind::Int(1), "1000000", "integrator step limit"),
];

pub const FLOW: &[Param] = &[
    p("coords", Kind::Names, "x, y", "coordinate names"),
    p("b", Kind::Formulas("coords"), "y; -x + 0.5*y^2", "vector field components, ';'-separated"),
    p("c", Kind::FormulaIn("coords"), "0.3*x*y", "scalar part C"),
    p("psi", Kind::FormulaIn("coords"), "exp(x)*(1 + y)", "test function"),
    p("point", Kind::Floats(None), "0.2, -0.4", "evaluation point"),
    p("rho", Kind::Float, "0.5", "flow parameter"),
    p("order", Kind::Int(0), "6", "series truncation order"),
    TOLERANCES[0],
    TOLERANCES[1],
    TOLERANCES[2],
    p("bound", Kind::Positive, "1e-8", "pass bound for the pushforward residual"),
];

pub const VIRASORO: &[Param] = &[
    p("max-index", Kind::Int(0), "3", "largest |m|, |n| of the monomial generators"),
    p("m", Kind::Float, "1.3", "mass"),
    p("chi", Kind::Float, "0.7", "scaling dimension"),
    p("n", Kind::Float, "1", "anisotropy N"),
    p("tests", Kind::FormulaList(&["t", "r"]), "t^2*r; exp(t)*r^2; sin(t)*exp(-r)", "test functions of (t, r)"),
    p("points", Kind::Int(1), "10", "number of sampled points"),
    p("bound", Kind::Positive, "1e-8", "pass bound for bracket residuals"),
];

pub const PRIMARY: &[Param] = &[
    p("eps", Kind::Formula(&["t"]), "1 + 0.1*t + 0.05*t^2", "Laurent polynomial eps(t)"),
    p("m", Kind::Float, "1.3", "mass"),
    p("chi", Kind::Float, "0.7", "scaling dimension"),
    p("n", Kind::Float, "1", "anisotropy N"),
    p("point", Kind::Floats(Some(2)), "0.5, 1.2", "(t, r)"),
    p("rho", Kind::Float, "1", "transformation parameter"),
    p("psi", Kind::Formula(&["t", "r"]), "exp(-r^2/(1 + t^2))", "test function for the flow comparison"),
    p("tol", Kind::Positive, "1e-13", "absolute integrator tolerance"),
    p("rtol", Kind::Positive, "1e-13", "relative integrator tolerance"),
    p("max-steps", Kind::Int(1), "4194304", "integrator step limit"),
    p("bound", Kind::Positive, "1e-7", "pass bound for the flow comparison"),
];

pub const NRLIMIT: &[Param] = &[
    p("m", Kind::Positive, "0.5", "mass"),
    p("c", Kind::Positive, "3", "speed of light"),
    p("h", Kind::Positive, "1", "Planck constant"),
    p("psi", Kind::Formula(&["t", "x"]), "exp(-x^2)*sin(t)", "wavefunction psi(t, x)"),
    p("point", Kind::Floats(Some(3)), "0.3, 0.1, 0.4", "(t, x0, x) for the identities"),
    p("c-values", Kind::Floats(None), "10, 100, 1000", "speeds for the defect scaling fit"),
    p("heat-point", Kind::Floats(Some(3)), "0.8, 0, 0.3", "(t, x0, x) for the heat-kernel fit"),
    p("f", Kind::Formula(&["t"]), "1 + t^2", "Barut time field f(t)"),
    p("barut-psi", Kind::Formula(&["t"]), "cos(t) + t^2", "wavefunction for the Barut check"),
    p("barut-t", Kind::Float, "0.5", "start time for the Barut check"),
    p("rho", Kind::Float, "0.5", "Barut flow parameter"),
    p("bound", Kind::Positive, "1e-10", "pass bound for the operator identities"),
    p("barut-bound", Kind::Positive, "1e-8", "pass bound for the relative Barut residual"),
    p("slope-tol", Kind::Positive, "0.05", "allowed deviation of the slope from -2"),
];

pub const CURVATURE: &[Param] = &[
    Param {
        name: "metric",
        kind: Kind::Text,
        default: None,
        help: "metric file (default: the built-in test-metric suite)",
    },
    p("points", Kind::Int(1), "20", "quasi-random points per metric"),
    p("bound", Kind::Positive, "1e-7", "pass bound for the Riemann block formula"),
    p("sym-bound", Kind::Positive, "1e-9", "pass bound for Riemann symmetries"),
];

pub const FRAME: &[Param] = &[
    p("f", Kind::Formula(&["t"]), "0.6*t", "worldline x = f(t)"),
    p("c", Kind::Positive, "1", "speed of light"),
    p("t-range", Kind::Floats(Some(2)), "0, 1", "time range"),
    p("x-range", Kind::Floats(Some(2)), "-1, 1", "space range"),
    p("nt", Kind::Int(3), "200", "time nodes"),
    p("nx", Kind::Int(2), "200", "space nodes"),
    p("tol", Kind::Positive, "1e-8", "fixed-point tolerance"),
    p("max-iter", Kind::Int(1), "100", "fixed-point iteration limit"),
    p("t-ref", Kind::Float, "0", "time at which proper time is zero"),
];

pub const CORRELATOR: &[Param] = &[
    p("t-prime", Kind::Positive, "2.718281828459045", "half-space time t'"),
    p("r-prime", Kind::Float, "0", "half-space radius r'"),
    p("m", Kind::Float, "0", "mass"),
    p("chi", Kind::Float, "0", "scaling dimension"),
    p("T", Kind::Positive, "1", "scale T"),
    p("T-prime", Kind::Positive, "1", "scale T'"),
    p("d", Kind::Int(1), "4", "dimension d"),
    p("samples", Kind::Int(0), "100", "sampled points for the composition check"),
    p("bound", Kind::Positive, "1e-10", "pass bound for the composition check"),
];

pub const VERIFY_ALL: &[Param] = &[p("criteria", Kind::Text, "all", "criteria to run, e.g. '1,3,8' or 'all'")];

#[derive(Clone, Copy, Debug)]
pub struct Sub {
    pub name: &'static str,
    pub about: &'static str,
    pub params: &'static [Param],
}

pub const SUBCOMMANDS: &[Sub] = &[
    Sub {
        name: "flow",
        about: "flow of B, operator exponential exp(rho(B + C)) and its series",
        params: FLOW,
    },
    Sub {
        name: "virasoro",
        about: "bracket residuals of the monomial generators",
        params: VIRASORO,
    },
    Sub {
        name: "primary",
        about: "finite primary transformation and its checks",
        params: PRIMARY,
    },
    Sub {
        name: "nrlimit",
        about: "contraction, Klein-Gordon/diffusion identities and the Barut case",
        params: NRLIMIT,
    },
    Sub {
        name: "curvature",
        about: "direct curvature and block-formula residuals",
        params: CURVATURE,
    },
    Sub {
        name: "frame",
        about: "physical coordinates of an accelerated frame",
        params: FRAME,
    },
    Sub {
        name: "correlator",
        about: "half-space correlator and its composition check",
        params: CORRELATOR,
    },
    Sub {
        name: "verify-all",
        about: "run every acceptance criterion",
        params: VERIFY_ALL,
    },
];

pub fn find(name: &str) -> Option<&'static Sub> {
    SUBCOMMANDS.iter().find(|s| s.name == name)
}

impl Sub {
    /// Own parameters followed by the common ones.
    pub fn all_params(&self) -> impl Iterator<Item = &'static Param> {
        self.params.iter().chain(COMMON)
    }

    pub fn param(&self, name: &str) -> Option<&'static Param> {
        self.all_params().find(|p| p.name == name)
    }
}

/// Whether any subcommand (or the common set) knows `name`.
pub fn known_anywhere(name: &str) -> bool {
    COMMON.iter().any(|p| p.name == name) || SUBCOMMANDS.iter().any(|s| s.params.iter().any(|p| p.name == name))
}
