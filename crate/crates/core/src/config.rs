//! Run configuration (TOML or JSON) and the shipped presets.

use std::f64::consts::PI;
use std::path::Path;

use evalexpr::{ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisOptions;
use crate::asymptotics::{fucik_problem, locate_fucik_pair, refine_fucik_discrete};
use crate::contraction::SolveOptions;
use crate::error::{Error, Result};
use crate::nonlinearity::{Nonlinearity, NonlinearitySpec};
use crate::oracle::{make_matrix_model, MatrixModelSpec, NormalFormToy, ToyKind};
use crate::problem::{ProblemOptions, ProblemSpec};
use crate::spectral::{BoxDomain, Field, SpectralBasis};

const PRESETS: [(&str, &str); 5] = [
    ("ap2d", include_str!("../presets/ap2d.toml")),
    ("ap-convex-1d", include_str!("../presets/ap-convex-1d.toml")),
    ("fucik-1d", include_str!("../presets/fucik-1d.toml")),
    ("cusp-toy", include_str!("../presets/cusp-toy.toml")),
    ("linear1d", include_str!("../presets/linear1d.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset_source(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| Error::Config(format!("unknown preset `{name}` (available: {})", preset_names().join(", "))))
}

/// Right-hand side: an expression in `x`, `y`, `z` (with `pi`) or explicit
/// coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhsConfig {
    #[serde(default)]
    pub expr: Option<String>,
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// `−Δu − f(u) = g` with Dirichlet conditions on a box.
    Pde {
        lengths: Vec<f64>,
        modes: Vec<usize>,
        #[serde(default = "default_grid_factor")]
        grid_factor: usize,
        nonlinearity: NonlinearitySpec,
        #[serde(default)]
        rhs: Option<RhsConfig>,
        /// Index of the interacting eigenvalue in ascending order.
        #[serde(default)]
        p: Option<usize>,
        #[serde(default)]
        gamma: Option<f64>,
        #[serde(default)]
        lipschitz: Option<f64>,
    },
    /// Finite-dimensional model with a sine-mixing nonlinearity.
    Matrix {
        spectrum: Vec<f64>,
        p: usize,
        #[serde(default)]
        mixing: Option<Vec<Vec<f64>>>,
        amplitudes: Vec<f64>,
        #[serde(default)]
        phases: Option<Vec<f64>>,
        #[serde(default)]
        rhs: Option<Vec<f64>>,
    },
    /// `b u⁺ − a u⁻` on `[0, length]` with `b` on the Fučík branch through
    /// the given (1-based) mode.
    Fucik {
        a: f64,
        mode: usize,
        modes: usize,
        #[serde(default = "default_length")]
        length: f64,
    },
    /// Adapted-coordinate normal form.
    Toy { kind: ToyKind, dim: usize },
}

fn default_grid_factor() -> usize {
    4
}

fn default_length() -> f64 {
    PI
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub steps: usize,
    /// Horizontal point of the fiber; `P g` when absent.
    pub z0: Option<Vec<f64>>,
}

impl Default for FiberConfig {
    fn default() -> Self {
        Self {
            t_min: -40.0,
            t_max: 40.0,
            steps: 201,
            z0: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreimagesConfig {
    /// Target height `s`; `⟨g, φ_p⟩` when absent.
    pub height: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Sweep range; derived from the traced heights when absent.
    pub s_min: Option<f64>,
    pub s_max: Option<f64>,
    pub count: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            s_min: None,
            s_max: None,
            count: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iters: 10_000,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            tol_residual: self.tol,
            max_iters: self.max_iters,
            warm_start: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub seed: u64,
    pub starts: usize,
    pub tol: f64,
    /// Set-equality tolerance in `Y`.
    pub match_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            starts: 200,
            tol: 1e-10,
            match_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymptoticsConfig {
    pub steps: usize,
    /// `|t|` at which `‖w(z, t)‖/|t|` is probed.
    pub large_t: f64,
}

impl Default for AsymptoticsConfig {
    fn default() -> Self {
        Self {
            steps: 161,
            large_t: 1e3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    /// Critical neighborhood radius; a tenth of the window when absent.
    pub radius: Option<f64>,
    pub gap_tol: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            radius: None,
            gap_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            svg: false,
        }
    }
}

/// Whole run configuration. With `preset`, each section absent from the file
/// is taken from the preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub problem: Option<ProblemConfig>,
    #[serde(default)]
    pub fiber: Option<FiberConfig>,
    #[serde(default)]
    pub preimages: Option<PreimagesConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub analysis: Option<AnalysisOptions>,
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
    #[serde(default)]
    pub asymptotics: Option<AsymptoticsConfig>,
    #[serde(default)]
    pub link: Option<LinkConfig>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

/// Fully resolved configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub preset: Option<String>,
    pub problem: ProblemConfig,
    pub fiber: FiberConfig,
    pub preimages: PreimagesConfig,
    pub sweep: SweepConfig,
    pub solver: SolverConfig,
    pub analysis: AnalysisOptions,
    pub oracle: OracleConfig,
    pub asymptotics: AsymptoticsConfig,
    pub link: LinkConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("{e}")))
    }

    /// Reads a `.json` or `.toml` file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        };
        parsed.map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn preset(name: &str) -> Result<Self> {
        let mut cfg = Self::from_toml(preset_source(name)?)?;
        cfg.preset = Some(name.to_string());
        Ok(cfg)
    }

    /// Fills absent sections from the preset, then from the defaults.
    pub fn resolve(self) -> Result<Resolved> {
        let base = match &self.preset {
            Some(name) => Self::from_toml(preset_source(name)?)?,
            None => Self::default(),
        };
        let problem = self
            .problem
            .or(base.problem)
            .ok_or_else(|| Error::Config("no [problem] section and no preset".into()))?;
        let resolved = Resolved {
            preset: self.preset,
            problem,
            fiber: self.fiber.or(base.fiber).unwrap_or_default(),
            preimages: self.preimages.or(base.preimages).unwrap_or_default(),
            sweep: self.sweep.or(base.sweep).unwrap_or_default(),
            solver: self.solver.or(base.solver).unwrap_or_default(),
            analysis: self.analysis.or(base.analysis).unwrap_or_default(),
            oracle: self.oracle.or(base.oracle).unwrap_or_default(),
            asymptotics: self.asymptotics.or(base.asymptotics).unwrap_or_default(),
            link: self.link.or(base.link).unwrap_or_default(),
            output: self.output.or(base.output).unwrap_or_default(),
        };
        resolved.validate()?;
        Ok(resolved)
    }
}

impl Resolved {
    /// Semantic checks that the schema cannot express.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let f = &self.fiber;
        if !(f.t_min.is_finite() && f.t_max.is_finite() && f.t_min < f.t_max) {
            return bad(format!("fiber window [{}, {}] must be finite and increasing", f.t_min, f.t_max));
        }
        if f.steps < 3 {
            return bad("fiber.steps must be at least 3".into());
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iters == 0 {
            return bad("solver.tol must be positive and solver.max_iters nonzero".into());
        }
        if self.oracle.starts == 0 {
            return bad("oracle.starts must be at least 1".into());
        }
        if self.sweep.count == 0 {
            return bad("sweep.count must be at least 1".into());
        }
        if let (Some(a), Some(b)) = (self.sweep.s_min, self.sweep.s_max) {
            if !(a <= b) {
                return bad(format!("sweep range [{a}, {b}] is empty"));
            }
        }
        match &self.problem {
            ProblemConfig::Pde { lengths, modes, rhs, .. } => {
                if lengths.len() != modes.len() {
                    return bad("problem.lengths and problem.modes differ in length".into());
                }
                if let Some(r) = rhs {
                    if r.expr.is_some() == r.coefficients.is_some() {
                        return bad("problem.rhs needs exactly one of `expr` or `coefficients`".into());
                    }
                }
            }
            ProblemConfig::Toy { dim, .. } if *dim == 0 => return bad("problem.dim must be positive".into()),
            ProblemConfig::Fucik { mode, modes, .. } if *mode < 2 || *mode > *modes => {
                return bad("problem.mode must lie in 2..=modes".into());
            }
            _ => {}
        }
        Ok(())
    }

    pub fn solve_options(&self) -> SolveOptions {
        self.solver.options()
    }
}

/// Compiled expression in `x`, `y`, `z` with the constant `pi`.
pub struct Expression {
    source: String,
    tree: Node<DefaultNumericTypes>,
}

impl Expression {
    pub fn parse(source: &str) -> Result<Self> {
        let tree = evalexpr::build_operator_tree::<DefaultNumericTypes>(source)
            .map_err(|e| Error::Config(format!("expression `{source}`: {e}")))?;
        Ok(Self {
            source: source.to_string(),
            tree,
        })
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        let names = ["x", "y", "z"];
        let mut set = |name: &str, v: f64| {
            ctx.set_value(name.into(), Value::from_float(v))
                .map_err(|e| Error::Config(format!("expression `{}`: {e}", self.source)))
        };
        set("pi", PI)?;
        for (name, v) in names.iter().zip(point) {
            set(name, *v)?;
        }
        self.tree
            .eval_number_with_context(&ctx)
            .map_err(|e| Error::Config(format!("expression `{}`: {e}", self.source)))
    }
}

/// What a problem section builds.
pub enum Instance {
    Problem(ProblemSpec),
    Toy(NormalFormToy),
}

impl Instance {
    pub fn problem(&self) -> Result<&ProblemSpec> {
        match self {
            Self::Problem(ps) => Ok(ps),
            Self::Toy(_) => Err(Error::Unsupported("command needs an operator, not a normal-form toy".into())),
        }
    }
}

impl ProblemConfig {
    pub fn build(&self, solve: &SolveOptions) -> Result<Instance> {
        match self {
            Self::Pde {
                lengths,
                modes,
                grid_factor,
                nonlinearity,
                rhs,
                p,
                gamma,
                lipschitz,
            } => {
                let basis = SpectralBasis::new(BoxDomain::new(lengths)?, modes, *grid_factor)?;
                let g = match rhs {
                    Some(RhsConfig { expr: Some(e), .. }) => {
                        let expr = Expression::parse(e)?;
                        // surface evaluation errors before projecting
                        expr.eval(&vec![0.5; lengths.len()])?;
                        basis.project_function(|x| expr.eval(x).unwrap_or(f64::NAN))?
                    }
                    Some(RhsConfig {
                        coefficients: Some(c), ..
                    }) => Field::from_slice(c),
                    _ => Field::zeros(basis.len()),
                };
                let f = Nonlinearity::from_spec(nonlinearity)?;
                let opts = ProblemOptions {
                    p: *p,
                    gamma: *gamma,
                    lipschitz: *lipschitz,
                };
                Ok(Instance::Problem(ProblemSpec::from_basis(basis, f, &opts)?.with_rhs(g)?))
            }
            Self::Matrix {
                spectrum,
                p,
                mixing,
                amplitudes,
                phases,
                rhs,
            } => {
                let ps = make_matrix_model(&MatrixModelSpec {
                    spectrum: spectrum.clone(),
                    p: *p,
                    mixing: mixing.clone(),
                    amplitudes: amplitudes.clone(),
                    phases: phases.clone(),
                })?;
                let g = rhs.as_ref().map(|c| Field::from_slice(c)).unwrap_or_else(|| Field::zeros(spectrum.len()));
                Ok(Instance::Problem(ps.with_rhs(g)?))
            }
            Self::Fucik { a, mode, modes, length } => {
                if (*length - PI).abs() > 1e-12 {
                    return Err(Error::Unsupported("Fucik problems are built on [0, pi]".into()));
                }
                let b0 = locate_fucik_pair(*a, *mode, *length)?;
                let b = refine_fucik_discrete(*a, b0, *mode, *modes, solve)?;
                let ps = fucik_problem(*a, b, *mode, *modes)?;
                let g = Field::zeros(*modes);
                Ok(Instance::Problem(ps.with_rhs(g)?))
            }
            Self::Toy { kind, dim } => Ok(Instance::Toy(NormalFormToy::new(*kind, *dim)?)),
        }
    }
}
