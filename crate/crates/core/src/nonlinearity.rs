//! Scalar nonlinearities `f` with bounded derivative range `[a, b]`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Field, SpectralBasis};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// JSON/TOML description of a nonlinearity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    /// `f'(x) = (spread/π)(atan(x/scale) − bump·x·exp(−(x/scale)²)) + center`.
    ArctanGauss {
        center: f64,
        spread: f64,
        #[serde(default = "default_scale")]
        scale: f64,
        #[serde(default = "default_bump")]
        bump: f64,
        #[serde(default)]
        value_at_0: f64,
    },
    /// `f'(x) = a + (b − a)·σ(sharpness·x)` with the logistic σ.
    SmoothConvex {
        a: f64,
        b: f64,
        #[serde(default = "default_sharpness")]
        sharpness: f64,
        #[serde(default)]
        value_at_0: f64,
    },
    /// `f(u) = b·max(u, 0) + a·min(u, 0)`.
    PiecewiseLinear { a: f64, b: f64 },
    /// `f(u) = slope·u + offset`.
    Affine {
        slope: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Programmatic nonlinearity; cannot be built from a config file.
    Custom { name: String },
}

fn default_scale() -> f64 {
    10.0
}
fn default_bump() -> f64 {
    0.4
}
fn default_sharpness() -> f64 {
    1.0
}

/// User-supplied nonlinearity.
#[derive(Clone)]
pub struct CustomMap {
    pub name: String,
    pub f: ScalarFn,
    pub f_prime: ScalarFn,
    /// `inf f'` and `sup f'`.
    pub slopes: (f64, f64),
    /// `lim f'` at `−∞` and `+∞`, when they exist.
    pub asymptotic: Option<(f64, f64)>,
}

/// Spatial multiplier for non-autonomous problems: `f(x, u) = m(x) f(u)`.
#[derive(Clone)]
pub struct Modulation {
    map: PointFn,
    range: (f64, f64),
}

impl Modulation {
    /// `range` must enclose every value of `map` on the domain.
    pub fn new(map: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, range: (f64, f64)) -> Self {
        Self {
            map: Arc::new(map),
            range,
        }
    }

    pub fn at(&self, x: &[f64]) -> f64 {
        (self.map)(x)
    }
}

#[derive(Clone)]
enum Form {
    ArctanGauss {
        center: f64,
        spread: f64,
        scale: f64,
        bump: f64,
    },
    SmoothConvex {
        a: f64,
        b: f64,
        sharpness: f64,
    },
    PiecewiseLinear {
        a: f64,
        b: f64,
    },
    Affine {
        slope: f64,
    },
    Custom(CustomMap),
}

/// A scalar nonlinearity together with its slope data.
#[derive(Clone)]
pub struct Nonlinearity {
    form: Form,
    value_at_0: f64,
    slope_inf: f64,
    slope_sup: f64,
    asymptotic: Option<(f64, f64)>,
    modulation: Option<Modulation>,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("spec", &self.describe())
            .field("slope_inf", &self.slope_inf)
            .field("slope_sup", &self.slope_sup)
            .field("asymptotic", &self.asymptotic)
            .field("modulated", &self.modulation.is_some())
            .finish()
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Nonlinearity {
    pub fn from_spec(spec: &NonlinearitySpec) -> Result<Self> {
        match *spec {
            NonlinearitySpec::ArctanGauss {
                center,
                spread,
                scale,
                bump,
                value_at_0,
            } => Self::arctan_gauss(center, spread, scale, bump, value_at_0),
            NonlinearitySpec::SmoothConvex {
                a,
                b,
                sharpness,
                value_at_0,
            } => Self::smooth_convex(a, b, sharpness, value_at_0),
            NonlinearitySpec::PiecewiseLinear { a, b } => Self::piecewise_linear(a, b),
            NonlinearitySpec::Affine { slope, offset } => Ok(Self::affine(slope, offset)),
            NonlinearitySpec::Custom { ref name } => Err(Error::InvalidNonlinearity(format!(
                "custom nonlinearity '{name}' must be constructed programmatically"
            ))),
        }
    }

    /// Arctan-minus-Gaussian-bump family with asymptotic slopes
    /// `center ∓ spread/2`.
    pub fn arctan_gauss(
        center: f64,
        spread: f64,
        scale: f64,
        bump: f64,
        value_at_0: f64,
    ) -> Result<Self> {
        if !(spread > 0.0 && scale > 0.0 && bump >= 0.0 && center.is_finite()) {
            return Err(Error::InvalidNonlinearity(
                "arctan-gauss needs spread > 0, scale > 0, bump >= 0".into(),
            ));
        }
        let limits = (center - spread / 2.0, center + spread / 2.0);
        let mut nl = Self {
            form: Form::ArctanGauss {
                center,
                spread,
                scale,
                bump,
            },
            value_at_0,
            slope_inf: limits.0,
            slope_sup: limits.1,
            asymptotic: Some(limits),
            modulation: None,
        };
        // The bump may push f' past its limits; widen the bounds if so.
        let (lo, hi) = nl.sampled_slope_range(-50.0 * scale, 50.0 * scale, 20_001);
        nl.slope_inf = nl.slope_inf.min(lo);
        nl.slope_sup = nl.slope_sup.max(hi);
        Ok(nl)
    }

    /// The example family with `f'` interacting only with `lambda1`, limits
    /// `(lambda1 + lambda2)/2 ± …` centred at `lambda1`.
    pub fn arctan_gauss_between(lambda1: f64, lambda2: f64, value_at_0: f64) -> Result<Self> {
        Self::arctan_gauss(lambda1, lambda2 - lambda1, 10.0, 0.4, value_at_0)
    }

    /// Smooth strictly convex `f` with `f'(ℝ) = (a, b)`.
    pub fn smooth_convex(a: f64, b: f64, sharpness: f64, value_at_0: f64) -> Result<Self> {
        if !(a < b && sharpness > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidNonlinearity(
                "smooth-convex needs finite a < b and sharpness > 0".into(),
            ));
        }
        Ok(Self {
            form: Form::SmoothConvex { a, b, sharpness },
            value_at_0,
            slope_inf: a,
            slope_sup: b,
            asymptotic: Some((a, b)),
            modulation: None,
        })
    }

    /// `f(u) = b u⁺ − a u⁻`; the derivative at 0 is taken as `(a+b)/2`.
    pub fn piecewise_linear(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidNonlinearity("slopes must be finite".into()));
        }
        Ok(Self {
            form: Form::PiecewiseLinear { a, b },
            value_at_0: 0.0,
            slope_inf: a.min(b),
            slope_sup: a.max(b),
            asymptotic: Some((a, b)),
            modulation: None,
        })
    }

    pub fn affine(slope: f64, offset: f64) -> Self {
        Self {
            form: Form::Affine { slope },
            value_at_0: offset,
            slope_inf: slope,
            slope_sup: slope,
            asymptotic: Some((slope, slope)),
            modulation: None,
        }
    }

    pub fn custom(map: CustomMap) -> Result<Self> {
        let (a, b) = map.slopes;
        if !(a <= b && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidNonlinearity(format!(
                "custom slopes must satisfy a <= b, got ({a}, {b})"
            )));
        }
        let value_at_0 = (map.f)(0.0);
        Ok(Self {
            asymptotic: map.asymptotic,
            form: Form::Custom(map),
            value_at_0,
            slope_inf: a,
            slope_sup: b,
            modulation: None,
        })
    }

    /// Non-autonomous variant `f(x, u) = m(x) f(u)`.
    pub fn with_modulation(mut self, modulation: Modulation) -> Self {
        let (m0, m1) = modulation.range;
        let products = [m0 * self.slope_inf, m0 * self.slope_sup, m1 * self.slope_inf, m1 * self.slope_sup];
        self.slope_inf = products.iter().cloned().fold(f64::INFINITY, f64::min);
        self.slope_sup = products.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        self.modulation = Some(modulation);
        self
    }

    pub fn describe(&self) -> NonlinearitySpec {
        match &self.form {
            Form::ArctanGauss {
                center,
                spread,
                scale,
                bump,
            } => NonlinearitySpec::ArctanGauss {
                center: *center,
                spread: *spread,
                scale: *scale,
                bump: *bump,
                value_at_0: self.value_at_0,
            },
            Form::SmoothConvex { a, b, sharpness } => NonlinearitySpec::SmoothConvex {
                a: *a,
                b: *b,
                sharpness: *sharpness,
                value_at_0: self.value_at_0,
            },
            Form::PiecewiseLinear { a, b } => NonlinearitySpec::PiecewiseLinear { a: *a, b: *b },
            Form::Affine { slope } => NonlinearitySpec::Affine {
                slope: *slope,
                offset: self.value_at_0,
            },
            Form::Custom(m) => NonlinearitySpec::Custom {
                name: m.name.clone(),
            },
        }
    }

    /// `a = inf f'`.
    pub fn slope_inf(&self) -> f64 {
        self.slope_inf
    }

    /// `b = sup f'`.
    pub fn slope_sup(&self) -> f64 {
        self.slope_sup
    }

    /// Limits of `f'` at `−∞` and `+∞`.
    pub fn asymptotic_slopes(&self) -> Option<(f64, f64)> {
        self.asymptotic
    }

    pub fn value_at_0(&self) -> f64 {
        self.value_at_0
    }

    pub fn lipschitz(&self) -> f64 {
        self.slope_inf.abs().max(self.slope_sup.abs())
    }

    pub fn is_piecewise_linear(&self) -> bool {
        matches!(self.form, Form::PiecewiseLinear { .. })
    }

    pub fn is_autonomous(&self) -> bool {
        self.modulation.is_none()
    }

    pub fn modulation(&self) -> Option<&Modulation> {
        self.modulation.as_ref()
    }

    /// `f(x)` (autonomous part).
    pub fn eval(&self, x: f64) -> f64 {
        match &self.form {
            Form::ArctanGauss {
                center,
                spread,
                scale,
                bump,
            } => {
                let s = x / scale;
                let atan_part = x * s.atan() - 0.5 * scale * (s * s).ln_1p();
                let bump_part = 0.5 * bump * scale * scale * ((-s * s).exp() - 1.0);
                spread / PI * (atan_part + bump_part) + center * x + self.value_at_0
            }
            Form::SmoothConvex { a, b, sharpness } => {
                let k = *sharpness;
                a * x + (b - a) * (softplus(k * x) - std::f64::consts::LN_2) / k + self.value_at_0
            }
            Form::PiecewiseLinear { a, b } => b * x.max(0.0) + a * x.min(0.0),
            Form::Affine { slope } => slope * x + self.value_at_0,
            Form::Custom(m) => (m.f)(x),
        }
    }

    /// `f'(x)`.
    pub fn eval_prime(&self, x: f64) -> f64 {
        match &self.form {
            Form::ArctanGauss {
                center,
                spread,
                scale,
                bump,
            } => {
                let s = x / scale;
                spread / PI * (s.atan() - bump * x * (-s * s).exp()) + center
            }
            Form::SmoothConvex { a, b, sharpness } => a + (b - a) * logistic(sharpness * x),
            Form::PiecewiseLinear { a, b } => {
                if x > 0.0 {
                    *b
                } else if x < 0.0 {
                    *a
                } else {
                    0.5 * (a + b)
                }
            }
            Form::Affine { slope } => *slope,
            Form::Custom(m) => (m.f_prime)(x),
        }
    }

    /// `f(x, u)` including the spatial multiplier.
    pub fn eval_at(&self, point: &[f64], u: f64) -> f64 {
        match &self.modulation {
            Some(m) => m.at(point) * self.eval(u),
            None => self.eval(u),
        }
    }

    pub fn eval_prime_at(&self, point: &[f64], u: f64) -> f64 {
        match &self.modulation {
            Some(m) => m.at(point) * self.eval_prime(u),
            None => self.eval_prime(u),
        }
    }

    /// `N_∞(u)(x) = m(x)(b_∞ u⁺ − a_∞ u⁻)` evaluated pointwise.
    pub fn eval_asymptotic_at(&self, point: &[f64], u: f64) -> Result<f64> {
        let (a, b) = self.asymptotic.ok_or_else(|| {
            Error::Unsupported("nonlinearity has no asymptotic slopes".into())
        })?;
        let v = b * u.max(0.0) + a * u.min(0.0);
        Ok(match &self.modulation {
            Some(m) => m.at(point) * v,
            None => v,
        })
    }

    /// Min and max of `f'` sampled on a uniform grid.
    pub fn sampled_slope_range(&self, lo: f64, hi: f64, samples: usize) -> (f64, f64) {
        (0..samples)
            .map(|i| self.eval_prime(lo + (hi - lo) * i as f64 / (samples - 1) as f64))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(m, n), v| (m.min(v), n.max(v)))
    }
}

/// Projection of `b_∞ u⁺ − a_∞ u⁻` computed pseudo-spectrally.
pub fn asymptotic_nemitskii(f: &Nonlinearity, basis: &SpectralBasis, u: &Field) -> Result<Field> {
    f.asymptotic_slopes()
        .ok_or_else(|| Error::Unsupported("nonlinearity has no asymptotic slopes".into()))?;
    basis.apply_nemitskii(u, |x, v| f.eval_asymptotic_at(x, v).unwrap_or(f64::NAN))
}
