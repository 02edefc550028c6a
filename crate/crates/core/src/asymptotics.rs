//! Behaviour of fibers and heights as `|t| → ∞`.

use serde::{Deserialize, Serialize};

use crate::analysis::HeightEval;
use crate::contraction::{solve_projected, SolveOptions};
use crate::error::{Error, Result};
use crate::fiber::{fiber_point, trace_fiber};
use crate::nonlinearity::Nonlinearity;
use crate::problem::{ProblemOptions, ProblemSpec};
use crate::spectral::{BoxDomain, Field, SpectralBasis};

/// Empirical check of the growth conditions at `±∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VReport {
    pub epsilon: f64,
    pub t_threshold: f64,
    pub v_plus_ok: bool,
    pub v_minus_ok: bool,
    /// Largest `ε` for which `h(t) ≤ h(T) − ε (t − T)` on all samples `t > T`.
    pub epsilon_plus: f64,
    /// Largest `ε` for which `h(t) ≤ h(−T) + ε (t + T)` on all samples `t < −T`.
    pub epsilon_minus: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub t_range_plus: (f64, f64),
    pub t_range_minus: (f64, f64),
}

fn nearest(samples: &[HeightEval], t: f64) -> Option<&HeightEval> {
    samples.iter().min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
}

/// Checks `⟨N(u), φ_p⟩ > (λ_p ± ε)t + c±` for `±t > T`, written in terms of the
/// adapted height `h = λ_p t − ⟨N(u), φ_p⟩`.
pub fn check_v(samples: &[HeightEval], epsilon: f64, t_threshold: f64) -> VReport {
    let side = |sign: f64| {
        let anchor = nearest(samples, sign * t_threshold).filter(|a| (a.t - sign * t_threshold).abs() <= 0.5 * t_threshold);
        let tail: Vec<&HeightEval> = samples.iter().filter(|e| sign * e.t > t_threshold).collect();
        match anchor {
            Some(a) if !tail.is_empty() => {
                let eps = tail
                    .iter()
                    .map(|e| -(e.height - a.height) / (sign * (e.t - a.t)))
                    .fold(f64::INFINITY, f64::min);
                let range = (tail.iter().map(|e| e.t).fold(f64::INFINITY, f64::min), tail.iter().map(|e| e.t).fold(f64::NEG_INFINITY, f64::max));
                // h(t) < −ε|t| − c  ⇐  c = −h(±T) − ε T (minus a margin)
                let c = -a.height - epsilon * a.t.abs() - 1e-9 * (1.0 + a.height.abs());
                (eps, c, range)
            }
            _ => (f64::NAN, f64::NAN, (f64::NAN, f64::NAN)),
        }
    };
    let (ep, cp, rp) = side(1.0);
    let (em, cm, rm) = side(-1.0);
    VReport {
        epsilon,
        t_threshold,
        v_plus_ok: ep.is_finite() && ep > 0.0 && ep >= epsilon,
        v_minus_ok: em.is_finite() && em > 0.0 && em >= epsilon,
        epsilon_plus: ep,
        epsilon_minus: em,
        c_plus: cp,
        c_minus: cm,
        t_range_plus: rp,
        t_range_minus: rm,
    }
}

/// Defaults `T = 50 (1 + ‖z₀‖)` and `ε = 0.1 · min(μ_p − a, b − μ_p)`.
pub fn default_v_parameters(ps: &ProblemSpec, z0: &Field) -> (f64, f64) {
    let (a, b) = ps.operator().asymptotic_slopes().unwrap_or_else(|| ps.operator().slope_bounds());
    let mu = ps.gap().mu_p;
    let eps = 0.1 * (mu - a).min(b - mu).max(0.0);
    (eps, 50.0 * (1.0 + z0.norm_y()))
}

/// Traces the fiber on `[−4T, 4T]` and runs [`check_v`] with the defaults.
pub fn check_v_default(ps: &ProblemSpec, z0: &Field, steps: usize, opts: &SolveOptions) -> Result<VReport> {
    let (eps, t) = default_v_parameters(ps, z0);
    let trace = trace_fiber(ps, z0, -4.0 * t, 4.0 * t, steps, opts)?;
    let samples: Vec<HeightEval> = trace
        .points
        .into_iter()
        .map(|p| HeightEval {
            t: p.t,
            height: p.height,
            slope: p.slope,
            u: None,
        })
        .collect();
    Ok(check_v(&samples, eps, t))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticDirections {
    pub w_plus: Field,
    pub w_minus: Field,
    /// `‖L w₊ − P N_∞(w₊ + φ_p)‖`.
    pub residual_plus: f64,
    /// `‖L w₋ + P N_∞(−w₋ − φ_p)‖`.
    pub residual_minus: f64,
}

/// Solves `L w − P N_∞(w + φ_p) = 0` and `L w + P N_∞(−w − φ_p) = 0` by the
/// projected contraction (shifted `L` and `N_∞`).
pub fn asymptotic_directions(ps: &ProblemSpec, opts: &SolveOptions) -> Result<AsymptoticDirections> {
    let op = ps.operator();
    if op.asymptotic_slopes().is_none() {
        return Err(Error::Unsupported("operator has no asymptotic slopes".into()));
    }
    let p = ps.p();
    let gamma = ps.gamma();
    let n_inf = |u: &Field| -> Result<Field> {
        let v = op.asymptotic(u)?;
        Ok(Field::new(v.into_inner() - u.coeffs() * gamma))
    };
    let solve = |sign: f64| -> Result<(Field, f64)> {
        let mut z = Field::zeros(ps.dim());
        for it in 0..opts.max_iters {
            let mut arg = ps.l_h_inverse(&z);
            arg[p] = 1.0;
            let arg = Field::new(arg.into_inner() * sign);
            let mut next = n_inf(&arg)?;
            next[p] = 0.0;
            let next = Field::new(next.into_inner() * sign);
            let delta = (next.coeffs() - z.coeffs()).norm();
            if delta <= opts.tol_residual {
                return Ok((ps.l_h_inverse(&z), delta));
            }
            if !delta.is_finite() {
                return Err(Error::NonConvergence {
                    iterations: it,
                    residual: delta,
                    t: None,
                });
            }
            z = next;
        }
        Err(Error::NonConvergence {
            iterations: opts.max_iters,
            residual: f64::NAN,
            t: None,
        })
    };
    let (w_plus, residual_plus) = solve(1.0)?;
    let (w_minus, residual_minus) = solve(-1.0)?;
    Ok(AsymptoticDirections {
        w_plus,
        w_minus,
        residual_plus,
        residual_minus,
    })
}

/// `‖w(z, t)/t − w±‖_X` at a single large `|t|`.
pub fn direction_defect(ps: &ProblemSpec, z0: &Field, t: f64, dirs: &AsymptoticDirections, opts: &SolveOptions) -> Result<f64> {
    let rep = solve_projected(ps, z0, t, opts)?;
    let target = if t > 0.0 { &dirs.w_plus } else { &dirs.w_minus };
    let d = Field::new(rep.solution.coeffs() / t - target.coeffs());
    Ok(ps.norm_x(&d))
}

/// Slope-comparison hypotheses and conclusion at `t → +∞`, computed with the
/// shift `γ = μ_p` so that the distinguished eigenvalue is 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeLimitReport {
    /// Lipschitz constant of `N − μ_p`.
    pub epsilon: f64,
    /// `‖(L|_H)⁻¹‖`.
    pub inverse_norm: f64,
    /// `κ = ⟨N_∞(φ_p), φ_p⟩` for the shifted `N`.
    pub kappa: f64,
    pub positivity_ok: bool,
    pub smallness_ok: bool,
    pub quadratic_ok: bool,
    pub hypotheses_ok: bool,
    /// `h(z₀, t)/t` at `T, 2T, 4T`.
    pub ratios: [f64; 3],
    pub t_values: [f64; 3],
    /// Richardson estimate of `lim h(z₀, t)/t`.
    pub limit: f64,
    /// `|lim h/t + κ| < κ`, i.e. the height along the fiber decreases at a
    /// rate comparable to the vertical line through the origin.
    pub conclusion_holds: bool,
}

pub fn slope_limit_compare(ps: &ProblemSpec, z0: &Field, t_base: f64, opts: &SolveOptions) -> Result<SlopeLimitReport> {
    let op = ps.operator();
    let p = ps.p();
    let mu_p = ps.gap().mu_p;
    let (a, b) = op.slope_bounds();
    let epsilon = (a - mu_p).abs().max((b - mu_p).abs());
    let gap = (0..ps.dim())
        .filter(|&k| k != p)
        .map(|k| (ps.mu()[k] - mu_p).abs())
        .fold(f64::INFINITY, f64::min);
    let inverse_norm = 1.0 / gap;
    let phi = Field::unit(ps.dim(), p);
    let kappa = if op.asymptotic_slopes().is_some() {
        op.asymptotic(&phi)?[p] - mu_p
    } else {
        f64::NAN
    };
    let positivity_ok = kappa > 0.0;
    let smallness_ok = epsilon * inverse_norm < 0.5;
    let quadratic_ok = epsilon * epsilon * inverse_norm < 0.5 * kappa;
    let t_values = [t_base, 2.0 * t_base, 4.0 * t_base];
    let mut ratios = [0.0; 3];
    let mut warm: Option<Field> = None;
    for (r, &t) in ratios.iter_mut().zip(&t_values) {
        let o = match &warm {
            Some(w) => opts.warm(w.clone()),
            None => opts.clone(),
        };
        let pt = fiber_point(ps, z0, t, &o)?;
        *r = pt.height / t;
        warm = Some(pt.w);
    }
    let r1a = 2.0 * ratios[1] - ratios[0];
    let r1b = 2.0 * ratios[2] - ratios[1];
    let limit = (4.0 * r1b - r1a) / 3.0;
    Ok(SlopeLimitReport {
        epsilon,
        inverse_norm,
        kappa,
        positivity_ok,
        smallness_ok,
        quadratic_ok,
        hypotheses_ok: positivity_ok && smallness_ok && quadratic_ok,
        ratios,
        t_values,
        limit,
        conclusion_holds: kappa > 0.0 && (limit + kappa).abs() < kappa,
    })
}

/// Right endpoint of the `p`-th branch of the Fučík spectrum on `[0, length]`
/// through slope `a` on the negative part: returns `b` with
/// `−u'' = b u⁺ − a u⁻` nontrivially solvable, `u'(0) > 0`.
pub fn locate_fucik_pair(a: f64, p: usize, length: f64) -> Result<f64> {
    if !(a > 0.0) || p < 2 {
        return Err(Error::FucikLocationFailed(format!("need a > 0 and p >= 2 (a = {a}, p = {p})")));
    }
    // count zeros and return u(length) after shooting
    let shoot = |b: f64| -> (f64, usize) {
        let steps = 4000;
        let h = length / steps as f64;
        let rhs = |u: f64| -(b * u.max(0.0) + a * u.min(0.0));
        let (mut u, mut v) = (0.0f64, 1.0f64);
        let mut zeros = 0;
        for _ in 0..steps {
            let k1 = (v, rhs(u));
            let k2 = (v + 0.5 * h * k1.1, rhs(u + 0.5 * h * k1.0));
            let k3 = (v + 0.5 * h * k2.1, rhs(u + 0.5 * h * k2.0));
            let k4 = (v + h * k3.1, rhs(u + h * k3.0));
            let un = u + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            if u != 0.0 && un * u < 0.0 {
                zeros += 1;
            }
            u = un;
        }
        (u, zeros)
    };
    // scan b upward until the endpoint value changes sign with p − 1 interior zeros
    let mut lo = 1e-3;
    let (mut ulo, mut zlo) = shoot(lo);
    let mut b = lo;
    while b < 1e4 {
        b *= 1.02;
        let (ub, zeros) = shoot(b);
        if ulo * ub < 0.0 && zlo == p - 1 && zeros == p {
            let (mut l, mut r, mut fl) = (lo, b, ulo);
            for _ in 0..200 {
                let m = 0.5 * (l + r);
                let (fm, _) = shoot(m);
                if fm * fl < 0.0 {
                    r = m;
                } else {
                    l = m;
                    fl = fm;
                }
                if r - l < 1e-13 * r {
                    break;
                }
            }
            return Ok(0.5 * (l + r));
        }
        lo = b;
        ulo = ub;
        zlo = zeros;
    }
    Err(Error::FucikLocationFailed(format!("no sign change of u({length}) for a = {a}")))
}

/// Piecewise-linear problem `f(u) = b u⁺ − a u⁻` on `[0, π]` with
/// distinguished mode `p` (1-based).
pub fn fucik_problem(a: f64, b: f64, p: usize, modes: usize) -> Result<ProblemSpec> {
    let basis = SpectralBasis::new(BoxDomain::interval(std::f64::consts::PI)?, &[modes], 4)?;
    ProblemSpec::from_basis(
        basis,
        Nonlinearity::piecewise_linear(a, b)?,
        &ProblemOptions {
            p: Some(p - 1),
            ..Default::default()
        },
    )
}

/// Adjusts `b` so that the discrete height `h(0, 1)` vanishes.
pub fn refine_fucik_discrete(a: f64, b0: f64, p: usize, modes: usize, opts: &SolveOptions) -> Result<f64> {
    let h = |b: f64| -> Result<f64> {
        let ps = fucik_problem(a, b, p, modes)?;
        Ok(fiber_point(&ps, &Field::zeros(modes), 1.0, opts)?.height)
    };
    let (mut x0, mut x1) = (b0, b0 * (1.0 + 1e-4));
    let (mut f0, mut f1) = (h(x0)?, h(x1)?);
    for _ in 0..60 {
        if f1.abs() < 1e-14 || f1 == f0 {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = h(x1)?;
    }
    if !(f1.abs() < 1e-10) {
        return Err(Error::FucikLocationFailed(format!("discrete refinement stalled at |h| = {f1:e}")));
    }
    Ok(x1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FucikReport {
    pub a: f64,
    pub b_shooting: f64,
    pub b_discrete: f64,
    /// `1/√a + 1/√b − 1` for the shooting value (zero on the first curve
    /// through `(4, 4)`).
    pub curve_defect: f64,
    pub t_max: f64,
    pub tol: f64,
    pub max_abs_height: f64,
    pub max_f_norm: f64,
    /// Heights and `‖F(u)‖` stay below `tol · (1 + t)` on the half-fiber.
    pub collapse_ok: bool,
    pub v_plus_ok: bool,
}

/// Traces the half-fiber `{u(0, t), t ≥ 0}` of the Fučík problem and checks
/// that it is mapped to (numerically) a single point.
pub fn fucik_check(ps: &ProblemSpec, a: f64, b_shooting: f64, t_max: f64, steps: usize, opts: &SolveOptions) -> Result<FucikReport> {
    let (_, b) = ps.operator().slope_bounds();
    let b_discrete = b.max(a);
    let z0 = Field::zeros(ps.dim());
    let trace = trace_fiber(ps, &z0, 0.0, t_max, steps, opts)?;
    let tol = 1e-8;
    let mut max_h = 0.0f64;
    let mut max_f = 0.0f64;
    let mut ok = true;
    for pt in &trace.points {
        let f = ps.apply_f(&pt.u)?.norm_y();
        max_h = max_h.max(pt.height.abs());
        max_f = max_f.max(f);
        ok &= pt.height.abs() <= tol * (1.0 + pt.t) && f <= tol * (1.0 + pt.t);
    }
    let samples: Vec<HeightEval> = trace
        .points
        .iter()
        .map(|p| HeightEval {
            t: p.t,
            height: p.height,
            slope: p.slope,
            u: None,
        })
        .collect();
    let v = check_v(&samples, 0.0, 0.25 * t_max);
    Ok(FucikReport {
        a,
        b_shooting,
        b_discrete,
        curve_defect: 1.0 / a.sqrt() + 1.0 / b_shooting.sqrt() - 1.0,
        t_max,
        tol,
        max_abs_height: max_h,
        max_f_norm: max_f,
        collapse_ok: ok,
        v_plus_ok: v.v_plus_ok,
    })
}

/// Heights on the half-fiber through `z0` at `t ∈ {T/4, T/2, T}`: a
/// contrast run that should diverge to `−∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub t_values: Vec<f64>,
    pub heights: Vec<f64>,
    pub diverges: bool,
}

pub fn half_fiber_divergence(ps: &ProblemSpec, z0: &Field, t_max: f64, opts: &SolveOptions) -> Result<DivergenceReport> {
    let ts = vec![0.25 * t_max, 0.5 * t_max, t_max];
    let hs = ts
        .iter()
        .map(|&t| Ok(fiber_point(ps, z0, t, opts)?.height))
        .collect::<Result<Vec<_>>>()?;
    // strictly decreasing with at least linear decay between the probes
    let diverges = hs.windows(2).all(|w| w[1] < w[0]) && (hs[2] - hs[1]) < -1e-3 * (ts[2] - ts[1]);
    Ok(DivergenceReport {
        t_values: ts,
        heights: hs,
        diverges,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub v: VReport,
    pub w_plus: Field,
    pub w_minus: Field,
    pub direction_residuals: (f64, f64),
    /// `h(z₀, t)/t` at the largest probed `±t`.
    pub slope_limit_estimates: (f64, f64),
    /// `⟨N_∞(φ_p), φ_p⟩` for the problem's own shift.
    pub n_infinity_pairing: f64,
    pub slope_limit: Option<SlopeLimitReport>,
}

/// Every large-`|t|` check on the fiber through `z0`.
pub fn asymptotic_report(ps: &ProblemSpec, z0: &Field, steps: usize, opts: &SolveOptions) -> Result<AsymptoticReport> {
    let (eps, t) = default_v_parameters(ps, z0);
    let trace = trace_fiber(ps, z0, -4.0 * t, 4.0 * t, steps, opts)?;
    let first = &trace.points[0];
    let last = &trace.points[trace.points.len() - 1];
    let ends = (last.height / last.t, first.height / first.t);
    let samples: Vec<HeightEval> = trace
        .points
        .iter()
        .map(|p| HeightEval {
            t: p.t,
            height: p.height,
            slope: p.slope,
            u: None,
        })
        .collect();
    let v = check_v(&samples, eps, t);
    let dirs = asymptotic_directions(ps, opts)?;
    let phi = Field::unit(ps.dim(), ps.p());
    let pairing = ps.operator().asymptotic(&phi)?[ps.p()] - ps.gamma();
    let slope = slope_limit_compare(ps, z0, t, opts).ok();
    Ok(AsymptoticReport {
        v,
        w_plus: dirs.w_plus,
        w_minus: dirs.w_minus,
        direction_residuals: (dirs.residual_plus, dirs.residual_minus),
        slope_limit_estimates: ends,
        n_infinity_pairing: pairing,
        slope_limit: slope,
    })
}

/// CSV of `h/t` against `t`.
pub fn ratio_csv(samples: &[HeightEval]) -> String {
    let mut out = String::from("t,height_over_t\r\n");
    for e in samples.iter().filter(|e| e.t != 0.0) {
        out.push_str(&format!("{:.17e},{:.17e}\r\n", e.t, e.height / e.t));
    }
    out
}
