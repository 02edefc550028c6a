//! Fibers `t ↦ u(z₀, t) = w(z₀, t) + t φ_p`, their heights and tangents.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contraction::{solve_projected, SolveOptions};
use crate::error::{Error, Result};
use crate::problem::ProblemSpec;
use crate::spectral::Field;

/// Condition number above which the horizontal block of `DF(u)` is rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberPoint {
    pub t: f64,
    /// Horizontal part (`p` coefficient zero).
    pub w: Field,
    pub u: Field,
    /// Adapted height `⟨F(u), φ_p⟩`.
    pub height: f64,
    /// `D_t h^a` from the bordered tangent solve.
    pub slope: f64,
    /// `‖P F(u) − z₀‖_Y`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub tol: f64,
    pub total_iterations: usize,
    pub max_residual: f64,
    pub max_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberTrace {
    pub z0: Field,
    pub points: Vec<FiberPoint>,
    pub meta: TraceMeta,
}

/// Tangent `τ` with `DF(u) τ = σ φ_p` and `⟨τ, φ_p⟩ = 1`; `σ = D_t h^a`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    pub tau: Field,
    pub sigma: f64,
}

/// Empirical and theoretical steepness of a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Steepness {
    /// `max ‖Δw‖_X / |Δt|` over consecutive points.
    pub max_quotient_x: f64,
    /// `max ‖Δw‖_Y / |Δt|`.
    pub max_quotient_y: f64,
    /// Bound on `‖∂_t w‖_X` derived from `n` and `c`.
    pub bound_x: f64,
    /// Bound on `‖∂_t w‖_Y`: `n/(c − n)`.
    pub bound_y: f64,
    /// Largest angle (radians) between the secant and `φ_p` in the X norm.
    pub angle: f64,
    /// Angle bound from `bound_x`.
    pub angle_bound: f64,
}

fn h_indices(ps: &ProblemSpec) -> Vec<usize> {
    (0..ps.dim()).filter(|&k| k != ps.p()).collect()
}

/// `φ_p` coefficient of `F(u)` via the closed form `λ_p t − ⟨N(u), φ_p⟩`
/// (shifted representation).
fn height_closed_form(ps: &ProblemSpec, u: &Field) -> Result<f64> {
    let p = ps.p();
    Ok(ps.lambda(p) * u[p] - ps.n_shifted(u)?[p])
}

/// Solves for the fiber point at `t`; the slope is left at NaN.
fn solve_point(ps: &ProblemSpec, z0: &Field, t: f64, opts: &SolveOptions) -> Result<FiberPoint> {
    let rep = solve_projected(ps, z0, t, opts)?;
    let mut u = rep.solution.clone();
    u[ps.p()] = t;
    let height = height_closed_form(ps, &u)?;
    Ok(FiberPoint {
        t,
        w: rep.solution,
        u,
        height,
        slope: f64::NAN,
        residual: rep.final_residual,
        iterations: rep.iterations,
    })
}

/// Bordered solve via LU; used on bulk paths.
pub(crate) fn tangent_from_matrix(ps: &ProblemSpec, j: &DMatrix<f64>) -> Result<Tangent> {
    let p = ps.p();
    let idx = h_indices(ps);
    let m = idx.len();
    let mut tau = Field::unit(ps.dim(), p);
    if m > 0 {
        let jhh = DMatrix::from_fn(m, m, |r, c| j[(idx[r], idx[c])]);
        let rhs = DVector::from_fn(m, |r, _| -j[(idx[r], p)]);
        let eta = jhh
            .lu()
            .solve(&rhs)
            .filter(|e| e.iter().all(|v| v.is_finite()))
            .ok_or(Error::IllConditioned {
                condition: f64::INFINITY,
            })?;
        for (r, &k) in idx.iter().enumerate() {
            tau[k] = eta[r];
        }
    }
    let sigma = (j.row(p) * tau.coeffs())[0];
    Ok(Tangent { tau, sigma })
}

/// Condition number of the horizontal block of `DF(u)`.
pub fn horizontal_condition(ps: &ProblemSpec, j: &DMatrix<f64>) -> f64 {
    let idx = h_indices(ps);
    if idx.is_empty() {
        return 1.0;
    }
    let m = idx.len();
    let jhh = DMatrix::from_fn(m, m, |r, c| j[(idx[r], idx[c])]);
    let eig = SymmetricEigen::new(jhh).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
        (lo.min(v.abs()), hi.max(v.abs()))
    });
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Tangent of the fiber through `u`: `DF(u) τ ∥ φ_p`, `⟨τ, φ_p⟩ = 1`.
pub fn tangent_at(ps: &ProblemSpec, u: &Field) -> Result<Tangent> {
    let j = ps.jacobian_matrix(u)?;
    let condition = horizontal_condition(ps, &j);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    tangent_from_matrix(ps, &j)
}

pub fn tangent(ps: &ProblemSpec, point: &FiberPoint) -> Result<Tangent> {
    tangent_at(ps, &point.u)
}

/// `D_t h^a` at `u` (bulk path, no condition estimate).
pub fn height_slope(ps: &ProblemSpec, u: &Field) -> Result<f64> {
    Ok(tangent_from_matrix(ps, &ps.jacobian_matrix(u)?)?.sigma)
}

/// Fiber point at `t` with its slope.
pub fn fiber_point(ps: &ProblemSpec, z0: &Field, t: f64, opts: &SolveOptions) -> Result<FiberPoint> {
    let mut pt = solve_point(ps, z0, t, opts)?;
    pt.slope = height_slope(ps, &pt.u)?;
    Ok(pt)
}

/// `⟨F(u), φ_p⟩`, cross-checked against `λ_p t − ⟨N(u), φ_p⟩`.
pub fn height(ps: &ProblemSpec, point: &FiberPoint) -> Result<f64> {
    let direct = ps.apply_f(&point.u)?[ps.p()];
    let closed = height_closed_form(ps, &point.u)?;
    if (direct - closed).abs() > 1e-8 * (1.0 + direct.abs()) {
        return Err(Error::InvalidArgument(format!(
            "height forms disagree: {direct} vs {closed}"
        )));
    }
    Ok(direct)
}

/// Traces the fiber through `z0` on a uniform grid of `steps` points in
/// `[t_min, t_max]`, continuing outward from the point nearest `t = 0`.
pub fn trace_fiber(
    ps: &ProblemSpec,
    z0: &Field,
    t_min: f64,
    t_max: f64,
    steps: usize,
    opts: &SolveOptions,
) -> Result<FiberTrace> {
    if !(t_min < t_max) || steps < 2 {
        return Err(Error::InvalidArgument(format!(
            "need t_min < t_max and steps >= 2 (got [{t_min}, {t_max}], {steps})"
        )));
    }
    let ts: Vec<f64> = (0..steps)
        .map(|i| t_min + (t_max - t_min) * i as f64 / (steps - 1) as f64)
        .collect();
    trace_on_grid(ps, z0, &ts, opts)
}

/// Traces the fiber on an arbitrary strictly increasing grid.
pub fn trace_on_grid(ps: &ProblemSpec, z0: &Field, ts: &[f64], opts: &SolveOptions) -> Result<FiberTrace> {
    ps.check(z0)?;
    if ts.is_empty() || ts.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("t grid must be strictly increasing".into()));
    }
    let z0 = ps.project_h(z0);
    let start = ts
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut slots: Vec<Option<FiberPoint>> = vec![None; ts.len()];
    let first = solve_point(ps, &z0, ts[start], opts)?;
    slots[start] = Some(first);
    for dir in [1isize, -1] {
        let mut prev = start;
        let mut i = start as isize + dir;
        while i >= 0 && (i as usize) < ts.len() {
            let k = i as usize;
            let warm = opts.warm(slots[prev].as_ref().map(|p| p.w.clone()).unwrap_or_else(|| Field::zeros(ps.dim())));
            let rep = solve_point(ps, &z0, ts[k], &warm)?;
            slots[k] = Some(rep);
            prev = k;
            i += dir;
        }
    }
    let mut points: Vec<FiberPoint> = slots.into_iter().map(|p| p.expect("all grid points solved")).collect();
    points
        .par_iter_mut()
        .try_for_each(|pt| -> Result<()> {
            pt.slope = height_slope(ps, &pt.u)?;
            Ok(())
        })?;
    let meta = TraceMeta {
        tol: opts.tol_residual,
        total_iterations: points.iter().map(|p| p.iterations).sum(),
        max_residual: points.iter().map(|p| p.residual).fold(0.0, f64::max),
        max_rate: ps.gap().ratio(),
    };
    Ok(FiberTrace { z0, points, meta })
}

impl FiberTrace {
    pub fn ts(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn heights(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.height).collect()
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.slope).collect()
    }

    /// CSV rows `t,height,slope,residual,norm_w_x` (RFC 4180).
    pub fn to_csv(&self, ps: &ProblemSpec) -> String {
        let mut out = String::from("t,height,slope,residual,norm_w_x\r\n");
        for p in &self.points {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\r\n",
                p.t,
                p.height,
                p.slope,
                p.residual,
                ps.norm_x(&p.w)
            ));
        }
        out
    }

    /// Steepness of the trace against the `n/c` bound.
    pub fn steepness(&self, ps: &ProblemSpec) -> Steepness {
        let gap = ps.gap();
        let (n, c) = (gap.lipschitz_n, gap.gap_c);
        let bound_y = n / (c - n);
        let bound_x = (1.0 + gap.gamma.abs()) * n / (c - n) + n * c / (c - n);
        let weight_p = 1.0 + gap.mu_p.abs();
        let (mut qx, mut qy) = (0.0f64, 0.0f64);
        for w in self.points.windows(2) {
            let dt = (w[1].t - w[0].t).abs();
            let dw = Field::new(w[1].w.coeffs() - w[0].w.coeffs());
            qx = qx.max(ps.norm_x(&dw) / dt);
            qy = qy.max(dw.norm_y() / dt);
        }
        Steepness {
            max_quotient_x: qx,
            max_quotient_y: qy,
            bound_x,
            bound_y,
            angle: (qx / weight_p).atan(),
            angle_bound: (bound_x / weight_p).atan(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::Nonlinearity;
    use crate::problem::{ap2d_problem, ProblemOptions};
    use crate::spectral::{BoxDomain, SpectralBasis};
    use std::f64::consts::PI;

    fn interval(modes: usize) -> SpectralBasis {
        SpectralBasis::new(BoxDomain::interval(PI).unwrap(), &[modes], 4).unwrap()
    }

    fn convex_1d() -> ProblemSpec {
        let f = Nonlinearity::smooth_convex(0.0, 3.0, 1.0, 0.0).unwrap();
        ProblemSpec::from_basis(interval(16), f, &ProblemOptions::default()).unwrap()
    }

    #[test]
    fn affine_fiber_is_vertical_line() {
        let basis = interval(8);
        let ps = ProblemSpec::from_basis(basis, Nonlinearity::affine(1.5, 0.0), &ProblemOptions::default()).unwrap();
        let z0 = Field::from_slice(&[0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 2.0]);
        let tr = trace_fiber(&ps, &z0, -5.0, 5.0, 11, &SolveOptions::default()).unwrap();
        for p in &tr.points {
            assert!((p.w.coeffs() - tr.points[0].w.coeffs()).norm() < 1e-14);
            // h = λ_p t with λ_p = 1 − 1.5
            assert!((p.height + 0.5 * p.t).abs() < 1e-12);
            assert!((p.slope + 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_nonlinearity_tangent_is_phi_p() {
        let ps = ProblemSpec::from_basis(interval(8), Nonlinearity::affine(0.0, 0.0), &ProblemOptions::default()).unwrap();
        let t = tangent_at(&ps, &Field::from_slice(&[1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        assert!((t.tau.coeffs() - Field::unit(8, 0).coeffs()).norm() < 1e-15);
        assert!((t.sigma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn height_at_origin_is_minus_f0_pairing() {
        let ps = ap2d_problem(16, 4).unwrap();
        let pt = fiber_point(&ps, &Field::zeros(256), 0.0, &SolveOptions::default()).unwrap();
        // with z0 = 0 and t = 0 the solution is generally nonzero, so check the
        // raw identity instead at u = 0
        let h0 = ps.apply_f(&Field::zeros(256)).unwrap()[0];
        let pairing = 8.0 * 2f64.sqrt() / (PI * PI);
        assert!((h0 + 47.12 * pairing).abs() < 1e-10);
        assert!((height(&ps, &pt).unwrap() - pt.height).abs() < 1e-8);
    }

    #[test]
    fn traced_points_satisfy_fiber_property() {
        let ps = convex_1d();
        let z0 = Field::from_slice(&[0.0, 0.3, -0.2, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.05]);
        let tr = trace_fiber(&ps, &z0, -10.0, 10.0, 41, &SolveOptions::default()).unwrap();
        for p in &tr.points {
            let fu = ps.apply_f(&p.u).unwrap();
            let pf = ps.project_h(&fu);
            assert!((pf.into_inner() - z0.coeffs()).norm() <= 1e-10);
            assert!((fu[0] - p.height).abs() < 1e-8);
        }
        let s = tr.steepness(&ps);
        assert!(s.max_quotient_y <= s.bound_y);
        assert!(s.max_quotient_x <= s.bound_x);
        assert!(s.angle < s.angle_bound && s.angle_bound < PI / 2.0);
    }

    #[test]
    fn tangent_matches_finite_difference() {
        let ps = convex_1d();
        let z0 = Field::from_slice(&[0.0, 1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let opts = SolveOptions::with_tol(1e-14);
        let t0 = 0.8;
        let pt = fiber_point(&ps, &z0, t0, &opts).unwrap();
        let tan = tangent(&ps, &pt).unwrap();
        let mut errs = Vec::new();
        for &h in &[1e-2, 5e-3] {
            let a = solve_point(&ps, &z0, t0 + h, &opts).unwrap();
            let b = solve_point(&ps, &z0, t0 - h, &opts).unwrap();
            let fd = (a.u.coeffs() - b.u.coeffs()) / (2.0 * h);
            errs.push((fd - tan.tau.coeffs()).norm());
            let fd_slope = (a.height - b.height) / (2.0 * h);
            assert!((fd_slope - tan.sigma).abs() < 10.0 * h * h);
        }
        // second order: halving h divides the error by about four
        assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
    }

    #[test]
    fn refining_the_grid_keeps_heights() {
        let ps = convex_1d();
        let z0 = Field::zeros(16);
        let opts = SolveOptions::default();
        let a = trace_fiber(&ps, &z0, -4.0, 4.0, 9, &opts).unwrap();
        let b = trace_fiber(&ps, &z0, -4.0, 4.0, 17, &opts).unwrap();
        for (i, p) in a.points.iter().enumerate() {
            assert!((p.height - b.points[2 * i].height).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let ps = convex_1d();
        let tr = trace_fiber(&ps, &Field::zeros(16), -1.0, 1.0, 3, &SolveOptions::default()).unwrap();
        let csv = tr.to_csv(&ps);
        assert!(csv.starts_with("t,height,slope,residual,norm_w_x\r\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn invalid_window_rejected() {
        let ps = convex_1d();
        assert!(trace_fiber(&ps, &Field::zeros(16), 1.0, -1.0, 5, &SolveOptions::default()).is_err());
        assert!(trace_fiber(&ps, &Field::zeros(16), -1.0, 1.0, 1, &SolveOptions::default()).is_err());
    }
}
