//! Fixed-point solvers in `z = Lw` variables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ProblemSpec;
use crate::spectral::Field;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol_residual: f64,
    pub max_iters: usize,
    /// Initial guess for the unknown (`w` for projected solves, `u` for
    /// full solves).
    #[serde(default)]
    pub warm_start: Option<Field>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            max_iters: 10_000,
            warm_start: None,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol_residual: tol,
            ..Self::default()
        }
    }

    pub fn warm(&self, start: Field) -> Self {
        Self {
            warm_start: Some(start),
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidArgument(
                "solver tolerance must be positive and max_iters at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// `w` (projected solve, `p` coefficient 0) or `u` (full solve).
    pub solution: Field,
    /// Final iterate in `z = Lw` variables.
    pub z: Field,
    pub iterations: usize,
    pub final_residual: f64,
    /// Geometric-mean ratio of successive iterate deltas, skipping the first
    /// three.
    pub observed_rate: f64,
    pub residual_history: Vec<f64>,
}

impl SolveReport {
    /// Largest single-step ratio of iterate deltas after the first `skip`.
    pub fn max_step_ratio(&self, skip: usize) -> f64 {
        self.residual_history
            .windows(2)
            .skip(skip)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max)
    }
}

fn observed_rate(history: &[f64]) -> f64 {
    // history[k] = ‖z_{k+1} − z_k‖
    let skip = if history.len() > 5 { 3 } else { 0 };
    let tail = &history[skip..];
    if tail.len() < 2 || tail[0] == 0.0 {
        return 0.0;
    }
    let last = tail[tail.len() - 1];
    if last == 0.0 {
        return 0.0;
    }
    (last / tail[0]).powf(1.0 / (tail.len() - 1) as f64)
}

fn iterate(
    mut z: Field,
    opts: &SolveOptions,
    t: Option<f64>,
    map: impl Fn(&Field) -> Result<Field>,
) -> Result<(Field, usize, f64, Vec<f64>)> {
    let mut history = Vec::new();
    for it in 0..opts.max_iters {
        let next = map(&z)?;
        let delta = (next.coeffs() - z.coeffs()).norm();
        if !delta.is_finite() {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: delta,
                t,
            });
        }
        history.push(delta);
        if delta <= opts.tol_residual {
            // residual of `z` is exactly `delta`
            return Ok((z, it, delta, history));
        }
        z = next;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iters,
        residual: history.last().copied().unwrap_or(f64::NAN),
        t,
    })
}

/// Solves `P F(w + t φ_p) = z0` for `w ∈ H_X` by iterating
/// `z ↦ P N(L⁻¹z + t φ_p) + z0`, contraction ratio `n/c`.
///
/// The residual reported is `‖P F(u) − z0‖_Y`.
pub fn solve_projected(ps: &ProblemSpec, z0: &Field, t: f64, opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    ps.check(z0)?;
    let p = ps.p();
    let z0 = ps.project_h(z0);
    let start = match &opts.warm_start {
        Some(w) => {
            ps.check(w)?;
            let mut z = Field::zeros(ps.dim());
            for k in 0..ps.dim() {
                if k != p {
                    z[k] = ps.lambda(k) * w[k];
                }
            }
            z
        }
        None => z0.clone(),
    };
    let assemble = |z: &Field| {
        let mut u = ps.l_h_inverse(z);
        u[p] = t;
        u
    };
    let (z, iterations, residual, history) = iterate(start, opts, Some(t), |z| {
        let mut c = ps.n_shifted(&assemble(z))?;
        c[p] = 0.0;
        Ok(Field::new(c.into_inner() + z0.coeffs()))
    })?;
    Ok(SolveReport {
        solution: ps.l_h_inverse(&z),
        observed_rate: observed_rate(&history),
        z,
        iterations,
        final_residual: residual,
        residual_history: history,
    })
}

/// Solves `F(u) = y` by the full iteration `z ↦ N(L⁻¹z) + y`; requires the
/// whole shifted spectrum to avoid `[−n, n]`.
pub fn solve_full(ps: &ProblemSpec, y: &Field, opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    ps.check(y)?;
    let n = ps.gap().lipschitz_n;
    let c_full = (0..ps.dim())
        .map(|k| ps.lambda(k).abs())
        .fold(f64::INFINITY, f64::min);
    if !(n < c_full) {
        return Err(Error::GapViolated { n, c: c_full });
    }
    let l_inv = |z: &Field| {
        Field::new(nalgebra::DVector::from_fn(ps.dim(), |k, _| z[k] / ps.lambda(k)))
    };
    let start = match &opts.warm_start {
        Some(u) => {
            ps.check(u)?;
            Field::new(nalgebra::DVector::from_fn(ps.dim(), |k, _| ps.lambda(k) * u[k]))
        }
        None => y.clone(),
    };
    let (z, iterations, residual, history) = iterate(start, opts, None, |z| {
        let c = ps.n_shifted(&l_inv(z))?;
        Ok(Field::new(c.into_inner() + y.coeffs()))
    })?;
    Ok(SolveReport {
        solution: l_inv(&z),
        observed_rate: observed_rate(&history),
        z,
        iterations,
        final_residual: residual,
        residual_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{CustomMap, Nonlinearity};
    use crate::problem::{ap2d_problem, ProblemOptions};
    use crate::spectral::{BoxDomain, SpectralBasis};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn interval(modes: usize) -> SpectralBasis {
        SpectralBasis::new(BoxDomain::interval(PI).unwrap(), &[modes], 4).unwrap()
    }

    fn sine_plus_linear() -> ProblemSpec {
        let f = Nonlinearity::custom(CustomMap {
            name: "0.5 sin u + 6u".into(),
            f: Arc::new(|u| 0.5 * u.sin() + 6.0 * u),
            f_prime: Arc::new(|u| 0.5 * u.cos() + 6.0),
            slopes: (5.5, 6.5),
            asymptotic: None,
        })
        .unwrap();
        ProblemSpec::from_basis(interval(16), f, &ProblemOptions::default()).unwrap()
    }

    fn random_field(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Field {
        Field::new(DVector::from_fn(n, |_, _| scale * (rng.random::<f64>() - 0.5)))
    }

    #[test]
    fn zero_nonlinearity_converges_in_one_step() {
        let ps = ProblemSpec::from_basis(interval(8), Nonlinearity::affine(0.0, 0.0), &ProblemOptions::default()).unwrap();
        let y = Field::from_slice(&[1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 1.0, -1.0]);
        let r = solve_full(&ps, &y, &SolveOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        for k in 0..8 {
            assert!((r.solution[k] - y[k] / ((k + 1) * (k + 1)) as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn full_solve_rate_and_residual() {
        let ps = sine_plus_linear();
        // shifted spectrum 1−6, 4−6, 9−6, …: full gap 2, n = 0.5
        let c_full = (0..16).map(|k| ps.lambda(k).abs()).fold(f64::INFINITY, f64::min);
        assert!((c_full - 2.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let g = random_field(&mut rng, 16, 10.0);
            let r = solve_full(&ps, &g, &SolveOptions::default()).unwrap();
            let res = (ps.apply_f(&r.solution).unwrap().into_inner() - g.coeffs()).norm();
            assert!(res < 1e-10, "residual {res}");
            assert!(r.observed_rate <= 0.25 + 1e-9, "rate {}", r.observed_rate);
        }
    }

    #[test]
    fn full_solve_round_trip() {
        let ps = sine_plus_linear();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut u = random_field(&mut rng, 16, 2.0);
        for k in 0..16 {
            u[k] /= (1 + k * k) as f64;
        }
        let y = ps.apply_f(&u).unwrap();
        let r = solve_full(&ps, &y, &SolveOptions::with_tol(1e-13)).unwrap();
        let err = Field::new(r.solution.coeffs() - u.coeffs());
        assert!(ps.norm_x(&err) < 1e-8);
    }

    #[test]
    fn full_solve_refuses_resonant_window() {
        let ps = ap2d_problem(4, 4).unwrap();
        let g = Field::zeros(16);
        assert!(matches!(solve_full(&ps, &g, &SolveOptions::default()), Err(Error::GapViolated { .. })));
    }

    #[test]
    fn projected_affine_closed_form() {
        let basis = interval(8);
        let gamma = 2.0;
        let f = Nonlinearity::affine(gamma, 0.7);
        let ps = ProblemSpec::from_basis(basis.clone(), f, &ProblemOptions { gamma: Some(gamma), ..Default::default() }).unwrap();
        let z0 = Field::from_slice(&[0.0, 1.0, -2.0, 0.5, 0.0, 0.0, 3.0, 0.1]);
        let c = basis.constant(0.7);
        for &t in &[-3.0, 0.0, 5.0] {
            let r = solve_projected(&ps, &z0, t, &SolveOptions::default()).unwrap();
            for k in 1..8 {
                let expect = (z0[k] + c[k]) / (((k + 1) * (k + 1)) as f64 - gamma);
                assert!((r.solution[k] - expect).abs() < 1e-14);
            }
            assert_eq!(r.solution[0], 0.0);
        }
    }

    #[test]
    fn projected_rectangle_example_converges_at_half_rate() {
        let ps = ap2d_problem(16, 4).unwrap();
        let z0 = ps.project_h(ps.rhs().unwrap());
        let r = solve_projected(&ps, &z0, 0.0, &SolveOptions::default()).unwrap();
        assert!(r.final_residual < 1e-10);
        assert!(r.observed_rate < 0.51, "rate {}", r.observed_rate);
        let mut u = r.solution.clone();
        u[0] = 0.0;
        let pf = ps.project_h(&ps.apply_f(&u).unwrap());
        assert!((pf.into_inner() - z0.coeffs()).norm() < 2e-10);
    }

    #[test]
    fn warm_starts_reach_the_same_fixed_point() {
        let ps = ap2d_problem(8, 4).unwrap();
        let z0 = ps.project_h(ps.rhs().unwrap());
        let opts = SolveOptions::with_tol(1e-12);
        let a = solve_projected(&ps, &z0, 7.0, &opts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut guess = random_field(&mut rng, 64, 50.0);
        guess[0] = 0.0;
        let b = solve_projected(&ps, &z0, 7.0, &opts.warm(guess)).unwrap();
        assert!((a.solution.coeffs() - b.solution.coeffs()).norm() < 1e-8);
        assert!(b.max_step_ratio(3) <= ps.gap().ratio() + 0.05);
    }
}
