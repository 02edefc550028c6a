//! Operator setup `F = L − N`, the shift `γ` and the splitting at mode `p`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nonlinearity::{asymptotic_nemitskii, Nonlinearity};
use crate::spectral::{BoxDomain, Field, SpectralBasis};

/// The nonlinear part `N` of `F = L − N`, in raw (unshifted) form, acting on
/// coefficient vectors.
pub trait NonlinearOperator: Send + Sync {
    fn dim(&self) -> usize;

    /// `N(u)`.
    fn apply(&self, u: &Field) -> Result<Field>;

    /// `DN(u)` as a symmetric matrix (before any symmetrization).
    fn jacobian(&self, u: &Field) -> Result<DMatrix<f64>>;

    /// `DN(u) v`.
    fn apply_jacobian(&self, u: &Field, v: &Field) -> Result<Field> {
        Ok(Field::new(self.jacobian(u)? * v.coeffs()))
    }

    /// `N_∞(u) = lim N(su)/s` as `s → +∞`.
    fn asymptotic(&self, u: &Field) -> Result<Field>;

    /// Bounds `a ≤ DN ≤ b` in the sense of quadratic forms.
    fn slope_bounds(&self) -> (f64, f64);

    /// Asymptotic slopes `(a_∞, b_∞)` when `N` is asymptotically
    /// piecewise linear.
    fn asymptotic_slopes(&self) -> Option<(f64, f64)>;

    fn describe(&self) -> serde_json::Value;

    /// Underlying spectral basis, if the operator comes from a PDE.
    fn basis(&self) -> Option<&SpectralBasis> {
        None
    }

    /// The scalar nonlinearity, if `N` is a Nemitskii map.
    fn nonlinearity(&self) -> Option<&Nonlinearity> {
        None
    }
}

/// Pseudo-spectral Nemitskii operator `u ↦ f(x, u)`.
#[derive(Debug, Clone)]
pub struct SpectralNemitskii {
    basis: SpectralBasis,
    f: Nonlinearity,
}

impl SpectralNemitskii {
    pub fn new(basis: SpectralBasis, f: Nonlinearity) -> Self {
        Self { basis, f }
    }
}

impl NonlinearOperator for SpectralNemitskii {
    fn dim(&self) -> usize {
        self.basis.len()
    }

    fn apply(&self, u: &Field) -> Result<Field> {
        let f = &self.f;
        if f.is_autonomous() {
            self.basis.apply_nemitskii(u, |_, v| f.eval(v))
        } else {
            self.basis.apply_nemitskii(u, |x, v| f.eval_at(x, v))
        }
    }

    fn jacobian(&self, u: &Field) -> Result<DMatrix<f64>> {
        let nodal = self.basis.to_grid(u)?;
        let f = &self.f;
        let weights = self
            .basis
            .map_nodal(nodal.values(), |x, v| f.eval_prime_at(x, v))?;
        Ok(self.basis.multiplication_matrix(&weights))
    }

    fn apply_jacobian(&self, u: &Field, v: &Field) -> Result<Field> {
        let nu = self.basis.synthesize(u.coeffs());
        let nv = self.basis.synthesize(v.coeffs());
        let f = &self.f;
        let d = self.basis.map_nodal(&nu, |x, s| f.eval_prime_at(x, s))?;
        Ok(Field::new(self.basis.analyze(&d.component_mul(&nv))))
    }

    fn asymptotic(&self, u: &Field) -> Result<Field> {
        asymptotic_nemitskii(&self.f, &self.basis, u)
    }

    fn slope_bounds(&self) -> (f64, f64) {
        (self.f.slope_inf(), self.f.slope_sup())
    }

    fn asymptotic_slopes(&self) -> Option<(f64, f64)> {
        self.f.asymptotic_slopes()
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "nemitskii",
            "nonlinearity": self.f.describe(),
            "modulated": !self.f.is_autonomous(),
            "basis": self.basis.describe(),
        })
    }

    fn basis(&self) -> Option<&SpectralBasis> {
        Some(&self.basis)
    }

    fn nonlinearity(&self) -> Option<&Nonlinearity> {
        Some(&self.f)
    }
}

/// Gap data for a shifted spectrum and Lipschitz bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapData {
    pub gamma: f64,
    pub mu_p: f64,
    pub lambda_p_shifted: f64,
    pub lipschitz_n: f64,
    pub gap_c: f64,
    /// Modes whose shifted eigenvalue lies in `[−n, n]`.
    pub interacting: Vec<usize>,
}

impl GapData {
    pub fn ratio(&self) -> f64 {
        self.lipschitz_n / self.gap_c
    }
}

/// Overrides accepted by [`ProblemSpec::new`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProblemOptions {
    /// Distinguished mode (flat index); defaults to the ground state.
    pub p: Option<usize>,
    pub gamma: Option<f64>,
    pub lipschitz: Option<f64>,
}

/// `F(u) = diag(μ) u − N(u)` with the shift `γ` and the distinguished mode `p`.
#[derive(Clone)]
pub struct ProblemSpec {
    mu: Vec<f64>,
    op: Arc<dyn NonlinearOperator>,
    p: usize,
    gap: GapData,
    rhs: Option<Field>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("dim", &self.mu.len())
            .field("p", &self.p)
            .field("gap", &self.gap)
            .field("operator", &self.op.describe())
            .finish()
    }
}

/// Computes the gap data and checks hypothesis (H).
pub fn check_gap(mu: &[f64], p: usize, gamma: f64, n: f64) -> Result<GapData> {
    if p >= mu.len() {
        return Err(Error::InvalidArgument(format!(
            "mode {p} out of range for {} modes",
            mu.len()
        )));
    }
    let shifted: Vec<f64> = mu.iter().map(|m| m - gamma).collect();
    let interacting: Vec<usize> = (0..mu.len()).filter(|&k| shifted[k].abs() <= n).collect();
    if interacting.len() > 1 {
        return Err(Error::MultipleInteraction {
            modes: interacting,
            n,
        });
    }
    let c = shifted
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != p)
        .map(|(_, l)| l.abs())
        .fold(f64::INFINITY, f64::min);
    if !(n < c) {
        return Err(Error::GapViolated { n, c });
    }
    Ok(GapData {
        gamma,
        mu_p: mu[p],
        lambda_p_shifted: shifted[p],
        lipschitz_n: n,
        gap_c: c,
        interacting,
    })
}

impl ProblemSpec {
    /// Builds the problem from a raw spectrum and a nonlinear operator,
    /// validating (H).
    pub fn new(
        mu: Vec<f64>,
        op: Arc<dyn NonlinearOperator>,
        options: &ProblemOptions,
    ) -> Result<Self> {
        if mu.len() != op.dim() {
            return Err(Error::BasisMismatch {
                expected: mu.len(),
                got: op.dim(),
            });
        }
        let p = options.p.unwrap_or(0);
        let (a, b) = op.slope_bounds();
        let gamma = options.gamma.unwrap_or(0.5 * (a + b));
        let n = options
            .lipschitz
            .unwrap_or_else(|| (a - gamma).abs().max((b - gamma).abs()));
        let gap = check_gap(&mu, p, gamma, n)?;
        Ok(Self {
            mu,
            op,
            p,
            gap,
            rhs: None,
        })
    }

    /// PDE problem `−Δu − f(x, u)` on the given basis.
    pub fn from_basis(basis: SpectralBasis, f: Nonlinearity, options: &ProblemOptions) -> Result<Self> {
        let mu = basis.eigenvalues().to_vec();
        let options = ProblemOptions {
            p: Some(options.p.unwrap_or(basis.ground_state())),
            ..options.clone()
        };
        Self::new(mu, Arc::new(SpectralNemitskii::new(basis, f)), &options)
    }

    pub fn with_rhs(mut self, g: Field) -> Result<Self> {
        self.check(&g)?;
        self.rhs = Some(g);
        Ok(self)
    }

    pub fn rhs(&self) -> Option<&Field> {
        self.rhs.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Raw spectrum `μ_k` of `L + γ`.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Shifted eigenvalue `μ_k − γ`.
    pub fn lambda(&self, k: usize) -> f64 {
        self.mu[k] - self.gap.gamma
    }

    pub fn gap(&self) -> &GapData {
        &self.gap
    }

    pub fn gamma(&self) -> f64 {
        self.gap.gamma
    }

    pub fn operator(&self) -> &dyn NonlinearOperator {
        self.op.as_ref()
    }

    pub fn basis(&self) -> Option<&SpectralBasis> {
        self.op.basis()
    }

    /// Same operator with a different shift (gap data recomputed).
    pub fn reshifted(&self, gamma: f64, lipschitz: Option<f64>) -> Result<Self> {
        Self::new(
            self.mu.clone(),
            self.op.clone(),
            &ProblemOptions {
                p: Some(self.p),
                gamma: Some(gamma),
                lipschitz,
            },
        )
        .map(|ps| Self {
            rhs: self.rhs.clone(),
            ..ps
        })
    }

    /// Number of modes `k ≠ p` with negative shifted eigenvalue.
    pub fn negative_horizontal_modes(&self) -> usize {
        (0..self.dim())
            .filter(|&k| k != self.p && self.lambda(k) < 0.0)
            .count()
    }

    pub fn check(&self, u: &Field) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::BasisMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// `N(u) − γu`.
    pub fn n_shifted(&self, u: &Field) -> Result<Field> {
        let n = self.op.apply(u)?;
        Ok(Field::new(n.into_inner() - u.coeffs() * self.gap.gamma))
    }

    /// `F(u) = diag(μ)u − N(u)`.
    pub fn apply_f(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let n = self.op.apply(u)?;
        let lu = DVector::from_iterator(self.dim(), self.mu.iter().zip(u.iter()).map(|(m, c)| m * c));
        Ok(Field::new(lu - n.into_inner()))
    }

    /// `F(u) = L u − (N(u) − γu)` with `L = diag(μ) − γ`.
    pub fn apply_f_shifted(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let ns = self.n_shifted(u)?;
        let lu = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|k| self.lambda(k) * u[k]),
        );
        Ok(Field::new(lu - ns.into_inner()))
    }

    /// `DF(u) v = diag(μ) v − DN(u) v`.
    pub fn apply_jacobian(&self, u: &Field, v: &Field) -> Result<Field> {
        self.check(u)?;
        self.check(v)?;
        let dn = self.op.apply_jacobian(u, v)?;
        let lv = DVector::from_iterator(self.dim(), self.mu.iter().zip(v.iter()).map(|(m, c)| m * c));
        Ok(Field::new(lv - dn.into_inner()))
    }

    /// Symmetrized matrix of `DF(u)`.
    pub fn jacobian_matrix(&self, u: &Field) -> Result<DMatrix<f64>> {
        self.check(u)?;
        let dn = self.op.jacobian(u)?;
        let mut m = -(&dn + dn.transpose()) * 0.5;
        for (k, mu) in self.mu.iter().enumerate() {
            m[(k, k)] += mu;
        }
        Ok(m)
    }

    /// Graph norm on this problem's spectrum.
    pub fn norm_x(&self, u: &Field) -> f64 {
        u.norm_x(&self.mu)
    }

    /// `P u`: drops the `p` coefficient.
    pub fn project_h(&self, u: &Field) -> Field {
        let mut v = u.clone();
        v[self.p] = 0.0;
        v
    }

    /// `L⁻¹` on `H` (the `p` coefficient is mapped to 0).
    pub fn l_h_inverse(&self, z: &Field) -> Field {
        let mut w = Field::zeros(self.dim());
        for k in 0..self.dim() {
            if k != self.p {
                w[k] = z[k] / self.lambda(k);
            }
        }
        w
    }

    pub fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "dim": self.dim(),
            "p": self.p,
            "mu_p": self.gap.mu_p,
            "gamma": self.gap.gamma,
            "lambda_p_shifted": self.gap.lambda_p_shifted,
            "lipschitz_n": self.gap.lipschitz_n,
            "gap_c": self.gap.gap_c,
            "interacting": self.gap.interacting,
            "operator": self.op.describe(),
        })
    }
}

/// Right-hand side of the example on `[0,1]×[0,2]`:
/// `g = −100 x(x−1) y²(y−2) − 35 sin(πx) sin(πy/2)`.
pub fn ap2d_rhs(x: &[f64]) -> f64 {
    let (x, y) = (x[0], x[1]);
    -100.0 * (x * (x - 1.0) * y * y * (y - 2.0)) - 35.0 * (PI * x).sin() * (PI * y / 2.0).sin()
}

/// The rectangle example: `[0,1]×[0,2]`, arctan-Gaussian `f` with
/// `f(0) = 47.12`, interacting with `λ₁` only.
pub fn ap2d_problem(modes: usize, grid_factor: usize) -> Result<ProblemSpec> {
    let domain = BoxDomain::rectangle(1.0, 2.0)?;
    let basis = SpectralBasis::new(domain, &[modes, modes], grid_factor)?;
    let l1 = basis.eigenvalues()[0];
    let l2 = basis.eigenvalues()[1];
    let f = Nonlinearity::arctan_gauss_between(l1, l2, 47.12)?;
    let g = basis.project_function(ap2d_rhs)?;
    ProblemSpec::from_basis(basis, f, &ProblemOptions::default())?.with_rhs(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(modes: usize) -> SpectralBasis {
        SpectralBasis::new(BoxDomain::interval(PI).unwrap(), &[modes], 4).unwrap()
    }

    #[test]
    fn rectangle_example_gap_data() {
        let ps = ap2d_problem(16, 4).unwrap();
        let gap = ps.gap();
        assert!((gap.gamma - 12.337).abs() < 1e-3);
        assert!((gap.lipschitz_n - 3.701).abs() < 1e-3);
        assert!((gap.gap_c - 7.402).abs() < 1e-3);
        assert!((gap.ratio() - 0.5).abs() < 1e-6);
        assert_eq!(gap.interacting, vec![0]);
        assert_eq!(ps.p(), 0);
    }

    #[test]
    fn resonant_linear_problem_is_accepted() {
        let b = interval(8);
        let ps = ProblemSpec::from_basis(b, Nonlinearity::affine(1.0, 0.0), &ProblemOptions::default()).unwrap();
        assert!(ps.gap().lambda_p_shifted.abs() < 1e-12);
        assert_eq!(ps.gap().lipschitz_n, 0.0);
        let j = ps.jacobian_matrix(&Field::zeros(8)).unwrap();
        assert!(j[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn wide_window_is_rejected() {
        let f = Nonlinearity::smooth_convex(0.5, 4.5, 1.0, 0.0).unwrap();
        let err = ProblemSpec::from_basis(interval(8), f, &ProblemOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MultipleInteraction { ref modes, .. } if modes == &vec![0, 1]));
        let f = Nonlinearity::smooth_convex(3.0, 5.0, 1.0, 0.0).unwrap();
        let err = ProblemSpec::from_basis(interval(8), f, &ProblemOptions::default()).unwrap_err();
        assert!(matches!(err, Error::GapViolated { .. }));
    }

    #[test]
    fn zero_nonlinearity_gives_diagonal_operator() {
        let ps = ProblemSpec::from_basis(interval(8), Nonlinearity::affine(0.0, 0.0), &ProblemOptions::default()).unwrap();
        let u = Field::from_slice(&[1.0, -2.0, 0.5, 0.0, 3.0, 0.1, -0.2, 0.3]);
        let fu = ps.apply_f(&u).unwrap();
        for k in 0..8 {
            assert!((fu[k] - ((k + 1) * (k + 1)) as f64 * u[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn f_at_zero_is_minus_projected_constant() {
        let ps = ap2d_problem(8, 4).unwrap();
        let fu = ps.apply_f(&Field::zeros(64)).unwrap();
        let c = ps.basis().unwrap().constant(47.12);
        assert!((fu.coeffs() + c.coeffs()).norm() < 1e-12);
    }

    #[test]
    fn constant_slope_jacobian_is_diagonal() {
        let ps = ProblemSpec::from_basis(interval(8), Nonlinearity::affine(2.5, 1.0), &ProblemOptions::default()).unwrap();
        let u = Field::from_slice(&[0.3, 0.1, -0.7, 0.0, 0.2, 0.0, 0.0, 1.0]);
        let j = ps.jacobian_matrix(&u).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                let expect = if r == c { ((r + 1) * (r + 1)) as f64 - 2.5 } else { 0.0 };
                assert!((j[(r, c)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shifted_and_raw_forms_agree() {
        let ps = ap2d_problem(8, 4).unwrap();
        let u = Field::new(DVector::from_fn(64, |i, _| ((i * 7 % 11) as f64 - 5.0) / (1.0 + i as f64)));
        let a = ps.apply_f(&u).unwrap();
        let b = ps.apply_f_shifted(&u).unwrap();
        assert!((a.coeffs() - b.coeffs()).norm() <= 1e-12 * a.norm_y());
    }

    #[test]
    fn jacobian_is_symmetric_before_symmetrization() {
        let ps = ap2d_problem(8, 4).unwrap();
        let u = Field::new(DVector::from_fn(64, |i, _| 10.0 * ((i as f64) * 0.37).sin() / (1.0 + i as f64)));
        let m = ps.operator().jacobian(&u).unwrap();
        assert!((&m - m.transpose()).norm() <= 1e-12 * m.norm());
    }
}
