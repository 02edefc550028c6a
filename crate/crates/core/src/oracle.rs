//! Independent checks: damped Newton multistart, finite-dimensional matrix
//! models and the fold and cusp normal forms.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    classified_critical_points, classify_morin, critical_points, uniform_grid, window_tolerances, AnalysisOptions, CriticalPoint,
    EigenProbe, HeightEval, HeightModel, Preimage, PreimageSet,
};
use crate::error::{Error, Result};
use crate::problem::{NonlinearOperator, ProblemOptions, ProblemSpec};
use crate::spectral::Field;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Convergence threshold on `‖F(u) − g‖_Y`.
    pub tol: f64,
    pub max_iters: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub min_step: f64,
    /// Solutions closer than this in `Y` are merged.
    pub dedup: f64,
    /// Range of `t = ⟨u, φ_p⟩` for structured and random starts.
    pub t_window: (f64, f64),
    /// Extra Newton steps after convergence.
    pub polish_steps: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 80,
            armijo: 1e-4,
            min_step: 1e-8,
            dedup: 1e-4,
            t_window: (-50.0, 50.0),
            polish_steps: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultistartResult {
    pub set: PreimageSet,
    pub starts: usize,
    pub converged: usize,
    pub dropped: usize,
}

fn residual(ps: &ProblemSpec, u: &Field, g: &Field) -> Result<DVector<f64>> {
    Ok(ps.apply_f(u)?.into_inner() - g.coeffs())
}

/// Damped Newton from one start; `None` when it stalls or diverges.
pub fn newton_solve(ps: &ProblemSpec, g: &Field, start: Field, opts: &NewtonOptions) -> Result<Option<(Field, f64)>> {
    let mut u = start;
    let mut r = residual(ps, &u, g)?;
    let mut rn = r.norm();
    let mut extra = 0;
    for _ in 0..opts.max_iters {
        if !rn.is_finite() {
            return Ok(None);
        }
        if rn <= opts.tol {
            if extra >= opts.polish_steps {
                break;
            }
            extra += 1;
        }
        let j = ps.jacobian_matrix(&u)?;
        let Some(step) = j.lu().solve(&(-&r)) else {
            return Ok(None);
        };
        let mut alpha = 1.0;
        loop {
            let trial = Field::new(u.coeffs() + &step * alpha);
            let rt = residual(ps, &trial, g)?;
            let rtn = rt.norm();
            if rtn.is_finite() && rtn * rtn <= (1.0 - 2.0 * opts.armijo * alpha) * rn * rn {
                u = trial;
                r = rt;
                rn = rtn;
                break;
            }
            alpha *= 0.5;
            if alpha < opts.min_step {
                // no decrease possible: either converged to roundoff or stalled
                return Ok(if rn <= opts.tol { Some((u, rn)) } else { None });
            }
        }
    }
    Ok(if rn <= opts.tol { Some((u, rn)) } else { None })
}

/// Initial points: `L_H⁻¹ P g + t φ_p` on a grid of `t`, multiples of `φ_p`,
/// `diag(μ)⁻¹ g`, and random horizontal perturbations.
pub fn multistart_points(ps: &ProblemSpec, g: &Field, n_starts: usize, seed: u64, opts: &NewtonOptions) -> Vec<Field> {
    let p = ps.p();
    let dim = ps.dim();
    let base = ps.l_h_inverse(&ps.project_h(g));
    let (lo, hi) = opts.t_window;
    let mut out = Vec::with_capacity(n_starts);
    let mut raw = Field::zeros(dim);
    for k in 0..dim {
        if ps.mu()[k] != 0.0 {
            raw[k] = g[k] / ps.mu()[k];
        }
    }
    out.push(raw);
    let n_grid = n_starts / 2;
    for t in uniform_grid(lo, hi, n_grid.max(1)) {
        if out.len() % 8 == 7 {
            out.push(Field::unit(dim, p).into_inner().scale(t).into());
        } else {
            let mut u = base.clone();
            u[p] = t;
            out.push(u);
        }
    }
    let scale = 0.1 * (1.0 + base.norm_y());
    let mut i = 0u64;
    while out.len() < n_starts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut u = base.clone();
        for k in 0..dim {
            if k != p {
                u[k] += scale * rng.random_range(-1.0..1.0) / (1.0 + ps.lambda(k).abs()).sqrt();
            }
        }
        u[p] = rng.random_range(lo..hi);
        out.push(u);
        i += 1;
    }
    out.truncate(n_starts.max(1));
    out
}

/// Newton multistart search for all solutions of `F(u) = g`. Starts run in
/// parallel and merge deterministically, so the result depends only on the
/// seed.
pub fn newton_multistart(ps: &ProblemSpec, g: &Field, n_starts: usize, seed: u64, opts: &NewtonOptions) -> Result<MultistartResult> {
    if n_starts == 0 {
        return Err(Error::InvalidArgument("need at least one start".into()));
    }
    ps.check(g)?;
    let starts = multistart_points(ps, g, n_starts, seed, opts);
    let results: Vec<Option<(Field, f64)>> = starts
        .into_par_iter()
        .map(|u0| newton_solve(ps, g, u0, opts))
        .collect::<Result<_>>()?;
    let converged = results.iter().filter(|r| r.is_some()).count();
    let mut found: Vec<(Field, f64)> = results.into_iter().flatten().collect();
    let p = ps.p();
    found.sort_by(|a, b| a.0[p].total_cmp(&b.0[p]).then(a.1.total_cmp(&b.1)));
    let mut unique: Vec<(Field, f64)> = Vec::new();
    for (u, r) in found {
        match unique.iter_mut().find(|(v, _)| (v.coeffs() - u.coeffs()).norm() <= opts.dedup) {
            Some(slot) => {
                if r < slot.1 {
                    *slot = (u, r);
                }
            }
            None => unique.push((u, r)),
        }
    }
    unique.sort_by(|a, b| a.0[p].total_cmp(&b.0[p]));
    let solutions = unique
        .into_iter()
        .map(|(u, residual)| Preimage {
            t: u[p],
            u: Some(u),
            residual,
            touch: false,
        })
        .collect();
    Ok(MultistartResult {
        set: PreimageSet {
            target: g.clone(),
            target_height: g[p],
            z0: ps.project_h(g),
            window: opts.t_window,
            solutions,
            warnings: Vec::new(),
        },
        starts: n_starts,
        converged,
        dropped: n_starts - converged,
    })
}

/// Set comparison of two preimage sets in the `Y` norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetComparison {
    pub count_a: usize,
    pub count_b: usize,
    pub matched: usize,
    pub max_distance: f64,
    pub tol: f64,
    pub equal: bool,
}

impl SetComparison {
    pub fn summary(&self) -> String {
        if self.equal {
            format!("MATCH: {} = {}", self.count_a, self.count_b)
        } else {
            format!("MISMATCH: {} vs {} ({} matched)", self.count_a, self.count_b, self.matched)
        }
    }
}

pub fn compare_sets(a: &PreimageSet, b: &PreimageSet, tol: f64) -> SetComparison {
    let ua: Vec<&Field> = a.solutions.iter().filter_map(|s| s.u.as_ref()).collect();
    let ub: Vec<&Field> = b.solutions.iter().filter_map(|s| s.u.as_ref()).collect();
    let mut used = vec![false; ub.len()];
    let mut matched = 0;
    let mut max_distance = 0.0f64;
    for x in &ua {
        let best = ub
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x.coeffs() - y.coeffs()).norm()))
            .min_by(|l, r| l.1.total_cmp(&r.1));
        if let Some((j, d)) = best {
            max_distance = max_distance.max(d);
            if d <= tol {
                used[j] = true;
                matched += 1;
            }
        }
    }
    let equal = ua.len() == ub.len() && matched == ua.len() && ua.len() == a.len() && ub.len() == b.len();
    SetComparison {
        count_a: a.len(),
        count_b: b.len(),
        matched,
        max_distance,
        tol,
        equal,
    }
}

/// `N(u) = Qᵀ [a_i sin((Q u)_i + θ_i)]` with an orthogonal `Q`.
#[derive(Clone, Debug)]
pub struct SineMixOperator {
    q: DMatrix<f64>,
    amplitudes: DVector<f64>,
    phases: DVector<f64>,
}

impl SineMixOperator {
    pub fn new(q: DMatrix<f64>, amplitudes: Vec<f64>, phases: Vec<f64>) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n || amplitudes.len() != n || phases.len() != n {
            return Err(Error::InvalidArgument("mixing, amplitudes and phases must share one dimension".into()));
        }
        let defect = (q.transpose() * &q - DMatrix::identity(n, n)).amax();
        if defect > 1e-10 {
            return Err(Error::InvalidArgument(format!("mixing matrix is not orthogonal (defect {defect:e})")));
        }
        if amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidArgument("amplitudes must be finite and nonnegative".into()));
        }
        Ok(Self {
            q,
            amplitudes: DVector::from_vec(amplitudes),
            phases: DVector::from_vec(phases),
        })
    }

    fn max_amplitude(&self) -> f64 {
        self.amplitudes.iter().fold(0.0, |a, b| a.max(*b))
    }
}

impl NonlinearOperator for SineMixOperator {
    fn dim(&self) -> usize {
        self.q.nrows()
    }

    fn apply(&self, u: &Field) -> Result<Field> {
        let x = &self.q * u.coeffs() + &self.phases;
        let s = x.zip_map(&self.amplitudes, |x, a| a * x.sin());
        Ok(Field::new(self.q.transpose() * s))
    }

    fn jacobian(&self, u: &Field) -> Result<DMatrix<f64>> {
        let x = &self.q * u.coeffs() + &self.phases;
        let d = x.zip_map(&self.amplitudes, |x, a| a * x.cos());
        Ok(self.q.transpose() * DMatrix::from_diagonal(&d) * &self.q)
    }

    /// Bounded, so `N(su)/s → 0`.
    fn asymptotic(&self, u: &Field) -> Result<Field> {
        Ok(Field::zeros(u.len()))
    }

    fn slope_bounds(&self) -> (f64, f64) {
        let a = self.max_amplitude();
        (-a, a)
    }

    fn asymptotic_slopes(&self) -> Option<(f64, f64)> {
        Some((0.0, 0.0))
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "sine-mix",
            "dim": self.dim(),
            "amplitudes": self.amplitudes.as_slice(),
            "phases": self.phases.as_slice(),
        })
    }
}

/// Finite-dimensional model: `F(u) = diag(λ) u − N(u)` with a sine-mixing `N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixModelSpec {
    pub spectrum: Vec<f64>,
    pub p: usize,
    /// Orthogonal mixing matrix, row-major; identity when absent.
    #[serde(default)]
    pub mixing: Option<Vec<Vec<f64>>>,
    pub amplitudes: Vec<f64>,
    #[serde(default)]
    pub phases: Option<Vec<f64>>,
}

/// Builds the model with `γ = 0` and `n = max a_i`, rejecting violations of
/// the gap condition.
pub fn make_matrix_model(spec: &MatrixModelSpec) -> Result<ProblemSpec> {
    let n = spec.spectrum.len();
    if n == 0 || spec.p >= n {
        return Err(Error::InvalidArgument(format!("p = {} out of range for dimension {n}", spec.p)));
    }
    let q = match &spec.mixing {
        Some(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::InvalidArgument("mixing matrix has the wrong shape".into()));
            }
            DMatrix::from_fn(n, n, |i, j| rows[i][j])
        }
        None => DMatrix::identity(n, n),
    };
    let phases = spec.phases.clone().unwrap_or_else(|| vec![0.0; n]);
    let op = SineMixOperator::new(q, spec.amplitudes.clone(), phases)?;
    ProblemSpec::new(
        spec.spectrum.clone(),
        Arc::new(op),
        &ProblemOptions {
            p: Some(spec.p),
            gamma: Some(0.0),
            lipschitz: None,
        },
    )
}

/// Random model with `|λ_p| ∈ [0.3n, 0.9n]` and the other eigenvalues at
/// least `1.5n` away from 0.
pub fn random_matrix_spec(rng: &mut impl Rng, dim: usize) -> MatrixModelSpec {
    let n_amp: f64 = rng.random_range(0.5..1.5);
    let p = rng.random_range(0..dim);
    let spectrum: Vec<f64> = (0..dim)
        .map(|k| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            if k == p {
                sign * rng.random_range(0.3..0.9) * n_amp
            } else {
                sign * (1.5 * n_amp + rng.random_range(0.0..3.0))
            }
        })
        .collect();
    let gauss = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let q = gauss.qr().q();
    let top = rng.random_range(0..dim);
    let amplitudes: Vec<f64> = (0..dim)
        .map(|i| if i == top { n_amp } else { rng.random_range(0.3..1.0) * n_amp })
        .collect();
    let phases: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    MatrixModelSpec {
        spectrum,
        p,
        mixing: Some((0..dim).map(|i| (0..dim).map(|j| q[(i, j)]).collect()).collect()),
        amplitudes,
        phases: Some(phases),
    }
}

/// Window `|t| ≤ (|s| + ‖a‖)/|λ_p| + 1` that contains every preimage of a
/// matrix model.
pub fn matrix_model_window(ps: &ProblemSpec, s: f64, amplitudes: &[f64]) -> (f64, f64) {
    let bound = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
    let t = (s.abs() + bound) / ps.lambda(ps.p()).abs() + 1.0;
    (-t, t)
}

/// Lower and upper ratios `‖PF_t(w₁) − PF_t(w₂)‖ / ‖w₁ − w₂‖` over the given
/// horizontal pairs.
pub fn bi_lipschitz_constants(ps: &ProblemSpec, t: f64, pairs: &[(Field, Field)]) -> Result<(f64, f64)> {
    let p = ps.p();
    let pf = |w: &Field| -> Result<Field> {
        let mut u = ps.project_h(w);
        u[p] = t;
        Ok(ps.project_h(&ps.apply_f(&u)?))
    };
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for (a, b) in pairs {
        let d = (ps.project_h(a).into_inner() - ps.project_h(b).coeffs()).norm();
        if d == 0.0 {
            continue;
        }
        let r = (pf(a)?.into_inner() - pf(b)?.coeffs()).norm() / d;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((lo, hi))
}

/// Random horizontal pairs within radius `scale` of the origin.
pub fn random_pairs(ps: &ProblemSpec, count: usize, scale: f64, seed: u64) -> Vec<(Field, Field)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = ps.dim();
    let draw = |rng: &mut ChaCha8Rng| ps.project_h(&Field::from((0..dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect::<Vec<f64>>()));
    (0..count).map(|_| (draw(&mut rng), draw(&mut rng))).collect()
}

/// Random horizontal points in the cube of half-width `scale`.
pub fn random_points(ps: &ProblemSpec, count: usize, scale: f64, seed: u64) -> Vec<Field> {
    random_pairs(ps, count.div_ceil(2), scale, seed)
        .into_iter()
        .flat_map(|(a, b)| [a, b])
        .take(count)
        .collect()
}

/// Extreme singular values of `D_w PF_t(w)` over the sample points.
///
/// `PF_t` is a C¹ homeomorphism of `H`, so its Lipschitz constant is
/// `sup σ_max` and that of its inverse is `1 / inf σ_min`; sampling the
/// derivative over a wide region estimates both far more tightly than pair
/// quotients, whose directions are random.
pub fn derivative_bounds(ps: &ProblemSpec, t: f64, points: &[Field]) -> Result<(f64, f64)> {
    let p = ps.p();
    let h: Vec<usize> = (0..ps.dim()).filter(|k| *k != p).collect();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for w in points {
        let mut u = ps.project_h(w);
        u[p] = t;
        let jh = ps.jacobian_matrix(&u)?.select_rows(&h).select_columns(&h);
        let sv = jh.singular_values();
        lo = lo.min(sv.min());
        hi = hi.max(sv.max());
    }
    Ok((lo, hi))
}

/// Relative spread `(max − min)/min` of the sampled constants across `ts`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiLipschitzReport {
    pub ts: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower_spread: f64,
    pub upper_spread: f64,
}

fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    let hi = v.iter().fold(0.0f64, |a, b| a.max(*b));
    (hi - lo) / lo
}

impl BiLipschitzReport {
    fn new(ts: &[f64], bounds: Vec<(f64, f64)>) -> Self {
        let (lower, upper): (Vec<f64>, Vec<f64>) = bounds.into_iter().unzip();
        Self {
            ts: ts.to_vec(),
            lower_spread: spread(&lower),
            upper_spread: spread(&upper),
            lower,
            upper,
        }
    }

    pub fn max_spread(&self) -> f64 {
        self.lower_spread.max(self.upper_spread)
    }
}

/// Constants from the derivative at `points`, for each `t`.
pub fn bi_lipschitz_report(ps: &ProblemSpec, ts: &[f64], points: &[Field]) -> Result<BiLipschitzReport> {
    let bounds = ts.iter().map(|&t| derivative_bounds(ps, t, points)).collect::<Result<Vec<_>>>()?;
    Ok(BiLipschitzReport::new(ts, bounds))
}

/// Constants from difference quotients over `pairs`, for each `t`.
pub fn pair_quotient_report(ps: &ProblemSpec, ts: &[f64], pairs: &[(Field, Field)]) -> Result<BiLipschitzReport> {
    let bounds = ts.iter().map(|&t| bi_lipschitz_constants(ps, t, pairs)).collect::<Result<Vec<_>>>()?;
    Ok(BiLipschitzReport::new(ts, bounds))
}

/// 4×4 instance in which two middle eigenvalues of `DF(u)` cross along the
/// fiber through [`collision_fiber_z0`], about 0.73 away from the critical
/// points `t = ±π/2` of the height.
pub fn collision_demo() -> Result<ProblemSpec> {
    make_matrix_model(&MatrixModelSpec {
        spectrum: vec![-3.0, 0.0, 1.2, 3.0],
        p: 1,
        mixing: None,
        amplitudes: vec![0.9; 4],
        phases: None,
    })
}

/// Horizontal point whose fiber has `DF` entry `0.6` in mode 2, so the
/// tracked eigenvalue `−0.9 cos t` meets it at `cos t = −2/3`.
pub fn collision_fiber_z0() -> Field {
    let w: f64 = (2.0f64 / 3.0).acos();
    Field::from(vec![0.0, 0.0, 1.2 * w - 0.9 * w.sin(), 0.0])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyKind {
    Fold,
    Cusp,
}

/// Height models in adapted coordinates: `−t²` (fold) and
/// `t³ − ⟨z, φ̃⟩ t` (cusp, with `φ̃` the first horizontal coordinate).
/// The last coordinate of `z` plays the role of `φ_p` and is ignored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalFormToy {
    pub kind: ToyKind,
    pub dim: usize,
}

impl NormalFormToy {
    pub fn new(kind: ToyKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("toy needs at least one horizontal dimension".into()));
        }
        Ok(Self { kind, dim })
    }

    /// `z` with `⟨z, φ̃⟩ = c`.
    pub fn z_along(&self, c: f64) -> Field {
        let mut z = Field::zeros(self.dim + 1);
        z[0] = c;
        z
    }
}

impl HeightModel for NormalFormToy {
    fn z_dim(&self) -> usize {
        self.dim + 1
    }

    fn h_directions(&self) -> Vec<usize> {
        (0..self.dim).collect()
    }

    fn eval(&self, z: &Field, t: f64) -> Result<HeightEval> {
        let (height, slope) = match self.kind {
            ToyKind::Fold => (-t * t, -2.0 * t),
            ToyKind::Cusp => (t * t * t - z[0] * t, 3.0 * t * t - z[0]),
        };
        Ok(HeightEval { t, height, slope, u: None })
    }

    /// `DF = diag(1, …, 1, D_t h)`, with the vertical entry tracked.
    fn probe(&self, z: &Field, t: f64) -> Result<Option<EigenProbe>> {
        let d = self.eval(z, t)?.slope;
        let mut eigenvalues = vec![1.0; self.dim];
        eigenvalues.push(d);
        eigenvalues.sort_by(f64::total_cmp);
        let tracked_index = eigenvalues.iter().position(|v| *v == d).unwrap_or(0);
        Ok(Some(EigenProbe {
            eigenvalues,
            tracked_index,
        }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyReport {
    pub kind: ToyKind,
    pub dim: usize,
    /// Classification of the critical point at the origin.
    pub origin: CriticalPoint,
    /// `⟨z, φ̃⟩` values of the sweep.
    pub sweep: Vec<f64>,
    /// Critical-point count on each swept fiber.
    pub counts: Vec<usize>,
    pub expected_order: u8,
    pub order_ok: bool,
}

/// Classifies the toy at `(0, 0)` and counts critical points on fibers with
/// `⟨z, φ̃⟩ ∈ {−1, 0, 1}`.
pub fn normal_form_toy(kind: ToyKind, dim: usize, opts: &AnalysisOptions) -> Result<ToyReport> {
    let toy = NormalFormToy::new(kind, dim)?;
    let ts = uniform_grid(-2.0, 2.0, 401);
    let sweep = vec![-1.0, 0.0, 1.0];
    let counts = sweep
        .iter()
        .map(|&c| {
            let z = toy.z_along(c);
            Ok(critical_points(&toy, &z, &toy.sample(&z, &ts)?, opts)?.len())
        })
        .collect::<Result<Vec<_>>>()?;
    let z0 = toy.z_along(0.0);
    let samples = toy.sample(&z0, &ts)?;
    let found = classified_critical_points(&toy, &z0, &samples, opts)?;
    let origin = match found.into_iter().min_by(|a, b| a.t_star.abs().total_cmp(&b.t_star.abs())) {
        Some(cp) => cp,
        None => {
            let tol = window_tolerances(&samples, opts);
            let cp = crate::analysis::critical_point_at(&toy, &z0, 0.0, 4.0 * 2.5e-4, &tol)?;
            classify_morin(&toy, &z0, &cp, &tol, 4.0 * 2.5e-4, opts)?
        }
    };
    let expected_order = match kind {
        ToyKind::Fold => 1,
        ToyKind::Cusp => 2,
    };
    Ok(ToyReport {
        kind,
        dim,
        order_ok: origin.morin_order == Some(expected_order) && origin.transversality_ok,
        origin,
        sweep,
        counts,
        expected_order,
    })
}
