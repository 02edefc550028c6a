//! Critical points and preimages along fibers, with the link between the
//! tracked eigenvalue of `DF(u)` and `D_t h^a`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contraction::SolveOptions;
use crate::error::{Error, Result};
use crate::fiber::{fiber_point, trace_on_grid, FiberTrace};
use crate::problem::ProblemSpec;
use crate::spectral::Field;

/// One evaluation of a height function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightEval {
    pub t: f64,
    pub height: f64,
    pub slope: f64,
    /// Point of the domain, when the model has one.
    pub u: Option<Field>,
}

/// Ascending spectrum of `DF(u)` with the index of the eigenvalue that
/// follows `D_t h^a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenProbe {
    pub eigenvalues: Vec<f64>,
    pub tracked_index: usize,
}

impl EigenProbe {
    pub fn tracked(&self) -> f64 {
        self.eigenvalues[self.tracked_index]
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Distance from the tracked eigenvalue to its neighbours.
    pub fn gap(&self) -> f64 {
        let i = self.tracked_index;
        let v = &self.eigenvalues;
        let below = if i > 0 { v[i] - v[i - 1] } else { f64::INFINITY };
        let above = if i + 1 < v.len() { v[i + 1] - v[i] } else { f64::INFINITY };
        below.min(above)
    }
}

/// A family of height functions `t ↦ h(z, t)` indexed by `z`.
pub trait HeightModel: Sync {
    /// Length of `z` vectors.
    fn z_dim(&self) -> usize;

    /// Coordinates of `z` that may be perturbed (the horizontal modes).
    fn h_directions(&self) -> Vec<usize>;

    fn eval(&self, z: &Field, t: f64) -> Result<HeightEval>;

    fn height(&self, z: &Field, t: f64) -> Result<f64> {
        Ok(self.eval(z, t)?.height)
    }

    fn slope(&self, z: &Field, t: f64) -> Result<f64> {
        Ok(self.eval(z, t)?.slope)
    }

    /// Evaluations on an increasing grid.
    fn sample(&self, z: &Field, ts: &[f64]) -> Result<Vec<HeightEval>> {
        ts.iter().map(|&t| self.eval(z, t)).collect()
    }

    /// Spectrum of the linearization at `(z, t)`, if the model has one.
    fn probe(&self, _z: &Field, _t: f64) -> Result<Option<EigenProbe>> {
        Ok(None)
    }

    /// Residual of a candidate preimage of height `s`.
    fn preimage_residual(&self, _z: &Field, s: f64, e: &HeightEval) -> Result<f64> {
        Ok((e.height - s).abs())
    }
}

/// Spectrum of `DF(u)` with the tracked index `#{k ≠ p : λ_k < 0}`.
pub fn eigen_probe(ps: &ProblemSpec, u: &Field) -> Result<EigenProbe> {
    let j = ps.jacobian_matrix(u)?;
    let mut eigenvalues: Vec<f64> = j.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    Ok(EigenProbe {
        eigenvalues,
        tracked_index: ps.negative_horizontal_modes(),
    })
}

/// Height model backed by contraction fibers of a [`ProblemSpec`].
pub struct FiberModel<'a> {
    pub ps: &'a ProblemSpec,
    pub opts: SolveOptions,
}

impl<'a> FiberModel<'a> {
    pub fn new(ps: &'a ProblemSpec, opts: SolveOptions) -> Self {
        Self { ps, opts }
    }

    pub fn trace(&self, z: &Field, ts: &[f64]) -> Result<FiberTrace> {
        trace_on_grid(self.ps, z, ts, &self.opts)
    }
}

impl HeightModel for FiberModel<'_> {
    fn z_dim(&self) -> usize {
        self.ps.dim()
    }

    fn h_directions(&self) -> Vec<usize> {
        (0..self.ps.dim()).filter(|&k| k != self.ps.p()).collect()
    }

    fn eval(&self, z: &Field, t: f64) -> Result<HeightEval> {
        let pt = fiber_point(self.ps, z, t, &self.opts)?;
        Ok(HeightEval {
            t,
            height: pt.height,
            slope: pt.slope,
            u: Some(pt.u),
        })
    }

    fn height(&self, z: &Field, t: f64) -> Result<f64> {
        let rep = crate::contraction::solve_projected(self.ps, z, t, &self.opts)?;
        let mut u = rep.solution;
        u[self.ps.p()] = t;
        let p = self.ps.p();
        Ok(self.ps.lambda(p) * t - self.ps.n_shifted(&u)?[p])
    }

    fn sample(&self, z: &Field, ts: &[f64]) -> Result<Vec<HeightEval>> {
        Ok(self
            .trace(z, ts)?
            .points
            .into_iter()
            .map(|p| HeightEval {
                t: p.t,
                height: p.height,
                slope: p.slope,
                u: Some(p.u),
            })
            .collect())
    }

    fn probe(&self, z: &Field, t: f64) -> Result<Option<EigenProbe>> {
        let e = self.eval(z, t)?;
        Ok(Some(eigen_probe(self.ps, e.u.as_ref().expect("fiber point"))?))
    }

    fn preimage_residual(&self, z: &Field, s: f64, e: &HeightEval) -> Result<f64> {
        let u = e.u.as_ref().expect("fiber point");
        let mut g = self.ps.project_h(z);
        g[self.ps.p()] = s;
        Ok((self.ps.apply_f(u)?.into_inner() - g.coeffs()).norm())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindTag {
    Fold,
    Cusp,
    Swallowtail,
    Unclassified,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extremum {
    Max,
    Min,
    None,
}

/// Rank check of the unfolding Jacobian at a degenerate critical point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transversality {
    pub required_rank: usize,
    /// Rank of `D(D_t h, …, D_t^k h)` with respect to `(z, t)`.
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// Rank of `D(h, …, D_t^{k−1} h)` with respect to `(z, t)`.
    pub value_rank: usize,
    pub directions_sampled: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub t_star: f64,
    pub height: f64,
    pub u_star: Option<Field>,
    /// `None` when unclassified.
    pub morin_order: Option<u8>,
    pub kind_tag: KindTag,
    pub extremum: Extremum,
    pub lambda_min: Option<f64>,
    pub tracked_eigenvalue: Option<f64>,
    /// `D_t^j h^a(t_star)` for `j = 1..4`.
    pub derivative_table: [f64; 4],
    pub transversality_ok: bool,
    pub transversality: Option<Transversality>,
    /// Set when the refined `|D_t h|` stays above its tolerance.
    pub low_confidence: bool,
}

/// Zero tolerances `τ_j = rel · max_window |D_t^j h|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeTolerances {
    pub tau: [f64; 4],
    /// Nonzero band multiplier: `|D^j| ≥ band · τ_j` counts as nonzero.
    pub band: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub zero_rel: f64,
    pub band: f64,
    /// Finite-difference step in `t`; defaults to `2.5e−4 ·` window length.
    pub fd_step: Option<f64>,
    /// Finite-difference step for perturbations of `z`.
    pub z_step: f64,
    pub max_coordinate_directions: usize,
    pub random_directions: usize,
    pub rank_rel_tol: f64,
    pub seed: u64,
    /// Tolerance on `|h − s|` when refining preimages.
    pub root_tol: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            zero_rel: 1e-5,
            band: 100.0,
            fd_step: None,
            z_step: 1e-3,
            max_coordinate_directions: 8,
            random_directions: 4,
            rank_rel_tol: 1e-6,
            seed: 0x5eed,
            root_tol: 1e-10,
        }
    }
}

fn divided_differences(ts: &[f64], ys: &[f64]) -> Vec<f64> {
    ts.windows(2)
        .zip(ys.windows(2))
        .map(|(t, y)| (y[1] - y[0]) / (t[1] - t[0]))
        .collect()
}

/// Window tolerances from sampled slopes (higher derivatives by divided
/// differences).
pub fn window_tolerances(samples: &[HeightEval], opts: &AnalysisOptions) -> DerivativeTolerances {
    let mut ts: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let mut ys: Vec<f64> = samples.iter().map(|s| s.slope).collect();
    let mut tau = [0.0; 4];
    for (j, slot) in tau.iter_mut().enumerate() {
        let m = ys.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        *slot = opts.zero_rel * m;
        if j < 3 && ys.len() > 1 {
            ys = divided_differences(&ts, &ys);
            ts = ts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        }
    }
    DerivativeTolerances {
        tau,
        band: opts.band,
    }
}

/// Illinois false position on a bracket with `fa · fb < 0`.
pub fn illinois(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut fa: f64,
    mut b: f64,
    mut fb: f64,
    ftol: f64,
    xtol: f64,
) -> Result<(f64, f64)> {
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c.is_finite() && c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
        let fc = f(c)?;
        if fc.abs() <= ftol || (b - a).abs() <= xtol {
            return Ok((c, fc));
        }
        if fc * fb < 0.0 {
            a = b;
            fa = fb;
        } else {
            fa *= 0.5;
        }
        b = c;
        fb = fc;
    }
    Ok(if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) })
}

/// Golden-section minimization of `f` on `[a, b]`.
pub fn golden_min(mut f: impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, xtol: f64) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..200 {
        if (b - a).abs() <= xtol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

/// `[h, D_t h, D_t² h, D_t³ h, D_t⁴ h]` at `t`, from the analytic slope and
/// centered differences of it.
pub fn derivative_table<M: HeightModel + ?Sized>(model: &M, z: &Field, t: f64, delta: f64) -> Result<[f64; 5]> {
    let e = model.eval(z, t)?;
    let s = |x: f64| model.slope(z, x);
    let (sp1, sm1, sp2, sm2) = (s(t + delta)?, s(t - delta)?, s(t + 2.0 * delta)?, s(t - 2.0 * delta)?);
    let d2 = (8.0 * (sp1 - sm1) - (sp2 - sm2)) / (12.0 * delta);
    let d3 = (sp1 - 2.0 * e.slope + sm1) / (delta * delta);
    let d4 = (sp2 - 2.0 * sp1 + 2.0 * sm1 - sm2) / (2.0 * delta.powi(3));
    Ok([e.height, e.slope, d2, d3, d4])
}

fn order_from_table(table: &[f64; 4], tol: &DerivativeTolerances) -> Option<u8> {
    let zero = |j: usize| table[j].abs() < tol.tau[j];
    let nonzero = |j: usize| table[j].abs() >= tol.band * tol.tau[j];
    if nonzero(1) {
        Some(1)
    } else if zero(1) && nonzero(2) {
        Some(2)
    } else if zero(1) && zero(2) && nonzero(3) {
        Some(3)
    } else {
        None
    }
}

fn kind_of(order: Option<u8>) -> KindTag {
    match order {
        Some(1) => KindTag::Fold,
        Some(2) => KindTag::Cusp,
        Some(3) => KindTag::Swallowtail,
        _ => KindTag::Unclassified,
    }
}

fn default_delta(samples: &[HeightEval], opts: &AnalysisOptions) -> f64 {
    opts.fd_step.unwrap_or_else(|| {
        let span = samples.last().map(|s| s.t).unwrap_or(1.0) - samples.first().map(|s| s.t).unwrap_or(0.0);
        2.5e-4 * span.abs().max(1e-3)
    })
}

/// Locates the interior critical points of `t ↦ h(z, t)` from samples:
/// sign changes of the slope (refined by Illinois) and touch minima of
/// `|D_t h|` below `τ₁` (refined by golden section).
pub fn critical_points<M: HeightModel + ?Sized>(
    model: &M,
    z: &Field,
    samples: &[HeightEval],
    opts: &AnalysisOptions,
) -> Result<Vec<CriticalPoint>> {
    if samples.len() < 3 {
        return Err(Error::InvalidArgument("need at least three samples".into()));
    }
    let tol = window_tolerances(samples, opts);
    let tau1 = tol.tau[0];
    let spacing = samples.windows(2).map(|w| w[1].t - w[0].t).fold(f64::INFINITY, f64::min);
    let xtol = 1e-13 * (1.0 + samples.iter().map(|s| s.t.abs()).fold(0.0, f64::max));
    let mut roots: Vec<f64> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if s.slope == 0.0 && i > 0 && i + 1 < samples.len() {
            roots.push(s.t);
        }
    }
    for w in samples.windows(2) {
        if w[0].slope * w[1].slope < 0.0 {
            let (t, _) = illinois(|x| model.slope(z, x), w[0].t, w[0].slope, w[1].t, w[1].slope, 1e-3 * tau1, xtol)?;
            roots.push(t);
        }
    }
    for i in 1..samples.len() - 1 {
        let (a, b, c) = (&samples[i - 1], &samples[i], &samples[i + 1]);
        let same_sign = a.slope * b.slope > 0.0 && b.slope * c.slope > 0.0;
        if same_sign && b.slope.abs() <= a.slope.abs() && b.slope.abs() <= c.slope.abs() {
            let (t, v) = golden_min(|x| Ok(model.slope(z, x)?.abs()), a.t, c.t, xtol.max(1e-10 * spacing))?;
            if v < tau1 && roots.iter().all(|r| (r - t).abs() > 0.5 * spacing) {
                roots.push(t);
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= xtol.max(1e-9 * spacing));
    let delta = default_delta(samples, opts);
    roots
        .par_iter()
        .map(|&t| critical_point_at(model, z, t, delta, &tol))
        .collect()
}

/// Critical point record at a given `t` (derivatives by finite differences).
pub fn critical_point_at<M: HeightModel + ?Sized>(
    model: &M,
    z: &Field,
    t: f64,
    delta: f64,
    tol: &DerivativeTolerances,
) -> Result<CriticalPoint> {
    let table = derivative_table(model, z, t, delta)?;
    let d = [table[1], table[2], table[3], table[4]];
    let order = order_from_table(&d, tol);
    let extremum = match order {
        Some(1) if d[1] < 0.0 => Extremum::Max,
        Some(1) => Extremum::Min,
        Some(3) if d[3] < 0.0 => Extremum::Max,
        Some(3) => Extremum::Min,
        _ => Extremum::None,
    };
    let e = model.eval(z, t)?;
    let probe = model.probe(z, t)?;
    Ok(CriticalPoint {
        t_star: t,
        height: table[0],
        u_star: e.u,
        morin_order: order,
        kind_tag: kind_of(order),
        extremum,
        lambda_min: probe.as_ref().map(|p| p.lambda_min()),
        tracked_eigenvalue: probe.as_ref().map(|p| p.tracked()),
        derivative_table: d,
        transversality_ok: order == Some(1),
        transversality: None,
        low_confidence: d[0].abs() > tol.tau[0],
    })
}

fn numeric_rank(m: &DMatrix<f64>, rel: f64) -> (usize, Vec<f64>) {
    let sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    let top = sv.iter().fold(0.0f64, |a, b| a.max(*b));
    let rank = sv.iter().filter(|&&s| s > rel * top && s > 0.0).count();
    (rank, sv)
}

/// Sets the Morin order and, for order ≥ 2, checks that
/// `D(D_t h, …, D_t^k h)` with respect to `(z, t)` has rank `k` over a
/// sample of horizontal directions.
pub fn classify_morin<M: HeightModel + ?Sized>(
    model: &M,
    z: &Field,
    cp: &CriticalPoint,
    tol: &DerivativeTolerances,
    delta: f64,
    opts: &AnalysisOptions,
) -> Result<CriticalPoint> {
    let mut out = cp.clone();
    let order = order_from_table(&cp.derivative_table, tol);
    out.morin_order = order;
    out.kind_tag = kind_of(order);
    let k = match order {
        None => {
            out.transversality_ok = false;
            return Ok(out);
        }
        Some(1) => {
            out.transversality_ok = true;
            return Ok(out);
        }
        Some(k) => k as usize,
    };
    // sampled horizontal directions
    let h = model.h_directions();
    let mut dirs: Vec<DVector<f64>> = h
        .iter()
        .take(opts.max_coordinate_directions)
        .map(|&i| DVector::from_fn(model.z_dim(), |r, _| if r == i { 1.0 } else { 0.0 }))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_directions {
        let mut v = DVector::zeros(model.z_dim());
        for &i in &h {
            v[i] = rng.random::<f64>() * 2.0 - 1.0;
        }
        let n = v.norm();
        if n > 0.0 {
            dirs.push(v / n);
        }
    }
    let dz = opts.z_step;
    let tables: Vec<([f64; 5], [f64; 5])> = dirs
        .par_iter()
        .map(|d| {
            let zp = Field::new(z.coeffs() + d * dz);
            let zm = Field::new(z.coeffs() - d * dz);
            Ok((
                derivative_table(model, &zp, cp.t_star, delta)?,
                derivative_table(model, &zm, cp.t_star, delta)?,
            ))
        })
        .collect::<Result<_>>()?;
    let base = {
        let d = cp.derivative_table;
        [cp.height, d[0], d[1], d[2], d[3]]
    };
    let build = |first: usize| {
        // rows: D^first … D^{first+k−1}; columns: directions then t
        DMatrix::from_fn(k, dirs.len() + 1, |r, c| {
            let j = first + r;
            if c < dirs.len() {
                (tables[c].0[j] - tables[c].1[j]) / (2.0 * dz)
            } else {
                base[j + 1]
            }
        })
    };
    let (rank, singular_values) = numeric_rank(&build(1), opts.rank_rel_tol);
    let (value_rank, _) = numeric_rank(&build(0), opts.rank_rel_tol);
    out.transversality_ok = rank == k;
    out.transversality = Some(Transversality {
        required_rank: k,
        rank,
        singular_values,
        value_rank,
        directions_sampled: dirs.len(),
    });
    Ok(out)
}

/// Critical points of a sampled fiber, each classified.
pub fn classified_critical_points<M: HeightModel + ?Sized>(
    model: &M,
    z: &Field,
    samples: &[HeightEval],
    opts: &AnalysisOptions,
) -> Result<Vec<CriticalPoint>> {
    let tol = window_tolerances(samples, opts);
    let delta = default_delta(samples, opts);
    critical_points(model, z, samples, opts)?
        .iter()
        .map(|cp| classify_morin(model, z, cp, &tol, delta, opts))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preimage {
    pub t: f64,
    pub u: Option<Field>,
    pub residual: f64,
    /// Found as a tangency at a critical value rather than a crossing.
    pub touch: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreimageSet {
    /// `z₀ + s φ_p`.
    pub target: Field,
    pub target_height: f64,
    pub z0: Field,
    pub window: (f64, f64),
    pub solutions: Vec<Preimage>,
    pub warnings: Vec<String>,
}

impl PreimageSet {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn max_residual(&self) -> f64 {
        self.solutions.iter().map(|s| s.residual).fold(0.0, f64::max)
    }
}

/// Checks that the sampled height has turned toward `−∞` at both ends.
pub fn window_warnings(samples: &[HeightEval]) -> Vec<String> {
    let mut w = Vec::new();
    if let (Some(first), Some(last)) = (samples.first(), samples.last()) {
        if !(first.slope > 0.0) {
            w.push(format!("WindowTooSmall: height not yet decreasing toward -inf at t = {}", first.t));
        }
        if !(last.slope < 0.0) {
            w.push(format!("WindowTooSmall: height not yet decreasing toward -inf at t = {}", last.t));
        }
    }
    w
}

/// Solutions of `h(z, t) = s` in the sampled window: crossings refined by
/// Illinois plus tangencies at critical values within `touch_tol`.
pub fn preimages_on_model<M: HeightModel + ?Sized>(
    model: &M,
    z: &Field,
    s: f64,
    samples: &[HeightEval],
    criticals: &[CriticalPoint],
    opts: &AnalysisOptions,
) -> Result<PreimageSet> {
    let xtol = 1e-14 * (1.0 + samples.iter().map(|e| e.t.abs()).fold(0.0, f64::max));
    let mut out: Vec<(f64, bool)> = samples.iter().filter(|e| e.height == s).map(|e| (e.t, false)).collect();
    // extrema between samples can hide a pair of crossings, so they join the
    // bracketing sequence
    let mut nodes: Vec<(f64, f64)> = samples.iter().map(|e| (e.t, e.height)).collect();
    nodes.extend(criticals.iter().filter(|c| c.extremum != Extremum::None).map(|c| (c.t_star, c.height)));
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let brackets: Vec<(f64, f64, f64, f64)> = nodes
        .windows(2)
        .filter(|w| (w[0].1 - s) * (w[1].1 - s) < 0.0)
        .map(|w| (w[0].0, w[0].1 - s, w[1].0, w[1].1 - s))
        .collect();
    let refined: Vec<f64> = brackets
        .par_iter()
        .map(|&(a, fa, b, fb)| Ok(illinois(|x| Ok(model.height(z, x)? - s), a, fa, b, fb, opts.root_tol, xtol)?.0))
        .collect::<Result<_>>()?;
    out.extend(refined.into_iter().map(|t| (t, false)));
    for cp in criticals {
        let touches = cp.extremum != Extremum::None && (cp.height - s).abs() <= opts.root_tol.max(1e3 * f64::EPSILON * (1.0 + s.abs()));
        if touches && out.iter().all(|(t, _)| (t - cp.t_star).abs() > 1e-6) {
            out.push((cp.t_star, true));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut solutions: Vec<Preimage> = out
        .par_iter()
        .map(|&(t, touch)| {
            let e = model.eval(z, t)?;
            let residual = model.preimage_residual(z, s, &e)?;
            Ok(Preimage {
                t,
                u: e.u,
                residual,
                touch,
            })
        })
        .collect::<Result<_>>()?;
    solutions.dedup_by(|a, b| match (&a.u, &b.u) {
        (Some(x), Some(y)) => (x.coeffs() - y.coeffs()).norm() <= 1e-9,
        _ => (a.t - b.t).abs() <= 1e-9,
    });
    let mut target = Field::new(z.coeffs().clone());
    if let Some(p) = target_index(model) {
        target[p] = s;
    }
    Ok(PreimageSet {
        target,
        target_height: s,
        z0: z.clone(),
        window: (samples[0].t, samples[samples.len() - 1].t),
        solutions,
        warnings: window_warnings(samples),
    })
}

fn target_index<M: HeightModel + ?Sized>(model: &M) -> Option<usize> {
    let h = model.h_directions();
    (0..model.z_dim()).find(|i| !h.contains(i))
}

/// Uniform grid of `steps` points on `[t_min, t_max]`.
pub fn uniform_grid(t_min: f64, t_max: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|i| t_min + (t_max - t_min) * i as f64 / (steps - 1).max(1) as f64)
        .collect()
}

/// Traces the fiber through `P g` and returns all solutions of `F(u) = g`
/// with `t ∈ [t_min, t_max]`.
pub fn find_preimages(
    ps: &ProblemSpec,
    g: &Field,
    window: (f64, f64, usize),
    solve: &SolveOptions,
    opts: &AnalysisOptions,
) -> Result<PreimageSet> {
    ps.check(g)?;
    let model = FiberModel::new(ps, solve.clone());
    let z0 = ps.project_h(g);
    let samples = model.sample(&z0, &uniform_grid(window.0, window.1, window.2))?;
    let cps = critical_points(&model, &z0, &samples, opts)?;
    preimages_on_model(&model, &z0, g[ps.p()], &samples, &cps, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub s_values: Vec<f64>,
    pub counts: Vec<usize>,
    /// Fold-image boundary estimate `max h^a` over the window.
    pub s_star: f64,
    pub critical_values: Vec<f64>,
    /// Whether every piece between consecutive critical points is strictly
    /// monotone on the samples.
    pub monotone_pieces: bool,
    pub warnings: Vec<String>,
}

/// Preimage counts for several heights, from the monotone pieces between
/// critical points; tangencies within `touch_tol` count once.
pub fn count_from_pieces(
    samples: &[HeightEval],
    criticals: &[CriticalPoint],
    s_values: &[f64],
    touch_tol: f64,
) -> SweepReport {
    let mut knots: Vec<(f64, f64)> = vec![(samples[0].t, samples[0].height)];
    knots.extend(criticals.iter().map(|c| (c.t_star, c.height)));
    let last = &samples[samples.len() - 1];
    knots.push((last.t, last.height));
    let mut monotone = true;
    for w in knots.windows(2) {
        let (ta, tb) = (w[0].0, w[1].0);
        let inside: Vec<f64> = std::iter::once(w[0].1)
            .chain(samples.iter().filter(|e| e.t > ta && e.t < tb).map(|e| e.height))
            .chain(std::iter::once(w[1].1))
            .collect();
        let up = inside.windows(2).all(|p| p[1] > p[0]);
        let down = inside.windows(2).all(|p| p[1] < p[0]);
        monotone &= up || down;
    }
    let counts = s_values
        .iter()
        .map(|&s| {
            let crossings = knots
                .windows(2)
                .filter(|w| {
                    let (lo, hi) = (w[0].1.min(w[1].1), w[0].1.max(w[1].1));
                    s > lo + touch_tol && s < hi - touch_tol
                })
                .count();
            let touches = criticals.iter().filter(|c| (c.height - s).abs() <= touch_tol).count();
            crossings + touches
        })
        .collect();
    let s_star = samples
        .iter()
        .map(|e| e.height)
        .chain(criticals.iter().map(|c| c.height))
        .fold(f64::NEG_INFINITY, f64::max);
    SweepReport {
        s_values: s_values.to_vec(),
        counts,
        s_star,
        critical_values: criticals.iter().map(|c| c.height).collect(),
        monotone_pieces: monotone,
        warnings: window_warnings(samples),
    }
}

/// Preimage counts along the fiber through `z0` for each height in
/// `s_values`.
pub fn count_sweep(
    ps: &ProblemSpec,
    z0: &Field,
    s_values: &[f64],
    window: (f64, f64, usize),
    solve: &SolveOptions,
    opts: &AnalysisOptions,
) -> Result<SweepReport> {
    let model = FiberModel::new(ps, solve.clone());
    let z0 = ps.project_h(z0);
    let samples = model.sample(&z0, &uniform_grid(window.0, window.1, window.2))?;
    let cps = critical_points(&model, &z0, &samples, opts)?;
    let scale = samples.iter().map(|e| e.height.abs()).fold(1.0, f64::max);
    Ok(count_from_pieces(&samples, &cps, s_values, 1e-9 * scale))
}

/// One sample of the eigenvalue track.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSample {
    pub t: f64,
    pub slope: f64,
    pub tracked: f64,
    pub lambda_min: f64,
    pub gap: f64,
    pub in_neighborhood: bool,
    pub signs_agree: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralLinkReport {
    pub samples: Vec<LinkSample>,
    pub radius: f64,
    pub gap_tol: f64,
    /// Samples inside a critical neighborhood whose signs were compared.
    pub checked: usize,
    pub disagreements: Vec<f64>,
    /// Range of `λ_tracked / D_t h` where both are clearly nonzero.
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// Sign changes of the tracked eigenvalue along the samples.
    pub tracked_sign_changes: usize,
    /// Sign changes of `λ_min` along the samples.
    pub lambda_min_sign_changes: usize,
    /// `t` values outside every critical neighborhood where the tracked
    /// eigenvalue came within `gap_tol` of a neighbour.
    pub collisions_outside: Vec<f64>,
}

impl SpectralLinkReport {
    pub fn ok(&self) -> bool {
        self.disagreements.is_empty() && self.ratio_min > 0.0
    }
}

fn sign_changes(v: impl Iterator<Item = f64>) -> usize {
    let signs: Vec<f64> = v.filter(|x| *x != 0.0).map(f64::signum).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Compares `sign(λ_tracked(DF(u)))` with `sign(D_t h^a)` at every sample
/// within `radius` of a critical point. Fails with `EigGapCollapse` if the
/// tracked eigenvalue stops being simple inside a neighborhood.
pub fn verify_spectral_link<M: HeightModel + ?Sized>(
    model: &M,
    z: &Field,
    samples: &[HeightEval],
    criticals: &[CriticalPoint],
    radius: f64,
    gap_tol: f64,
) -> Result<SpectralLinkReport> {
    let slope_scale = samples.iter().map(|e| e.slope.abs()).fold(0.0, f64::max);
    let probes: Vec<Option<EigenProbe>> = samples
        .par_iter()
        .map(|e| model.probe(z, e.t))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    let mut disagreements = Vec::new();
    let mut collisions = Vec::new();
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut checked = 0;
    for (e, probe) in samples.iter().zip(&probes) {
        let Some(probe) = probe else {
            return Err(Error::Unsupported("model has no linearization".into()));
        };
        let tracked = probe.tracked();
        let gap = probe.gap();
        let near = criticals.iter().any(|c| (c.t_star - e.t).abs() <= radius);
        let eig_scale = probe.eigenvalues.iter().map(|v| v.abs()).fold(1.0, f64::max);
        let zero_slope = e.slope.abs() <= 1e-9 * slope_scale.max(1.0);
        let zero_eig = tracked.abs() <= 1e-9 * eig_scale;
        let agree = (zero_slope && zero_eig) || e.slope.signum() == tracked.signum() && !zero_slope && !zero_eig;
        if near {
            if gap < gap_tol {
                return Err(Error::EigGapCollapse { t: e.t, gap });
            }
            checked += 1;
            if !agree && !(zero_slope || zero_eig) {
                disagreements.push(e.t);
            }
        } else if gap < gap_tol {
            collisions.push(e.t);
        }
        if !zero_slope && !zero_eig {
            let r = tracked / e.slope;
            rmin = rmin.min(r);
            rmax = rmax.max(r);
        }
        out.push(LinkSample {
            t: e.t,
            slope: e.slope,
            tracked,
            lambda_min: probe.lambda_min(),
            gap,
            in_neighborhood: near,
            signs_agree: agree,
        });
    }
    Ok(SpectralLinkReport {
        tracked_sign_changes: sign_changes(out.iter().map(|s| s.tracked)),
        lambda_min_sign_changes: sign_changes(out.iter().map(|s| s.lambda_min)),
        samples: out,
        radius,
        gap_tol,
        checked,
        disagreements,
        ratio_min: rmin,
        ratio_max: rmax,
        collisions_outside: collisions,
    })
}

/// CSV of the eigenvalue track: `t,slope,tracked,lambda_min,gap`.
pub fn link_csv(report: &SpectralLinkReport) -> String {
    let mut out = String::from("t,slope,tracked,lambda_min,gap\r\n");
    for s in &report.samples {
        out.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\r\n",
            s.t, s.slope, s.tracked, s.lambda_min, s.gap
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic;
    impl HeightModel for Quadratic {
        fn z_dim(&self) -> usize {
            2
        }
        fn h_directions(&self) -> Vec<usize> {
            vec![1]
        }
        fn eval(&self, _z: &Field, t: f64) -> Result<HeightEval> {
            Ok(HeightEval {
                t,
                height: -t * t,
                slope: -2.0 * t,
                u: None,
            })
        }
    }

    #[test]
    fn illinois_finds_cubic_root() {
        let f = |x: f64| Ok(x * x * x - 2.0);
        let (r, _) = illinois(f, 0.0, -2.0, 3.0, 25.0, 1e-14, 1e-15).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn golden_section_finds_minimum() {
        let (x, _) = golden_min(|x| Ok((x - 0.3).powi(2)), -1.0, 2.0, 1e-10).unwrap();
        assert!((x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn fold_toy_single_critical_point() {
        let z = Field::zeros(2);
        let samples = Quadratic.sample(&z, &uniform_grid(-2.0, 2.0, 41)).unwrap();
        let cps = classified_critical_points(&Quadratic, &z, &samples, &AnalysisOptions::default()).unwrap();
        assert_eq!(cps.len(), 1);
        assert!(cps[0].t_star.abs() < 1e-12);
        assert!((cps[0].derivative_table[1] + 2.0).abs() < 1e-9);
        assert_eq!(cps[0].morin_order, Some(1));
        assert_eq!(cps[0].extremum, Extremum::Max);
        assert!(cps[0].transversality_ok);
    }

    #[test]
    fn pieces_count_crossings_and_touches() {
        let z = Field::zeros(2);
        let samples = Quadratic.sample(&z, &uniform_grid(-2.0, 2.0, 41)).unwrap();
        let cps = critical_points(&Quadratic, &z, &samples, &AnalysisOptions::default()).unwrap();
        let rep = count_from_pieces(&samples, &cps, &[-1.0, 0.0, 1.0], 1e-12);
        assert_eq!(rep.counts, vec![2, 1, 0]);
        assert!(rep.monotone_pieces);
        assert_eq!(rep.s_star, 0.0);
    }

    #[test]
    fn preimages_of_quadratic() {
        let z = Field::zeros(2);
        let samples = Quadratic.sample(&z, &uniform_grid(-2.0, 2.0, 40)).unwrap();
        let cps = critical_points(&Quadratic, &z, &samples, &AnalysisOptions::default()).unwrap();
        let set = preimages_on_model(&Quadratic, &z, -1.0, &samples, &cps, &AnalysisOptions::default()).unwrap();
        assert_eq!(set.len(), 2);
        assert!((set.solutions[0].t + 1.0).abs() < 1e-9);
        assert!((set.solutions[1].t - 1.0).abs() < 1e-9);
        let touch = preimages_on_model(&Quadratic, &z, 0.0, &samples, &cps, &AnalysisOptions::default()).unwrap();
        assert_eq!(touch.len(), 1);
        assert!(touch.solutions[0].touch);
        assert!(touch.warnings.is_empty());
    }

    #[test]
    fn tolerances_scale_with_window() {
        let z = Field::zeros(2);
        let samples = Quadratic.sample(&z, &uniform_grid(-2.0, 2.0, 41)).unwrap();
        let tol = window_tolerances(&samples, &AnalysisOptions::default());
        assert!((tol.tau[0] - 4e-5).abs() < 1e-12);
        assert!((tol.tau[1] - 2e-5).abs() < 1e-12);
    }
}
