//! Dirichlet sine eigenbasis of `-Δ` on intervals and rectangles.
//!
//! Fields are stored as coefficient vectors in the L²-normalized eigenbasis
//! `φ_k(x) = Π_i sqrt(2/ℓ_i) sin(k_i π x_i / ℓ_i)`, ordered by eigenvalue with
//! lexicographic tie breaking. Nodal values live on the interior points of a
//! uniform grid with `grid_factor × modes` nodes per axis, where the type-I
//! sine transform pair is exact for band-limited data.

use std::f64::consts::PI;
use std::ops::{Deref, DerefMut};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[0, ℓ_1] × … × [0, ℓ_d]`, `d ∈ {1, 2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lengths: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lengths: &[f64]) -> Result<Self> {
        if lengths.is_empty() || lengths.len() > 2 {
            return Err(Error::InvalidDomain(format!(
                "dimension must be 1 or 2, got {}",
                lengths.len()
            )));
        }
        if let Some(l) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidDomain(format!(
                "side lengths must be positive, got {l}"
            )));
        }
        Ok(Self {
            lengths: lengths.to_vec(),
        })
    }

    pub fn interval(length: f64) -> Result<Self> {
        Self::new(&[length])
    }

    pub fn rectangle(a: f64, b: f64) -> Result<Self> {
        Self::new(&[a, b])
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }
}

/// One tensor factor of the basis. A 1D basis carries a trivial second axis
/// with a single mode and a single unit node.
#[derive(Clone, Debug)]
struct Axis {
    length: f64,
    modes: usize,
    nodes: usize,
    spacing: f64,
    /// `modes × nodes`, normalized sine values `sqrt(2/ℓ) sin(kπx_j/ℓ)`.
    table: DMatrix<f64>,
}

impl Axis {
    fn sine(length: f64, modes: usize, nodes: usize) -> Self {
        let norm = (2.0 / length).sqrt();
        let table = DMatrix::from_fn(modes, nodes, |k, j| {
            norm * ((k + 1) as f64 * PI * (j + 1) as f64 / (nodes + 1) as f64).sin()
        });
        Self {
            length,
            modes,
            nodes,
            spacing: length / (nodes + 1) as f64,
            table,
        }
    }

    fn trivial() -> Self {
        Self {
            length: 1.0,
            modes: 1,
            nodes: 1,
            spacing: 1.0,
            table: DMatrix::from_element(1, 1, 1.0),
        }
    }

    fn node(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.spacing
    }
}

/// Coefficients of an element of X or Y in an eigenbasis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", from = "Vec<f64>")]
pub struct Field(DVector<f64>);

impl Field {
    pub fn new(coeffs: DVector<f64>) -> Self {
        Self(coeffs)
    }

    pub fn zeros(len: usize) -> Self {
        Self(DVector::zeros(len))
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self(DVector::from_column_slice(values))
    }

    /// Unit coefficient vector on mode `k`.
    pub fn unit(len: usize, k: usize) -> Self {
        let mut v = DVector::zeros(len);
        v[k] = 1.0;
        Self(v)
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    /// Y (L²) norm: Euclidean norm of the coefficients.
    pub fn norm_y(&self) -> f64 {
        self.0.norm()
    }

    /// Graph norm with weights `1 + |μ_k|`.
    pub fn norm_x(&self, eigenvalues: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(eigenvalues)
            .map(|(c, mu)| ((1.0 + mu.abs()) * c).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for Field {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut DVector<f64> {
        &mut self.0
    }
}

impl From<DVector<f64>> for Field {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

impl From<Vec<f64>> for Field {
    fn from(v: Vec<f64>) -> Self {
        Self(DVector::from_vec(v))
    }
}

impl From<Field> for Vec<f64> {
    fn from(f: Field) -> Self {
        f.0.data.into()
    }
}

/// Nodal values on the tensor collocation grid (`nx × ny`, `ny = 1` in 1D).
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    values: DMatrix<f64>,
}

impl GridField {
    pub fn new(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.amax()
    }
}

/// Serializable description of a basis.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BasisDescription {
    pub lengths: Vec<f64>,
    pub mode_counts: Vec<usize>,
    pub grid_factor: usize,
    pub eigenvalues: Vec<f64>,
}

/// Dirichlet Laplacian eigenbasis on a box.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    domain: BoxDomain,
    mode_counts: Vec<usize>,
    grid_factor: usize,
    axes: [Axis; 2],
    eigenvalues: Vec<f64>,
    /// 1-based mode tuples in flat order; 1D tuples have second entry 1.
    modes: Vec<[usize; 2]>,
    /// `(kx-1) * ky_count + (ky-1)` → flat index.
    flat_of: Vec<usize>,
    /// Exact coefficients of the constant function 1.
    unit_constant: DVector<f64>,
}

impl SpectralBasis {
    pub fn new(domain: BoxDomain, mode_counts: &[usize], grid_factor: usize) -> Result<Self> {
        if mode_counts.len() != domain.dim() {
            return Err(Error::InvalidDomain(format!(
                "{} mode counts for a {}-dimensional domain",
                mode_counts.len(),
                domain.dim()
            )));
        }
        if mode_counts.contains(&0) {
            return Err(Error::InvalidDomain("mode counts must be at least 1".into()));
        }
        if grid_factor < 2 {
            return Err(Error::InvalidDomain(format!(
                "grid factor must be at least 2, got {grid_factor}"
            )));
        }
        let lengths = domain.lengths();
        let ax = Axis::sine(lengths[0], mode_counts[0], grid_factor * mode_counts[0]);
        let ay = if domain.dim() == 2 {
            Axis::sine(lengths[1], mode_counts[1], grid_factor * mode_counts[1])
        } else {
            Axis::trivial()
        };

        let mut modes = Vec::with_capacity(ax.modes * ay.modes);
        for kx in 1..=ax.modes {
            for ky in 1..=ay.modes {
                modes.push([kx, ky]);
            }
        }
        let dim2 = domain.dim() == 2;
        let eig = |m: &[usize; 2]| {
            let mut s = (m[0] as f64 / ax.length).powi(2);
            if dim2 {
                s += (m[1] as f64 / ay.length).powi(2);
            }
            PI * PI * s
        };
        // Stable sort on eigenvalue keeps lexicographic order among ties.
        modes.sort_by(|a, b| eig(a).partial_cmp(&eig(b)).unwrap());
        let eigenvalues: Vec<f64> = modes.iter().map(eig).collect();

        let mut flat_of = vec![0; ax.modes * ay.modes];
        for (i, m) in modes.iter().enumerate() {
            flat_of[(m[0] - 1) * ay.modes + (m[1] - 1)] = i;
        }

        // ⟨1, sqrt(2/ℓ) sin(kπx/ℓ)⟩ = sqrt(2/ℓ) ℓ (1 - cos kπ) / (kπ)
        let lengths = domain.lengths().to_vec();
        let unit_constant = DVector::from_iterator(
            modes.len(),
            modes.iter().map(|m| {
                lengths
                    .iter()
                    .enumerate()
                    .map(|(d, l)| {
                        let k = m[d] as f64;
                        (2.0 / l).sqrt() * l * (1.0 - (k * PI).cos()) / (k * PI)
                    })
                    .product::<f64>()
            }),
        );

        Ok(Self {
            domain,
            mode_counts: mode_counts.to_vec(),
            grid_factor,
            axes: [ax, ay],
            eigenvalues,
            modes,
            flat_of,
            unit_constant,
        })
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn mode_counts(&self) -> &[usize] {
        &self.mode_counts
    }

    pub fn grid_factor(&self) -> usize {
        self.grid_factor
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Mode tuple (1-based) of flat index `i`, truncated to the domain dimension.
    pub fn mode(&self, i: usize) -> Vec<usize> {
        self.modes[i][..self.dim()].to_vec()
    }

    /// Flat index of a mode tuple.
    pub fn index_of(&self, mode: &[usize]) -> Option<usize> {
        if mode.len() != self.dim() {
            return None;
        }
        let kx = mode[0];
        let ky = if self.dim() == 2 { mode[1] } else { 1 };
        if kx == 0 || ky == 0 || kx > self.axes[0].modes || ky > self.axes[1].modes {
            return None;
        }
        Some(self.flat_of[(kx - 1) * self.axes[1].modes + (ky - 1)])
    }

    /// Flat index of the ground state (1, …, 1); always 0.
    pub fn ground_state(&self) -> usize {
        0
    }

    /// L² normalization constant of mode `i` (sup norm of the eigenfunction).
    pub fn normalization(&self, _i: usize) -> f64 {
        self.domain
            .lengths()
            .iter()
            .map(|l| (2.0 / l).sqrt())
            .product()
    }

    /// Nodes per axis (`[nx]` or `[nx, ny]`).
    pub fn grid_size(&self) -> Vec<usize> {
        self.axes[..self.dim()].iter().map(|a| a.nodes).collect()
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.axes[0].nodes, self.axes[1].nodes)
    }

    /// Coordinates of node `(i, j)`.
    pub fn node(&self, i: usize, j: usize) -> Vec<f64> {
        if self.dim() == 2 {
            vec![self.axes[0].node(i), self.axes[1].node(j)]
        } else {
            vec![self.axes[0].node(i)]
        }
    }

    /// Quadrature weight of a single node.
    pub fn cell_weight(&self) -> f64 {
        self.axes[0].spacing * self.axes[1].spacing
    }

    /// Evaluates the eigenfunction of flat mode `i` at a point.
    pub fn eval_mode(&self, i: usize, point: &[f64]) -> f64 {
        let m = self.modes[i];
        let mut v = 1.0;
        for (d, l) in self.domain.lengths().iter().enumerate() {
            v *= (2.0 / l).sqrt() * (m[d] as f64 * PI * point[d] / l).sin();
        }
        v
    }

    pub fn describe(&self) -> BasisDescription {
        BasisDescription {
            lengths: self.domain.lengths().to_vec(),
            mode_counts: self.mode_counts.clone(),
            grid_factor: self.grid_factor,
            eigenvalues: self.eigenvalues.clone(),
        }
    }

    fn check(&self, coeffs: &DVector<f64>) -> Result<()> {
        if coeffs.len() != self.len() {
            return Err(Error::BasisMismatch {
                expected: self.len(),
                got: coeffs.len(),
            });
        }
        Ok(())
    }

    fn to_modal_matrix(&self, coeffs: &DVector<f64>) -> DMatrix<f64> {
        let (kx, ky) = (self.axes[0].modes, self.axes[1].modes);
        DMatrix::from_fn(kx, ky, |i, j| coeffs[self.flat_of[i * ky + j]])
    }

    fn modal_matrix_to_coeffs(&self, m: &DMatrix<f64>) -> DVector<f64> {
        let ky = self.axes[1].modes;
        let mut out = DVector::zeros(self.len());
        for (i, row) in m.row_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                out[self.flat_of[i * ky + j]] = *v;
            }
        }
        out
    }

    /// Synthesis: coefficients → nodal values.
    pub fn to_grid(&self, f: &Field) -> Result<GridField> {
        self.check(f)?;
        Ok(GridField::new(self.synthesize(f)))
    }

    /// Analysis: nodal values → coefficients (exact for band-limited data).
    pub fn from_grid(&self, g: &GridField) -> Result<Field> {
        let shape = self.grid_shape();
        if g.shape() != shape {
            return Err(Error::BasisMismatch {
                expected: shape.0 * shape.1,
                got: g.shape().0 * g.shape().1,
            });
        }
        Ok(Field::new(self.analyze(g.values())))
    }

    pub(crate) fn synthesize(&self, coeffs: &DVector<f64>) -> DMatrix<f64> {
        let c = self.to_modal_matrix(coeffs);
        self.axes[0].table.transpose() * c * &self.axes[1].table
    }

    pub(crate) fn analyze(&self, values: &DMatrix<f64>) -> DVector<f64> {
        let m = (&self.axes[0].table * values * self.axes[1].table.transpose())
            * self.cell_weight();
        self.modal_matrix_to_coeffs(&m)
    }

    /// Projection onto the basis of a scalar function given pointwise.
    pub fn project_function(&self, func: impl Fn(&[f64]) -> f64) -> Result<Field> {
        let (nx, ny) = self.grid_shape();
        let mut values = DMatrix::zeros(nx, ny);
        for i in 0..nx {
            for j in 0..ny {
                let v = func(&self.node(i, j));
                if !v.is_finite() {
                    return Err(Error::NonFinite { node: i * ny + j });
                }
                values[(i, j)] = v;
            }
        }
        Ok(Field::new(self.analyze(&values)))
    }

    /// Exact projection of a constant function.
    pub fn constant(&self, value: f64) -> Field {
        Field::new(&self.unit_constant * value)
    }

    /// Applies the pointwise map `(x, u(x)) ↦ map(x, u(x))` on the grid and
    /// projects the result back onto the basis.
    ///
    /// When `map(x, 0)` is the same at every node (autonomous maps), that
    /// boundary value is projected exactly and only the remainder, which
    /// vanishes on the boundary, goes through grid quadrature.
    pub fn apply_nemitskii(
        &self,
        u: &Field,
        map: impl Fn(&[f64], f64) -> f64,
    ) -> Result<Field> {
        self.check(u)?;
        Ok(Field::new(self.project_nodal(&self.synthesize(u), map)?))
    }

    pub(crate) fn project_nodal(
        &self,
        nodal: &DMatrix<f64>,
        map: impl Fn(&[f64], f64) -> f64,
    ) -> Result<DVector<f64>> {
        let mut values = self.map_nodal(nodal, &map)?;
        let (nx, ny) = nodal.shape();
        let base = map(&self.node(0, 0), 0.0);
        let autonomous = base.is_finite()
            && [(nx - 1, 0), (0, ny - 1), (nx / 2, ny / 2), (nx - 1, ny - 1)]
                .iter()
                .all(|&(i, j)| map(&self.node(i, j), 0.0) == base);
        if autonomous && base != 0.0 {
            values.add_scalar_mut(-base);
            Ok(self.analyze(&values) + &self.unit_constant * base)
        } else {
            Ok(self.analyze(&values))
        }
    }

    pub(crate) fn map_nodal(
        &self,
        nodal: &DMatrix<f64>,
        map: impl Fn(&[f64], f64) -> f64,
    ) -> Result<DMatrix<f64>> {
        let (nx, ny) = nodal.shape();
        let dim = self.dim();
        let mut out = DMatrix::zeros(nx, ny);
        for i in 0..nx {
            for j in 0..ny {
                let point = [self.axes[0].node(i), self.axes[1].node(j)];
                let v = map(&point[..dim], nodal[(i, j)]);
                if !v.is_finite() {
                    return Err(Error::NonFinite { node: i * ny + j });
                }
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    /// Galerkin matrix `M_ij = ⟨w φ_j, φ_i⟩` of multiplication by nodal
    /// weights `w`, assembled axis by axis.
    pub fn multiplication_matrix(&self, weights: &DMatrix<f64>) -> DMatrix<f64> {
        let (ax, ay) = (&self.axes[0], &self.axes[1]);
        let (kx, ky) = (ax.modes, ay.modes);
        let n = self.len();
        // blocks[jy] = Sx diag(w[:, jy]) Sxᵀ
        let blocks: Vec<DMatrix<f64>> = (0..ay.nodes)
            .map(|jy| {
                let mut scaled = ax.table.clone();
                for (col, w) in weights.column(jy).iter().enumerate() {
                    scaled.column_mut(col).scale_mut(*w);
                }
                scaled * ax.table.transpose()
            })
            .collect();
        let mut m = DMatrix::zeros(n, n);
        let weight = self.cell_weight();
        for i2 in 0..ky {
            for j2 in 0..ky {
                let mut acc = DMatrix::<f64>::zeros(kx, kx);
                for (jy, block) in blocks.iter().enumerate() {
                    let c = ay.table[(i2, jy)] * ay.table[(j2, jy)];
                    acc.iter_mut().zip(block.iter()).for_each(|(a, b)| *a += c * b);
                }
                for i1 in 0..kx {
                    let row = self.flat_of[i1 * ky + i2];
                    for j1 in 0..kx {
                        m[(row, self.flat_of[j1 * ky + j2])] = weight * acc[(i1, j1)];
                    }
                }
            }
        }
        m
    }

    /// Grid quadrature of `|u|²` from nodal values.
    pub fn grid_l2_squared(&self, g: &GridField) -> f64 {
        g.values().iter().map(|v| v * v).sum::<f64>() * self.cell_weight()
    }

    /// CSV dump with rows `x[,y],value` (RFC 4180, header included).
    pub fn grid_csv(&self, g: &GridField) -> String {
        let mut out = String::from(if self.dim() == 2 { "x,y,value\r\n" } else { "x,value\r\n" });
        let (nx, ny) = g.shape();
        for i in 0..nx {
            for j in 0..ny {
                let p = self.node(i, j);
                let coords: Vec<String> = p.iter().map(|c| format!("{c:.17e}")).collect();
                out.push_str(&format!("{},{:.17e}\r\n", coords.join(","), g.values()[(i, j)]));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect() -> SpectralBasis {
        SpectralBasis::new(BoxDomain::rectangle(1.0, 2.0).unwrap(), &[16, 16], 4).unwrap()
    }

    #[test]
    fn rectangle_ground_and_second_eigenvalues() {
        let b = rect();
        assert!((b.eigenvalues()[0] - PI * PI * 1.25).abs() < 1e-12);
        assert!((b.eigenvalues()[0] - 12.337).abs() < 1e-3);
        assert!((b.eigenvalues()[1] - 19.739).abs() < 1e-3);
        assert_eq!(b.mode(0), vec![1, 1]);
        assert_eq!(b.mode(1), vec![1, 2]);
        assert_eq!(b.grid_size(), vec![64, 64]);
    }

    #[test]
    fn interval_of_length_pi_gives_squares() {
        let b = SpectralBasis::new(BoxDomain::interval(PI).unwrap(), &[8], 2).unwrap();
        for (k, mu) in b.eigenvalues().iter().enumerate() {
            assert!((mu - ((k + 1) * (k + 1)) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn square_records_double_eigenvalue_in_lexicographic_order() {
        let b = SpectralBasis::new(BoxDomain::rectangle(1.0, 1.0).unwrap(), &[4, 4], 2).unwrap();
        let e = b.eigenvalues();
        assert!((e[1] - 5.0 * PI * PI).abs() < 1e-12);
        assert_eq!(e[1], e[2]);
        assert_eq!(b.mode(1), vec![1, 2]);
        assert_eq!(b.mode(2), vec![2, 1]);
    }

    #[test]
    fn eigenvalues_sorted_and_match_formula() {
        let b = SpectralBasis::new(BoxDomain::rectangle(1.3, 0.7).unwrap(), &[5, 7], 2).unwrap();
        for w in b.eigenvalues().windows(2) {
            assert!(w[0] <= w[1]);
        }
        for i in 0..b.len() {
            let m = b.mode(i);
            let exact = PI * PI * ((m[0] as f64 / 1.3).powi(2) + (m[1] as f64 / 0.7).powi(2));
            assert!((b.eigenvalues()[i] - exact).abs() <= 1e-14 * exact);
            assert_eq!(b.index_of(&m), Some(i));
        }
    }

    #[test]
    fn rejects_bad_domains() {
        assert!(BoxDomain::interval(0.0).is_err());
        assert!(BoxDomain::rectangle(1.0, -2.0).is_err());
        assert!(BoxDomain::new(&[1.0, 1.0, 1.0]).is_err());
        let d = BoxDomain::interval(1.0).unwrap();
        assert!(SpectralBasis::new(d.clone(), &[0], 2).is_err());
        assert!(SpectralBasis::new(d.clone(), &[4], 1).is_err());
        assert!(SpectralBasis::new(d, &[4, 4], 2).is_err());
    }

    #[test]
    fn ground_mode_nodal_values() {
        let b = rect();
        let g = b.to_grid(&Field::unit(b.len(), 0)).unwrap();
        let (nx, ny) = g.shape();
        for i in (0..nx).step_by(7) {
            for j in (0..ny).step_by(5) {
                let p = b.node(i, j);
                let exact = 2f64.sqrt() * (PI * p[0]).sin() * (PI * p[1] / 2.0).sin();
                assert!((g.values()[(i, j)] - exact).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let b = SpectralBasis::new(BoxDomain::interval(2.0).unwrap(), &[16], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = Field::from((0..16).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
        let back = b.from_grid(&b.to_grid(&f).unwrap()).unwrap();
        assert!((back.coeffs() - f.coeffs()).norm() <= 1e-12 * f.norm_y());

        let b2 = rect();
        let f2 = Field::from((0..b2.len()).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
        let back2 = b2.from_grid(&b2.to_grid(&f2).unwrap()).unwrap();
        assert!((back2.coeffs() - f2.coeffs()).norm() <= 1e-12 * f2.norm_y());
    }

    #[test]
    fn zero_field_maps_to_zero_grid() {
        let b = rect();
        assert_eq!(b.to_grid(&Field::zeros(b.len())).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn mismatched_fields_are_rejected() {
        let b = rect();
        assert!(matches!(
            b.to_grid(&Field::zeros(3)),
            Err(Error::BasisMismatch { .. })
        ));
        let g = GridField::new(DMatrix::zeros(3, 3));
        assert!(b.from_grid(&g).is_err());
    }

    #[test]
    fn constant_map_matches_analytic_sine_series() {
        // ⟨c, sqrt(2/π) sin kx⟩ = c sqrt(2/π) (1 - cos kπ)/k
        let b = SpectralBasis::new(BoxDomain::interval(PI).unwrap(), &[8], 4).unwrap();
        let c = 2.5;
        let proj = b.apply_nemitskii(&Field::zeros(8), |_, _| c).unwrap();
        for k in 1..=8 {
            let exact = c * (2.0 / PI).sqrt() * (1.0 - (k as f64 * PI).cos()) / k as f64;
            assert!((proj[k - 1] - exact).abs() < 1e-8, "k={k}");
        }
    }

    #[test]
    fn identity_and_affine_maps() {
        let b = rect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = Field::from((0..b.len()).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
        let id = b.apply_nemitskii(&u, |_, v| v).unwrap();
        assert!((id.coeffs() - u.coeffs()).norm() < 1e-12);
        let one = b.constant(1.0);
        let aff = b.apply_nemitskii(&u, |_, v| 3.0 - 2.0 * v).unwrap();
        let expect = one.coeffs() * 3.0 - u.coeffs() * 2.0;
        assert!((aff.coeffs() - expect).norm() < 1e-10);
    }

    #[test]
    fn parseval_holds_for_band_limited_fields() {
        let b = rect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = Field::from((0..b.len()).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
        let g = b.to_grid(&u).unwrap();
        let q = b.grid_l2_squared(&g);
        assert!((q - u.norm_y().powi(2)).abs() <= 1e-10 * q);
    }

    #[test]
    fn multiplication_matrix_matches_pointwise_products() {
        let b = SpectralBasis::new(BoxDomain::rectangle(1.0, 2.0).unwrap(), &[5, 4], 4).unwrap();
        let (nx, ny) = b.grid_shape();
        let weights = DMatrix::from_fn(nx, ny, |i, j| 1.0 + (i as f64 * 0.1).sin() * (j as f64 * 0.3).cos());
        let m = b.multiplication_matrix(&weights);
        let asym = (&m - m.transpose()).norm();
        assert!(asym <= 1e-12 * m.norm());
        let v = Field::from((0..b.len()).map(|i| (i as f64).cos()).collect::<Vec<_>>());
        let direct = b.analyze(&b.synthesize(&v).component_mul(&weights));
        assert!((&m * v.coeffs() - direct).norm() < 1e-12);
    }

    #[test]
    fn ground_state_inner_product_with_one() {
        // ⟨1, φ₁⟩ on [0,1]×[0,2] is 8√2/π².
        let b = rect();
        assert!((b.constant(1.0)[0] - 8.0 * 2f64.sqrt() / (PI * PI)).abs() < 1e-14);
        let quad = b.project_function(|_| 1.0).unwrap();
        assert!((quad[0] - b.constant(1.0)[0]).abs() < 1e-3);
    }
}
