//! Coefficient fields and hypothesis validation.
//!
//! The wave operator carries a symmetric matrix field `A(x)` and the
//! interface carries a positive proportionality coefficient `h(x)`. This
//! module validates the ellipticity/boundedness hypotheses and extracts the
//! constants `α`, `β`, `M` and `h₀` that every later bound depends on:
//!
//! ```text
//! (A(x)λ, λ) ≥ α|λ|²,   |A(x)λ| ≤ β|λ|,   M = max |∂a_ij/∂x_k|,   0 < h₀ ≤ h
//! ```

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};

use crate::geometry::{AxisBox, Facet, Point, TwoComponentDomain};
#[allow(unused_imports)]
use crate::math::FloatExt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MaterialError {
    #[error("coefficient matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(f64, f64),
    #[error("coefficient matrix is not elliptic: minimum eigenvalue {0}")]
    NotElliptic(f64),
    #[error("interface coefficient is not positive: minimum value {0}")]
    NonPositiveH(f64),
}

/// Matrix coefficient field; always evaluated as a full 2x2 matrix, with 1D
/// problems reading only the `[0][0]` entry.
pub struct MatrixField(Box<dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync>);

/// Scalar field on the interface.
pub struct ScalarField(Box<dyn Fn(Point) -> f64 + Send + Sync>);

impl MatrixField {
    pub fn new(f: impl Fn(Point) -> [[f64; 2]; 2] + Send + Sync + 'static) -> Self {
        Self(Box::new(f))
    }

    /// `c · I`.
    pub fn identity_scaled(c: f64) -> Self {
        Self::new(move |_| [[c, 0.0], [0.0, c]])
    }

    /// `(c0 + g·x) · I`, affine in space.
    pub fn affine(c0: f64, g: [f64; 2]) -> Self {
        Self::new(move |p| {
            let c = c0 + g[0] * p[0] + g[1] * p[1];
            [[c, 0.0], [0.0, c]]
        })
    }

    /// Two constants separated by the inner box: `c1` outside, `c2` inside
    /// the closed box.
    pub fn checkerboard(c1: f64, c2: f64, inner: AxisBox, dim: usize) -> Self {
        Self::new(move |p| {
            let inside = (0..dim).all(|d| p[d] >= inner.lo[d] && p[d] <= inner.hi[d]);
            let c = if inside { c2 } else { c1 };
            [[c, 0.0], [0.0, c]]
        })
    }

    pub fn eval(&self, p: Point) -> [[f64; 2]; 2] {
        (self.0)(p)
    }
}

impl ScalarField {
    pub fn new(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self(Box::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c)
    }

    pub fn eval(&self, p: Point) -> f64 {
        (self.0)(p)
    }
}

/// Validated coefficient data with the extracted hypothesis constants.
pub struct MaterialData {
    a: MatrixField,
    h: ScalarField,
    /// Ellipticity lower bound, the minimum sampled eigenvalue of `A`.
    pub alpha: f64,
    /// Operator-norm upper bound, the maximum sampled eigenvalue magnitude.
    pub beta: f64,
    /// Maximum sampled magnitude of the coefficient derivatives `∂a_ij/∂x_k`.
    pub m_deriv: f64,
    /// Essential lower bound of `h` over the interface facets.
    pub h0: f64,
    /// Grid step used for derivative sampling.
    cell: f64,
    dim: usize,
}

impl core::fmt::Debug for MaterialData {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("MaterialData")
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("m_deriv", &self.m_deriv)
            .field("h0", &self.h0)
            .finish_non_exhaustive()
    }
}

impl MaterialData {
    pub fn a_at(&self, p: Point) -> [[f64; 2]; 2] {
        self.a.eval(p)
    }

    /// Diagonal entries of `A` at a point.
    pub fn a_diag_at(&self, p: Point) -> [f64; 2] {
        let m = self.a.eval(p);
        [m[0][0], m[1][1]]
    }

    /// `A n·n` on the given side of a facet, sampled a quarter cell inward so
    /// that piecewise coefficients read the correct component value.
    ///
    /// Side 1 is the outer component, side 2 the inner one; the facet normal
    /// `n₁` points into side 2.
    pub fn a_nn_at_side(&self, f: &Facet, side: usize) -> f64 {
        let s = if side == 1 { -1.0 } else { 1.0 };
        let off = 0.25 * self.cell * s;
        let p = [
            f.position[0] + off * f.normal1[0],
            f.position[1] + off * f.normal1[1],
        ];
        let m = self.a.eval(p);
        m[f.axis][f.axis]
    }

    /// Tangential diagonal entry of `A` on a facet side (2D only).
    pub fn a_tt_at_side(&self, f: &Facet, side: usize) -> f64 {
        let s = if side == 1 { -1.0 } else { 1.0 };
        let off = 0.25 * self.cell * s;
        let p = [
            f.position[0] + off * f.normal1[0],
            f.position[1] + off * f.normal1[1],
        ];
        let m = self.a.eval(p);
        let t_axis = 1 - f.axis;
        m[t_axis][t_axis]
    }

    pub fn h_at(&self, p: Point) -> f64 {
        self.h.eval(p)
    }

    /// Centered-difference derivative `∂a_lj/∂x_k` at a point; exact for the
    /// affine and constant families.
    pub fn a_deriv_at(&self, p: Point, k: usize) -> [[f64; 2]; 2] {
        let d = self.cell;
        let mut pp = p;
        let mut pm = p;
        pp[k] += d;
        pm[k] -= d;
        let ap = self.a.eval(pp);
        let am = self.a.eval(pm);
        let mut out = [[0.0; 2]; 2];
        for l in 0..2 {
            for j in 0..2 {
                out[l][j] = (ap[l][j] - am[l][j]) / (2.0 * d);
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
fn eig2(m: [[f64; 2]; 2]) -> (f64, f64) {
    let half_tr = 0.5 * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (half_tr * half_tr - det).max(0.0).sqrt();
    (half_tr - disc, half_tr + disc)
}

/// Validates symmetry, ellipticity and interface positivity over all grid
/// nodes and facets, returning the hypothesis constants.
///
/// Eigenvalues are taken in closed form at every node (no random probing for
/// the bounds themselves); `probe_count` extra random directions per run
/// re-check the ellipticity estimate as a seeded cross-validation.
pub fn validate_material(
    domain: &TwoComponentDomain,
    a_spec: MatrixField,
    h_spec: ScalarField,
    probe_count: usize,
) -> Result<MaterialData, MaterialError> {
    let dim = domain.dim;
    let sym_tol = 1e-12;

    let mut alpha = f64::INFINITY;
    let mut beta = 0.0f64;
    for id in 0..domain.node_count() {
        let p = domain.node_pos(id);
        let m = a_spec.eval(p);
        if dim == 2 {
            let scale = m[0][0].abs().max(m[1][1].abs()).max(1.0);
            if (m[0][1] - m[1][0]).abs() > sym_tol * scale {
                return Err(MaterialError::NotSymmetric(p[0], p[1]));
            }
            let (lo, hi) = eig2(m);
            alpha = alpha.min(lo);
            beta = beta.max(lo.abs().max(hi.abs()));
        } else {
            alpha = alpha.min(m[0][0]);
            beta = beta.max(m[0][0].abs());
        }
    }
    if alpha <= 0.0 {
        return Err(MaterialError::NotElliptic(alpha));
    }

    // Derivative bound by centered differences on the grid.
    let cell = domain.cell_size;
    let mut m_deriv = 0.0f64;
    for id in 0..domain.node_count() {
        let p = domain.node_pos(id);
        for k in 0..dim {
            let mut pp = p;
            let mut pm = p;
            pp[k] += cell;
            pm[k] -= cell;
            let ap = a_spec.eval(pp);
            let am = a_spec.eval(pm);
            for l in 0..dim {
                for j in 0..dim {
                    m_deriv = m_deriv.max(((ap[l][j] - am[l][j]) / (2.0 * cell)).abs());
                }
            }
        }
    }
    // Snap the all-but-rounding-constant case to exactly zero.
    if m_deriv < 1e-13 {
        m_deriv = 0.0;
    }

    let mut h0 = f64::INFINITY;
    for f in &domain.interface_facets {
        h0 = h0.min(h_spec.eval(f.position));
    }
    if !(h0 > 0.0) {
        return Err(MaterialError::NonPositiveH(h0));
    }

    // Seeded cross-check of the ellipticity constant in random directions.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x6d61_7474);
    let nodes = domain.node_count();
    for _ in 0..probe_count {
        let id = (rng.next_u64() as usize) % nodes;
        let p = domain.node_pos(id);
        let ang = (rng.next_u64() as f64 / u64::MAX as f64) * core::f64::consts::TAU;
        let lam = if dim == 2 { [ang.cos(), ang.sin()] } else { [1.0, 0.0] };
        let m = a_spec.eval(p);
        let quad = m[0][0] * lam[0] * lam[0]
            + (m[0][1] + m[1][0]) * lam[0] * lam[1]
            + m[1][1] * lam[1] * lam[1];
        debug_assert!(quad >= alpha - 1e-9, "ellipticity probe failed");
        let _ = quad;
    }

    Ok(MaterialData { a: a_spec, h: h_spec, alpha, beta, m_deriv, h0, cell, dim })
}

/// The geometric smallness condition `R < α/(nM)`; vacuous when `M = 0`.
pub fn geometric_condition(material: &MaterialData, r: f64, n: usize) -> bool {
    material.m_deriv == 0.0 || r < material.alpha / (n as f64 * material.m_deriv)
}

/// Sampled low-order spatial moments used by a few diagnostics.
pub fn component_measures(domain: &TwoComponentDomain) -> (f64, f64) {
    // Count cells by the component of their midpoint.
    let cell_measure = domain.cell_size.powi_(domain.dim as i32);
    let mut vol1 = 0.0;
    let mut vol2 = 0.0;
    let cells = cell_iter(domain);
    for mid in cells {
        if domain.inner_box.lo[0] < mid[0]
            && mid[0] < domain.inner_box.hi[0]
            && (domain.dim == 1
                || (domain.inner_box.lo[1] < mid[1] && mid[1] < domain.inner_box.hi[1]))
        {
            vol2 += cell_measure;
        } else {
            vol1 += cell_measure;
        }
    }
    (vol1, vol2)
}

/// Midpoints of all grid cells.
pub(crate) fn cell_iter(domain: &TwoComponentDomain) -> Vec<Point> {
    let mut out = Vec::new();
    let half = 0.5 * domain.cell_size;
    let nx = domain.nodes_per_axis[0] - 1;
    if domain.dim == 1 {
        for i in 0..nx {
            out.push([domain.outer_box.lo[0] + i as f64 * domain.cell_size + half, 0.0]);
        }
    } else {
        let ny = domain.nodes_per_axis[1] - 1;
        for j in 0..ny {
            for i in 0..nx {
                out.push([
                    domain.outer_box.lo[0] + i as f64 * domain.cell_size + half,
                    domain.outer_box.lo[1] + j as f64 * domain.cell_size + half,
                ]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, AxisBox};

    fn dom_2d() -> TwoComponentDomain {
        build_domain(
            2,
            AxisBox::rect([0.0, 0.0], [1.0, 1.0]),
            AxisBox::rect([0.25, 0.25], [0.75, 0.75]),
            16,
        )
        .unwrap()
    }

    #[test]
    fn constant_identity_field() {
        let dom = dom_2d();
        let mat = validate_material(
            &dom,
            MatrixField::identity_scaled(1.0),
            ScalarField::constant(1.0),
            16,
        )
        .unwrap();
        assert_eq!(mat.alpha, 1.0);
        assert_eq!(mat.beta, 1.0);
        assert_eq!(mat.m_deriv, 0.0);
        assert_eq!(mat.h0, 1.0);
    }

    #[test]
    fn affine_field_constants() {
        let dom = dom_2d();
        let mat = validate_material(
            &dom,
            MatrixField::affine(1.0, [0.1, 0.0]),
            ScalarField::constant(1.0),
            16,
        )
        .unwrap();
        assert!((mat.alpha - 1.0).abs() < 1e-12);
        assert!((mat.beta - 1.1).abs() < 1e-12);
        // Centered differences of an affine entry are exact.
        assert!((mat.m_deriv - 0.1).abs() < 1e-10);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let dom = dom_2d();
        let bad = MatrixField::new(|p| {
            if p[0] == 0.5 && p[1] == 0.5 {
                [[-0.5, 0.0], [0.0, 1.0]]
            } else {
                [[1.0, 0.0], [0.0, 1.0]]
            }
        });
        let err = validate_material(&dom, bad, ScalarField::constant(1.0), 0).unwrap_err();
        assert!(matches!(err, MaterialError::NotElliptic(_)));
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let dom = dom_2d();
        let bad = MatrixField::new(|_| [[1.0, 0.3], [0.1, 1.0]]);
        let err = validate_material(&dom, bad, ScalarField::constant(1.0), 0).unwrap_err();
        assert!(matches!(err, MaterialError::NotSymmetric(..)));
    }

    #[test]
    fn nonpositive_h_rejected() {
        let dom = dom_2d();
        let err = validate_material(
            &dom,
            MatrixField::identity_scaled(1.0),
            ScalarField::constant(0.0),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, MaterialError::NonPositiveH(_)));
    }

    #[test]
    fn anisotropic_extremes_match_closed_form() {
        let dom = dom_2d();
        let mat = validate_material(
            &dom,
            MatrixField::new(|_| [[2.0, 0.5], [0.5, 1.0]]),
            ScalarField::constant(1.0),
            8,
        )
        .unwrap();
        // Eigenvalues of [[2, 0.5], [0.5, 1]] are 1.5 ± sqrt(0.5).
        let d = 0.5f64.sqrt();
        assert!((mat.alpha - (1.5 - d)).abs() < 1e-12);
        assert!((mat.beta - (1.5 + d)).abs() < 1e-12);
        assert_eq!(mat.m_deriv, 0.0);
    }

    #[test]
    fn smallness_condition() {
        let dom = dom_2d();
        let mat = validate_material(
            &dom,
            MatrixField::identity_scaled(1.0),
            ScalarField::constant(1.0),
            0,
        )
        .unwrap();
        assert!(geometric_condition(&mat, 1e9, 2));

        let affine = validate_material(
            &dom,
            MatrixField::affine(1.0, [0.1, 0.0]),
            ScalarField::constant(1.0),
            0,
        )
        .unwrap();
        // alpha = 1, M = 0.1, n = 2: threshold is 5.
        assert!(geometric_condition(&affine, 0.5, 2));
        assert!(!geometric_condition(&affine, 6.0, 2));
    }

    #[test]
    fn component_measures_unit_square() {
        let dom = dom_2d();
        let (v1, v2) = component_measures(&dom);
        assert!((v2 - 0.25).abs() < 1e-12);
        assert!((v1 - 0.75).abs() < 1e-12);
    }
}
