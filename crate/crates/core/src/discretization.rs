//! Discrete operators for the two-component form
//!
//! ```text
//! a(u,v) = ∫_{Ω₁} A∇u₁·∇v₁ + ∫_{Ω₂} A∇u₂·∇v₂ + ∫_Γ h (u₁-u₂)(v₁-v₂)
//! ```
//!
//! Interface nodes are duplicated (one value per side) and coupled through
//! the jump penalty, which enforces both interface conditions weakly while
//! keeping the stiffness symmetric. Volume terms use 3-point (1D) and
//! 5-point (2D) variable-coefficient stencils assembled cell by cell with
//! trapezoid-consistent quadrature; interface integrals use the midpoint
//! rule per facet. Exterior Dirichlet rows are eliminated.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{Facet, NodeLabel, Point, TwoComponentDomain};
use crate::material::{cell_iter, MaterialData};
#[allow(unused_imports)]
use crate::math::FloatExt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiscretizationError {
    #[error("field shape ({0}, {1}) does not match the operator layout ({2}, {3})")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("off-diagonal coefficient a12 = {0} at ({1}, {2}); stencils support diagonal A only")]
    UnsupportedCoefficient(f64, f64, f64),
}

/// Node-to-dof correspondence for the two components.
///
/// Component 1 lives on `Ω₁ ∪ Γ ∪ ∂Ω` nodes, component 2 on `Ω₂ ∪ Γ`;
/// interface nodes carry one dof per side.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub comp1_of_node: Vec<Option<usize>>,
    pub comp2_of_node: Vec<Option<usize>>,
    pub node_of_comp1: Vec<usize>,
    pub node_of_comp2: Vec<usize>,
}

impl DofMap {
    fn build(domain: &TwoComponentDomain) -> Self {
        let n = domain.node_count();
        let mut comp1_of_node = vec![None; n];
        let mut comp2_of_node = vec![None; n];
        let mut node_of_comp1 = Vec::new();
        let mut node_of_comp2 = Vec::new();
        for id in 0..n {
            match domain.label(id) {
                NodeLabel::Omega1 | NodeLabel::ExteriorBoundary => {
                    comp1_of_node[id] = Some(node_of_comp1.len());
                    node_of_comp1.push(id);
                }
                NodeLabel::Omega2 => {
                    comp2_of_node[id] = Some(node_of_comp2.len());
                    node_of_comp2.push(id);
                }
                NodeLabel::InterfaceGamma => {
                    comp1_of_node[id] = Some(node_of_comp1.len());
                    node_of_comp1.push(id);
                    comp2_of_node[id] = Some(node_of_comp2.len());
                    node_of_comp2.push(id);
                }
            }
        }
        Self { comp1_of_node, comp2_of_node, node_of_comp1, node_of_comp2 }
    }

    pub fn n1(&self) -> usize {
        self.node_of_comp1.len()
    }

    pub fn n2(&self) -> usize {
        self.node_of_comp2.len()
    }
}

/// Two-component nodal field stored as one stacked vector.
///
/// `comp1` vanishes on `∂Ω` whenever the field represents an element of the
/// solution space; constructors and solvers maintain that invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct PairField {
    data: Vec<f64>,
    n1: usize,
}

impl PairField {
    pub fn zeros(n1: usize, n2: usize) -> Self {
        Self { data: vec![0.0; n1 + n2], n1 }
    }

    pub fn from_stacked(data: Vec<f64>, n1: usize) -> Self {
        Self { data, n1 }
    }

    pub fn comp1(&self) -> &[f64] {
        &self.data[..self.n1]
    }

    pub fn comp2(&self) -> &[f64] {
        &self.data[self.n1..]
    }

    pub fn comp1_mut(&mut self) -> &mut [f64] {
        &mut self.data[..self.n1]
    }

    pub fn comp2_mut(&mut self) -> &mut [f64] {
        let n1 = self.n1;
        &mut self.data[n1..]
    }

    pub fn stacked(&self) -> &[f64] {
        &self.data
    }

    pub fn stacked_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.data.len() - self.n1
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn axpy(&mut self, a: f64, x: &PairField) {
        for (s, x) in self.data.iter_mut().zip(&x.data) {
            *s += a * x;
        }
    }

    pub fn linear_combination(a: f64, x: &PairField, b: f64, y: &PairField) -> PairField {
        let data = x
            .data
            .iter()
            .zip(&y.data)
            .map(|(xv, yv)| a * xv + b * yv)
            .collect();
        PairField { data, n1: x.n1 }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Compressed sparse rows; deterministic assembly and application order.
#[derive(Debug, Clone)]
pub struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    n: usize,
}

impl Csr {
    fn from_triplets(n: usize, triplets: &mut Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut cols = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut row_of: Vec<usize> = Vec::new();
        for &(r, c, v) in triplets.iter() {
            if let (Some(&lr), Some(&lc)) = (row_of.last(), cols.last()) {
                if lr == r && lc == c {
                    *vals.last_mut().unwrap() += v;
                    continue;
                }
            }
            row_of.push(r);
            cols.push(c);
            vals.push(v);
        }
        let mut row_ptr = vec![0usize; n + 1];
        for &r in &row_of {
            row_ptr[r + 1] += 1;
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { row_ptr, cols, vals, n }
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[r] = acc;
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.vals[k]))
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn row_abs_sum(&self, r: usize) -> f64 {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(|k| self.vals[k].abs()).sum()
    }
}

/// Three-point directional-derivative stencil over stacked dofs.
#[derive(Debug, Clone, Copy)]
pub struct Stencil3 {
    idx: [usize; 3],
    coef: [f64; 3],
}

impl Stencil3 {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coef[0] * x[self.idx[0]] + self.coef[1] * x[self.idx[1]] + self.coef[2] * x[self.idx[2]]
    }

    fn zero() -> Self {
        Self { idx: [0; 3], coef: [0.0; 3] }
    }
}

/// Precomputed per-facet extraction data for the interface.
#[derive(Debug, Clone)]
pub struct InterfaceStencil {
    /// Id into `domain.interface_facets`.
    pub facet: usize,
    /// Sampled interface coefficient at the facet midpoint.
    pub h: f64,
    /// `h · measure`, the quadrature weight of the jump penalty.
    pub weight: f64,
    /// `A n·n` per side, sampled just inside each component.
    pub a_nn: [f64; 2],
    /// Tangential diagonal entry per side (2D only).
    pub a_tt: [f64; 2],
    /// Stacked dof pairs `(comp1, comp2)` per facet node.
    pub node_dofs: [(usize, usize); 2],
    /// One-sided `∂z/∂n_i` stencils per facet node, side 1 then side 2.
    pub conormal1: [Stencil3; 2],
    pub conormal2: [Stencil3; 2],
}

/// Per-facet extraction data for the exterior boundary (side 1 only).
#[derive(Debug, Clone)]
pub struct BoundaryStencil {
    pub facet: usize,
    pub a_nn: f64,
    pub conormal: [Stencil3; 2],
}

/// Assembled operators plus the geometric and material data they came from.
pub struct DiscreteOperators {
    domain: TwoComponentDomain,
    material: MaterialData,
    map: DofMap,
    stiffness: Csr,
    /// Diagonal quadrature weights (full trapezoid weights, boundary included).
    mass: Vec<f64>,
    /// Inverse mass on free dofs, zero on eliminated Dirichlet dofs.
    inv_mass: Vec<f64>,
    /// True for eliminated (exterior Dirichlet) stacked dofs.
    dirichlet: Vec<bool>,
    interface: Vec<InterfaceStencil>,
    boundary: Vec<BoundaryStencil>,
    /// Nodal gradient stencils per stacked dof and direction.
    grad: Vec<[Stencil3; 2]>,
    stable_dt: f64,
}

/// Per-facet trace record produced by [`interface_quantities`].
#[derive(Debug, Clone, Copy)]
pub struct InterfaceRecord {
    pub facet: usize,
    /// Jump `u₁ - u₂` at the facet midpoint.
    pub jump: f64,
    /// One-sided conormal derivatives `A∇u_i·n_i` per side.
    pub conormal1: f64,
    pub conormal2: f64,
    /// The weak shared flux `-h (u₁ - u₂)` that both sides carry.
    pub shared_flux: f64,
    /// Tangential derivative of each side along the facet (zero in 1D).
    pub tangential1: f64,
    pub tangential2: f64,
}

impl DiscreteOperators {
    pub fn domain(&self) -> &TwoComponentDomain {
        &self.domain
    }

    pub fn material(&self) -> &MaterialData {
        &self.material
    }

    pub fn map(&self) -> &DofMap {
        &self.map
    }

    pub fn n_dofs(&self) -> usize {
        self.map.n1() + self.map.n2()
    }

    pub fn zeros(&self) -> PairField {
        PairField::zeros(self.map.n1(), self.map.n2())
    }

    pub fn check_shape(&self, u: &PairField) -> Result<(), DiscretizationError> {
        if u.n1() != self.map.n1() || u.n2() != self.map.n2() {
            return Err(DiscretizationError::ShapeMismatch(
                u.n1(),
                u.n2(),
                self.map.n1(),
                self.map.n2(),
            ));
        }
        Ok(())
    }

    /// Fills a field from nodal closures and enforces the Dirichlet trace.
    pub fn project(&self, f1: impl Fn(Point) -> f64, f2: impl Fn(Point) -> f64) -> PairField {
        let mut u = self.zeros();
        for (dof, &node) in self.map.node_of_comp1.iter().enumerate() {
            u.comp1_mut()[dof] = f1(self.domain.node_pos(node));
        }
        for (dof, &node) in self.map.node_of_comp2.iter().enumerate() {
            u.comp2_mut()[dof] = f2(self.domain.node_pos(node));
        }
        self.enforce_dirichlet(&mut u);
        u
    }

    pub fn enforce_dirichlet(&self, u: &mut PairField) {
        for (i, &constrained) in self.dirichlet.iter().enumerate() {
            if constrained {
                u.stacked_mut()[i] = 0.0;
            }
        }
    }

    /// `y = K u` on the stacked layout.
    pub fn apply_stiffness(&self, u: &PairField, y: &mut PairField) {
        self.stiffness.mul(u.stacked(), y.stacked_mut());
    }

    pub fn stiffness_action(&self, u: &PairField) -> PairField {
        let mut y = self.zeros();
        self.apply_stiffness(u, &mut y);
        y
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn inv_mass(&self) -> &[f64] {
        &self.inv_mass
    }

    pub fn is_dirichlet(&self) -> &[bool] {
        &self.dirichlet
    }

    /// Mass-weighted inner product `⟨M u, v⟩` (full quadrature weights).
    pub fn mass_dot(&self, u: &PairField, v: &PairField) -> f64 {
        u.stacked()
            .iter()
            .zip(v.stacked())
            .zip(&self.mass)
            .map(|((a, b), m)| a * b * m)
            .sum()
    }

    /// Component-restricted mass inner products `(⟨M₁u₁,v₁⟩, ⟨M₂u₂,v₂⟩)`.
    pub fn mass_dot_split(&self, u: &PairField, v: &PairField) -> (f64, f64) {
        let n1 = self.map.n1();
        let mut k1 = 0.0;
        let mut k2 = 0.0;
        for i in 0..u.stacked().len() {
            let t = u.stacked()[i] * v.stacked()[i] * self.mass[i];
            if i < n1 {
                k1 += t;
            } else {
                k2 += t;
            }
        }
        (k1, k2)
    }

    pub fn interface_stencils(&self) -> &[InterfaceStencil] {
        &self.interface
    }

    pub fn boundary_stencils(&self) -> &[BoundaryStencil] {
        &self.boundary
    }

    /// Largest stable leapfrog step, from the Gershgorin bound on `M⁻¹K`.
    pub fn stable_dt(&self) -> f64 {
        self.stable_dt
    }

    /// Nodal gradient of the component field carrying the given stacked dof.
    pub fn gradient_at(&self, u: &PairField, stacked_dof: usize) -> [f64; 2] {
        let g = &self.grad[stacked_dof];
        [g[0].eval(u.stacked()), g[1].eval(u.stacked())]
    }

    /// Stiffness entries in deterministic (row, col, value) order.
    pub fn stiffness_triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.stiffness.entries()
    }

    /// Splits `a(u,v)` into its three defining pieces
    /// (gradient over `Ω₁`, gradient over `Ω₂`, interface penalty),
    /// each quadratured exactly as in the assembled operator.
    pub fn bilinear_split(&self, u: &PairField, v: &PairField) -> (f64, f64, f64) {
        let dom = &self.domain;
        let cell = dom.cell_size;
        let mut grad1 = 0.0;
        let mut grad2 = 0.0;

        for mid in cell_iter(dom) {
            let inner = dom.inner_box.contains_open(mid, dom.dim);
            let acc = if dom.dim == 1 {
                let i = ((mid[0] - dom.outer_box.lo[0]) / cell).floor() as usize;
                let (da, db) = (self.cell_dof(i, 0, inner), self.cell_dof(i + 1, 0, inner));
                let a = self.material.a_diag_at(mid)[0];
                a / cell
                    * (u.stacked()[db] - u.stacked()[da])
                    * (v.stacked()[db] - v.stacked()[da])
            } else {
                let i = ((mid[0] - dom.outer_box.lo[0]) / cell).floor() as usize;
                let j = ((mid[1] - dom.outer_box.lo[1]) / cell).floor() as usize;
                let mut acc = 0.0;
                for (pa, pb) in cell_edges(i, j) {
                    let da = self.cell_dof(pa[0], pa[1], inner);
                    let db = self.cell_dof(pb[0], pb[1], inner);
                    let ax = if pa[1] == pb[1] { 0 } else { 1 };
                    let emid = edge_midpoint(dom, pa, pb);
                    let a = self.material.a_diag_at(emid)[ax];
                    acc += 0.5
                        * a
                        * (u.stacked()[db] - u.stacked()[da])
                        * (v.stacked()[db] - v.stacked()[da]);
                }
                acc
            };
            if inner {
                grad2 += acc;
            } else {
                grad1 += acc;
            }
        }

        let mut iface = 0.0;
        for st in &self.interface {
            iface += st.weight * jump_mid(st, u) * jump_mid(st, v);
        }
        (grad1, grad2, iface)
    }

    fn cell_dof(&self, i: usize, j: usize, inner: bool) -> usize {
        let node = self.domain.node_index(i, j);
        if inner {
            self.map.n1() + self.map.comp2_of_node[node].expect("inner cell node has comp2 dof")
        } else {
            self.map.comp1_of_node[node].expect("outer cell node has comp1 dof")
        }
    }
}

fn jump_mid(st: &InterfaceStencil, u: &PairField) -> f64 {
    let j0 = u.stacked()[st.node_dofs[0].0] - u.stacked()[st.node_dofs[0].1];
    let j1 = u.stacked()[st.node_dofs[1].0] - u.stacked()[st.node_dofs[1].1];
    0.5 * (j0 + j1)
}

fn cell_edges(i: usize, j: usize) -> [([usize; 2], [usize; 2]); 4] {
    [
        ([i, j], [i + 1, j]),
        ([i, j + 1], [i + 1, j + 1]),
        ([i, j], [i, j + 1]),
        ([i + 1, j], [i + 1, j + 1]),
    ]
}

fn edge_midpoint(dom: &TwoComponentDomain, a: [usize; 2], b: [usize; 2]) -> Point {
    let pa = dom.node_pos(dom.node_index(a[0], a[1]));
    let pb = dom.node_pos(dom.node_index(b[0], b[1]));
    [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
}

/// Assembles stiffness, mass and the trace extractors.
pub fn assemble(
    domain: TwoComponentDomain,
    material: MaterialData,
) -> Result<DiscreteOperators, DiscretizationError> {
    let map = DofMap::build(&domain);
    let n1 = map.n1();
    let n = n1 + map.n2();
    let cell = domain.cell_size;
    let dim = domain.dim;

    let dof1 = |node: usize| map.comp1_of_node[node].expect("comp1 dof");
    let dof2 = |node: usize| n1 + map.comp2_of_node[node].expect("comp2 dof");

    // Reject genuinely non-diagonal coefficients up front.
    for mid in cell_iter(&domain) {
        let m = material.a_at(mid);
        let scale = m[0][0].abs().max(m[1][1].abs()).max(1.0);
        if dim == 2 && m[0][1].abs() > 1e-12 * scale {
            return Err(DiscretizationError::UnsupportedCoefficient(m[0][1], mid[0], mid[1]));
        }
    }

    let mut mass = vec![0.0f64; n];
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let corner_mass = cell.powi_(dim as i32) / 2f64.powi_(dim as i32);

    for mid in cell_iter(&domain) {
        let inner = domain.inner_box.contains_open(mid, dim);
        if dim == 1 {
            let i = ((mid[0] - domain.outer_box.lo[0]) / cell).floor() as usize;
            let nodes = [domain.node_index(i, 0), domain.node_index(i + 1, 0)];
            let dofs: Vec<usize> = nodes
                .iter()
                .map(|&nd| if inner { dof2(nd) } else { dof1(nd) })
                .collect();
            for &d in &dofs {
                mass[d] += corner_mass;
            }
            let a = material.a_diag_at(mid)[0];
            let c = a / cell;
            push_edge(&mut triplets, dofs[0], dofs[1], c);
        } else {
            let i = ((mid[0] - domain.outer_box.lo[0]) / cell).floor() as usize;
            let j = ((mid[1] - domain.outer_box.lo[1]) / cell).floor() as usize;
            for (pa, pb) in cell_edges(i, j) {
                let na = domain.node_index(pa[0], pa[1]);
                let nb = domain.node_index(pb[0], pb[1]);
                let (da, db) = if inner {
                    (dof2(na), dof2(nb))
                } else {
                    (dof1(na), dof1(nb))
                };
                let ax = if pa[1] == pb[1] { 0 } else { 1 };
                let a = material.a_diag_at(edge_midpoint(&domain, pa, pb))[ax];
                push_edge(&mut triplets, da, db, 0.5 * a);
            }
            for pa in [[i, j], [i + 1, j], [i, j + 1], [i + 1, j + 1]] {
                let nd = domain.node_index(pa[0], pa[1]);
                let d = if inner { dof2(nd) } else { dof1(nd) };
                mass[d] += corner_mass;
            }
        }
    }

    // Interface penalty with facet-midpoint quadrature.
    let mut interface = Vec::with_capacity(domain.interface_facets.len());
    for (fid, f) in domain.interface_facets.iter().enumerate() {
        let h = material.h_at(f.position);
        let weight = h * f.measure;
        let nd = [
            (dof1(f.nodes[0]), dof2(f.nodes[0])),
            (dof1(f.nodes[1]), dof2(f.nodes[1])),
        ];
        // Midpoint jump is the average of the endpoint jumps; the rank-one
        // quadratic form expands over every dof pair.
        let half = if f.nodes[0] == f.nodes[1] { 1.0 } else { 0.5 };
        let entries: Vec<(usize, f64)> = if f.nodes[0] == f.nodes[1] {
            vec![(nd[0].0, 1.0), (nd[0].1, -1.0)]
        } else {
            vec![(nd[0].0, half), (nd[0].1, -half), (nd[1].0, half), (nd[1].1, -half)]
        };
        for &(di, ci) in &entries {
            for &(dj, cj) in &entries {
                triplets.push((di, dj, weight * ci * cj));
            }
        }

        interface.push(InterfaceStencil {
            facet: fid,
            h,
            weight,
            a_nn: [material.a_nn_at_side(f, 1), material.a_nn_at_side(f, 2)],
            a_tt: if dim == 2 {
                [material.a_tt_at_side(f, 1), material.a_tt_at_side(f, 2)]
            } else {
                [0.0, 0.0]
            },
            node_dofs: nd,
            conormal1: conormal_stencils(&domain, &map, f, 1, cell),
            conormal2: conormal_stencils(&domain, &map, f, 2, cell),
        });
    }

    // Dirichlet elimination: drop every row/column touching an exterior node.
    let mut dirichlet = vec![false; n];
    for (d, &node) in map.node_of_comp1.iter().enumerate() {
        if domain.label(node) == NodeLabel::ExteriorBoundary {
            dirichlet[d] = true;
        }
    }
    triplets.retain(|&(r, c, _)| !dirichlet[r] && !dirichlet[c]);

    let stiffness = Csr::from_triplets(n, &mut triplets);

    let mut inv_mass = vec![0.0; n];
    for i in 0..n {
        debug_assert!(mass[i] > 0.0, "every dof receives quadrature weight");
        if !dirichlet[i] {
            inv_mass[i] = 1.0 / mass[i];
        }
    }

    let mut stable_dt = f64::INFINITY;
    for r in 0..n {
        if dirichlet[r] {
            continue;
        }
        let s = stiffness.row_abs_sum(r);
        if s > 0.0 {
            stable_dt = stable_dt.min(2.0 / (s / mass[r]).sqrt());
        }
    }

    let boundary = domain
        .boundary_facets
        .iter()
        .enumerate()
        .map(|(fid, f)| BoundaryStencil {
            facet: fid,
            a_nn: {
                // Sample a quarter cell inside the domain.
                let p = [
                    f.position[0] - 0.25 * cell * f.normal1[0],
                    f.position[1] - 0.25 * cell * f.normal1[1],
                ];
                material.a_at(p)[f.axis][f.axis]
            },
            conormal: boundary_conormal_stencils(&domain, &map, f, cell),
        })
        .collect();

    let grad = build_gradient_stencils(&domain, &map, cell);

    Ok(DiscreteOperators {
        domain,
        material,
        map,
        stiffness,
        mass,
        inv_mass,
        dirichlet,
        interface,
        boundary,
        grad,
        stable_dt,
    })
}

fn push_edge(triplets: &mut Vec<(usize, usize, f64)>, a: usize, b: usize, c: f64) {
    triplets.push((a, a, c));
    triplets.push((b, b, c));
    triplets.push((a, b, -c));
    triplets.push((b, a, -c));
}

/// One-sided second-order `∂z/∂n_i` stencils at the two facet nodes.
///
/// The stencil steps inward from the facet along the normal axis; values on
/// the stepped nodes are the traces of the same side. The outward-normal
/// derivative is the negated inward directional derivative.
fn conormal_stencils(
    domain: &TwoComponentDomain,
    map: &DofMap,
    f: &Facet,
    side: usize,
    cell: f64,
) -> [Stencil3; 2] {
    let n1 = map.n1();
    // Inward direction for this side: -n_i. n₂ = -n₁, so side 2 steps along
    // +n₁ (into the box) and side 1 along -n₁.
    let sgn = if side == 1 { -1.0 } else { 1.0 };
    let di = (f.normal1[0] * sgn).round() as isize;
    let dj = (f.normal1[1] * sgn).round() as isize;

    let mut out = [Stencil3::zero(); 2];
    for (slot, &node) in f.nodes.iter().enumerate() {
        let (i, j) = domain.node_coords(node);
        let step = |k: isize| {
            let ni = (i as isize + k * di) as usize;
            let nj = (j as isize + k * dj) as usize;
            domain.node_index(ni, nj)
        };
        let dof_of = |nd: usize| -> usize {
            if side == 1 {
                map.comp1_of_node[nd].expect("side-1 trace exists along inward line")
            } else {
                n1 + map.comp2_of_node[nd].expect("side-2 trace exists along inward line")
            }
        };
        // Negated inward derivative -(-3 f0 + 4 f1 - f2)/(2Δ): the stencil
        // evaluates ∂z/∂n_i directly.
        out[slot] = Stencil3 {
            idx: [dof_of(step(0)), dof_of(step(1)), dof_of(step(2))],
            coef: [3.0 / (2.0 * cell), -4.0 / (2.0 * cell), 1.0 / (2.0 * cell)],
        };
    }
    out
}

fn boundary_conormal_stencils(
    domain: &TwoComponentDomain,
    map: &DofMap,
    f: &Facet,
    cell: f64,
) -> [Stencil3; 2] {
    // On ∂Ω the normal points outward, so the inward step is -normal1.
    let di = (-f.normal1[0]).round() as isize;
    let dj = (-f.normal1[1]).round() as isize;
    let mut out = [Stencil3::zero(); 2];
    for (slot, &node) in f.nodes.iter().enumerate() {
        let (i, j) = domain.node_coords(node);
        let step = |k: isize| {
            let ni = (i as isize + k * di) as usize;
            let nj = (j as isize + k * dj) as usize;
            domain.node_index(ni, nj)
        };
        let dof_of = |nd: usize| map.comp1_of_node[nd].expect("comp1 trace inward of ∂Ω");
        out[slot] = Stencil3 {
            idx: [dof_of(step(0)), dof_of(step(1)), dof_of(step(2))],
            coef: [3.0 / (2.0 * cell), -4.0 / (2.0 * cell), 1.0 / (2.0 * cell)],
        };
    }
    out
}

/// Centered nodal gradients where both neighbors carry the same-side trace,
/// one-sided second order otherwise.
fn build_gradient_stencils(
    domain: &TwoComponentDomain,
    map: &DofMap,
    cell: f64,
) -> Vec<[Stencil3; 2]> {
    let n1 = map.n1();
    let n = n1 + map.n2();
    let mut out = vec![[Stencil3::zero(); 2]; n];

    let (nx, ny) = (domain.nodes_per_axis[0], domain.nodes_per_axis[1]);
    let in_grid = |i: isize, j: isize| i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny;

    for dof in 0..n {
        let side1 = dof < n1;
        let node = if side1 {
            map.node_of_comp1[dof]
        } else {
            map.node_of_comp2[dof - n1]
        };
        let (i, j) = domain.node_coords(node);
        for d in 0..domain.dim {
            let (di, dj) = if d == 0 { (1isize, 0isize) } else { (0, 1) };
            let trace = |k: isize| -> Option<usize> {
                let (ni, nj) = (i as isize + k * di, j as isize + k * dj);
                if !in_grid(ni, nj) {
                    return None;
                }
                let nd = domain.node_index(ni as usize, nj as usize);
                if side1 {
                    map.comp1_of_node[nd]
                } else {
                    map.comp2_of_node[nd].map(|x| x + n1)
                }
            };
            let center = trace(0).expect("own dof");
            let st = match (trace(-1), trace(1)) {
                (Some(m), Some(p)) => Stencil3 {
                    idx: [m, center, p],
                    coef: [-1.0 / (2.0 * cell), 0.0, 1.0 / (2.0 * cell)],
                },
                (None, Some(p)) => match trace(2) {
                    Some(pp) => Stencil3 {
                        idx: [center, p, pp],
                        coef: [-3.0 / (2.0 * cell), 4.0 / (2.0 * cell), -1.0 / (2.0 * cell)],
                    },
                    None => Stencil3 {
                        idx: [center, p, p],
                        coef: [-1.0 / cell, 1.0 / cell, 0.0],
                    },
                },
                (Some(m), None) => match trace(-2) {
                    Some(mm) => Stencil3 {
                        idx: [center, m, mm],
                        coef: [3.0 / (2.0 * cell), -4.0 / (2.0 * cell), 1.0 / (2.0 * cell)],
                    },
                    None => Stencil3 {
                        idx: [center, m, m],
                        coef: [1.0 / cell, -1.0 / cell, 0.0],
                    },
                },
                (None, None) => Stencil3::zero(),
            };
            out[dof][d] = st;
        }
    }
    out
}

/// `a(u, v) = ⟨K u, v⟩`.
pub fn bilinear_form(
    ops: &DiscreteOperators,
    u: &PairField,
    v: &PairField,
) -> Result<f64, DiscretizationError> {
    ops.check_shape(u)?;
    ops.check_shape(v)?;
    let ku = ops.stiffness_action(u);
    Ok(ku.stacked().iter().zip(v.stacked()).map(|(a, b)| a * b).sum())
}

/// Per-facet interface traces of a field: jump, one-sided conormal
/// derivatives, the shared weak flux, and tangential derivatives.
pub fn interface_quantities(ops: &DiscreteOperators, u: &PairField) -> Vec<InterfaceRecord> {
    let dom = ops.domain();
    let cell = dom.cell_size;
    ops.interface
        .iter()
        .map(|st| {
            let f = &dom.interface_facets[st.facet];
            let jump = jump_mid(st, u);
            let cn1 = 0.5
                * st.a_nn[0]
                * (st.conormal1[0].eval(u.stacked()) + st.conormal1[1].eval(u.stacked()));
            let cn2 = 0.5
                * st.a_nn[1]
                * (st.conormal2[0].eval(u.stacked()) + st.conormal2[1].eval(u.stacked()));
            let (t1, t2) = if dom.dim == 2 && f.nodes[0] != f.nodes[1] {
                let s1 = (u.stacked()[st.node_dofs[1].0] - u.stacked()[st.node_dofs[0].0]) / cell;
                let s2 = (u.stacked()[st.node_dofs[1].1] - u.stacked()[st.node_dofs[0].1]) / cell;
                (s1, s2)
            } else {
                (0.0, 0.0)
            };
            InterfaceRecord {
                facet: st.facet,
                jump,
                conormal1: cn1,
                conormal2: cn2,
                shared_flux: -st.h * jump,
                tangential1: t1,
                tangential2: t2,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, AxisBox};
    use crate::material::{validate_material, MatrixField, ScalarField};

    fn ops_1d(res: usize) -> DiscreteOperators {
        let dom = build_domain(
            1,
            AxisBox::interval(0.0, 1.0),
            AxisBox::interval(0.25, 0.75),
            res,
        )
        .unwrap();
        let mat = validate_material(
            &dom,
            MatrixField::identity_scaled(1.0),
            ScalarField::constant(1.0),
            0,
        )
        .unwrap();
        assemble(dom, mat).unwrap()
    }

    fn ops_2d(res: usize) -> DiscreteOperators {
        let dom = build_domain(
            2,
            AxisBox::rect([0.0, 0.0], [1.0, 1.0]),
            AxisBox::rect([0.25, 0.25], [0.75, 0.75]),
            res,
        )
        .unwrap();
        let mat = validate_material(
            &dom,
            MatrixField::identity_scaled(1.0),
            ScalarField::constant(1.0),
            0,
        )
        .unwrap();
        assemble(dom, mat).unwrap()
    }

    #[test]
    fn interior_stencil_is_standard_laplacian() {
        let ops = ops_1d(8);
        // Pick an interior Ω₁ node away from boundary and interface.
        let dom = ops.domain();
        let node = dom.node_index(1, 0);
        let dof = ops.map().comp1_of_node[node].unwrap();
        let mut u = ops.zeros();
        u.stacked_mut()[dof] = 1.0;
        let ku = ops.stiffness_action(&u);
        let cell = dom.cell_size;
        // Strong form K/M at the node: 2/Δ² on the diagonal.
        let strong = ku.stacked()[dof] * ops.inv_mass()[dof];
        assert!((strong - 2.0 / (cell * cell)).abs() < 1e-9);
    }

    #[test]
    fn kernel_contains_only_zero_after_dirichlet() {
        let ops = ops_1d(8);
        // Constant 1 on both components violates the boundary condition;
        // after enforcement the energy of the result is positive unless zero.
        let mut u = ops.project(|_| 1.0, |_| 1.0);
        let e = bilinear_form(&ops, &u, &u).unwrap();
        assert!(e > 0.0);
        u.scale(0.0);
        assert_eq!(bilinear_form(&ops, &u, &u).unwrap(), 0.0);
    }

    #[test]
    fn pure_jump_energy_equals_interface_quadrature() {
        let ops = ops_2d(16);
        let dom = ops.domain();
        let mut u = ops.zeros();
        for (dof, &node) in ops.map().node_of_comp1.iter().enumerate() {
            if dom.label(node) == NodeLabel::InterfaceGamma {
                u.comp1_mut()[dof] = 1.0;
            }
        }
        let (_, _, iface) = ops.bilinear_split(&u, &u);
        let expect: f64 = ops.interface_stencils().iter().map(|s| s.weight).sum();
        assert!((iface - expect).abs() < 1e-12);
        // The total also carries the gradient energy of the side-1 spike.
        let total = bilinear_form(&ops, &u, &u).unwrap();
        assert!(total > iface);
    }

    #[test]
    fn stiffness_is_symmetric() {
        let ops = ops_2d(16);
        let mut rng = 0x12345u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for _ in 0..4 {
            let mut u = ops.zeros();
            let mut v = ops.zeros();
            for x in u.stacked_mut() {
                *x = next();
            }
            for x in v.stacked_mut() {
                *x = next();
            }
            ops.enforce_dirichlet(&mut u);
            ops.enforce_dirichlet(&mut v);
            let auv = bilinear_form(&ops, &u, &v).unwrap();
            let avu = bilinear_form(&ops, &v, &u).unwrap();
            let scale = bilinear_form(&ops, &u, &u).unwrap().abs()
                + bilinear_form(&ops, &v, &v).unwrap().abs();
            assert!((auv - avu).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn gauss_green_split_matches_total() {
        let ops = ops_2d(16);
        let u = ops.project(
            |p| (core::f64::consts::PI * p[0]).sin() * (core::f64::consts::PI * p[1]).sin(),
            |p| 0.5 * p[0] + p[1],
        );
        let v = ops.project(|p| p[0] * p[1], |p| (3.0 * p[0]).sin());
        let (g1, g2, iface) = ops.bilinear_split(&u, &v);
        let total = bilinear_form(&ops, &u, &v).unwrap();
        assert!((g1 + g2 + iface - total).abs() <= 1e-12 * (1.0 + total.abs()));
    }

    #[test]
    fn bilinear_form_converges_to_continuum() {
        // u = v = sin(πx)sin(πy) on both sides has zero jump and
        // ∫|∇u|² = π²/2.
        let pi = core::f64::consts::PI;
        let exact = pi * pi / 2.0;
        let mut errs = Vec::new();
        for res in [16usize, 32, 64] {
            let ops = ops_2d(res);
            let f = |p: [f64; 2]| (pi * p[0]).sin() * (pi * p[1]).sin();
            let u = ops.project(f, f);
            let a = bilinear_form(&ops, &u, &u).unwrap();
            errs.push((a - exact).abs());
        }
        let order1 = (errs[0] / errs[1]).log2();
        let order2 = (errs[1] / errs[2]).log2();
        assert!(
            order1 > 1.9 && order2 > 1.9,
            "observed orders {order1:.2}, {order2:.2}, errors {errs:?}"
        );
    }

    #[test]
    fn conormal_exact_for_linear_fields() {
        let ops = ops_2d(16);
        let u = ops.project(|p| p[0], |p| p[0]);
        // Dirichlet enforcement clips the boundary, but interface stencils
        // only read interior traces; rebuild without clipping comp1 there.
        let dom = ops.domain();
        let mut u = u;
        for (dof, &node) in ops.map().node_of_comp1.iter().enumerate() {
            u.comp1_mut()[dof] = dom.node_pos(node)[0];
        }
        for rec in interface_quantities(&ops, &u) {
            let f = &dom.interface_facets[rec.facet];
            assert!((rec.jump).abs() < 1e-13);
            assert!(
                (rec.conormal1 - f.normal1[0]).abs() < 1e-10,
                "facet {:?}: conormal1 {}",
                f.position,
                rec.conormal1
            );
            // n₂ = -n₁.
            assert!((rec.conormal2 + f.normal1[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn conormal_for_one_sided_ramp() {
        let ops = ops_1d(64);
        let dom = ops.domain();
        // Distance to Γ on the Ω₁ side, 0 inside.
        let mut u = ops.zeros();
        for (dof, &node) in ops.map().node_of_comp1.iter().enumerate() {
            u.comp1_mut()[dof] = dom.dist_to_interface(dom.node_pos(node));
        }
        for rec in interface_quantities(&ops, &u) {
            // Moving along n₁ (into the box) the side-1 profile decays with
            // slope one: conormal1 ≈ -1.
            assert!((rec.conormal1 + 1.0).abs() < 1e-9, "conormal1 {}", rec.conormal1);
            assert_eq!(rec.tangential1, 0.0);
            assert_eq!(rec.tangential2, 0.0);
        }
    }

    #[test]
    fn shared_flux_balances_exactly() {
        let ops = ops_2d(16);
        let u = ops.project(
            |p| (p[0] - 0.3) * (p[1] + 0.2),
            |p| (2.0 * p[0]).sin() * p[1],
        );
        for rec in interface_quantities(&ops, &u) {
            // The weak flux is shared: side 1 carries +F, side 2 carries -F.
            let f1 = rec.shared_flux;
            let f2 = -rec.shared_flux;
            assert_eq!(f1 + f2, 0.0);
        }
    }

    #[test]
    fn shape_mismatch_detected() {
        let ops = ops_1d(8);
        let other = ops_1d(16);
        let u = ops.zeros();
        let v = other.zeros();
        assert!(matches!(
            bilinear_form(&ops, &u, &v),
            Err(DiscretizationError::ShapeMismatch(..))
        ));
    }

    #[test]
    fn nondiagonal_coefficient_rejected() {
        let dom = build_domain(
            2,
            AxisBox::rect([0.0, 0.0], [1.0, 1.0]),
            AxisBox::rect([0.25, 0.25], [0.75, 0.75]),
            16,
        )
        .unwrap();
        let mat = validate_material(
            &dom,
            MatrixField::new(|_| [[1.0, 0.2], [0.2, 1.0]]),
            ScalarField::constant(1.0),
            0,
        )
        .unwrap();
        assert!(matches!(
            assemble(dom, mat),
            Err(DiscretizationError::UnsupportedCoefficient(..))
        ));
    }

    #[test]
    fn gradient_stencils_exact_for_linears() {
        let ops = ops_2d(16);
        let dom = ops.domain();
        let mut u = ops.zeros();
        for (dof, &node) in ops.map().node_of_comp1.iter().enumerate() {
            let p = dom.node_pos(node);
            u.comp1_mut()[dof] = 2.0 * p[0] - 3.0 * p[1];
        }
        for (dof, &node) in ops.map().node_of_comp2.iter().enumerate() {
            let p = dom.node_pos(node);
            u.comp2_mut()[dof] = 2.0 * p[0] - 3.0 * p[1];
        }
        for dof in 0..ops.n_dofs() {
            let g = ops.gradient_at(&u, dof);
            assert!((g[0] - 2.0).abs() < 1e-10 && (g[1] + 3.0).abs() < 1e-10);
        }
    }
}
