//! Two-component box domains.
//!
//! The domain is an axis-aligned outer box holding a strictly interior inner
//! box. The inner region is `Ω₂`, the shell between the boxes is `Ω₁`, the
//! inner-box boundary is the interface `Γ` and the outer-box boundary is
//! `∂Ω`. Grids are uniform and the inner faces are required to lie exactly
//! on grid lines, so facet normals and measures are exact.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::math::vec2;
#[allow(unused_imports)]
use crate::math::FloatExt;

/// Point in the plane; 1D geometry uses the first coordinate only.
pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("inner box must be strictly inside the outer box")]
    DegenerateDomain,
    #[error("inner box face at coordinate {coord} does not lie on a grid line (cell size {cell})")]
    MisalignedInterface { coord: f64, cell: f64 },
    #[error("resolution {0} is below the minimum of 8 cells per axis")]
    InvalidResolution(usize),
    #[error("outer box edge lengths must be integer multiples of the cell size")]
    AnisotropicCells,
    #[error("observer must lie inside the inner component")]
    ObserverOutsideInner,
    #[error("control-region thickness {got} is below two cells ({min})")]
    ThicknessTooSmall { got: f64, min: f64 },
    #[error("control region {0} contains no nodes")]
    EmptyControlRegion(&'static str),
}

/// Axis-aligned box given by its lower and upper corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisBox {
    pub lo: Point,
    pub hi: Point,
}

impl AxisBox {
    /// 1D interval; the second axis is unused.
    pub fn interval(lo: f64, hi: f64) -> Self {
        Self { lo: [lo, 0.0], hi: [hi, 0.0] }
    }

    pub fn rect(lo: Point, hi: Point) -> Self {
        Self { lo, hi }
    }

    fn strictly_contains(&self, other: &AxisBox, dim: usize) -> bool {
        (0..dim).all(|d| self.lo[d] < other.lo[d] && other.hi[d] < self.hi[d])
    }

    pub fn contains_open(&self, p: Point, dim: usize) -> bool {
        (0..dim).all(|d| self.lo[d] < p[d] && p[d] < self.hi[d])
    }
}

/// Per-node region label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeLabel {
    Omega1,
    Omega2,
    ExteriorBoundary,
    InterfaceGamma,
}

/// One facet of `Γ` or `∂Ω`: a point in 1D, a grid edge in 2D.
///
/// `normal1` is the unit outward normal of `Ω₁`; on the interface it points
/// into the inner box, on the exterior boundary out of the domain. `n₂` is
/// never stored since `n₂ = -n₁` facet-wise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    /// Midpoint of the facet.
    pub position: Point,
    /// Unit outward normal of `Ω₁`.
    pub normal1: Point,
    /// Point measure 1 in 1D, edge length in 2D.
    pub measure: f64,
    /// Axis the normal is aligned with.
    pub axis: usize,
    /// Node ids of the facet endpoints; both entries coincide in 1D.
    pub nodes: [usize; 2],
}

/// Structured two-component domain with exact interface geometry.
#[derive(Debug, Clone)]
pub struct TwoComponentDomain {
    pub dim: usize,
    pub outer_box: AxisBox,
    pub inner_box: AxisBox,
    /// Cells along axis 0; other axes derive their count from the cell size.
    pub resolution: usize,
    pub cell_size: f64,
    /// Nodes per axis (cells + 1); `[n, 1]` in 1D.
    pub nodes_per_axis: [usize; 2],
    pub node_partition: Vec<NodeLabel>,
    pub interface_facets: Vec<Facet>,
    pub boundary_facets: Vec<Facet>,
}

/// Splitting of the exterior boundary by the observer sign test `m·n₁ > 0`.
#[derive(Debug, Clone)]
pub struct BoundaryPartition {
    pub observer: Point,
    /// Ids into `boundary_facets` with `m·n₁ > 0` at the facet midpoint.
    pub active: Vec<usize>,
    pub inactive: Vec<usize>,
}

/// Node masks for the two control regions.
///
/// `omega1` marks `Ω₁` nodes within `thickness1` of the active exterior
/// boundary, `omega2` marks `Ω₂` nodes within `thickness2` of the interface.
/// Interface and exterior-boundary nodes are never masked: the regions are
/// open subsets of the components.
#[derive(Debug, Clone)]
pub struct ControlRegions {
    pub omega1: Vec<bool>,
    pub omega2: Vec<bool>,
    pub thickness1: f64,
    pub thickness2: f64,
}

impl TwoComponentDomain {
    pub fn node_count(&self) -> usize {
        self.nodes_per_axis[0] * self.nodes_per_axis[1]
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * self.nodes_per_axis[0] + i
    }

    pub fn node_coords(&self, id: usize) -> (usize, usize) {
        (id % self.nodes_per_axis[0], id / self.nodes_per_axis[0])
    }

    pub fn node_pos(&self, id: usize) -> Point {
        let (i, j) = self.node_coords(id);
        [
            self.outer_box.lo[0] + i as f64 * self.cell_size,
            self.outer_box.lo[1] + j as f64 * self.cell_size,
        ]
    }

    pub fn label(&self, id: usize) -> NodeLabel {
        self.node_partition[id]
    }

    /// Distance from a point to the interface (the inner-box boundary).
    pub fn dist_to_interface(&self, p: Point) -> f64 {
        dist_to_box_boundary(p, &self.inner_box, self.dim)
    }

    /// Plain-text summary: node counts, facet measures, partition sizes.
    pub fn summary(&self) -> String {
        let mut counts = [0usize; 4];
        for l in &self.node_partition {
            counts[match l {
                NodeLabel::Omega1 => 0,
                NodeLabel::Omega2 => 1,
                NodeLabel::ExteriorBoundary => 2,
                NodeLabel::InterfaceGamma => 3,
            }] += 1;
        }
        let gamma_measure: f64 = self.interface_facets.iter().map(|f| f.measure).sum();
        let boundary_measure: f64 = self.boundary_facets.iter().map(|f| f.measure).sum();
        let mut s = String::new();
        let _ = writeln!(s, "dim: {}", self.dim);
        let _ = writeln!(s, "resolution: {} cells/axis, cell size {}", self.resolution, self.cell_size);
        let _ = writeln!(s, "nodes: {} total", self.node_count());
        let _ = writeln!(
            s,
            "  omega1 {} | omega2 {} | exterior boundary {} | interface {}",
            counts[0], counts[1], counts[2], counts[3]
        );
        let _ = writeln!(
            s,
            "interface facets: {} (total measure {})",
            self.interface_facets.len(),
            gamma_measure
        );
        let _ = writeln!(
            s,
            "boundary facets: {} (total measure {})",
            self.boundary_facets.len(),
            boundary_measure
        );
        s
    }
}

/// Builds the domain grid, labels every node and enumerates the facets of
/// `Γ` and `∂Ω` with exact normals and measures.
pub fn build_domain(
    dim: usize,
    outer: AxisBox,
    inner: AxisBox,
    resolution: usize,
) -> Result<TwoComponentDomain, GeometryError> {
    assert!(dim == 1 || dim == 2, "only 1D and 2D domains are supported");
    if resolution == 0 {
        return Err(GeometryError::InvalidResolution(resolution));
    }
    if !outer.strictly_contains(&inner, dim) {
        return Err(GeometryError::DegenerateDomain);
    }

    let cell = (outer.hi[0] - outer.lo[0]) / resolution as f64;

    // Inner faces must sit on grid coordinates; checked before the
    // resolution floor so a misaligned coarse grid reports the real problem.
    for d in 0..dim {
        for coord in [inner.lo[d], inner.hi[d]] {
            let t = (coord - outer.lo[d]) / cell;
            if (t - t.round()).abs() > 1e-9 {
                return Err(GeometryError::MisalignedInterface { coord, cell });
            }
        }
    }
    if resolution < 8 {
        return Err(GeometryError::InvalidResolution(resolution));
    }

    let mut nodes_per_axis = [1usize; 2];
    for d in 0..dim {
        let len = outer.hi[d] - outer.lo[d];
        let cells = len / cell;
        if (cells - cells.round()).abs() > 1e-9 || cells.round() < 1.0 {
            return Err(GeometryError::AnisotropicCells);
        }
        nodes_per_axis[d] = cells.round() as usize + 1;
    }

    let mut dom = TwoComponentDomain {
        dim,
        outer_box: outer,
        inner_box: inner,
        resolution,
        cell_size: cell,
        nodes_per_axis,
        node_partition: Vec::new(),
        interface_facets: Vec::new(),
        boundary_facets: Vec::new(),
    };

    let tol = 1e-9 * cell;
    let n_nodes = dom.node_count();
    let mut labels = Vec::with_capacity(n_nodes);
    for id in 0..n_nodes {
        let p = dom.node_pos(id);
        let on_outer = (0..dim).any(|d| {
            (p[d] - outer.lo[d]).abs() <= tol || (p[d] - outer.hi[d]).abs() <= tol
        });
        let on_inner_face = (0..dim).any(|d| {
            ((p[d] - inner.lo[d]).abs() <= tol || (p[d] - inner.hi[d]).abs() <= tol)
                && (0..dim).all(|e| p[e] >= inner.lo[e] - tol && p[e] <= inner.hi[e] + tol)
        });
        let label = if on_outer {
            NodeLabel::ExteriorBoundary
        } else if on_inner_face {
            NodeLabel::InterfaceGamma
        } else if inner.contains_open(p, dim) {
            NodeLabel::Omega2
        } else {
            NodeLabel::Omega1
        };
        labels.push(label);
    }
    dom.node_partition = labels;

    if dim == 1 {
        let grid_i = |x: f64| ((x - outer.lo[0]) / cell).round() as usize;
        let (ia, ib) = (grid_i(inner.lo[0]), grid_i(inner.hi[0]));
        dom.interface_facets = alloc::vec![
            Facet {
                position: [inner.lo[0], 0.0],
                normal1: [1.0, 0.0],
                measure: 1.0,
                axis: 0,
                nodes: [ia, ia],
            },
            Facet {
                position: [inner.hi[0], 0.0],
                normal1: [-1.0, 0.0],
                measure: 1.0,
                axis: 0,
                nodes: [ib, ib],
            },
        ];
        let last = nodes_per_axis[0] - 1;
        dom.boundary_facets = alloc::vec![
            Facet {
                position: [outer.lo[0], 0.0],
                normal1: [-1.0, 0.0],
                measure: 1.0,
                axis: 0,
                nodes: [0, 0],
            },
            Facet {
                position: [outer.hi[0], 0.0],
                normal1: [1.0, 0.0],
                measure: 1.0,
                axis: 0,
                nodes: [last, last],
            },
        ];
    } else {
        let grid_i = |x: f64, d: usize| ((x - outer.lo[d]) / cell).round() as usize;
        let (ia, ib) = (grid_i(inner.lo[0], 0), grid_i(inner.hi[0], 0));
        let (ja, jb) = (grid_i(inner.lo[1], 1), grid_i(inner.hi[1], 1));

        // Interface edges, walked face by face; normals point into the box.
        let mut facets = Vec::new();
        for i in ia..ib {
            facets.push(edge_facet(&dom, [i, ja], [i + 1, ja], [0.0, 1.0]));
            facets.push(edge_facet(&dom, [i, jb], [i + 1, jb], [0.0, -1.0]));
        }
        for j in ja..jb {
            facets.push(edge_facet(&dom, [ia, j], [ia, j + 1], [1.0, 0.0]));
            facets.push(edge_facet(&dom, [ib, j], [ib, j + 1], [-1.0, 0.0]));
        }
        dom.interface_facets = facets;

        let (nx, ny) = (nodes_per_axis[0], nodes_per_axis[1]);
        let mut boundary = Vec::new();
        for i in 0..nx - 1 {
            boundary.push(edge_facet(&dom, [i, 0], [i + 1, 0], [0.0, -1.0]));
            boundary.push(edge_facet(&dom, [i, ny - 1], [i + 1, ny - 1], [0.0, 1.0]));
        }
        for j in 0..ny - 1 {
            boundary.push(edge_facet(&dom, [0, j], [0, j + 1], [-1.0, 0.0]));
            boundary.push(edge_facet(&dom, [nx - 1, j], [nx - 1, j + 1], [1.0, 0.0]));
        }
        dom.boundary_facets = boundary;
    }

    Ok(dom)
}

fn edge_facet(dom: &TwoComponentDomain, a: [usize; 2], b: [usize; 2], normal1: Point) -> Facet {
    let na = dom.node_index(a[0], a[1]);
    let nb = dom.node_index(b[0], b[1]);
    let pa = dom.node_pos(na);
    let pb = dom.node_pos(nb);
    let axis = if normal1[0] != 0.0 { 0 } else { 1 };
    Facet {
        position: [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])],
        normal1,
        measure: dom.cell_size,
        axis,
        nodes: [na, nb],
    }
}

/// Splits `∂Ω` by the strict sign test `m(x)·n₁(x) > 0` at facet midpoints,
/// where `m(x) = x - x⁰`. Tangency goes to the inactive side.
pub fn partition_boundary(domain: &TwoComponentDomain, x0: Point) -> BoundaryPartition {
    let mut active = Vec::new();
    let mut inactive = Vec::new();
    for (id, f) in domain.boundary_facets.iter().enumerate() {
        let m = vec2::sub(f.position, x0);
        if vec2::dot(m, f.normal1) > 0.0 {
            active.push(id);
        } else {
            inactive.push(id);
        }
    }
    BoundaryPartition { observer: x0, active, inactive }
}

/// Maximal distances from the observer to the component closures:
/// `R_i = max over Ω̄_i of |x - x⁰|` and `R = max over Ω̄`.
pub fn radii(domain: &TwoComponentDomain, x0: Point) -> (f64, f64, f64) {
    let mut r1 = 0.0f64;
    let mut r2 = 0.0f64;
    for id in 0..domain.node_count() {
        let d = vec2::dist(domain.node_pos(id), x0);
        match domain.label(id) {
            NodeLabel::Omega1 | NodeLabel::ExteriorBoundary => r1 = r1.max(d),
            NodeLabel::Omega2 => r2 = r2.max(d),
            NodeLabel::InterfaceGamma => {
                r1 = r1.max(d);
                r2 = r2.max(d);
            }
        }
    }
    (r1, r2, r1.max(r2))
}

/// Star-shapedness of the inner component with respect to `x0`, decided by
/// the facet test `m·n₁ <= 0` on every interface facet (equivalently
/// `m·n₂ >= 0`, with `n₂ = -n₁`).
pub fn check_star_shaped(
    domain: &TwoComponentDomain,
    x0: Point,
) -> Result<bool, GeometryError> {
    if !domain.inner_box.contains_open(x0, domain.dim) {
        return Err(GeometryError::ObserverOutsideInner);
    }
    let ok = domain.interface_facets.iter().all(|f| {
        let m = vec2::sub(f.position, x0);
        vec2::dot(m, f.normal1) <= 1e-12
    });
    Ok(ok)
}

/// Builds the control-region node masks: `ω₁` collects `Ω₁` nodes within
/// `thickness1` of the active exterior facets, `ω₂` collects `Ω₂` nodes
/// within `thickness2` of the interface.
pub fn build_control_regions(
    domain: &TwoComponentDomain,
    partition: &BoundaryPartition,
    thickness1: f64,
    thickness2: f64,
) -> Result<ControlRegions, GeometryError> {
    let min = 2.0 * domain.cell_size;
    for th in [thickness1, thickness2] {
        if th < min {
            return Err(GeometryError::ThicknessTooSmall { got: th, min });
        }
    }

    let n = domain.node_count();
    let mut omega1 = alloc::vec![false; n];
    let mut omega2 = alloc::vec![false; n];
    let tol = 1e-9 * domain.cell_size;
    for id in 0..n {
        let p = domain.node_pos(id);
        match domain.label(id) {
            NodeLabel::Omega1 => {
                let d = partition
                    .active
                    .iter()
                    .map(|&fid| dist_to_facet(p, &domain.boundary_facets[fid], domain.dim))
                    .fold(f64::INFINITY, f64::min);
                omega1[id] = d <= thickness1 + tol;
            }
            NodeLabel::Omega2 => {
                omega2[id] = domain.dist_to_interface(p) <= thickness2 + tol;
            }
            _ => {}
        }
    }

    if !omega1.iter().any(|&b| b) {
        return Err(GeometryError::EmptyControlRegion("omega1"));
    }
    if !omega2.iter().any(|&b| b) {
        return Err(GeometryError::EmptyControlRegion("omega2"));
    }

    // Each interface facet needs an omega2 node right behind it.
    for f in &domain.interface_facets {
        let covered = facet_inward_nodes(domain, f).iter().any(|&nid| omega2[nid]);
        if !covered {
            return Err(GeometryError::EmptyControlRegion("omega2 (uncovered interface facet)"));
        }
    }

    Ok(ControlRegions { omega1, omega2, thickness1, thickness2 })
}

/// Grid nodes one step inside the inner box from a facet.
fn facet_inward_nodes(domain: &TwoComponentDomain, f: &Facet) -> Vec<usize> {
    let step = |nid: usize| -> usize {
        let (i, j) = domain.node_coords(nid);
        let di = f.normal1[0].round() as isize;
        let dj = f.normal1[1].round() as isize;
        domain.node_index((i as isize + di) as usize, (j as isize + dj) as usize)
    };
    f.nodes.iter().map(|&nid| step(nid)).collect()
}

fn dist_to_facet(p: Point, f: &Facet, dim: usize) -> f64 {
    if dim == 1 {
        return (p[0] - f.position[0]).abs();
    }
    // Axis-aligned segment: clamp onto it, then measure.
    let t_axis = 1 - f.axis;
    let half = 0.5 * f.measure;
    let lo = f.position[t_axis] - half;
    let hi = f.position[t_axis] + half;
    let c = p[t_axis].clamp(lo, hi);
    let mut q = f.position;
    q[t_axis] = c;
    vec2::dist(p, q)
}

/// Distance to the boundary of a box; works from inside and outside.
fn dist_to_box_boundary(p: Point, b: &AxisBox, dim: usize) -> f64 {
    if b.contains_open(p, dim) || (0..dim).any(|d| p[d] == b.lo[d] || p[d] == b.hi[d]) {
        (0..dim)
            .map(|d| (p[d] - b.lo[d]).abs().min((p[d] - b.hi[d]).abs()))
            .fold(f64::INFINITY, f64::min)
    } else {
        // Outside: distance to the clamped point.
        let mut q = p;
        for d in 0..dim {
            q[d] = p[d].clamp(b.lo[d], b.hi[d]);
        }
        vec2::dist(p, q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_1d(res: usize) -> TwoComponentDomain {
        build_domain(1, AxisBox::interval(0.0, 1.0), AxisBox::interval(0.25, 0.75), res).unwrap()
    }

    fn unit_2d(res: usize) -> TwoComponentDomain {
        build_domain(
            2,
            AxisBox::rect([0.0, 0.0], [1.0, 1.0]),
            AxisBox::rect([0.25, 0.25], [0.75, 0.75]),
            res,
        )
        .unwrap()
    }

    #[test]
    fn interface_on_grid_nodes_1d() {
        let dom = unit_1d(8);
        let xs: Vec<f64> = dom.interface_facets.iter().map(|f| f.position[0]).collect();
        assert_eq!(xs, alloc::vec![0.25, 0.75]);
        for f in &dom.interface_facets {
            let (i, _) = dom.node_coords(f.nodes[0]);
            assert!((dom.node_pos(dom.node_index(i, 0))[0] - f.position[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn interface_measures_sum_to_perimeter_2d() {
        let dom = unit_2d(16);
        let total: f64 = dom.interface_facets.iter().map(|f| f.measure).sum();
        assert!((total - 2.0).abs() < 1e-12);
        let boundary: f64 = dom.boundary_facets.iter().map(|f| f.measure).sum();
        assert!((boundary - 4.0).abs() < 1e-12);
    }

    #[test]
    fn misaligned_interface_rejected() {
        let err = build_domain(
            1,
            AxisBox::interval(0.0, 1.0),
            AxisBox::interval(0.3, 0.7),
            8,
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::MisalignedInterface { .. }));
        // 0.3 is not a multiple of 1/7, and misalignment wins over the
        // resolution floor.
        let err = build_domain(
            1,
            AxisBox::interval(0.0, 1.0),
            AxisBox::interval(0.3, 0.7),
            7,
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::MisalignedInterface { .. }));
    }

    #[test]
    fn degenerate_domain_rejected() {
        let err = build_domain(
            1,
            AxisBox::interval(0.0, 1.0),
            AxisBox::interval(0.25, 1.0),
            8,
        )
        .unwrap_err();
        assert_eq!(err, GeometryError::DegenerateDomain);
    }

    #[test]
    fn normals_oppose_across_interface() {
        // n₂ = -n₁ holds by construction; check n₁ points into the box.
        let dom = unit_2d(16);
        for f in &dom.interface_facets {
            let inside = [
                f.position[0] + 1e-3 * f.normal1[0],
                f.position[1] + 1e-3 * f.normal1[1],
            ];
            assert!(dom.inner_box.contains_open(inside, 2), "facet at {:?}", f.position);
        }
    }

    #[test]
    fn interior_observer_sees_whole_boundary() {
        let dom = unit_2d(16);
        let part = partition_boundary(&dom, [0.5, 0.5]);
        assert_eq!(part.active.len(), dom.boundary_facets.len());
        assert!(part.inactive.is_empty());
    }

    #[test]
    fn endpoint_signs_1d() {
        let dom = unit_1d(8);
        let part = partition_boundary(&dom, [0.5, 0.0]);
        assert_eq!(part.active.len(), 2);
        for &fid in &part.active {
            let f = &dom.boundary_facets[fid];
            let m = vec2::sub(f.position, [0.5, 0.0]);
            assert!((vec2::dot(m, f.normal1) - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn far_observer_splits_square_boundary() {
        let dom = unit_2d(16);
        let part = partition_boundary(&dom, [-10.0, 0.5]);
        // Face x = 0 has n₁ = (-1, 0) and m·n₁ = -10 < 0: inactive.
        for &fid in &part.inactive {
            assert_eq!(dom.boundary_facets[fid].normal1, [-1.0, 0.0]);
        }
        // Face x = 1 is active, along with the spans of y = 0 and y = 1
        // facets whose midpoints satisfy the sign test.
        assert!(part
            .active
            .iter()
            .any(|&fid| dom.boundary_facets[fid].normal1 == [1.0, 0.0]));
        assert_eq!(part.active.len() + part.inactive.len(), dom.boundary_facets.len());
    }

    #[test]
    fn radii_reference_values() {
        let dom = unit_1d(8);
        let (r1, r2, r) = radii(&dom, [0.5, 0.0]);
        assert!((r1 - 0.5).abs() < 1e-14);
        assert!((r2 - 0.25).abs() < 1e-14);
        assert!((r - 0.5).abs() < 1e-14);

        let dom = unit_2d(16);
        let (_, _, r) = radii(&dom, [0.5, 0.5]);
        assert!((r - 0.5f64.sqrt()).abs() < 1e-12);

        let (_, r2, _) = radii(&dom, [0.25, 0.25]);
        assert!((r2 - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn radii_ordering_for_interior_observer() {
        let dom = unit_2d(16);
        let (r1, r2, r) = radii(&dom, [0.5, 0.5]);
        assert!(r == r1 && r1 > r2);
    }

    #[test]
    fn star_shaped_inner_box() {
        let dom = unit_2d(16);
        assert!(check_star_shaped(&dom, [0.5, 0.5]).unwrap());
        assert!(check_star_shaped(&dom, [0.26, 0.26]).unwrap());
        assert_eq!(
            check_star_shaped(&dom, [0.9, 0.9]).unwrap_err(),
            GeometryError::ObserverOutsideInner
        );
    }

    #[test]
    fn star_shaped_facet_inequality_holds_facetwise() {
        let dom = unit_2d(16);
        for f in &dom.interface_facets {
            let m = vec2::sub(f.position, [0.5, 0.5]);
            assert!(vec2::dot(m, f.normal1) <= 0.0);
        }
    }

    #[test]
    fn control_regions_1d() {
        let dom = unit_1d(16);
        let part = partition_boundary(&dom, [0.5, 0.0]);
        let regions = build_control_regions(&dom, &part, 0.125, 0.125).unwrap();
        for id in 0..dom.node_count() {
            let x = dom.node_pos(id)[0];
            if regions.omega1[id] {
                assert!(x.min(1.0 - x) <= 0.125 + 1e-12);
                assert_eq!(dom.label(id), NodeLabel::Omega1);
            }
            if regions.omega2[id] {
                assert_eq!(dom.label(id), NodeLabel::Omega2);
                let d = (x - 0.25).abs().min((x - 0.75).abs());
                assert!(d <= 0.125 + 1e-12);
            }
        }
        assert!(regions.omega1.iter().any(|&b| b));
        assert!(regions.omega2.iter().any(|&b| b));
    }

    #[test]
    fn control_region_thickness_guard() {
        let dom = unit_1d(16);
        let part = partition_boundary(&dom, [0.5, 0.0]);
        let err = build_control_regions(&dom, &part, 0.5 * dom.cell_size, 0.125).unwrap_err();
        assert!(matches!(err, GeometryError::ThicknessTooSmall { .. }));
    }

    #[test]
    fn omega1_grows_with_thickness() {
        let dom = unit_2d(16);
        let part = partition_boundary(&dom, [0.5, 0.5]);
        let small = build_control_regions(&dom, &part, 0.125, 0.125).unwrap();
        let large = build_control_regions(&dom, &part, 0.25, 0.125).unwrap();
        for id in 0..dom.node_count() {
            assert!(!small.omega1[id] || large.omega1[id]);
        }
    }

    #[test]
    fn partition_is_exhaustive_for_any_observer() {
        let dom = unit_2d(16);
        for x0 in [[0.5, 0.5], [-3.0, 2.0], [10.0, 0.1], [0.0, 0.0]] {
            let part = partition_boundary(&dom, x0);
            let mut seen = alloc::vec![false; dom.boundary_facets.len()];
            for &fid in part.active.iter().chain(part.inactive.iter()) {
                assert!(!seen[fid]);
                seen[fid] = true;
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn every_interface_facet_backed_by_omega2() {
        let dom = unit_2d(16);
        let part = partition_boundary(&dom, [0.5, 0.5]);
        let regions = build_control_regions(&dom, &part, 0.125, 0.125).unwrap();
        for f in &dom.interface_facets {
            assert!(facet_inward_nodes(&dom, f).iter().any(|&nid| regions.omega2[nid]));
        }
    }
}
