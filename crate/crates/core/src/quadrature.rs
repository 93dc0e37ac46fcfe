//! Cut-element integration: recursive quadtree bisection of the element,
//! marching-squares tessellation of the sub-cells left cut at the deepest
//! level, Gauss rules on the resulting squares, triangles and segments.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{ActiveMesh, BackgroundMesh, ElementClass, LevelSet};
use crate::scalar::{dot, norm, sub, Real, Vec2};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuadratureError {
    #[error("Gauss-Legendre order {0} outside 1..=20")]
    OrderOutOfRange(usize),
}

/// Points and weights on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussRule1d<T> {
    pub points: Vec<T>,
    pub weights: Vec<T>,
}

/// `n`-point Gauss-Legendre rule mapped to `[0, 1]`, exact up to degree `2n - 1`.
pub fn gauss_legendre<T: Real>(n: usize) -> Result<GaussRule1d<T>, QuadratureError> {
    if !(1..=20).contains(&n) {
        return Err(QuadratureError::OrderOutOfRange(n));
    }
    let mut points = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Newton on P_n starting from the Chebyshev-like guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the i-th largest root on [-1, 1]
        points[i] = 0.5 * (1.0 - x);
        points[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.5;
    }
    Ok(GaussRule1d { points: points.into_iter().map(T::lit).collect(), weights: weights.into_iter().map(T::lit).collect() })
}

/// Points in physical coordinates with their weights.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadRule<T> {
    pub points: Vec<Vec2<T>>,
    pub weights: Vec<T>,
}

impl<T: Real> QuadRule<T> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn measure(&self) -> T {
        self.weights.iter().copied().sum()
    }

    pub fn integrate(&self, f: impl Fn(Vec2<T>) -> T) -> T {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }

    fn push(&mut self, p: Vec2<T>, w: T) {
        if w > T::zero() {
            self.points.push(p);
            self.weights.push(w);
        }
    }
}

/// Points on `T ∩ ∂Ω` with weights and unit outward normals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundaryRule<T> {
    pub points: Vec<Vec2<T>>,
    pub weights: Vec<T>,
    pub normals: Vec<Vec2<T>>,
}

impl<T: Real> BoundaryRule<T> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn measure(&self) -> T {
        self.weights.iter().copied().sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CutQuadrature<T> {
    pub bulk: QuadRule<T>,
    pub boundary: BoundaryRule<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadConfig {
    /// Maximum quadtree depth.
    pub depth: usize,
    /// Gauss points per direction on squares and triangles.
    pub order: usize,
    /// Gauss points per boundary segment.
    pub boundary_order: usize,
}

impl QuadConfig {
    /// Defaults for polynomial order `p`: depth 6, Gauss order `p + 1`.
    pub fn new(p: usize) -> Self {
        Self { depth: 6, order: p + 1, boundary_order: p + 1 }
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order;
        self.boundary_order = order;
        self
    }
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self::new(1)
    }
}

/// Axis-aligned square sub-cell of a background element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubCell<T> {
    pub origin: Vec2<T>,
    pub size: T,
    pub level: usize,
}

impl<T: Real> SubCell<T> {
    /// Corners in counter-clockwise order starting at the lower-left one.
    pub fn corners(&self) -> [Vec2<T>; 4] {
        let [x, y] = self.origin;
        let s = self.size;
        [[x, y], [x + s, y], [x + s, y + s], [x, y + s]]
    }

    pub fn center(&self) -> Vec2<T> {
        let half = self.size * T::lit(0.5);
        [self.origin[0] + half, self.origin[1] + half]
    }

    fn children(&self) -> [SubCell<T>; 4] {
        let half = self.size * T::lit(0.5);
        let [x, y] = self.origin;
        let level = self.level + 1;
        [
            SubCell { origin: [x, y], size: half, level },
            SubCell { origin: [x + half, y], size: half, level },
            SubCell { origin: [x, y + half], size: half, level },
            SubCell { origin: [x + half, y + half], size: half, level },
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellStatus {
    Inside,
    Outside,
    /// Still intersected by the boundary at the maximum depth.
    Cut,
}

/// Status from a 3x3 sample lattice. Samples within `1e-14 h` of the
/// interface count for either side, so a cell touching the boundary only
/// along an edge is not reported as cut.
fn sample_status<T: Real>(cell: &SubCell<T>, geo: &LevelSet<T>, h: T) -> CellStatus {
    let tol = T::lit(1e-14) * h;
    let half = cell.size * T::lit(0.5);
    let (mut strictly_in, mut strictly_out) = (false, false);
    for a in 0..3 {
        for b in 0..3 {
            let p = [cell.origin[0] + T::lit(a as f64) * half, cell.origin[1] + T::lit(b as f64) * half];
            let v = geo.value(p);
            if v < -tol {
                strictly_in = true;
            } else if v > tol {
                strictly_out = true;
            }
        }
    }
    match (strictly_in, strictly_out) {
        (_, false) => CellStatus::Inside,
        (false, true) => CellStatus::Outside,
        (true, true) => CellStatus::Cut,
    }
}

/// Edges of an inside cell on which the level set vanishes identically while
/// the far side is strictly outside. Sub-cells never see such an interface as
/// cut, so it is picked up here.
pub fn aligned_segments<T: Real>(cell: &SubCell<T>, geo: &LevelSet<T>, h: T) -> Vec<[Vec2<T>; 2]> {
    let tol = T::lit(1e-14) * h;
    let c = cell.corners();
    let mut out = Vec::new();
    for k in 0..4 {
        let (a, b) = (c[k], c[(k + 1) % 4]);
        let mid = [(a[0] + b[0]) * T::lit(0.5), (a[1] + b[1]) * T::lit(0.5)];
        if [a, mid, b].iter().any(|&p| geo.value(p).abs() > tol) {
            continue;
        }
        // corners run counter-clockwise, so the outward normal is (dy, -dx)
        let d = sub(b, a);
        let probe = [mid[0] + d[1] * T::lit(0.25), mid[1] - d[0] * T::lit(0.25)];
        if geo.value(probe) > tol {
            out.push([a, b]);
        }
    }
    out
}

/// Recursively bisects element `e`, returning every leaf with its status.
pub fn quadtree_subdivide<T: Real>(
    mesh: &BackgroundMesh<T>,
    e: usize,
    geo: &LevelSet<T>,
    cfg: &QuadConfig,
) -> Vec<(SubCell<T>, CellStatus)> {
    let root = SubCell { origin: mesh.element_origin(e), size: mesh.h, level: 0 };
    let mut leaves = Vec::new();
    let mut stack = vec![root];
    while let Some(cell) = stack.pop() {
        match sample_status(&cell, geo, mesh.h) {
            CellStatus::Cut if cell.level < cfg.depth => {
                // reversed so leaves come out in child order
                stack.extend(cell.children().into_iter().rev());
            }
            status => leaves.push((cell, status)),
        }
    }
    leaves
}

/// Inside region and interface segments of a sub-cell from its corner signs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tessellation<T> {
    /// Convex polygons, counter-clockwise.
    pub polygons: Vec<Vec<Vec2<T>>>,
    pub segments: Vec<[Vec2<T>; 2]>,
}

/// Marching squares on the four corner signs with linear root finding on
/// the edges. The saddle pattern is resolved by the sign at the cell center.
pub fn tessellate<T: Real>(cell: &SubCell<T>, geo: &LevelSet<T>, h: T) -> Tessellation<T> {
    let corners = cell.corners();
    let values = corners.map(|c| geo.value(c));
    let inside = values.map(|v| LevelSet::is_inside_value(v, h));
    let root = |k: usize| {
        let (a, b) = (k, (k + 1) % 4);
        let denom = values[a] - values[b];
        let t = if denom == T::zero() { T::lit(0.5) } else { (values[a] / denom).max(T::zero()).min(T::one()) };
        let d = sub(corners[b], corners[a]);
        [corners[a][0] + t * d[0], corners[a][1] + t * d[1]]
    };
    let mut out = Tessellation::default();
    let n_inside = inside.iter().filter(|&&b| b).count();
    if n_inside == 0 {
        return out;
    }
    if n_inside == 4 {
        out.polygons.push(corners.to_vec());
        return out;
    }
    let saddle = n_inside == 2 && inside[0] == inside[2];
    if saddle && !geo.is_inside(cell.center(), h) {
        // two separate inside corners
        for k in (0..4).filter(|&k| inside[k]) {
            let prev = root((k + 3) % 4);
            let next = root(k);
            out.polygons.push(vec![prev, corners[k], next]);
            out.segments.push([prev, next]);
        }
        return out;
    }
    let mut poly = Vec::with_capacity(6);
    for k in 0..4 {
        if inside[k] {
            poly.push(corners[k]);
        }
        if inside[k] != inside[(k + 1) % 4] {
            poly.push(root(k));
        }
    }
    out.polygons.push(poly);
    if saddle {
        // connected through the center: clip each outside corner
        for k in (0..4).filter(|&k| !inside[k]) {
            out.segments.push([root((k + 3) % 4), root(k)]);
        }
    } else {
        let crossings: Vec<_> = (0..4).filter(|&k| inside[k] != inside[(k + 1) % 4]).map(root).collect();
        out.segments.push([crossings[0], crossings[1]]);
    }
    out
}

fn push_square<T: Real>(rule: &mut QuadRule<T>, origin: Vec2<T>, size: T, g: &GaussRule1d<T>) {
    for (yq, wy) in g.points.iter().zip(&g.weights) {
        for (xq, wx) in g.points.iter().zip(&g.weights) {
            rule.push([origin[0] + *xq * size, origin[1] + *yq * size], *wx * *wy * size * size);
        }
    }
}

/// Collapsed (Duffy) tensor rule on a triangle; all weights positive.
fn push_triangle<T: Real>(rule: &mut QuadRule<T>, a: Vec2<T>, b: Vec2<T>, c: Vec2<T>, g: &GaussRule1d<T>, min_area: T) {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let twice_area = (ab[0] * ac[1] - ab[1] * ac[0]).abs();
    if twice_area <= min_area + min_area {
        return;
    }
    let bc = sub(c, b);
    for (u, wu) in g.points.iter().zip(&g.weights) {
        for (v, wv) in g.points.iter().zip(&g.weights) {
            let uv = *u * *v;
            let p = [a[0] + *u * ab[0] + uv * bc[0], a[1] + *u * ab[1] + uv * bc[1]];
            rule.push(p, *wu * *wv * *u * twice_area);
        }
    }
}

fn push_segment<T: Real>(rule: &mut BoundaryRule<T>, seg: [Vec2<T>; 2], geo: &LevelSet<T>, g: &GaussRule1d<T>, min_len: T) {
    let d = sub(seg[1], seg[0]);
    let len = norm(d);
    if !(len > min_len) {
        return;
    }
    let mut n = [d[1] / len, -d[0] / len];
    let mid = [seg[0][0] + T::lit(0.5) * d[0], seg[0][1] + T::lit(0.5) * d[1]];
    let grad = geo.gradient(mid);
    let outward = match dot(n, grad) {
        s if s != T::zero() => s > T::zero(),
        _ => {
            let eps = len * T::lit(1e-3);
            geo.value([mid[0] + eps * n[0], mid[1] + eps * n[1]]) > geo.value([mid[0] - eps * n[0], mid[1] - eps * n[1]])
        }
    };
    if !outward {
        n = [-n[0], -n[1]];
    }
    for (t, w) in g.points.iter().zip(&g.weights) {
        rule.points.push([seg[0][0] + *t * d[0], seg[0][1] + *t * d[1]]);
        rule.weights.push(*w * len);
        rule.normals.push(n);
    }
}

/// Plain tensor Gauss rule on the full element.
pub fn element_rule<T: Real>(mesh: &BackgroundMesh<T>, e: usize, order: usize) -> QuadRule<T> {
    let g = gauss_legendre(order).expect("quadrature order within 1..=20");
    let mut rule = QuadRule::default();
    push_square(&mut rule, mesh.element_origin(e), mesh.h, &g);
    rule
}

/// Bulk rule on `T ∩ Ω` and boundary rule on `T ∩ ∂Ω`.
///
/// Boundary normals are the normals of the tessellated interface segments,
/// oriented along the level-set gradient, so the divergence theorem holds
/// exactly on the integration domain.
pub fn cut_quadrature<T: Real>(mesh: &BackgroundMesh<T>, e: usize, geo: &LevelSet<T>, cfg: &QuadConfig) -> CutQuadrature<T> {
    let g = gauss_legendre(cfg.order).expect("quadrature order within 1..=20");
    let gb = gauss_legendre(cfg.boundary_order).expect("quadrature order within 1..=20");
    let min_area = T::epsilon() * mesh.h * mesh.h * T::lit(1e-4);
    let min_len = T::epsilon() * mesh.h * T::lit(1e-4);
    let mut out = CutQuadrature::default();
    for (cell, status) in quadtree_subdivide(mesh, e, geo, cfg) {
        match status {
            CellStatus::Inside => {
                push_square(&mut out.bulk, cell.origin, cell.size, &g);
                for seg in aligned_segments(&cell, geo, mesh.h) {
                    push_segment(&mut out.boundary, seg, geo, &gb, min_len);
                }
            }
            CellStatus::Outside => {}
            CellStatus::Cut => {
                let tess = tessellate(&cell, geo, mesh.h);
                for poly in &tess.polygons {
                    for k in 1..poly.len().saturating_sub(1) {
                        push_triangle(&mut out.bulk, poly[0], poly[k], poly[k + 1], &g, min_area);
                    }
                }
                for seg in tess.segments {
                    push_segment(&mut out.boundary, seg, geo, &gb, min_len);
                }
            }
        }
    }
    out
}

/// `|T ∩ Ω| / |T|` from the bulk rule.
pub fn volume_fraction<T: Real>(mesh: &BackgroundMesh<T>, e: usize, geo: &LevelSet<T>, cfg: &QuadConfig) -> T {
    let cheap = QuadConfig { order: 1, boundary_order: 1, ..*cfg };
    let q = cut_quadrature(mesh, e, geo, &cheap);
    (q.bulk.measure() / (mesh.h * mesh.h)).max(T::zero()).min(T::one())
}

/// Quadrature for every background element: tensor rule on interior
/// elements, cut rule on cut elements, `None` on exterior ones.
pub fn build_quadratures<T: Real>(active: &ActiveMesh<T>, cfg: &QuadConfig) -> Vec<Option<CutQuadrature<T>>> {
    let mesh = &active.mesh;
    (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| match active.class[e] {
            ElementClass::Interior => {
                let mut boundary = BoundaryRule::default();
                let whole = SubCell { origin: mesh.element_origin(e), size: mesh.h, level: 0 };
                let gb = gauss_legendre(cfg.boundary_order).expect("quadrature order within 1..=20");
                for seg in aligned_segments(&whole, &active.level_set, mesh.h) {
                    push_segment(&mut boundary, seg, &active.level_set, &gb, T::zero());
                }
                Some(CutQuadrature { bulk: element_rule(mesh, e, cfg.order), boundary })
            }
            ElementClass::Cut => Some(cut_quadrature(mesh, e, &active.level_set, cfg)),
            ElementClass::Exterior => None,
        })
        .collect()
}

/// Side of the ambient box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoxSide {
    Left,
    Right,
    Bottom,
    Top,
}

impl BoxSide {
    pub const ALL: [BoxSide; 4] = [BoxSide::Left, BoxSide::Right, BoxSide::Bottom, BoxSide::Top];

    pub fn normal<T: Real>(self) -> Vec2<T> {
        match self {
            BoxSide::Left => [-T::one(), T::zero()],
            BoxSide::Right => [T::one(), T::zero()],
            BoxSide::Bottom => [T::zero(), -T::one()],
            BoxSide::Top => [T::zero(), T::one()],
        }
    }
}

/// Sides of the ambient box that element `e` touches.
pub fn box_sides<T: Real>(mesh: &BackgroundMesh<T>, e: usize) -> Vec<BoxSide> {
    let (i, j) = mesh.element_ij(e);
    let mut sides = Vec::new();
    if i == 0 {
        sides.push(BoxSide::Left);
    }
    if i + 1 == mesh.nx {
        sides.push(BoxSide::Right);
    }
    if j == 0 {
        sides.push(BoxSide::Bottom);
    }
    if j + 1 == mesh.ny {
        sides.push(BoxSide::Top);
    }
    sides
}

/// Rule on the part of an element face lying on the ambient box and inside Ω.
/// The face is split into `2^depth` pieces and cut pieces are clipped at the
/// linear root.
pub fn box_face_rule<T: Real>(mesh: &BackgroundMesh<T>, e: usize, side: BoxSide, geo: &LevelSet<T>, cfg: &QuadConfig) -> BoundaryRule<T> {
    let o = mesh.element_origin(e);
    let h = mesh.h;
    let (start, dir) = match side {
        BoxSide::Left => (o, [T::zero(), T::one()]),
        BoxSide::Right => ([o[0] + h, o[1]], [T::zero(), T::one()]),
        BoxSide::Bottom => (o, [T::one(), T::zero()]),
        BoxSide::Top => ([o[0], o[1] + h], [T::one(), T::zero()]),
    };
    let gb: GaussRule1d<T> = gauss_legendre(cfg.boundary_order).expect("quadrature order within 1..=20");
    let n = side.normal();
    let pieces = 1usize << cfg.depth.min(20);
    let step = h / T::lit(pieces as f64);
    let at = |t: T| [start[0] + t * dir[0], start[1] + t * dir[1]];
    let mut rule = BoundaryRule::default();
    for k in 0..pieces {
        let (t0, t1) = (T::lit(k as f64) * step, T::lit((k + 1) as f64) * step);
        let (v0, v1) = (geo.value(at(t0)), geo.value(at(t1)));
        let (i0, i1) = (LevelSet::is_inside_value(v0, h), LevelSet::is_inside_value(v1, h));
        let (a, b) = match (i0, i1) {
            (true, true) => (t0, t1),
            (false, false) => continue,
            _ => {
                let r = t0 + (t1 - t0) * (v0 / (v0 - v1)).max(T::zero()).min(T::one());
                if i0 {
                    (t0, r)
                } else {
                    (r, t1)
                }
            }
        };
        let len = b - a;
        if len <= T::zero() {
            continue;
        }
        for (t, w) in gb.points.iter().zip(&gb.weights) {
            rule.points.push(at(a + *t * len));
            rule.weights.push(*w * len);
            rule.normals.push(n);
        }
    }
    rule
}
