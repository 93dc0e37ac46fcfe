//! Ambient box, Cartesian background mesh, implicit domains and the
//! active-mesh classification built on top of them.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::quadrature::{self, QuadConfig};
use crate::scalar::{norm, Real, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid geometry literal `{literal}`: {reason}")]
    Parse { literal: String, reason: String },
    #[error("invalid background mesh: {0}")]
    Mesh(String),
    #[error("empty active mesh")]
    EmptyActiveMesh,
}

/// Implicit description of the physical domain: inside is `phi < 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum LevelSet<T> {
    /// Disc of the given radius.
    Circle { center: Vec2<T>, radius: T },
    /// Half-plane `n.x < c`, with `|n| = 1`.
    Plane { normal: Vec2<T>, offset: T },
    /// Lower-left quadrant `x < a + s && y < b + s`.
    Corner { a: T, b: T, s: T },
    /// Ring `inner < |x - c| < outer`.
    Annulus { center: Vec2<T>, inner: T, outer: T },
    Union(Box<LevelSet<T>>, Box<LevelSet<T>>),
    Intersection(Box<LevelSet<T>>, Box<LevelSet<T>>),
    Complement(Box<LevelSet<T>>),
}

impl<T: Real> LevelSet<T> {
    pub fn circle(cx: T, cy: T, radius: T) -> Self {
        LevelSet::Circle { center: [cx, cy], radius }
    }

    /// Half-plane with the normal rescaled to unit length.
    pub fn plane(nx: T, ny: T, offset: T) -> Result<Self, GeometryError> {
        let len = norm([nx, ny]);
        if !(len > T::zero()) || !len.is_finite() {
            return Err(GeometryError::Parse {
                literal: format!("plane:{nx},{ny},{offset}"),
                reason: "normal must be non-zero".into(),
            });
        }
        Ok(LevelSet::Plane { normal: [nx / len, ny / len], offset: offset / len })
    }

    pub fn corner(a: T, b: T, s: T) -> Self {
        LevelSet::Corner { a, b, s }
    }

    pub fn annulus(cx: T, cy: T, inner: T, outer: T) -> Self {
        LevelSet::Annulus { center: [cx, cy], inner, outer }
    }

    pub fn union(self, other: Self) -> Self {
        LevelSet::Union(Box::new(self), Box::new(other))
    }

    pub fn intersection(self, other: Self) -> Self {
        LevelSet::Intersection(Box::new(self), Box::new(other))
    }

    pub fn complement(self) -> Self {
        LevelSet::Complement(Box::new(self))
    }

    pub fn value(&self, p: Vec2<T>) -> T {
        match self {
            LevelSet::Circle { center, radius } => norm([p[0] - center[0], p[1] - center[1]]) - *radius,
            LevelSet::Plane { normal, offset } => normal[0] * p[0] + normal[1] * p[1] - *offset,
            LevelSet::Corner { a, b, s } => (p[0] - (*a + *s)).max(p[1] - (*b + *s)),
            LevelSet::Annulus { center, inner, outer } => {
                let d = norm([p[0] - center[0], p[1] - center[1]]);
                (*inner - d).max(d - *outer)
            }
            LevelSet::Union(l, r) => l.value(p).min(r.value(p)),
            LevelSet::Intersection(l, r) => l.value(p).max(r.value(p)),
            LevelSet::Complement(l) => -l.value(p),
        }
    }

    /// Gradient of the active branch; used to orient boundary normals.
    pub fn gradient(&self, p: Vec2<T>) -> Vec2<T> {
        let radial = |c: &Vec2<T>| {
            let d = [p[0] - c[0], p[1] - c[1]];
            let r = norm(d);
            if r > T::zero() {
                [d[0] / r, d[1] / r]
            } else {
                [T::one(), T::zero()]
            }
        };
        match self {
            LevelSet::Circle { center, .. } => radial(center),
            LevelSet::Plane { normal, .. } => *normal,
            LevelSet::Corner { a, b, s } => {
                if p[0] - (*a + *s) >= p[1] - (*b + *s) {
                    [T::one(), T::zero()]
                } else {
                    [T::zero(), T::one()]
                }
            }
            LevelSet::Annulus { center, inner, outer } => {
                let g = radial(center);
                let d = norm([p[0] - center[0], p[1] - center[1]]);
                if *inner - d >= d - *outer {
                    [-g[0], -g[1]]
                } else {
                    g
                }
            }
            LevelSet::Union(l, r) => {
                if l.value(p) <= r.value(p) {
                    l.gradient(p)
                } else {
                    r.gradient(p)
                }
            }
            LevelSet::Intersection(l, r) => {
                if l.value(p) >= r.value(p) {
                    l.gradient(p)
                } else {
                    r.gradient(p)
                }
            }
            LevelSet::Complement(l) => {
                let g = l.gradient(p);
                [-g[0], -g[1]]
            }
        }
    }

    /// Sign convention used everywhere: points with `|phi| < 1e-14 h` count as inside.
    #[inline]
    pub fn is_inside_value(value: T, h: T) -> bool {
        value < T::lit(1e-14) * h
    }

    #[inline]
    pub fn is_inside(&self, p: Vec2<T>, h: T) -> bool {
        Self::is_inside_value(self.value(p), h)
    }
}

impl<T: Real> FromStr for LevelSet<T> {
    type Err = GeometryError;

    fn from_str(literal: &str) -> Result<Self, Self::Err> {
        let fail = |reason: &str| GeometryError::Parse { literal: literal.to_string(), reason: reason.to_string() };
        let (kind, args) = literal.trim().split_once(':').ok_or_else(|| fail("expected `kind:args`"))?;
        let values = args
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| fail(&e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(fail("non-finite value"));
        }
        let v: Vec<T> = values.into_iter().map(T::lit).collect();
        let expect = |n: usize| if v.len() == n { Ok(()) } else { Err(fail(&format!("expected {n} values, got {}", v.len()))) };
        match kind.trim() {
            "circle" => {
                expect(3)?;
                if !(v[2] > T::zero()) {
                    return Err(fail("radius must be positive"));
                }
                Ok(LevelSet::circle(v[0], v[1], v[2]))
            }
            "plane" => {
                expect(3)?;
                LevelSet::plane(v[0], v[1], v[2]).map_err(|_| fail("normal must be non-zero"))
            }
            "corner" => {
                expect(3)?;
                Ok(LevelSet::corner(v[0], v[1], v[2]))
            }
            "annulus" => {
                expect(4)?;
                if !(v[2] >= T::zero() && v[3] > v[2]) {
                    return Err(fail("need 0 <= r0 < r1"));
                }
                Ok(LevelSet::annulus(v[0], v[1], v[2], v[3]))
            }
            _ => Err(fail("unknown kind (circle | plane | corner | annulus)")),
        }
    }
}

impl<T: Real> fmt::Display for LevelSet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevelSet::Circle { center, radius } => write!(f, "circle:{},{},{}", center[0], center[1], radius),
            LevelSet::Plane { normal, offset } => write!(f, "plane:{},{},{}", normal[0], normal[1], offset),
            LevelSet::Corner { a, b, s } => write!(f, "corner:{a},{b},{s}"),
            LevelSet::Annulus { center, inner, outer } => {
                write!(f, "annulus:{},{},{},{}", center[0], center[1], inner, outer)
            }
            LevelSet::Union(l, r) => write!(f, "union({l};{r})"),
            LevelSet::Intersection(l, r) => write!(f, "intersection({l};{r})"),
            LevelSet::Complement(l) => write!(f, "complement({l})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FaceOrientation {
    /// Normal along x; separates elements `(i-1, j)` and `(i, j)`.
    Vertical,
    /// Normal along y; separates elements `(i, j-1)` and `(i, j)`.
    Horizontal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Face {
    pub orientation: FaceOrientation,
    pub i: usize,
    pub j: usize,
}

/// Uniform axis-aligned grid of square cells over the ambient box.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundMesh<T> {
    pub origin: Vec2<T>,
    pub extent: Vec2<T>,
    pub nx: usize,
    pub ny: usize,
    pub h: T,
}

impl<T: Real> BackgroundMesh<T> {
    pub fn new(origin: Vec2<T>, extent: Vec2<T>, nx: usize, ny: usize) -> Result<Self, GeometryError> {
        if nx == 0 || ny == 0 {
            return Err(GeometryError::Mesh("cell counts must be positive".into()));
        }
        if !(extent[0] > T::zero() && extent[1] > T::zero()) {
            return Err(GeometryError::Mesh("extent must be positive".into()));
        }
        let hx = extent[0] / T::lit(nx as f64);
        let hy = extent[1] / T::lit(ny as f64);
        if (hx - hy).abs() > T::tol(1e-12) * hx {
            return Err(GeometryError::Mesh(format!("cells must be square (hx = {hx}, hy = {hy})")));
        }
        Ok(Self { origin, extent, nx, ny, h: hx })
    }

    /// `n x n` cells over `[0,1]^2`.
    pub fn unit_square(n: usize) -> Result<Self, GeometryError> {
        Self::new([T::zero(), T::zero()], [T::one(), T::one()], n, n)
    }

    #[inline]
    pub fn num_elements(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn element_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn element_ij(&self, e: usize) -> (usize, usize) {
        (e % self.nx, e / self.nx)
    }

    /// Lower-left corner of element `e`.
    #[inline]
    pub fn element_origin(&self, e: usize) -> Vec2<T> {
        let (i, j) = self.element_ij(e);
        [self.origin[0] + T::lit(i as f64) * self.h, self.origin[1] + T::lit(j as f64) * self.h]
    }

    /// Face neighbours in the order left, right, below, above.
    pub fn face_neighbors(&self, e: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.element_ij(e);
        let left = (i > 0).then(|| self.element_index(i - 1, j));
        let right = (i + 1 < self.nx).then(|| self.element_index(i + 1, j));
        let below = (j > 0).then(|| self.element_index(i, j - 1));
        let above = (j + 1 < self.ny).then(|| self.element_index(i, j + 1));
        [left, right, below, above].into_iter().flatten()
    }

    pub fn num_faces(&self) -> usize {
        (self.nx + 1) * self.ny + self.nx * (self.ny + 1)
    }

    pub fn face_index(&self, face: Face) -> usize {
        match face.orientation {
            FaceOrientation::Vertical => face.j * (self.nx + 1) + face.i,
            FaceOrientation::Horizontal => (self.nx + 1) * self.ny + face.j * self.nx + face.i,
        }
    }

    pub fn face(&self, index: usize) -> Face {
        let nv = (self.nx + 1) * self.ny;
        if index < nv {
            Face { orientation: FaceOrientation::Vertical, i: index % (self.nx + 1), j: index / (self.nx + 1) }
        } else {
            let k = index - nv;
            Face { orientation: FaceOrientation::Horizontal, i: k % self.nx, j: k / self.nx }
        }
    }

    /// The two elements sharing an interior face, ordered (minus side, plus side).
    /// `None` for faces on the ambient boundary.
    pub fn face_elements(&self, face: Face) -> Option<(usize, usize)> {
        match face.orientation {
            FaceOrientation::Vertical if face.i > 0 && face.i < self.nx => {
                Some((self.element_index(face.i - 1, face.j), self.element_index(face.i, face.j)))
            }
            FaceOrientation::Horizontal if face.j > 0 && face.j < self.ny => {
                Some((self.element_index(face.i, face.j - 1), self.element_index(face.i, face.j)))
            }
            _ => None,
        }
    }

    /// Start point of the face; the face runs a length `h` along its tangent.
    pub fn face_origin(&self, face: Face) -> Vec2<T> {
        [self.origin[0] + T::lit(face.i as f64) * self.h, self.origin[1] + T::lit(face.j as f64) * self.h]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementClass {
    Interior,
    Cut,
    Exterior,
}

/// Background mesh plus per-element classification against a level set.
#[derive(Clone, Debug)]
pub struct ActiveMesh<T> {
    pub mesh: BackgroundMesh<T>,
    pub level_set: LevelSet<T>,
    pub class: Vec<ElementClass>,
    /// Volume fraction per background element (0 for exterior, 1 for interior).
    pub eta: Vec<T>,
    pub active: Vec<usize>,
    pub cut: Vec<usize>,
    pub interior: Vec<usize>,
    /// Indices (see [`BackgroundMesh::face_index`]) of the ghost-penalty faces.
    pub ghost_faces: Vec<usize>,
}

impl<T: Real> ActiveMesh<T> {
    #[inline]
    pub fn is_active(&self, e: usize) -> bool {
        self.class[e] != ElementClass::Exterior
    }

    /// Smallest volume fraction over active elements.
    pub fn eta_min(&self) -> T {
        self.active.iter().map(|&e| self.eta[e]).fold(T::one(), T::min)
    }
}

/// Classification tolerance relative to the element measure.
pub fn cut_tolerance<T: Real>() -> T {
    T::tol(1e-12)
}

/// Classifies every background element as interior, cut or exterior.
pub fn classify_elements<T: Real>(
    mesh: &BackgroundMesh<T>,
    geo: &LevelSet<T>,
    cfg: &QuadConfig,
) -> Result<ActiveMesh<T>, GeometryError> {
    let eps = cut_tolerance::<T>();
    let eta: Vec<T> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| quadrature::volume_fraction(mesh, e, geo, cfg))
        .collect();
    let mut class = Vec::with_capacity(eta.len());
    let mut eta_clean = Vec::with_capacity(eta.len());
    for &v in &eta {
        let (c, v) = if v <= eps {
            (ElementClass::Exterior, T::zero())
        } else if v >= T::one() - eps {
            (ElementClass::Interior, T::one())
        } else {
            (ElementClass::Cut, v)
        };
        class.push(c);
        eta_clean.push(v);
    }
    let pick = |c: ElementClass| (0..class.len()).filter(|&e| class[e] == c).collect::<Vec<_>>();
    let interior = pick(ElementClass::Interior);
    if interior.is_empty() {
        return Err(GeometryError::EmptyActiveMesh);
    }
    let cut = pick(ElementClass::Cut);
    let active = (0..class.len()).filter(|&e| class[e] != ElementClass::Exterior).collect();
    let mut active_mesh = ActiveMesh {
        mesh: mesh.clone(),
        level_set: geo.clone(),
        class,
        eta: eta_clean,
        active,
        cut,
        interior,
        ghost_faces: Vec::new(),
    };
    active_mesh.ghost_faces = ghost_faces(&active_mesh);
    Ok(active_mesh)
}

/// Interior faces between two active elements with at least one of them cut.
pub fn ghost_faces<T: Real>(active: &ActiveMesh<T>) -> Vec<usize> {
    let mesh = &active.mesh;
    (0..mesh.num_faces())
        .filter(|&f| match mesh.face_elements(mesh.face(f)) {
            Some((a, b)) => {
                active.is_active(a)
                    && active.is_active(b)
                    && (active.class[a] == ElementClass::Cut || active.class[b] == ElementClass::Cut)
            }
            None => false,
        })
        .collect()
}
