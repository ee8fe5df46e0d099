//! Tetrahedral partitions.
//!
//! A [`TetMesh`] is the classic two-table representation: a node table of
//! Cartesian points and an element table of four node indices per
//! tetrahedron. On construction the mesh builds its face registry (which
//! tetrahedra share which triangular face, and the local index of the vertex
//! opposite that face in each of them) and a uniform-grid locator used by
//! [`TetMesh::locate`].

mod generate;
mod locate;
mod quality;
mod validate;

use std::collections::HashMap;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use generate::generate_box_mesh;
pub use quality::{MeshQualityReport, TetQuality};
pub use validate::{ImproperIntersection, IntersectionKind, ValidationReport};

use locate::Locator;

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;

/// Barycentric coordinates relative to a tetrahedron, in its local vertex order.
pub type Barycentric = [f64; 4];

/// Containment tolerance on barycentric coordinates.
pub const BARY_TOL: f64 = 1e-9;

/// Axis-aligned box, used for mesh bounds, holes and missing-data blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Aabb { min, max }
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|a| (self.max[a] - self.min[a]).max(0.0)).product()
    }

    pub fn diagonal(&self) -> f64 {
        (0..3)
            .map(|a| (self.max[a] - self.min[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// One side of a triangular face: the incident tetrahedron and the local
/// index (0..4) of its vertex opposite the face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FaceSide {
    pub tet: usize,
    pub opposite: usize,
}

/// A triangular face, keyed by its sorted node triple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Face {
    pub nodes: [usize; 3],
    pub sides: Vec<FaceSide>,
}

#[derive(Debug, Clone)]
pub struct TetMesh {
    nodes: Vec<Point3>,
    tets: Vec<[usize; 4]>,
    faces: Vec<Face>,
    interior: Vec<usize>,
    volumes: Vec<f64>,
    vol_tol: f64,
    bounds: Aabb,
    locator: Locator,
}

impl TetMesh {
    /// Builds a mesh from 0-based node and element tables.
    ///
    /// Fails on out-of-range indices, repeated vertices within a tetrahedron,
    /// duplicated tetrahedra and non-finite coordinates. Degenerate
    /// tetrahedra are accepted here and reported by [`TetMesh::validate`].
    pub fn new(nodes: Vec<Point3>, tets: Vec<[usize; 4]>) -> Result<Self> {
        for (i, p) in nodes.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::NonFinite { node: i });
            }
        }
        let mut seen: HashMap<[usize; 4], usize> = HashMap::with_capacity(tets.len());
        for (t, tet) in tets.iter().enumerate() {
            for &v in tet {
                if v >= nodes.len() {
                    return Err(Error::IndexOutOfRange {
                        tet: t,
                        index: v,
                        count: nodes.len(),
                    });
                }
            }
            let mut key = *tet;
            key.sort_unstable();
            if key.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::RepeatedVertex { tet: t });
            }
            if let Some(&first) = seen.get(&key) {
                return Err(Error::DuplicateTet { tet: t, first });
            }
            seen.insert(key, t);
        }

        let bounds = bounding_box(&nodes);
        let diag = bounds.diagonal();
        let vol_tol = 1e-12 * diag.powi(3);

        let volumes: Vec<f64> = tets
            .iter()
            .map(|t| signed_volume(&nodes[t[0]], &nodes[t[1]], &nodes[t[2]], &nodes[t[3]]).abs())
            .collect();

        let mut registry: HashMap<[usize; 3], Vec<FaceSide>> = HashMap::new();
        for (t, tet) in tets.iter().enumerate() {
            for opposite in 0..4 {
                registry
                    .entry(face_key(tet, opposite))
                    .or_default()
                    .push(FaceSide { tet: t, opposite });
            }
        }
        let mut faces: Vec<Face> = registry
            .into_iter()
            .map(|(nodes, sides)| Face { nodes, sides })
            .collect();
        faces.sort_by(|a, b| a.nodes.cmp(&b.nodes));
        let interior = faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f.sides.len() == 2)
            .map(|(i, _)| i)
            .collect();

        let locator = Locator::build(&nodes, &tets, &volumes, vol_tol, &bounds);

        Ok(TetMesh {
            nodes,
            tets,
            faces,
            interior,
            volumes,
            vol_tol,
            bounds,
            locator,
        })
    }

    pub fn nodes(&self) -> &[Point3] {
        &self.nodes
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tets.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn vol_tol(&self) -> f64 {
        self.vol_tol
    }

    /// All distinct faces, sorted by node triple.
    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// Number of faces shared by exactly two tetrahedra.
    pub fn num_interior_faces(&self) -> usize {
        self.interior.len()
    }

    /// The `i`-th interior face (faces with exactly two incident tetrahedra).
    pub fn interior_face(&self, i: usize) -> Result<&Face> {
        self.interior
            .get(i)
            .map(|&f| &self.faces[f])
            .ok_or(Error::OutOfRange {
                index: i,
                len: self.interior.len(),
            })
    }

    pub fn interior_faces(&self) -> impl Iterator<Item = &Face> + '_ {
        self.interior.iter().map(move |&f| &self.faces[f])
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = &Face> + '_ {
        self.faces.iter().filter(|f| f.sides.len() == 1)
    }

    pub fn vertices(&self, tet: usize) -> [Point3; 4] {
        let t = self.tets[tet];
        [
            self.nodes[t[0]],
            self.nodes[t[1]],
            self.nodes[t[2]],
            self.nodes[t[3]],
        ]
    }

    fn check_tet(&self, tet: usize) -> Result<()> {
        if tet >= self.tets.len() {
            return Err(Error::OutOfRange {
                index: tet,
                len: self.tets.len(),
            });
        }
        if self.is_degenerate(tet) {
            return Err(Error::DegenerateTet {
                tet,
                volume: self.volumes[tet],
            });
        }
        Ok(())
    }

    pub fn is_degenerate(&self, tet: usize) -> bool {
        self.volumes[tet] <= self.vol_tol
    }

    /// Volume `|det(M)| / 6` of a tetrahedron.
    pub fn tet_volume(&self, tet: usize) -> Result<f64> {
        self.check_tet(tet)?;
        Ok(self.volumes[tet])
    }

    /// Barycentric coordinates of `p` relative to `tet`, by Cramer's rule.
    ///
    /// Each coordinate is the signed volume of the tetrahedron with that vertex
    /// replaced by `p`, divided by the signed volume of `tet`; coordinates are
    /// negative for points outside.
    pub fn barycentric(&self, tet: usize, p: &Point3) -> Result<Barycentric> {
        self.check_tet(tet)?;
        Ok(self.barycentric_unchecked(tet, p))
    }

    pub(crate) fn barycentric_unchecked(&self, tet: usize, p: &Point3) -> Barycentric {
        let [a, b, c, d] = self.vertices(tet);
        barycentric_of(&a, &b, &c, &d, p)
    }

    /// Point with the given barycentric coordinates relative to `tet`.
    pub fn point_at(&self, tet: usize, b: &Barycentric) -> Point3 {
        let v = self.vertices(tet);
        Point3::from(
            v[0].coords * b[0] + v[1].coords * b[1] + v[2].coords * b[2] + v[3].coords * b[3],
        )
    }

    /// Directional coordinates of the vector `u` relative to `tet`: the
    /// difference of the barycentric coordinates of two points `u` apart.
    /// They sum to zero.
    pub fn directional_coords(&self, tet: usize, u: &Vector3) -> Result<[f64; 4]> {
        self.check_tet(tet)?;
        let m = self.cramer_matrix(tet);
        let inv = m
            .try_inverse()
            .ok_or_else(|| Error::Singular(format!("tetrahedron {tet} matrix")))?;
        let r = inv * nalgebra::Vector4::new(0.0, u.x, u.y, u.z);
        Ok([r[0], r[1], r[2], r[3]])
    }

    /// The 4x4 matrix with rows `(1,1,1,1)`, x, y and z coordinates of the vertices.
    pub fn cramer_matrix(&self, tet: usize) -> Matrix4<f64> {
        let v = self.vertices(tet);
        Matrix4::from_fn(|r, c| if r == 0 { 1.0 } else { v[c][r - 1] })
    }

    /// Finds a tetrahedron containing `p` (all barycentric coordinates
    /// `>= -tol`). Points on shared faces or edges go to the lowest tet id.
    pub fn locate(&self, p: &Point3, tol: f64) -> Option<(usize, Barycentric)> {
        self.locator.candidates(p).and_then(|cands| {
            cands.iter().find_map(|&t| {
                let t = t as usize;
                let b = self.barycentric_unchecked(t, p);
                (b.iter().all(|&x| x >= -tol)).then_some((t, b))
            })
        })
    }

    /// Tetrahedra whose (slightly inflated) bounding boxes overlap the given box.
    pub(crate) fn tets_near(&self, lo: &Point3, hi: &Point3) -> Vec<usize> {
        self.locator.tets_in_box(lo, hi)
    }

    pub fn validate(&self) -> ValidationReport {
        validate::validate_partition(self)
    }

    pub fn shape_metrics(&self) -> Result<MeshQualityReport> {
        quality::shape_metrics(self)
    }

    /// SHA-256 over node coordinates and element indices; independent of file formatting.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.nodes.len() as u64).to_le_bytes());
        for p in &self.nodes {
            for a in 0..3 {
                h.update(p[a].to_le_bytes());
            }
        }
        h.update((self.tets.len() as u64).to_le_bytes());
        for t in &self.tets {
            for &v in t {
                h.update((v as u64).to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Total volume of all tetrahedra.
    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }
}

fn face_key(tet: &[usize; 4], opposite: usize) -> [usize; 3] {
    let mut k = [0usize; 3];
    let mut n = 0;
    for (i, &v) in tet.iter().enumerate() {
        if i != opposite {
            k[n] = v;
            n += 1;
        }
    }
    k.sort_unstable();
    k
}

pub(crate) fn bounding_box(nodes: &[Point3]) -> Aabb {
    if nodes.is_empty() {
        return Aabb::new([0.0; 3], [0.0; 3]);
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in nodes {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    Aabb::new(lo, hi)
}

/// `(b - a) . ((c - a) x (d - a)) / 6`.
pub fn signed_volume(a: &Point3, b: &Point3, c: &Point3, d: &Point3) -> f64 {
    (b - a).dot(&(c - a).cross(&(d - a))) / 6.0
}

pub(crate) fn barycentric_of(
    a: &Point3,
    b: &Point3,
    c: &Point3,
    d: &Point3,
    p: &Point3,
) -> Barycentric {
    let vol = signed_volume(a, b, c, d);
    [
        signed_volume(p, b, c, d) / vol,
        signed_volume(a, p, c, d) / vol,
        signed_volume(a, b, p, d) / vol,
        signed_volume(a, b, c, p) / vol,
    ]
}
