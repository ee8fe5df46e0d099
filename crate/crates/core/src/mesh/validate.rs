use serde::Serialize;

use super::{locate::tet_box, Point3, TetMesh, Vector3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntersectionKind {
    /// A vertex of `tet_b` lies on a face, an edge or in the interior of
    /// `tet_a` without being one of its vertices.
    VertexInside,
    /// The interiors of the two tetrahedra overlap.
    Overlap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImproperIntersection {
    pub tet_a: usize,
    pub tet_b: usize,
    pub kind: IntersectionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub num_tets: usize,
    pub num_nodes: usize,
    pub num_interior_faces: usize,
    pub num_boundary_faces: usize,
    pub degenerate: Vec<usize>,
    pub improper: Vec<ImproperIntersection>,
    /// Faces (sorted node triples) shared by more than two tetrahedra.
    pub overused_faces: Vec<[usize; 3]>,
}

pub(super) fn validate_partition(mesh: &TetMesh) -> ValidationReport {
    let n = mesh.num_tets();
    let degenerate: Vec<usize> = (0..n).filter(|&t| mesh.is_degenerate(t)).collect();
    let overused_faces: Vec<[usize; 3]> = mesh
        .faces()
        .iter()
        .filter(|f| f.sides.len() > 2)
        .map(|f| f.nodes)
        .collect();

    let scale = mesh.bounds().diagonal().max(f64::MIN_POSITIVE);
    let mut improper = Vec::new();
    for a in 0..n {
        if mesh.is_degenerate(a) {
            continue;
        }
        let (lo, hi) = tet_box(mesh.nodes(), &mesh.tets()[a]);
        let near = mesh.tets_near(&Point3::from(lo), &Point3::from(hi));
        for b in near.into_iter().filter(|&b| b > a) {
            if let Some(kind) = pair_conflict(mesh, a, b, scale) {
                improper.push(ImproperIntersection {
                    tet_a: a,
                    tet_b: b,
                    kind,
                });
            }
        }
    }

    ValidationReport {
        valid: degenerate.is_empty() && improper.is_empty() && overused_faces.is_empty(),
        num_tets: n,
        num_nodes: mesh.nodes().len(),
        num_interior_faces: mesh.num_interior_faces(),
        num_boundary_faces: mesh.boundary_faces().count(),
        degenerate,
        improper,
        overused_faces,
    }
}

fn pair_conflict(mesh: &TetMesh, a: usize, b: usize, scale: f64) -> Option<IntersectionKind> {
    let ta = mesh.tets()[a];
    let tb = mesh.tets()[b];
    for (x, tx, ty) in [(a, &ta, &tb), (b, &tb, &ta)] {
        for &v in ty.iter().filter(|v| !tx.contains(v)) {
            let bary = mesh.barycentric_unchecked(x, &mesh.nodes()[v]);
            if bary.iter().all(|&c| c >= -super::BARY_TOL) {
                return Some(IntersectionKind::VertexInside);
            }
        }
    }
    if !separated(&mesh.vertices(a), &mesh.vertices(b), 1e-10 * scale) {
        return Some(IntersectionKind::Overlap);
    }
    None
}

const EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
const FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

/// Separating-axis test: true if some face normal or edge-edge cross product
/// separates the two tetrahedra, allowing them to touch.
fn separated(p: &[Point3; 4], q: &[Point3; 4], eps: f64) -> bool {
    let mut axes: Vec<Vector3> = Vec::with_capacity(44);
    for t in [p, q] {
        for f in FACES {
            axes.push((t[f[1]] - t[f[0]]).cross(&(t[f[2]] - t[f[0]])));
        }
    }
    for (i0, i1) in EDGES {
        for (j0, j1) in EDGES {
            axes.push((p[i1] - p[i0]).cross(&(q[j1] - q[j0])));
        }
    }
    axes.iter().any(|axis| {
        let len = axis.norm();
        if len < 1e-14 {
            return false;
        }
        let n = axis / len;
        let (pmin, pmax) = project(p, &n);
        let (qmin, qmax) = project(q, &n);
        pmax <= qmin + eps || qmax <= pmin + eps
    })
}

fn project(t: &[Point3; 4], n: &Vector3) -> (f64, f64) {
    t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        let d = v.coords.dot(n);
        (lo.min(d), hi.max(d))
    })
}
