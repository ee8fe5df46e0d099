use serde::Serialize;

use super::TetMesh;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TetQuality {
    pub longest_edge: f64,
    pub inradius: f64,
    /// Shape parameter: longest edge over inradius. Equals `2 sqrt(6)` for a
    /// regular tetrahedron and grows as the tetrahedron flattens.
    pub shape: f64,
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshQualityReport {
    pub tets: Vec<TetQuality>,
    /// Longest edge over the whole partition.
    pub size: f64,
    /// Quasi-uniformity constant `size / min inradius`.
    pub beta: f64,
}

pub(super) fn shape_metrics(mesh: &TetMesh) -> Result<MeshQualityReport> {
    let tets = (0..mesh.num_tets())
        .map(|t| {
            let volume = mesh.tet_volume(t)?;
            let v = mesh.vertices(t);
            let mut longest: f64 = 0.0;
            for i in 0..4 {
                for j in i + 1..4 {
                    longest = longest.max((v[i] - v[j]).norm());
                }
            }
            let area: f64 = (0..4)
                .map(|skip| {
                    let f: Vec<_> = (0..4).filter(|&k| k != skip).map(|k| v[k]).collect();
                    0.5 * (f[1] - f[0]).cross(&(f[2] - f[0])).norm()
                })
                .sum();
            let inradius = 3.0 * volume / area;
            Ok(TetQuality {
                longest_edge: longest,
                inradius,
                shape: longest / inradius,
                volume,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let size = tets.iter().map(|q| q.longest_edge).fold(0.0, f64::max);
    let min_rho = tets.iter().map(|q| q.inradius).fold(f64::INFINITY, f64::min);
    Ok(MeshQualityReport {
        beta: if tets.is_empty() { 0.0 } else { size / min_rho },
        tets,
        size,
    })
}
