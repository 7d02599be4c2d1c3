use std::fmt;

use serde::Serialize;

use super::MultiRegionMesh;

#[derive(Debug, Clone, Copy)]
pub struct QualityThresholds {
    pub warn_deg: f64,
    pub error_deg: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        QualityThresholds {
            warn_deg: 70.0,
            error_deg: 85.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct FaceFlag {
    pub region: String,
    pub face: usize,
    pub non_orth_deg: f64,
    pub severity: Severity,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionQuality {
    pub name: String,
    pub cells: usize,
    pub internal_faces: usize,
    pub boundary_faces: usize,
    pub max_non_orth_deg: f64,
    pub mean_non_orth_deg: f64,
    pub max_skewness: f64,
    pub min_volume: f64,
    pub max_volume: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QualityReport {
    pub regions: Vec<RegionQuality>,
    pub interfaces: usize,
    pub max_non_orth_deg: f64,
    pub mean_non_orth_deg: f64,
    /// Distance of a face centroid from the connector crossing, over `|r|`.
    pub max_skewness: f64,
    pub min_volume: f64,
    pub max_volume: f64,
    pub flags: Vec<FaceFlag>,
}

impl QualityReport {
    pub fn has_errors(&self) -> bool {
        self.flags.iter().any(|f| f.severity == Severity::Error)
    }
}

pub fn check_quality(mesh: &MultiRegionMesh, th: QualityThresholds) -> QualityReport {
    let mut regions = Vec::new();
    let mut flags = Vec::new();
    let (mut sum, mut count) = (0.0, 0usize);
    for r in &mesh.regions {
        let g = &r.geometry;
        let mut q = RegionQuality {
            name: r.name.clone(),
            cells: r.n_cells,
            internal_faces: r.n_internal,
            boundary_faces: r.n_boundary(),
            max_non_orth_deg: 0.0,
            mean_non_orth_deg: 0.0,
            max_skewness: 0.0,
            min_volume: g.cell_volume.iter().copied().fold(f64::INFINITY, f64::min),
            max_volume: g.cell_volume.iter().copied().fold(0.0, f64::max),
        };
        for f in 0..r.n_internal {
            let a = g.non_orth_deg[f];
            q.max_non_orth_deg = q.max_non_orth_deg.max(a);
            q.mean_non_orth_deg += a;
            q.max_skewness = q.max_skewness.max(g.skew[f].norm() / g.delta_mag[f]);
            let severity = if a > th.error_deg {
                Some(Severity::Error)
            } else if a > th.warn_deg {
                Some(Severity::Warning)
            } else {
                None
            };
            if let Some(severity) = severity {
                flags.push(FaceFlag {
                    region: r.name.clone(),
                    face: f,
                    non_orth_deg: a,
                    severity,
                });
            }
        }
        sum += q.mean_non_orth_deg;
        count += r.n_internal;
        if r.n_internal > 0 {
            q.mean_non_orth_deg /= r.n_internal as f64;
        }
        regions.push(q);
    }
    QualityReport {
        interfaces: mesh.interfaces.len(),
        max_non_orth_deg: regions.iter().map(|q| q.max_non_orth_deg).fold(0.0, f64::max),
        mean_non_orth_deg: if count > 0 { sum / count as f64 } else { 0.0 },
        max_skewness: regions.iter().map(|q| q.max_skewness).fold(0.0, f64::max),
        min_volume: regions.iter().map(|q| q.min_volume).fold(f64::INFINITY, f64::min),
        max_volume: regions.iter().map(|q| q.max_volume).fold(0.0, f64::max),
        regions,
        flags,
    }
}

impl fmt::Display for QualityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>8} {:>9} {:>9} {:>10} {:>10} {:>10} {:>11} {:>11}",
            "region", "cells", "internal", "boundary", "maxNonOrth", "meanNonOrth", "maxSkew", "minVol", "maxVol"
        )?;
        for q in &self.regions {
            writeln!(
                f,
                "{:<16} {:>8} {:>9} {:>9} {:>10.3} {:>10.3} {:>10.4} {:>11.4e} {:>11.4e}",
                q.name,
                q.cells,
                q.internal_faces,
                q.boundary_faces,
                q.max_non_orth_deg,
                q.mean_non_orth_deg,
                q.max_skewness,
                q.min_volume,
                q.max_volume
            )?;
        }
        writeln!(f, "interfaces: {}", self.interfaces)?;
        writeln!(
            f,
            "non-orthogonality: max {:.3} deg, mean {:.3} deg; max skewness {:.4}",
            self.max_non_orth_deg, self.mean_non_orth_deg, self.max_skewness
        )?;
        for fl in &self.flags {
            let tag = match fl.severity {
                Severity::Warning => "warning",
                Severity::Error => "error",
            };
            writeln!(
                f,
                "{tag}: region {} face {} non-orthogonality {:.2} deg",
                fl.region, fl.face, fl.non_orth_deg
            )?;
        }
        Ok(())
    }
}
