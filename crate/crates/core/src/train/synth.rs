//! Procedural jaw scans for training and testing.
//!
//! A scan is a U-shaped parabolic strip (the gum surface) with one
//! raised-cosine bump per tooth. The bump profile `h * cos(pi*d / (2R))`
//! reaches zero height exactly at the support radius `R` but with nonzero
//! slope, so each tooth meets the gum in a sharp crease. That crease is
//! the whole point of the generator: labels switch from tooth to gingiva
//! exactly where the surface bends hardest, mirroring the structure that
//! curvature-guided training is meant to exploit.
//!
//! Faces whose (pre-bump) centroid lies inside a tooth's support get that
//! tooth's class id; everything else is gingiva. Class ids follow arch
//! position: tooth `k` maps to id `k + 1` on maxillary scans and `k + 17`
//! on mandibular ones.

use nalgebra::{Point3, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classes::Jaw;
use crate::labels::LabelMap;
use crate::mesh::TriMesh;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("tooth_count must be in 1..=16, got {0}")]
    BadToothCount(usize),
    #[error("grid {nu}x{nv} too coarse: step {step:.2} mm exceeds half the smallest tooth radius {radius:.2} mm")]
    ResolutionTooLow { nu: usize, nv: usize, step: f64, radius: f64 },
    #[error("invalid parameter range: {0}")]
    BadRange(String),
    #[error("generated mesh lost faces to degeneracy")]
    Degenerate,
}

/// Shape parameters for one generated scan family. Distances in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Teeth per jaw (1..=16).
    pub tooth_count: usize,
    /// Grid cells along the arch.
    pub nu: usize,
    /// Grid cells across the strip.
    pub nv: usize,
    /// Distance between the two open ends of the arch.
    pub arch_width: f64,
    /// Front-to-back depth of the arch.
    pub arch_depth: f64,
    /// Width of the gum strip.
    pub strip_width: f64,
    /// Tooth support radius range (min, max).
    pub tooth_radius: (f64, f64),
    /// Tooth bump height range (min, max).
    pub tooth_height: (f64, f64),
    /// Probability that any given tooth is absent.
    pub missing_tooth_prob: f64,
    /// Relative jitter applied to the arch dimensions per scan.
    pub shape_jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            tooth_count: 14,
            nu: 96,
            nv: 28,
            arch_width: 50.0,
            arch_depth: 40.0,
            strip_width: 16.0,
            tooth_radius: (2.8, 3.6),
            tooth_height: (3.0, 5.0),
            missing_tooth_prob: 0.0,
            shape_jitter: 0.08,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.tooth_count == 0 || self.tooth_count > 16 {
            return Err(SynthError::BadToothCount(self.tooth_count));
        }
        for (name, (lo, hi)) in [
            ("tooth_radius", self.tooth_radius),
            ("tooth_height", self.tooth_height),
        ] {
            if !(lo > 0.0 && hi >= lo) {
                return Err(SynthError::BadRange(format!("{name} = ({lo}, {hi})")));
            }
        }
        if !(0.0..=1.0).contains(&self.missing_tooth_prob) {
            return Err(SynthError::BadRange(format!(
                "missing_tooth_prob = {}",
                self.missing_tooth_prob
            )));
        }
        if self.arch_width <= 0.0 || self.arch_depth <= 0.0 || self.strip_width <= 0.0 {
            return Err(SynthError::BadRange("arch dimensions must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.shape_jitter) {
            return Err(SynthError::BadRange(format!(
                "shape_jitter = {}",
                self.shape_jitter
            )));
        }
        // A bump narrower than two grid steps would alias away, leaving
        // labels with no geometric support.
        let step = (self.arch_length() / self.nu.max(1) as f64)
            .max(self.strip_width / self.nv.max(1) as f64);
        let radius = self.tooth_radius.0;
        if step > radius / 2.0 {
            return Err(SynthError::ResolutionTooLow {
                nu: self.nu,
                nv: self.nv,
                step,
                radius,
            });
        }
        Ok(())
    }

    /// Arc length of the centerline, by fine polyline sum.
    pub fn arch_length(&self) -> f64 {
        let arch = Arch {
            half_width: self.arch_width / 2.0,
            depth: self.arch_depth,
            strip: self.strip_width,
        };
        let mut len = 0.0;
        let mut prev = arch.surface(0.0, 0.5);
        for i in 1..=256 {
            let p = arch.surface(i as f64 / 256.0, 0.5);
            len += (p - prev).norm();
            prev = p;
        }
        len
    }
}

/// One generated scan: geometry, per-face class labels, and jaw side.
pub struct SyntheticJaw {
    pub mesh: TriMesh,
    pub labels: LabelMap,
    pub jaw: Jaw,
}

/// Flat (pre-bump) arch geometry.
struct Arch {
    half_width: f64,
    depth: f64,
    strip: f64,
}

impl Arch {
    /// Centerline: a parabola in the xy-plane opening toward -y, with
    /// the toe of the U at (0, depth).
    fn center(&self, t: f64) -> Point3<f64> {
        Point3::new(self.half_width * t, self.depth * (1.0 - t * t), 0.0)
    }

    /// Point on the flat strip at arch parameter `u` in [0,1] and
    /// cross-strip parameter `v` in [0,1].
    fn surface(&self, u: f64, v: f64) -> Point3<f64> {
        let t = 2.0 * u - 1.0;
        let c = self.center(t);
        // In-plane unit normal of the centerline (rotated tangent).
        let tangent = Vector3::new(self.half_width, -2.0 * self.depth * t, 0.0).normalize();
        let normal = Vector3::new(-tangent.y, tangent.x, 0.0);
        c + normal * ((v - 0.5) * self.strip)
    }
}

struct Tooth {
    center: Point3<f64>,
    radius: f64,
    height: f64,
    class_id: u8,
    present: bool,
}

/// Raised-cosine bump height at flat-surface distance `d` from a tooth
/// center. Zero at and beyond the support radius; the slope at the rim
/// is -h*pi/(2R), which is what creases the surface there.
fn bump(d: f64, radius: f64, height: f64) -> f64 {
    if d < radius {
        height * (std::f64::consts::FRAC_PI_2 * d / radius).cos()
    } else {
        0.0
    }
}

/// Generate one scan. The same `(config, seed)` pair always yields a
/// bit-identical mesh and label map.
pub fn generate_jaw(config: &SynthConfig, seed: u64) -> Result<SyntheticJaw, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let jaw = if rng.random::<bool>() {
        Jaw::Maxillary
    } else {
        Jaw::Mandible
    };
    let jitter = |rng: &mut ChaCha8Rng, base: f64, rel: f64| -> f64 {
        base * (1.0 + rel * rng.random_range(-1.0..1.0))
    };
    let arch = Arch {
        half_width: jitter(&mut rng, config.arch_width, config.shape_jitter) / 2.0,
        depth: jitter(&mut rng, config.arch_depth, config.shape_jitter),
        strip: jitter(&mut rng, config.strip_width, config.shape_jitter),
    };

    // Draw every tooth's parameters before applying absence, so a missing
    // tooth never shifts the random stream of its neighbors.
    let base_id = match jaw {
        Jaw::Maxillary => 1u8,
        Jaw::Mandible => 17u8,
    };
    let u_jitter = 0.15 / config.tooth_count as f64;
    let mut teeth = Vec::with_capacity(config.tooth_count);
    for k in 0..config.tooth_count {
        let u = (k as f64 + 0.5) / config.tooth_count as f64
            + u_jitter * rng.random_range(-1.0..1.0);
        let v = 0.5 + 0.06 * rng.random_range(-1.0..1.0);
        let radius = rng.random_range(config.tooth_radius.0..=config.tooth_radius.1);
        let height = rng.random_range(config.tooth_height.0..=config.tooth_height.1);
        let present = rng.random::<f64>() >= config.missing_tooth_prob;
        teeth.push(Tooth {
            center: arch.surface(u, v),
            radius,
            height,
            class_id: base_id + k as u8,
            present,
        });
    }

    // Grid vertices: flat position plus the summed bump displacement
    // along +z.
    let (nu, nv) = (config.nu, config.nv);
    let mut flat = Vec::with_capacity((nu + 1) * (nv + 1));
    let mut vertices = Vec::with_capacity((nu + 1) * (nv + 1));
    for i in 0..=nu {
        for j in 0..=nv {
            let p = arch.surface(i as f64 / nu as f64, j as f64 / nv as f64);
            let mut z = 0.0;
            for tooth in teeth.iter().filter(|t| t.present) {
                z += bump((p - tooth.center).norm(), tooth.radius, tooth.height);
            }
            flat.push(p);
            vertices.push(Point3::new(p.x, p.y, p.z + z));
        }
    }

    let vid = |i: usize, j: usize| -> u32 { (i * (nv + 1) + j) as u32 };
    let mut faces = Vec::with_capacity(2 * nu * nv);
    let mut labels = Vec::with_capacity(2 * nu * nv);
    let label_of = |a: u32, b: u32, c: u32| -> u8 {
        let centroid = Point3::from(
            (flat[a as usize].coords + flat[b as usize].coords + flat[c as usize].coords) / 3.0,
        );
        // Nearest tooth whose support contains the flat centroid.
        teeth
            .iter()
            .filter(|t| t.present)
            .map(|t| ((centroid - t.center).norm(), t))
            .filter(|(d, t)| *d < t.radius)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, t)| t.class_id)
            .unwrap_or(0)
    };
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            for tri in [[a, b, c], [a, c, d]] {
                labels.push(label_of(tri[0], tri[1], tri[2]));
                faces.push(tri);
            }
        }
    }

    let mesh = TriMesh::new(vertices, faces).map_err(|_| SynthError::Degenerate)?;
    if mesh.dropped_faces() != 0 {
        return Err(SynthError::Degenerate);
    }
    let labels = LabelMap::from_ids(labels).expect("class ids constructed in range");
    Ok(SyntheticJaw { mesh, labels, jaw })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_features, point_curvature};
    use crate::mesh::FaceAdjacency;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig::default();
        let a = generate_jaw(&cfg, 11).unwrap();
        let b = generate_jaw(&cfg, 11).unwrap();
        assert_eq!(a.jaw, b.jaw);
        assert_eq!(a.labels.ids(), b.labels.ids());
        assert_eq!(a.mesh.vertex_count(), b.mesh.vertex_count());
        for i in 0..a.mesh.vertex_count() {
            assert_eq!(a.mesh.vertices()[i], b.mesh.vertices()[i]);
        }

        let c = generate_jaw(&cfg, 12).unwrap();
        assert_ne!(a.labels.ids(), c.labels.ids());
    }

    #[test]
    fn full_dentition_has_all_classes() {
        let cfg = SynthConfig::default();
        for seed in 0..6 {
            let jaw = generate_jaw(&cfg, seed).unwrap();
            let distinct = jaw.labels.distinct();
            // 14 teeth plus gingiva.
            assert_eq!(distinct.len(), 15, "seed {seed}: {distinct:?}");
            assert!(distinct.contains(&0));
            let range = match jaw.jaw {
                Jaw::Maxillary => 1..=16,
                Jaw::Mandible => 17..=32,
            };
            for &id in &distinct {
                assert!(id == 0 || range.contains(&id), "id {id} for {:?}", jaw.jaw);
            }
        }
    }

    #[test]
    fn missing_teeth_reduce_distinct_labels() {
        let cfg = SynthConfig {
            missing_tooth_prob: 0.5,
            ..SynthConfig::default()
        };
        let mut saw_fewer = false;
        for seed in 0..10 {
            let jaw = generate_jaw(&cfg, seed).unwrap();
            if jaw.labels.distinct().len() < 15 {
                saw_fewer = true;
            }
        }
        assert!(saw_fewer);
    }

    #[test]
    fn coarse_grids_are_rejected() {
        let cfg = SynthConfig {
            nu: 12,
            nv: 4,
            ..SynthConfig::default()
        };
        assert!(matches!(
            generate_jaw(&cfg, 0),
            Err(SynthError::ResolutionTooLow { .. })
        ));
        let cfg = SynthConfig {
            tooth_count: 17,
            ..SynthConfig::default()
        };
        assert!(matches!(
            generate_jaw(&cfg, 0),
            Err(SynthError::BadToothCount(17))
        ));
    }

    #[test]
    fn tooth_fraction_is_plausible() {
        let jaw = generate_jaw(&SynthConfig::default(), 3).unwrap();
        let hist = jaw.labels.histogram();
        let total: usize = hist.iter().sum();
        let tooth_frac = 1.0 - hist[0] as f64 / total as f64;
        assert!(
            (0.1..0.6).contains(&tooth_frac),
            "tooth fraction {tooth_frac}"
        );
    }

    #[test]
    fn label_boundaries_sit_on_creases() {
        // Faces adjacent to a face with a different label should bend
        // more than faces in label interiors. This is the property the
        // curvature-guided loss depends on.
        let jaw = generate_jaw(&SynthConfig::default(), 5).unwrap();
        let adj = FaceAdjacency::build(&jaw.mesh);
        let curv = point_curvature(&jaw.mesh, &adj);
        let ids = jaw.labels.ids();

        let mut boundary = Vec::new();
        let mut interior = Vec::new();
        for f in 0..jaw.mesh.face_count() {
            let is_boundary = adj
                .first_order(f)
                .iter()
                .any(|&g| ids[g as usize] != ids[f]);
            if is_boundary {
                boundary.push(curv.values[f]);
            } else {
                interior.push(curv.values[f]);
            }
        }
        assert!(!boundary.is_empty() && !interior.is_empty());
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&boundary) > 1.5 * mean(&interior),
            "boundary {:.4} vs interior {:.4}",
            mean(&boundary),
            mean(&interior)
        );
    }

    #[test]
    fn features_build_cleanly_from_generated_scans() {
        let jaw = generate_jaw(&SynthConfig::default(), 9).unwrap();
        let adj = FaceAdjacency::build(&jaw.mesh);
        let cloud = build_features(&jaw.mesh, &adj, jaw.jaw);
        assert_eq!(cloud.n(), jaw.mesh.face_count());
        assert_eq!(cloud.n(), jaw.labels.ids().len());
        assert!(cloud.features().iter().all(|x| x.is_finite()));
    }
}
