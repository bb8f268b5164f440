//! Oriented bounding boxes from area-weighted vertex statistics.

use super::mesh::{P3, TriMesh, V3};
use super::{tol, GeomError};
use nalgebra::Matrix3;

#[derive(Debug, Clone)]
pub struct Obb {
    pub center: P3,
    /// Orthonormal, right-handed.
    pub axes: [V3; 3],
    pub half_extents: [f64; 3],
}

impl Obb {
    pub fn is_orthonormal(&self) -> bool {
        let e = tol::ORTHO_EPS;
        for i in 0..3 {
            if (self.axes[i].norm() - 1.0).abs() > e {
                return false;
            }
            for j in i + 1..3 {
                if self.axes[i].dot(&self.axes[j]).abs() > e {
                    return false;
                }
            }
        }
        self.axes[0].cross(&self.axes[1]).dot(&self.axes[2]) > 0.0
    }

    /// Outward normals of the six faces with their half-extent, as (normal, extent) pairs.
    pub fn face_normals(&self) -> [(V3, f64); 6] {
        [
            (self.axes[0], self.half_extents[0]),
            (-self.axes[0], self.half_extents[0]),
            (self.axes[1], self.half_extents[1]),
            (-self.axes[1], self.half_extents[1]),
            (self.axes[2], self.half_extents[2]),
            (-self.axes[2], self.half_extents[2]),
        ]
    }
}

/// PCA of the area-weighted vertex covariance, with extent fitting along the
/// resulting axes. Meshes whose covariance spectrum is (near-)degenerate,
/// boxes above all, fall back to dominant face-normal directions, which keeps
/// the fit rotation-equivariant for symmetric solids.
pub fn oriented_bounding_box(mesh: &TriMesh) -> Result<Obb, GeomError> {
    if mesh.is_empty() {
        return Err(GeomError::EmptyMesh);
    }

    // Exact surface integrals per triangle: the second moment of a triangle
    // about the mean is (A/12) * (sum_i d_i d_i^T + 9 g g^T) with g the
    // centroid offset. Integrating the surface keeps the covariance
    // independent of how quads were triangulated.
    let mut mean = V3::zeros();
    let mut total_w = 0.0;
    for f in 0..mesh.face_count() {
        let area = mesh.face_area(f);
        let [a, b, c] = mesh.triangle_points(f);
        mean += (a.coords + b.coords + c.coords) / 3.0 * area;
        total_w += area;
    }
    if total_w <= tol::MIN_FACE_AREA {
        return Err(GeomError::EmptyMesh);
    }
    mean /= total_w;

    let mut cov = Matrix3::zeros();
    for f in 0..mesh.face_count() {
        let area = mesh.face_area(f);
        let [a, b, c] = mesh.triangle_points(f);
        let g = (a.coords + b.coords + c.coords) / 3.0 - mean;
        let mut m = g * g.transpose() * 9.0;
        for p in [a, b, c] {
            let d = p.coords - mean;
            m += d * d.transpose();
        }
        cov += m * (area / 12.0);
    }
    cov /= total_w;

    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let evals = [
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    ];
    let scale = evals[0].max(1e-30);
    let separated = (evals[0] - evals[1]) / scale > 1e-6 && (evals[1] - evals[2]) / scale > 1e-6;

    let axes = if separated {
        let a0: V3 = eig.eigenvectors.column(order[0]).into();
        let a1: V3 = eig.eigenvectors.column(order[1]).into();
        orthonormal_frame(a0, a1)
    } else {
        dominant_normal_frame(mesh, mean)
    };

    // Extent fit.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in mesh.vertices() {
        for k in 0..3 {
            let s = axes[k].dot(&v.coords);
            lo[k] = lo[k].min(s);
            hi[k] = hi[k].max(s);
        }
    }
    let mut center = V3::zeros();
    let mut half = [0.0; 3];
    for k in 0..3 {
        center += axes[k] * (0.5 * (lo[k] + hi[k]));
        half[k] = 0.5 * (hi[k] - lo[k]);
    }

    Ok(Obb { center: P3::from(center), axes, half_extents: half })
}

/// Canonical sign: the largest-magnitude component of each axis is positive.
fn canonical_sign(v: V3) -> V3 {
    let mut k = 0;
    for i in 1..3 {
        if v[i].abs() > v[k].abs() {
            k = i;
        }
    }
    if v[k] < 0.0 {
        -v
    } else {
        v
    }
}

fn orthonormal_frame(a0: V3, a1: V3) -> [V3; 3] {
    let a0 = canonical_sign(a0.normalize());
    let mut a1 = a1 - a0 * a0.dot(&a1);
    if a1.norm() < 1e-12 {
        a1 = any_perpendicular(a0);
    }
    let a1 = canonical_sign(a1.normalize());
    let a2 = a0.cross(&a1);
    [a0, a1, a2]
}

fn any_perpendicular(v: V3) -> V3 {
    let alt = if v.x.abs() < 0.9 { V3::x() } else { V3::y() };
    v.cross(&alt).normalize()
}

/// Frame from clustered face normals, weighted by area. Exact for boxes under
/// any rotation; planar meshes get their in-plane principal direction as the
/// second axis.
fn dominant_normal_frame(mesh: &TriMesh, mean: V3) -> [V3; 3] {
    let mut clusters: Vec<(V3, f64)> = Vec::new();
    for f in 0..mesh.face_count() {
        let mut n = mesh.face_normal(f);
        let area = mesh.face_area(f);
        n = canonical_sign(n);
        match clusters.iter_mut().find(|(rep, _)| rep.dot(&n).abs() > 1.0 - 1e-9) {
            Some((_, w)) => *w += area,
            None => clusters.push((n, area)),
        }
    }
    let a0 = clusters
        .iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(n, _)| *n)
        .unwrap_or_else(V3::z);

    let orth: Option<V3> = clusters
        .iter()
        .filter(|(n, _)| n.dot(&a0).abs() < 1e-6)
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(n, _)| *n);

    let a1 = match orth {
        Some(n) => n,
        None => {
            // 2D PCA in the plane perpendicular to a0.
            let e1 = any_perpendicular(a0);
            let e2 = a0.cross(&e1);
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            for f in 0..mesh.face_count() {
                let area = mesh.face_area(f);
                let [a, b, c] = mesh.triangle_points(f);
                let proj = |p: P3| {
                    let d = p.coords - mean;
                    (e1.dot(&d), e2.dot(&d))
                };
                let pts = [proj(a), proj(b), proj(c)];
                let gx = (pts[0].0 + pts[1].0 + pts[2].0) / 3.0;
                let gy = (pts[0].1 + pts[1].1 + pts[2].1) / 3.0;
                let w = area / 12.0;
                sxx += w * (pts.iter().map(|p| p.0 * p.0).sum::<f64>() + 9.0 * gx * gx);
                sxy += w * (pts.iter().map(|p| p.0 * p.1).sum::<f64>() + 9.0 * gx * gy);
                syy += w * (pts.iter().map(|p| p.1 * p.1).sum::<f64>() + 9.0 * gy * gy);
            }
            let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
            e1 * theta.cos() + e2 * theta.sin()
        }
    };
    orthonormal_frame(a0, a1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Category, FaceTag};
    use nalgebra::Rotation3;

    fn unit_cube() -> TriMesh {
        TriMesh::box_from_aabb(
            P3::origin(),
            P3::new(1.0, 1.0, 1.0),
            FaceTag::structural("r", Category::Wall),
        )
    }

    fn sorted(mut xs: [f64; 3]) -> [f64; 3] {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs
    }

    #[test]
    fn unit_cube_obb() {
        let obb = oriented_bounding_box(&unit_cube()).unwrap();
        assert!(obb.is_orthonormal());
        assert!((obb.center - P3::new(0.5, 0.5, 0.5)).norm() < 1e-9);
        for h in obb.half_extents {
            assert!((h - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn rotated_cube_keeps_extents() {
        let rot = Rotation3::from_axis_angle(&V3::z_axis(), 30f64.to_radians());
        let mut m = unit_cube();
        m.transform(&rot, V3::zeros());
        let obb = oriented_bounding_box(&m).unwrap();
        assert!(obb.is_orthonormal());
        for h in obb.half_extents {
            assert!((h - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn flat_triangle_obb() {
        let m = TriMesh::new(
            vec![P3::origin(), P3::new(2.0, 0.0, 0.0), P3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
            vec![FaceTag::structural("r", Category::Floor)],
        )
        .unwrap();
        let obb = oriented_bounding_box(&m).unwrap();
        assert!(obb.is_orthonormal());
        let h = sorted(obb.half_extents);
        assert!(h[0] < 1e-9);
    }

    #[test]
    fn rotation_equivariance_on_separated_box() {
        let m = TriMesh::box_from_aabb(
            P3::new(-1.5, -0.8, -0.3),
            P3::new(1.5, 0.8, 0.3),
            FaceTag::structural("r", Category::Wall),
        );
        let base = oriented_bounding_box(&m).unwrap();
        let rot = Rotation3::from_euler_angles(0.3, -0.7, 1.1);
        let mut rotated = m.clone();
        rotated.transform(&rot, V3::new(2.0, -1.0, 0.5));
        let got = oriented_bounding_box(&rotated).unwrap();
        assert!(got.is_orthonormal());
        let a = sorted(base.half_extents);
        let b = sorted(got.half_extents);
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-6, "{a:?} vs {b:?}");
        }
        let expect_center = rot * base.center + V3::new(2.0, -1.0, 0.5);
        assert!((got.center - expect_center).norm() < 1e-6);
    }

    #[test]
    fn empty_mesh_rejected() {
        assert!(matches!(
            oriented_bounding_box(&TriMesh::empty()),
            Err(GeomError::EmptyMesh)
        ));
    }
}
