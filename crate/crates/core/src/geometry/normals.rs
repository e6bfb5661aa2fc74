use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use super::cloud::{PointCloud, Vec3};
use super::knn::NeighborIndex;
use crate::error::{Error, Result};

/// Default neighborhood size for PCA normals.
pub const DEFAULT_NORMAL_K: usize = 30;

/// Normal returned for neighborhoods with no spread at all.
pub const DEGENERATE_NORMAL: Vec3 = Vec3::new(0.0, 0.0, 1.0);

/// Flip `n` so its component of largest magnitude is positive.
///
/// Ties go to the earlier axis.
pub fn canonical_orientation(n: Vec3) -> Vec3 {
    let mut axis = 0;
    for a in 1..3 {
        if n[a].abs() > n[axis].abs() {
            axis = a;
        }
    }
    if n[axis] < 0.0 {
        -n
    } else {
        n
    }
}

/// PCA normal of a neighborhood given as point indices.
///
/// Indices are accumulated in ascending order regardless of how they are
/// passed, so the result does not depend on neighbor ordering.
pub fn pca_normal(points: &[Vec3], neighborhood: &[usize]) -> Vec3 {
    let mut ids = neighborhood.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let count = ids.len() as f64;
    let mut mean = Vec3::zeros();
    for &i in &ids {
        mean += points[i];
    }
    mean /= count;
    let mut cov = Matrix3::<f64>::zeros();
    for &i in &ids {
        let d = points[i] - mean;
        cov += d * d.transpose();
    }
    cov /= count;
    if cov.iter().all(|&c| c == 0.0) {
        return DEGENERATE_NORMAL;
    }
    let eig = SymmetricEigen::new(cov);
    let mut smallest = 0;
    for a in 1..3 {
        if eig.eigenvalues[a] < eig.eigenvalues[smallest] {
            smallest = a;
        }
    }
    let v: Vec3 = eig.eigenvectors.column(smallest).into_owned();
    let len = v.norm();
    if !len.is_finite() || len == 0.0 {
        return DEGENERATE_NORMAL;
    }
    canonical_orientation(v / len)
}

/// Estimate per-point normals from the covariance of each point and its `k`
/// nearest neighbors. Positions and colors are returned unchanged.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    let n = cloud.len();
    if k < 3 {
        return Err(Error::Invalid(format!("normal estimation needs k >= 3, got {k}")));
    }
    if k >= n {
        return Err(Error::Invalid(format!(
            "normal estimation needs k < N, got k={k} with N={n}"
        )));
    }
    let index = NeighborIndex::build(&cloud.positions);
    let normals: Vec<Vec3> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut hood = index.knn_point(&cloud.positions[i], k, Some(i));
            hood.push(i);
            pca_normal(&cloud.positions, &hood)
        })
        .collect();
    let mut out = cloud.clone();
    out.normals = Some(normals);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud_from(points: Vec<Vec3>) -> PointCloud {
        let colors = vec![Vec3::repeat(0.5); points.len()];
        PointCloud::new(points, colors).unwrap()
    }

    #[test]
    fn plane_z0_normals_point_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = (0..100)
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0))
            .collect();
        let out = estimate_normals(&cloud_from(pts), 10).unwrap();
        for n in out.normals.unwrap() {
            assert!((n - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-9, "{n:?}");
        }
    }

    #[test]
    fn plane_x5_normals_point_along_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = (0..100)
            .map(|_| Vec3::new(5.0, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let out = estimate_normals(&cloud_from(pts), 10).unwrap();
        for n in out.normals.unwrap() {
            assert!((n - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-9, "{n:?}");
        }
    }

    #[test]
    fn sphere_normals_are_radial() {
        // Fibonacci sphere: near-uniform coverage, analytic normal = position.
        let n = 200;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let pts: Vec<Vec3> = (0..n)
            .map(|i| {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - y * y).sqrt();
                let t = golden * i as f64;
                Vec3::new(r * t.cos(), y, r * t.sin())
            })
            .collect();
        let out = estimate_normals(&cloud_from(pts.clone()), 12).unwrap();
        let limit = 10f64.to_radians().cos();
        for (p, nrm) in pts.iter().zip(out.normals.unwrap()) {
            assert!(nrm.dot(p).abs() >= limit, "normal {nrm:?} at {p:?}");
        }
    }

    #[test]
    fn rejects_bad_k() {
        let pts = (0..5).map(|i| Vec3::new(i as f64, (i * i) as f64, 0.0)).collect();
        let cloud = cloud_from(pts);
        assert!(estimate_normals(&cloud, 2).is_err());
        assert!(estimate_normals(&cloud, 5).is_err());
        assert!(estimate_normals(&cloud, 4).is_ok());
    }

    #[test]
    fn coincident_neighborhood_defaults_up() {
        let pts = vec![Vec3::new(0.3, 0.2, 0.1); 8];
        assert_eq!(pca_normal(&pts, &[0, 1, 2, 3]), DEGENERATE_NORMAL);
    }

    #[test]
    fn neighbor_order_does_not_change_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec3> = (0..20)
            .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen::<f64>() * 0.1))
            .collect();
        let a = pca_normal(&pts, &[3, 1, 4, 15, 9, 2, 6]);
        let b = pca_normal(&pts, &[15, 9, 6, 4, 3, 2, 1]);
        assert_eq!(a.x.to_bits(), b.x.to_bits());
        assert_eq!(a.y.to_bits(), b.y.to_bits());
        assert_eq!(a.z.to_bits(), b.z.to_bits());
    }

    #[test]
    fn canonical_orientation_tie_goes_to_first_axis() {
        let n = canonical_orientation(Vec3::new(-0.5, 0.5, 0.0));
        assert_eq!(n, Vec3::new(0.5, -0.5, 0.0));
    }
}
