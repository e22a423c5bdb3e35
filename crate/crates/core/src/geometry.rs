//! Sub-voxel overlap of balls with voxels and voxel faces.

const VOXEL_SUB: usize = 8;
const FACE_SUB: usize = 16;

/// Distance from `c` to the nearest and farthest points of the box `[lo, lo + size]`.
fn box_distances(c: &[f64], lo: &[f64], size: f64) -> (f64, f64) {
    let mut near = 0.0;
    let mut far = 0.0;
    for d in 0..c.len() {
        let a = lo[d] - c[d];
        let b = lo[d] + size - c[d];
        let n = if a > 0.0 {
            a
        } else if b < 0.0 {
            -b
        } else {
            0.0
        };
        let f = a.abs().max(b.abs());
        near += n * n;
        far += f * f;
    }
    (near.sqrt(), far.sqrt())
}

/// Fraction of the voxel `[lo, lo + h]^3` inside the ball `B(c, rho)`.
pub fn ball_voxel_fraction(c: [f64; 3], rho: f64, lo: [f64; 3], h: f64) -> f64 {
    let (near, far) = box_distances(&c, &lo, h);
    if near >= rho {
        return 0.0;
    }
    if far <= rho {
        return 1.0;
    }
    let s = h / VOXEL_SUB as f64;
    let r2 = rho * rho;
    let mut inside = 0usize;
    for a in 0..VOXEL_SUB {
        let x = lo[0] + (a as f64 + 0.5) * s - c[0];
        for b in 0..VOXEL_SUB {
            let y = lo[1] + (b as f64 + 0.5) * s - c[1];
            for e in 0..VOXEL_SUB {
                let z = lo[2] + (e as f64 + 0.5) * s - c[2];
                inside += (x * x + y * y + z * z < r2) as usize;
            }
        }
    }
    inside as f64 / (VOXEL_SUB * VOXEL_SUB * VOXEL_SUB) as f64
}

/// Fraction of the square `[lo, lo + h]^2` inside the disk `B(c, r)`.
pub fn disk_square_fraction(c: [f64; 2], r: f64, lo: [f64; 2], h: f64) -> f64 {
    let (near, far) = box_distances(&c, &lo, h);
    if near >= r {
        return 0.0;
    }
    if far <= r {
        return 1.0;
    }
    let s = h / FACE_SUB as f64;
    let r2 = r * r;
    let mut inside = 0usize;
    for a in 0..FACE_SUB {
        let x = lo[0] + (a as f64 + 0.5) * s - c[0];
        for b in 0..FACE_SUB {
            let y = lo[1] + (b as f64 + 0.5) * s - c[1];
            inside += (x * x + y * y < r2) as usize;
        }
    }
    inside as f64 / (FACE_SUB * FACE_SUB) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn voxelized_ball_volume() {
        let h = 0.05;
        let c = [0.51, 0.49, 0.503];
        let rho = 0.3;
        let mut v = 0.0;
        for i in 0..20 {
            for j in 0..20 {
                for k in 0..20 {
                    v += ball_voxel_fraction(c, rho, [i as f64 * h, j as f64 * h, k as f64 * h], h) * h.powi(3);
                }
            }
        }
        let exact = 4.0 / 3.0 * PI * rho.powi(3);
        assert!((v - exact).abs() < 2e-3 * exact, "{v} {exact}");
    }

    #[test]
    fn disk_area() {
        let h = 0.1;
        let mut a = 0.0;
        for i in 0..10 {
            for j in 0..10 {
                a += disk_square_fraction([0.52, 0.47], 0.33, [i as f64 * h, j as f64 * h], h) * h * h;
            }
        }
        assert!((a - PI * 0.33 * 0.33).abs() < 2e-3);
    }
}
