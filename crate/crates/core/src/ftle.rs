//! Finite-time Lyapunov exponents from a lattice of flow-map ends.

use thiserror::Error;

use crate::geom::Point;

#[derive(Debug, Error)]
pub enum FtleError {
    #[error("integration time must be nonzero")]
    ZeroTime,
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FtleField {
    pub dims: [usize; 3],
    pub spacing: Point,
    pub values: Vec<f64>,
    pub t: f64,
    /// Nodes whose Cauchy–Green tensor had no positive eigenvalue (set to 0).
    pub degenerate: usize,
}

impl FtleField {
    pub fn value(&self, k: [usize; 3]) -> f64 {
        self.values[k[0] + self.dims[0] * (k[1] + self.dims[1] * k[2])]
    }
}

/// Largest eigenvalue of a symmetric 2x2 or 3x3 matrix.
fn lambda_max(c: &[[f64; 3]; 3], d: usize) -> f64 {
    if d == 2 {
        let half = 0.5 * (c[0][0] + c[1][1]);
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        return half + (half * half - det).max(0.0).sqrt();
    }
    // Cyclic Jacobi rotations.
    let mut a = *c;
    for _ in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        let scale = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
        if off <= 1e-24 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let cs = 1.0 / (t * t + 1.0).sqrt();
            let sn = t * cs;
            for k in 0..3 {
                let (akp, akq) = (a[k][p], a[k][q]);
                a[k][p] = cs * akp - sn * akq;
                a[k][q] = sn * akp + cs * akq;
            }
            for k in 0..3 {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = cs * apk - sn * aqk;
                a[q][k] = sn * apk + cs * aqk;
            }
        }
    }
    a[0][0].max(a[1][1]).max(a[2][2])
}

/// FTLE per lattice node: `ln(sqrt(lambda_max(J^T J))) / |T|`, with `J` from
/// central differences (one-sided on the lattice boundary). `ends` is x
/// fastest; axes of size 1 beyond `d` are ignored.
pub fn compute_ftle(ends: &[Point], dims: [usize; 3], d: usize, spacing: Point, t: f64) -> Result<FtleField, FtleError> {
    if t == 0.0 || !t.is_finite() {
        return Err(FtleError::ZeroTime);
    }
    if !(2..=3).contains(&d) || ends.len() != dims.iter().product::<usize>() {
        return Err(FtleError::InvalidLattice(format!("{} ends for dims {dims:?}", ends.len())));
    }
    if (0..d).any(|a| dims[a] < 2 || !(spacing[a] > 0.0)) {
        return Err(FtleError::InvalidLattice("need 2 nodes and positive spacing per axis".into()));
    }
    let stride = [1, dims[0], dims[0] * dims[1]];
    let mut values = vec![0.0; ends.len()];
    let mut degenerate = 0;
    for (idx, out) in values.iter_mut().enumerate() {
        let k = [idx % dims[0], (idx / dims[0]) % dims[1], idx / (dims[0] * dims[1])];
        // j[r][a] = d end_r / d x_a
        let mut j = [[0.0; 3]; 3];
        for a in 0..d {
            let (lo, hi, span) = if k[a] == 0 {
                (idx, idx + stride[a], 1.0)
            } else if k[a] + 1 == dims[a] {
                (idx - stride[a], idx, 1.0)
            } else {
                (idx - stride[a], idx + stride[a], 2.0)
            };
            for r in 0..d {
                j[r][a] = (ends[hi][r] - ends[lo][r]) / (span * spacing[a]);
            }
        }
        let mut c = [[0.0; 3]; 3];
        for p in 0..d {
            for q in 0..d {
                c[p][q] = (0..d).map(|r| j[r][p] * j[r][q]).sum();
            }
        }
        let lambda = lambda_max(&c, d);
        if lambda > 0.0 && lambda.is_finite() {
            *out = lambda.sqrt().ln() / t.abs();
        } else {
            degenerate += 1;
        }
    }
    Ok(FtleField { dims, spacing, values, t, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(n: usize, d: usize, map: impl Fn(Point) -> Point) -> (Vec<Point>, [usize; 3]) {
        let dims = [n, n, if d == 3 { n } else { 1 }];
        let h = 0.1;
        let ends = (0..dims.iter().product::<usize>())
            .map(|i| {
                let k = [i % n, (i / n) % n, i / (n * n)];
                map([k[0] as f64 * h, k[1] as f64 * h, k[2] as f64 * h])
            })
            .collect();
        (ends, dims)
    }

    #[test]
    fn identity_and_translation_are_zero() {
        for d in [2, 3] {
            for shift in [0.0, 3.7] {
                let (ends, dims) = lattice(6, d, |x| [x[0] + shift, x[1] - shift, x[2]]);
                let f = compute_ftle(&ends, dims, d, [0.1; 3], 2.0).unwrap();
                assert!(f.values.iter().all(|v| v.abs() < 1e-9));
            }
        }
    }

    #[test]
    fn diagonal_stretch_gives_ln2() {
        for d in [2, 3] {
            let (ends, dims) = lattice(7, d, |x| [2.0 * x[0], 0.5 * x[1], x[2]]);
            let f = compute_ftle(&ends, dims, d, [0.1; 3], 1.0).unwrap();
            for v in &f.values {
                assert!((v - 2f64.ln()).abs() < 1e-9);
            }
            let back = compute_ftle(&ends, dims, d, [0.1; 3], -1.0).unwrap();
            assert_eq!(back.values, f.values);
        }
    }

    #[test]
    fn rotated_stretch_in_3d() {
        // Rotate diag(3, 1, 0.5) about z: lambda_max of C is 9.
        let (c, s) = (0.6f64, 0.8f64);
        let (ends, dims) = lattice(5, 3, |x| {
            let u = c * x[0] - s * x[1];
            let v = s * x[0] + c * x[1];
            [3.0 * u, v, 0.5 * x[2]]
        });
        let f = compute_ftle(&ends, dims, 3, [0.1; 3], 1.0).unwrap();
        assert!((f.value([2, 2, 2]) - 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn collapsed_map_is_degenerate() {
        let (ends, dims) = lattice(4, 2, |_| [1.0, 1.0, 0.0]);
        let f = compute_ftle(&ends, dims, 2, [0.1; 3], 1.0).unwrap();
        assert_eq!(f.degenerate, 16);
        assert!(f.values.iter().all(|v| *v == 0.0));
        assert!(matches!(compute_ftle(&ends, dims, 2, [0.1; 3], 0.0), Err(FtleError::ZeroTime)));
    }
}
