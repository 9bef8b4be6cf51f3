//! Dense linear-algebra helpers: small determinants and the real matrix
//! exponential.

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::{Deserialize, Serialize};

/// Small dense square matrix, row-major. Used for the 4×4 and 5×5
/// determinant systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl SmallMatrix {
    pub fn zeros(dim: usize) -> Self {
        SmallMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.dim + col] = value;
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.dim).map(|r| self.get(r, col)).collect()
    }

    pub fn scale_column(&mut self, col: usize, factor: f64) {
        for r in 0..self.dim {
            self.data[r * self.dim + col] *= factor;
        }
    }

    /// Determinant by LU with partial pivoting.
    pub fn det(&self) -> f64 {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            if pivot == 0.0 {
                return 0.0;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                det = -det;
            }
            let akk = a[k * n + k];
            det *= akk;
            for i in k + 1..n {
                let factor = a[i * n + k] / akk;
                if factor != 0.0 {
                    for j in k + 1..n {
                        a[i * n + j] -= factor * a[k * n + j];
                    }
                }
            }
        }
        det
    }

    /// Singular values, descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let m = Mat::from_fn(self.dim, self.dim, |i, j| self.get(i, j));
        let mut s = m
            .singular_values()
            .expect("SVD of a small finite matrix");
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

fn lin_comb(terms: &[(f64, &Mat<f64>)], n: usize) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let mut s = 0.0;
            for (c, m) in terms {
                s += c * m[(i, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// exp(A) by scaling and squaring with the [13/13] Padé approximant.
pub fn expm(a: &Mat<f64>) -> Mat<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let norm = a.norm_l1();
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scale = 0.5f64.powi(s);
    let a = lin_comb(&[(scale, a)], n);
    let ident = Mat::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = PADE13;
    let u_inner = lin_comb(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)], n);
    let u_tail = lin_comb(
        &[(b[7], &a6), (b[5], &a4), (b[3], &a2), (b[1], &ident)],
        n,
    );
    let u_mid = &a6 * &u_inner;
    let u = &a * &lin_comb(&[(1.0, &u_mid), (1.0, &u_tail)], n);
    let v_inner = lin_comb(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)], n);
    let v_mid = &a6 * &v_inner;
    let v = lin_comb(
        &[
            (1.0, &v_mid),
            (b[6], &a6),
            (b[4], &a4),
            (b[2], &a2),
            (b[0], &ident),
        ],
        n,
    );
    let p = lin_comb(&[(1.0, &v), (1.0, &u)], n);
    let q = lin_comb(&[(1.0, &v), (-1.0, &u)], n);
    let mut r = q.partial_piv_lu().solve(&p);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_of_permutation_and_triangular() {
        let mut m = SmallMatrix::zeros(4);
        m.set(0, 1, 1.0);
        m.set(1, 0, 1.0);
        m.set(2, 2, 2.0);
        m.set(3, 3, 3.0);
        assert_eq!(m.det(), -6.0);

        let mut t = SmallMatrix::zeros(3);
        for i in 0..3 {
            for j in i..3 {
                t.set(i, j, (i + j + 1) as f64);
            }
        }
        assert_eq!(t.det(), 1.0 * 3.0 * 5.0);
    }

    #[test]
    fn det_matches_cofactor_expansion() {
        let m = SmallMatrix {
            dim: 3,
            data: vec![2.0, -1.0, 0.5, 1.5, 3.0, -2.0, 0.25, 4.0, 1.0],
        };
        let d = 2.0 * (3.0 * 1.0 - (-2.0) * 4.0) - (-1.0) * (1.5 * 1.0 - (-2.0) * 0.25)
            + 0.5 * (1.5 * 4.0 - 3.0 * 0.25);
        assert!((m.det() - d).abs() < 1e-13);
    }

    #[test]
    fn singular_values_of_rank_deficient() {
        let m = SmallMatrix {
            dim: 3,
            data: vec![1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 1.0, 0.0, 1.0],
        };
        let s = m.singular_values();
        assert!(s[2] < 1e-12 * s[0]);
        assert!(s[0] >= s[1]);
    }

    #[test]
    fn expm_of_rotation_generator() {
        let theta = 7.3;
        let g = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => -theta,
            (1, 0) => theta,
            _ => 0.0,
        });
        let r = expm(&g);
        assert!((r[(0, 0)] - theta.cos()).abs() < 1e-13);
        assert!((r[(1, 0)] - theta.sin()).abs() < 1e-13);
        assert!((r[(0, 1)] + theta.sin()).abs() < 1e-13);
    }

    #[test]
    fn expm_of_diagonal_and_nilpotent() {
        let d = Mat::from_fn(3, 3, |i, j| if i == j { i as f64 - 1.0 } else { 0.0 });
        let e = expm(&d);
        for i in 0..3 {
            assert!((e[(i, i)] - (i as f64 - 1.0).exp()).abs() < 1e-14);
        }
        let n = Mat::from_fn(3, 3, |i, j| if j == i + 1 { 2.0 } else { 0.0 });
        let e = expm(&n);
        assert!((e[(0, 1)] - 2.0).abs() < 1e-14);
        assert!((e[(0, 2)] - 2.0).abs() < 1e-14);
    }
}
