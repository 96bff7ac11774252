//! Two-component PCA of word vectors via cyclic Jacobi rotations.

use serde::{Deserialize, Serialize};

use crate::matrix::{dot, Matrix};

const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix. Returns eigenvalues in
/// descending order and the matching unit eigenvectors, each with its
/// largest-magnitude component made positive.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "matrix must be square");
    let mut m = a.clone();
    let mut v = Matrix::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 });

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| m.row(p)[q].powi(2))
            .sum::<f64>()
            .sqrt();
        if off < OFF_DIAGONAL_TOLERANCE {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.row(p)[q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (m.row(p)[p], m.row(q)[q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }

    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|k| {
            let mut vec: Vec<f64> = (0..n).map(|r| v.row(r)[k]).collect();
            fix_sign(&mut vec);
            (m.row(k)[k], vec)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs.into_iter().unzip()
}

fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.rows();
    // A' = Jᵀ A J with J the (p, q) Givens rotation
    for k in 0..n {
        let (akp, akq) = (m.row(k)[p], m.row(k)[q]);
        m.row_mut(k)[p] = c * akp - s * akq;
        m.row_mut(k)[q] = s * akp + c * akq;
    }
    for k in 0..n {
        let (apk, aqk) = (m.row(p)[k], m.row(q)[k]);
        m.row_mut(p)[k] = c * apk - s * aqk;
        m.row_mut(q)[k] = s * apk + c * aqk;
    }
    for k in 0..n {
        let (vkp, vkq) = (v.row(k)[p], v.row(k)[q]);
        v.row_mut(k)[p] = c * vkp - s * vkq;
        v.row_mut(k)[q] = s * vkp + c * vkq;
    }
}

fn fix_sign(vec: &mut [f64]) {
    let mut best = 0;
    for (i, x) in vec.iter().enumerate() {
        if x.abs() > vec[best].abs() {
            best = i;
        }
    }
    if vec[best] < 0.0 {
        vec.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Which vectors define the PCA basis. Both families are always projected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    #[default]
    Both,
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub input: Vec<[f64; 2]>,
    pub output: Vec<[f64; 2]>,
    /// Variance along the first and second components.
    pub explained_variance: [f64; 2],
    pub components: Vec<Vec<f64>>,
}

/// Centers the basis vectors, takes the top two eigenvectors of their
/// `N×N` covariance and projects both families onto them.
pub fn project(input: &Matrix, output: &Matrix, basis: Basis) -> PcaProjection {
    let n = input.cols();
    let rows: Vec<&[f64]> = match basis {
        Basis::Both => input.iter_rows().chain(output.iter_rows()).collect(),
        Basis::Input => input.iter_rows().collect(),
        Basis::Output => output.iter_rows().collect(),
    };
    let count = rows.len().max(1) as f64;
    // shift by the first row so identical rows cancel exactly
    let origin: Vec<f64> = rows.first().map_or(vec![0.0; n], |r| r.to_vec());
    let mut shift = vec![0.0; n];
    for r in &rows {
        for ((m, x), o) in shift.iter_mut().zip(*r).zip(&origin) {
            *m += x - o;
        }
    }
    let mean: Vec<f64> = origin.iter().zip(&shift).map(|(o, s)| o + s / count).collect();

    let centered = |r: &[f64]| -> Vec<f64> { r.iter().zip(&mean).map(|(x, m)| x - m).collect() };
    let mut cov = Matrix::zeros(n, n);
    for r in &rows {
        let c = centered(r);
        for i in 0..n {
            for j in 0..n {
                cov.row_mut(i)[j] += c[i] * c[j] / count;
            }
        }
    }

    let (values, vectors) = symmetric_eigen(&cov);
    let mut components: Vec<Vec<f64>> = vectors.into_iter().take(2).collect();
    let mut variance = [0.0; 2];
    for (k, v) in values.iter().take(2).enumerate() {
        variance[k] = v.max(0.0);
    }
    while components.len() < 2 {
        components.push(vec![0.0; n]);
    }
    let proj = |m: &Matrix| -> Vec<[f64; 2]> {
        m.iter_rows()
            .map(|r| {
                let c = centered(r);
                [dot(&c, &components[0]), dot(&c, &components[1])]
            })
            .collect()
    };
    PcaProjection { input: proj(input), output: proj(output), explained_variance: variance, components }
}
