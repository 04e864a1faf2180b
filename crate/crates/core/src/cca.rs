//! Canonical correlation between pairs of 2-D landmark variables and the
//! landmark affinity matrix built from it.
//!
//! Everything is 2×2, so the solve is closed form: Cholesky-whiten both
//! auto-covariance blocks, then take the singular values of the whitened
//! cross-covariance analytically.

use rayon::prelude::*;

use crate::dataset::{Dataset, Point};
use crate::error::{ColumnSide, Error, Result};
use crate::matrix::{AffinityMatrix, SquareMatrix};
use crate::shape::normalize_dataset;

/// Default relative ridge. Each auto-covariance block receives
/// `ridge * trace(block) / 2` on its diagonal.
pub const DEFAULT_RIDGE: f64 = 1e-9;

/// Blocks whose determinant falls below this fraction of
/// `(trace / 2)^2` are treated as singular.
const SINGULAR_RATIO: f64 = 1e-13;

/// A column whose spread is below this fraction of its magnitude is
/// rounding noise around a constant and is treated as exactly constant.
const CONSTANT_SPREAD: f64 = 1e-10;

pub type Mat2 = [[f64; 2]; 2];

/// The canonical correlations of two 2-D variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcaResult {
    /// `(rho1, rho2)` with `1 >= rho1 >= rho2 >= 0`.
    pub coefficients: (f64, f64),
    /// `(|rho1| + |rho2|) / 2`.
    pub mean_abs: f64,
    /// Leading canonical directions `(a, b)`, scaled to unit variance under
    /// the ridged covariances.
    pub directions: (Point, Point),
}

/// Sample cross-covariance `E[(u - Eu)(v - Ev)^T]` with `1/(N-1)`
/// normalization, accumulated in one pass.
pub fn covariance(u: &[Point], v: &[Point]) -> Result<Mat2> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "columns have {} and {} samples",
            u.len(),
            v.len()
        )));
    }
    if u.len() < 2 {
        return Err(Error::TooFewRecords {
            required: 2,
            found: u.len(),
        });
    }
    let mut mean_u = [0.0; 2];
    let mut mean_v = [0.0; 2];
    let mut comoment = [[0.0; 2]; 2];
    for (k, (pu, pv)) in u.iter().zip(v).enumerate() {
        let count = (k + 1) as f64;
        let du = [pu[0] - mean_u[0], pu[1] - mean_u[1]];
        let dv = [pv[0] - mean_v[0], pv[1] - mean_v[1]];
        let weight = k as f64 / count;
        for a in 0..2 {
            for b in 0..2 {
                // `du[a] * dv[b]` is formed first so covariance(u, u) comes
                // out exactly symmetric.
                comoment[a][b] += weight * (du[a] * dv[b]);
            }
        }
        for a in 0..2 {
            mean_u[a] += du[a] / count;
            mean_v[a] += dv[a] / count;
        }
    }
    let denom = (u.len() - 1) as f64;
    Ok(comoment.map(|row| row.map(|c| c / denom)))
}

/// Auto-covariance of a column, zeroed when the column is numerically
/// constant. The flag reports that case.
fn auto_covariance(c: &[Point]) -> Result<(Mat2, bool)> {
    let cov = covariance(c, c)?;
    let magnitude = c.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>() / c.len() as f64;
    if trace(&cov) <= CONSTANT_SPREAD * CONSTANT_SPREAD * magnitude {
        Ok(([[0.0; 2]; 2], true))
    } else {
        Ok((cov, false))
    }
}

fn cross_covariance(u: &[Point], v: &[Point], constant: bool) -> Result<Mat2> {
    if constant {
        Ok([[0.0; 2]; 2])
    } else {
        covariance(u, v)
    }
}

fn trace(m: &Mat2) -> f64 {
    m[0][0] + m[1][1]
}

/// Lower Cholesky factor of a symmetric 2×2 block, or `None` when the block
/// is numerically singular.
fn cholesky(m: &Mat2) -> Option<Mat2> {
    let half_trace = trace(m) / 2.0;
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(half_trace > 0.0) || det <= SINGULAR_RATIO * half_trace * half_trace {
        return None;
    }
    let l11 = m[0][0].sqrt();
    let l21 = m[1][0] / l11;
    let l22_sq = m[1][1] - l21 * l21;
    if !(l22_sq > 0.0) {
        return None;
    }
    Some([[l11, 0.0], [l21, l22_sq.sqrt()]])
}

/// Inverse of a lower-triangular 2×2 matrix.
fn lower_inverse(l: &Mat2) -> Mat2 {
    [[1.0 / l[0][0], 0.0], [-l[1][0] / (l[0][0] * l[1][1]), 1.0 / l[1][1]]]
}

fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

fn mul_vec(a: &Mat2, x: Point) -> Point {
    [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]
}

/// Singular values of a 2×2 matrix, largest first.
fn singular_values(t: &Mat2) -> (f64, f64) {
    let [[a, b], [c, d]] = *t;
    let sum = (a + d).hypot(c - b);
    let diff = (a - d).hypot(b + c);
    ((sum + diff) / 2.0, (sum - diff).abs() / 2.0)
}

/// Unit eigenvector of the largest eigenvalue of a symmetric 2×2 matrix.
fn leading_eigenvector(s: &Mat2) -> Point {
    let angle = 0.5 * (2.0 * s[0][1]).atan2(s[0][0] - s[1][1]);
    [angle.cos(), angle.sin()]
}

fn ridged(block: &Mat2, ridge: f64, fallback_scale: f64) -> Mat2 {
    let own = trace(block) / 2.0;
    let scale = if own > 0.0 { own } else { fallback_scale };
    let shift = ridge * scale;
    [[block[0][0] + shift, block[0][1]], [block[1][0], block[1][1] + shift]]
}

/// Canonical correlations from precomputed covariance blocks.
///
/// A block with zero variance borrows the other block's trace for its ridge
/// so that a constant landmark correlates at 0 rather than failing; with
/// `ridge == 0` it is reported as degenerate.
pub fn cca_from_blocks(suu: &Mat2, svv: &Mat2, suv: &Mat2, ridge: f64) -> std::result::Result<CcaResult, ColumnSide> {
    let (tu, tv) = (trace(suu) / 2.0, trace(svv) / 2.0);
    let ru = ridged(suu, ridge, tv);
    let rv = ridged(svv, ridge, tu);
    let (lu, lv) = match (cholesky(&ru), cholesky(&rv)) {
        (Some(lu), Some(lv)) => (lu, lv),
        (None, Some(_)) => return Err(ColumnSide::U),
        (Some(_), None) => return Err(ColumnSide::V),
        (None, None) => return Err(ColumnSide::Both),
    };
    let lu_inv = lower_inverse(&lu);
    let lv_inv = lower_inverse(&lv);
    let whitened = mul(&mul(&lu_inv, suv), &transpose(&lv_inv));

    let (s1, s2) = singular_values(&whitened);
    let rho1 = s1.clamp(0.0, 1.0);
    let rho2 = s2.clamp(0.0, 1.0);

    let left = leading_eigenvector(&mul(&whitened, &transpose(&whitened)));
    let right = if s1 > 0.0 {
        let r = mul_vec(&transpose(&whitened), left);
        [r[0] / s1, r[1] / s1]
    } else {
        [1.0, 0.0]
    };
    let a = mul_vec(&transpose(&lu_inv), left);
    let b = mul_vec(&transpose(&lv_inv), right);

    Ok(CcaResult {
        coefficients: (rho1, rho2),
        // Singular values are nonnegative, so `abs` is a no-op kept for
        // parity with the signed-correlation definition.
        mean_abs: (rho1.abs() + rho2.abs()) / 2.0,
        directions: (a, b),
    })
}

fn check_column(col: &[Point], side: ColumnSide) -> Result<()> {
    if col.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::InvalidArgument(format!("{side} column has non-finite samples")));
    }
    Ok(())
}

/// Canonical correlation analysis of two landmark columns.
pub fn cca_pair(u: &[Point], v: &[Point], ridge: f64) -> Result<CcaResult> {
    check_ridge(ridge)?;
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "columns have {} and {} samples",
            u.len(),
            v.len()
        )));
    }
    if u.len() < 3 {
        return Err(Error::TooFewRecords {
            required: 3,
            found: u.len(),
        });
    }
    check_column(u, ColumnSide::U)?;
    check_column(v, ColumnSide::V)?;
    let (suu, u_constant) = auto_covariance(u)?;
    let (svv, v_constant) = auto_covariance(v)?;
    let suv = cross_covariance(u, v, u_constant || v_constant)?;
    cca_from_blocks(&suu, &svv, &suv, ridge).map_err(Error::DegenerateColumn)
}

fn check_ridge(ridge: f64) -> Result<()> {
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ridge must be finite and >= 0, got {ridge}"
        )));
    }
    Ok(())
}

/// Affinity matrix of an already-normalized dataset: entry `(i, j)` is the
/// mean absolute canonical correlation of landmarks `i` and `j`.
///
/// Each unordered pair is computed once and mirrored; the diagonal is 1.
pub fn affinity_matrix(d: &Dataset, ridge: f64) -> Result<AffinityMatrix> {
    check_ridge(ridge)?;
    if d.len() < 3 {
        return Err(Error::TooFewRecords {
            required: 3,
            found: d.len(),
        });
    }
    let m = d.m_size();
    let columns: Vec<Vec<Point>> = (0..m).map(|j| d.column(j)).collect();
    let autos = columns
        .par_iter()
        .map(|c| auto_covariance(c))
        .collect::<Result<Vec<_>>>()?;

    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let results: Vec<std::result::Result<f64, Error>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let cross = cross_covariance(&columns[i], &columns[j], autos[i].1 || autos[j].1)?;
            cca_from_blocks(&autos[i].0, &autos[j].0, &cross, ridge)
                .map(|r| r.mean_abs)
                .map_err(|side| Error::DegenerateLandmark {
                    landmark: if side == ColumnSide::V { j } else { i },
                })
        })
        .collect();

    let mut out = SquareMatrix::zeros(m);
    for i in 0..m {
        out.set(i, i, 1.0);
    }
    for (&(i, j), r) in pairs.iter().zip(results) {
        let v = r?;
        out.set(i, j, v);
        out.set(j, i, v);
    }
    Ok(AffinityMatrix::from_matrix(out))
}

/// Normalizes a raw dataset and computes its affinity matrix.
pub fn dataset_affinity(raw: &Dataset, ridge: f64) -> Result<AffinityMatrix> {
    affinity_matrix(normalize_dataset(raw)?.dataset(), ridge)
}
