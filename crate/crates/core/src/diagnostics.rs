//! Prediction-vs-ground-truth diagnostics: affinity matrix error, affinity
//! spread across checkpoints, component-block summaries and NME.

use std::collections::HashMap;

use serde::Serialize;

use crate::cca::affinity_matrix;
use crate::dataset::{ComponentBlock, Dataset, FormatDescriptor};
use crate::error::{Error, Result};
use crate::matrix::{AffinityStdMatrix, AmeMatrix, SquareMatrix};
use crate::shape::{centroid, normalize_dataset};

/// Reorders `pred` to follow `gt`'s record order, matching by image id.
pub fn align_by_id(pred: &Dataset, gt: &Dataset) -> Result<Dataset> {
    if pred.m_size() != gt.m_size() {
        return Err(Error::DimensionMismatch(format!(
            "prediction has {} landmarks, ground truth {}",
            pred.m_size(),
            gt.m_size()
        )));
    }
    if pred.len() != gt.len() {
        return Err(Error::IdMismatch(format!(
            "prediction has {} records, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    let mut by_id: HashMap<&str, usize> = HashMap::with_capacity(pred.len());
    for (k, r) in pred.records().iter().enumerate() {
        if by_id.insert(r.image_id.as_str(), k).is_some() {
            return Err(Error::IdMismatch(format!("duplicate prediction id '{}'", r.image_id)));
        }
    }
    let order = gt
        .records()
        .iter()
        .map(|r| {
            by_id
                .get(r.image_id.as_str())
                .copied()
                .ok_or_else(|| Error::IdMismatch(format!("no prediction for '{}'", r.image_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    pred.subset(&order)
}

/// Affinity matrix error `A_pred - A_gt`.
///
/// Each side is normalized on its own, so the error depends only on the
/// shape statistics of the two datasets: swapping them negates the result,
/// and whole-shape translations or rescalings of a prediction leave it
/// unchanged.
pub fn ame(pred: &Dataset, gt: &Dataset, ridge: f64) -> Result<AmeMatrix> {
    let pred = align_by_id(pred, gt)?;
    let a_pred = affinity_matrix(normalize_dataset(&pred)?.dataset(), ridge)?;
    let a_gt = affinity_matrix(normalize_dataset(gt)?.dataset(), ridge)?;
    Ok(ame_from_affinities(&a_pred, &a_gt))
}

/// Elementwise difference of two affinity matrices of equal size.
pub fn ame_from_affinities(a_pred: &SquareMatrix, a_gt: &SquareMatrix) -> AmeMatrix {
    assert_eq!(a_pred.m_size(), a_gt.m_size(), "affinity sizes differ");
    let diff = SquareMatrix::from_fn(a_gt.m_size(), |i, j| {
        if i == j {
            0.0
        } else {
            a_pred.get(i, j) - a_gt.get(i, j)
        }
    });
    AmeMatrix::from_matrix(diff)
}

/// Elementwise population standard deviation of a stack of matrices.
pub fn affinity_std<M: AsRef<SquareMatrix>>(matrices: &[M]) -> Result<AffinityStdMatrix> {
    if matrices.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 matrices, got {}",
            matrices.len()
        )));
    }
    let m = matrices[0].as_ref().m_size();
    if let Some(bad) = matrices.iter().position(|x| x.as_ref().m_size() != m) {
        return Err(Error::DimensionMismatch(format!(
            "matrix {bad} is {0}x{0}, expected {m}x{m}",
            matrices[bad].as_ref().m_size()
        )));
    }
    // Welford over the stack, one accumulator per cell.
    let mut mean = vec![0.0; m * m];
    let mut m2 = vec![0.0; m * m];
    for (k, mat) in matrices.iter().enumerate() {
        let count = (k + 1) as f64;
        for (cell, &x) in mat.as_ref().as_slice().iter().enumerate() {
            let delta = x - mean[cell];
            mean[cell] += delta / count;
            m2[cell] += delta * (x - mean[cell]);
        }
    }
    let n = matrices.len() as f64;
    let std = SquareMatrix::from_fn(m, |i, j| (m2[i * m + j] / n).max(0.0).sqrt());
    Ok(AffinityStdMatrix::from_matrix(std))
}

/// Statistics of one block-pair submatrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockStats {
    pub block_a: String,
    pub block_b: String,
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Mean/min/max of every unordered block pair's submatrix, excluding
/// diagonal cells. Pairs with no off-diagonal cells are omitted.
pub fn block_summary(m: &SquareMatrix, blocks: &[ComponentBlock]) -> Result<Vec<BlockStats>> {
    for b in blocks {
        if b.indices.is_empty() {
            return Err(Error::InvalidArgument(format!("block '{}' is empty", b.name)));
        }
        if let Some(&i) = b.indices.iter().find(|&&i| i >= m.m_size()) {
            return Err(Error::InvalidArgument(format!(
                "block '{}' index {i} out of range for M = {}",
                b.name,
                m.m_size()
            )));
        }
    }
    let mut out = Vec::new();
    for (ka, a) in blocks.iter().enumerate() {
        for b in &blocks[ka..] {
            let (mut count, mut sum) = (0usize, 0.0);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &a.indices {
                for &j in &b.indices {
                    if i == j {
                        continue;
                    }
                    let v = m.get(i, j);
                    count += 1;
                    sum += v;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if count > 0 {
                out.push(BlockStats {
                    block_a: a.name.clone(),
                    block_b: b.name.clone(),
                    count,
                    mean: sum / count as f64,
                    min: lo,
                    max: hi,
                });
            }
        }
    }
    Ok(out)
}

/// Looks up one block pair in a summary, in either order.
pub fn find_block_pair<'a>(stats: &'a [BlockStats], a: &str, b: &str) -> Option<&'a BlockStats> {
    stats
        .iter()
        .find(|s| (s.block_a == a && s.block_b == b) || (s.block_a == b && s.block_b == a))
}

/// Normalized mean error in percent: per image, the mean landmark Euclidean
/// error divided by the ground-truth inter-ocular distance, averaged over
/// images.
pub fn nme(pred: &Dataset, gt: &Dataset, fmt: &FormatDescriptor) -> Result<f64> {
    if fmt.left_eye.is_empty() || fmt.right_eye.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "landmark scheme '{}' defines no eye landmarks",
            fmt.name
        )));
    }
    if fmt.m_size != gt.m_size() {
        return Err(Error::DimensionMismatch(format!(
            "scheme '{}' has {} landmarks, data has {}",
            fmt.name,
            fmt.m_size,
            gt.m_size()
        )));
    }
    fmt.validate()?;
    let pred = align_by_id(pred, gt)?;
    let mut total = 0.0;
    for (p, g) in pred.records().iter().zip(gt.records()) {
        let eye = |idx: &[usize]| centroid(&idx.iter().map(|&i| g.points[i]).collect::<Vec<_>>());
        let (l, r) = (eye(&fmt.left_eye), eye(&fmt.right_eye));
        let iod = (l[0] - r[0]).hypot(l[1] - r[1]);
        if !(iod > 0.0) {
            return Err(Error::ZeroInterocular {
                image_id: g.image_id.clone(),
            });
        }
        let err: f64 = p
            .points
            .iter()
            .zip(&g.points)
            .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
            .sum::<f64>()
            / g.points.len() as f64;
        total += err / iod;
    }
    Ok(100.0 * total / gt.len() as f64)
}
