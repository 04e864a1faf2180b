//! Per-image removal of translation and scale.
//!
//! Each shape is centered on its centroid and divided by its RMS radius (the
//! root-mean-square distance of its points to the centroid). Rotation is left
//! in place: head pose is part of the variance the correlation analysis
//! measures.

use rayon::prelude::*;

use crate::dataset::{Dataset, LandmarkSet, Point};
use crate::error::{Error, Result};

/// Name recorded in output metadata for the normalization in use.
pub const NORMALIZATION_NAME: &str = "centroid/rms-radius";

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSet {
    pub image_id: String,
    pub points: Vec<Point>,
    pub applied_center: Point,
    pub applied_scale: f64,
}

pub fn centroid(points: &[Point]) -> Point {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
    [sx / n, sy / n]
}

/// Root-mean-square distance of `points` to `center`.
pub fn rms_radius(points: &[Point], center: Point) -> f64 {
    let ss: f64 = points
        .iter()
        .map(|p| {
            let dx = p[0] - center[0];
            let dy = p[1] - center[1];
            dx * dx + dy * dy
        })
        .sum();
    (ss / points.len() as f64).sqrt()
}

/// Applies a given center and scale: `(p - center) / scale`.
pub fn apply(set: &LandmarkSet, center: Point, scale: f64) -> NormalizedSet {
    let points = set
        .points
        .iter()
        .map(|p| [(p[0] - center[0]) / scale, (p[1] - center[1]) / scale])
        .collect();
    NormalizedSet {
        image_id: set.image_id.clone(),
        points,
        applied_center: center,
        applied_scale: scale,
    }
}

pub fn normalize(set: &LandmarkSet) -> Result<NormalizedSet> {
    let degenerate = || Error::DegenerateShape {
        image_id: set.image_id.clone(),
    };
    if set.points.is_empty() {
        return Err(degenerate());
    }
    let center = centroid(&set.points);
    let scale = rms_radius(&set.points, center);
    // Coincident points leave only rounding noise in the radius.
    let extent = set
        .points
        .iter()
        .fold(0.0f64, |acc, p| acc.max(p[0].abs()).max(p[1].abs()));
    if !(scale > extent * 1e-12) || !scale.is_finite() {
        return Err(degenerate());
    }
    Ok(apply(set, center, scale))
}

/// A dataset in normalized units together with the per-record statistics
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDataset {
    dataset: Dataset,
    centers: Vec<Point>,
    scales: Vec<f64>,
}

impl NormalizedDataset {
    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn into_dataset(self) -> Dataset {
        self.dataset
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    fn from_sets(format_name: &str, sets: Vec<NormalizedSet>) -> Result<Self> {
        let centers = sets.iter().map(|s| s.applied_center).collect();
        let scales = sets.iter().map(|s| s.applied_scale).collect();
        let records = sets
            .into_iter()
            .map(|s| LandmarkSet::new(s.image_id, s.points))
            .collect();
        Ok(Self {
            dataset: Dataset::new(format_name, records)?,
            centers,
            scales,
        })
    }
}

pub fn normalize_dataset(d: &Dataset) -> Result<NormalizedDataset> {
    let sets = d.records().par_iter().map(normalize).collect::<Result<Vec<_>>>()?;
    NormalizedDataset::from_sets(d.format_name(), sets)
}
