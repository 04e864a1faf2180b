//! Landmark annotation datasets: the `.pts` and WFLW benchmark syntaxes, the
//! canonical JSON interchange format, and landmark-scheme descriptors.
//!
//! Landmark indices are 0-based throughout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};

/// A 2-D landmark position in pixels (or normalized units after
/// normalization).
pub type Point = [f64; 2];

/// Number of landmarks in a WFLW annotation line.
pub const WFLW_POINTS: usize = 98;
/// Number of attribute flags trailing the coordinates in a WFLW line.
pub const WFLW_ATTRIBUTES: usize = 6;

/// One image's landmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub image_id: String,
    pub points: Vec<Point>,
}

impl LandmarkSet {
    pub fn new(image_id: impl Into<String>, points: Vec<Point>) -> Self {
        Self {
            image_id: image_id.into(),
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn check_finite(&self) -> Result<()> {
        for (idx, p) in self.points.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::InvalidRecord {
                    image_id: self.image_id.clone(),
                    message: format!("landmark {idx} has a non-finite coordinate"),
                });
            }
        }
        Ok(())
    }
}

/// An aligned collection of landmark sets sharing one annotation scheme.
///
/// Construction enforces `N >= 2`, a uniform point count and finite
/// coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    format_name: String,
    #[serde(rename = "M")]
    m_size: usize,
    records: Vec<LandmarkSet>,
}

#[derive(Deserialize)]
struct RawDataset {
    format_name: String,
    #[serde(rename = "M")]
    m_size: usize,
    records: Vec<LandmarkSet>,
}

impl Dataset {
    pub fn new(format_name: impl Into<String>, records: Vec<LandmarkSet>) -> Result<Self> {
        if records.len() < 2 {
            return Err(Error::TooFewRecords {
                required: 2,
                found: records.len(),
            });
        }
        let m_size = majority_count(&records);
        let offenders: Vec<String> = records
            .iter()
            .filter(|r| r.len() != m_size)
            .map(|r| format!("{} ({} points)", r.image_id, r.len()))
            .collect();
        if !offenders.is_empty() {
            return Err(Error::MixedPointCounts {
                expected: m_size,
                offenders,
            });
        }
        if m_size == 0 {
            return Err(Error::InvalidArgument("records have no landmarks".into()));
        }
        for r in &records {
            r.check_finite()?;
        }
        Ok(Self {
            format_name: format_name.into(),
            m_size,
            records,
        })
    }

    pub fn format_name(&self) -> &str {
        &self.format_name
    }

    /// Number of landmarks per record (M).
    pub fn m_size(&self) -> usize {
        self.m_size
    }

    /// Number of records (N).
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[LandmarkSet] {
        &self.records
    }

    pub fn into_records(self) -> Vec<LandmarkSet> {
        self.records
    }

    /// The positions of landmark `landmark` across all records.
    pub fn column(&self, landmark: usize) -> Vec<Point> {
        self.records.iter().map(|r| r.points[landmark]).collect()
    }

    /// A new dataset holding the records at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Self::new(self.format_name.clone(), records)
    }

    /// Mean landmark positions over all records.
    pub fn mean_shape(&self) -> Vec<Point> {
        let n = self.records.len() as f64;
        let mut mean = vec![[0.0; 2]; self.m_size];
        for r in &self.records {
            for (acc, p) in mean.iter_mut().zip(&r.points) {
                acc[0] += p[0];
                acc[1] += p[1];
            }
        }
        for p in &mut mean {
            p[0] /= n;
            p[1] /= n;
        }
        mean
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawDataset = serde_json::from_str(text)?;
        let ds = Self::new(raw.format_name, raw.records)?;
        if ds.m_size != raw.m_size {
            return Err(Error::DimensionMismatch(format!(
                "declared M = {} but records hold {} points",
                raw.m_size, ds.m_size
            )));
        }
        Ok(ds)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn majority_count(records: &[LandmarkSet]) -> usize {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(r.len()).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    // Ties go to the count of the earliest record.
    records
        .iter()
        .map(LandmarkSet::len)
        .find(|c| counts[c] == best)
        .unwrap_or(0)
}

/// Describes a landmark scheme: its size, eye groups for inter-ocular
/// normalization and named component blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatDescriptor {
    pub name: String,
    #[serde(rename = "M")]
    pub m_size: usize,
    pub left_eye: Vec<usize>,
    pub right_eye: Vec<usize>,
    pub component_blocks: Vec<ComponentBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentBlock {
    pub name: String,
    pub indices: Vec<usize>,
}

impl ComponentBlock {
    pub fn new(name: &str, indices: impl IntoIterator<Item = usize>) -> Self {
        Self {
            name: name.to_string(),
            indices: indices.into_iter().collect(),
        }
    }
}

/// Which landmarks define each eye position for the inter-ocular distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EyeConvention {
    /// The outer eye corners.
    #[default]
    OuterCorners,
    /// The centroid of each eye's contour landmarks.
    Centroids,
}

impl FormatDescriptor {
    /// The 68-point 300W scheme.
    pub fn w300(eyes: EyeConvention) -> Self {
        let (left_eye, right_eye) = match eyes {
            EyeConvention::OuterCorners => (vec![36], vec![45]),
            EyeConvention::Centroids => ((36..42).collect(), (42..48).collect()),
        };
        Self {
            name: "300w".into(),
            m_size: 68,
            left_eye,
            right_eye,
            component_blocks: vec![
                ComponentBlock::new("contour", 0..17),
                ComponentBlock::new("brows", 17..27),
                ComponentBlock::new("nose", 27..36),
                ComponentBlock::new("eyes", 36..48),
                ComponentBlock::new("lips", 48..68),
            ],
        }
    }

    /// The 98-point WFLW scheme.
    pub fn wflw(eyes: EyeConvention) -> Self {
        let (left_eye, right_eye) = match eyes {
            EyeConvention::OuterCorners => (vec![60], vec![72]),
            EyeConvention::Centroids => ((60..68).collect(), (68..76).collect()),
        };
        Self {
            name: "wflw".into(),
            m_size: WFLW_POINTS,
            left_eye,
            right_eye,
            component_blocks: vec![
                ComponentBlock::new("contour", 0..33),
                ComponentBlock::new("brows", 33..51),
                ComponentBlock::new("nose", 51..60),
                ComponentBlock::new("eyes", (60..76).chain([96, 97])),
                ComponentBlock::new("lips", 76..96),
            ],
        }
    }

    /// A scheme with no eye groups or blocks.
    pub fn generic(m_size: usize) -> Self {
        Self {
            name: "generic".into(),
            m_size,
            left_eye: Vec::new(),
            right_eye: Vec::new(),
            component_blocks: Vec::new(),
        }
    }

    /// Picks the benchmark scheme matching a landmark count.
    pub fn infer(m_size: usize, eyes: EyeConvention) -> Self {
        match m_size {
            68 => Self::w300(eyes),
            WFLW_POINTS => Self::wflw(eyes),
            m => Self::generic(m),
        }
    }

    pub fn by_name(name: &str, m_size: usize, eyes: EyeConvention) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "300w" => Ok(Self::w300(eyes)),
            "wflw" => Ok(Self::wflw(eyes)),
            "generic" => Ok(Self::generic(m_size)),
            "auto" => Ok(Self::infer(m_size, eyes)),
            other => Err(Error::InvalidArgument(format!("unknown landmark scheme '{other}'"))),
        }
    }

    /// Checks index ranges and block disjointness.
    pub fn validate(&self) -> Result<()> {
        let in_range = |i: &usize| *i < self.m_size;
        if !self.left_eye.iter().all(in_range) || !self.right_eye.iter().all(in_range) {
            return Err(Error::InvalidArgument(format!(
                "eye index out of range for M = {}",
                self.m_size
            )));
        }
        let mut seen = vec![false; self.m_size];
        for block in &self.component_blocks {
            if block.indices.is_empty() {
                return Err(Error::InvalidArgument(format!("block '{}' is empty", block.name)));
            }
            for &i in &block.indices {
                if i >= self.m_size {
                    return Err(Error::InvalidArgument(format!(
                        "block '{}' index {i} out of range for M = {}",
                        block.name, self.m_size
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidArgument(format!(
                        "landmark {i} appears in more than one block"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parses a 300W-style `.pts` file.
///
/// The `version:` line and the braces are optional; blank lines are skipped.
pub fn parse_pts(text: &str, image_id: &str) -> Result<LandmarkSet> {
    let err = |line: usize, msg: String| Error::parse(image_id, line, msg);
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .peekable();

    if let Some((_, l)) = lines.peek() {
        if l.starts_with("version") {
            lines.next();
        }
    }
    let (header_line, header) = lines.next().ok_or_else(|| err(1, "missing n_points header".into()))?;
    let count_text = header
        .strip_prefix("n_points")
        .and_then(|rest| rest.trim_start().strip_prefix(':'))
        .ok_or_else(|| err(header_line, format!("malformed header '{header}'")))?;
    let n_points: usize = count_text
        .trim()
        .parse()
        .map_err(|_| err(header_line, format!("malformed point count '{}'", count_text.trim())))?;

    let mut braced = false;
    if let Some((_, "{")) = lines.peek() {
        lines.next();
        braced = true;
    }

    let mut points = Vec::with_capacity(n_points);
    let mut last_line = header_line;
    for (line_no, line) in lines {
        last_line = line_no;
        if line == "}" {
            if !braced {
                return Err(err(line_no, "closing brace without opening brace".into()));
            }
            braced = false;
            continue;
        }
        if !braced && points.len() == n_points {
            return Err(err(line_no, "unexpected content after points".into()));
        }
        let mut fields = line.split_whitespace();
        let mut coord = |name: &str| -> Result<f64> {
            let tok = fields
                .next()
                .ok_or_else(|| err(line_no, format!("missing {name} coordinate")))?;
            tok.parse::<f64>()
                .map_err(|_| err(line_no, format!("non-numeric token '{tok}'")))
        };
        let x = coord("x")?;
        let y = coord("y")?;
        if fields.next().is_some() {
            return Err(err(line_no, "expected exactly two coordinates".into()));
        }
        points.push([x, y]);
    }
    if braced {
        return Err(err(last_line, "missing closing brace".into()));
    }
    if points.len() != n_points {
        return Err(err(
            last_line,
            format!(
                "point count mismatch: header declares {n_points}, found {}",
                points.len()
            ),
        ));
    }
    let set = LandmarkSet::new(image_id, points);
    set.check_finite()?;
    Ok(set)
}

/// Serializes a landmark set in `.pts` syntax with braces and a version line.
pub fn write_pts(set: &LandmarkSet) -> String {
    let mut out = String::new();
    out.push_str("version: 1\n");
    let _ = writeln!(out, "n_points: {}", set.points.len());
    out.push_str("{\n");
    for p in &set.points {
        let _ = writeln!(out, "{} {}", p[0], p[1]);
    }
    out.push_str("}\n");
    out
}

/// Parses one WFLW annotation line: 196 coordinates, attribute flags, and
/// the image path as the last field.
pub fn parse_wflw_line(line: &str, source_name: &str, line_no: usize) -> Result<LandmarkSet> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let n_coords = 2 * WFLW_POINTS;
    if fields.len() < n_coords + 1 {
        return Err(Error::parse(
            source_name,
            line_no,
            format!("expected at least {} fields, found {}", n_coords + 1, fields.len()),
        ));
    }
    let mut coords = Vec::with_capacity(n_coords);
    for tok in &fields[..n_coords] {
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::parse(source_name, line_no, format!("non-numeric token '{tok}'")))?;
        coords.push(v);
    }
    let points = coords.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    let image_id = fields[fields.len() - 1];
    let set = LandmarkSet::new(image_id, points);
    set.check_finite()?;
    Ok(set)
}

/// Serializes a landmark set as a WFLW line with zeroed attribute flags.
pub fn write_wflw_line(set: &LandmarkSet) -> String {
    let mut out = String::new();
    for p in &set.points {
        let _ = write!(out, "{} {} ", p[0], p[1]);
    }
    for _ in 0..WFLW_ATTRIBUTES {
        out.push_str("0 ");
    }
    out.push_str(&set.image_id);
    out
}

/// Input syntax selector for [`load_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputFormat {
    /// `.pts` for directories and `.pts` files, canonical JSON for `.json`,
    /// WFLW lines otherwise.
    #[default]
    Auto,
    Pts,
    Wflw,
    Json,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(Self::Auto),
            "pts" => Ok(Self::Pts),
            "wflw" => Ok(Self::Wflw),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidArgument(format!("unknown input format '{other}'"))),
        }
    }
}

/// Loads a dataset from a directory of `.pts` files, a WFLW annotation file
/// or a canonical JSON file.
///
/// Directory records are ordered by relative path; the image id is the
/// relative path without extension.
pub fn load_dataset(path: &Path, format: InputFormat) -> Result<Dataset> {
    let meta = fs::metadata(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if meta.is_dir() {
        return load_pts_dir(path);
    }
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let format = match (format, ext.as_deref()) {
        (InputFormat::Auto, Some("pts")) => InputFormat::Pts,
        (InputFormat::Auto, Some("json")) => InputFormat::Json,
        (InputFormat::Auto, _) => InputFormat::Wflw,
        (f, _) => f,
    };
    let text = read_text(path)?;
    match format {
        InputFormat::Json => Dataset::from_json_str(&text),
        InputFormat::Pts => {
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let set = parse_pts(&text, &id)?;
            let m = set.len();
            Dataset::new(FormatDescriptor::infer(m, EyeConvention::default()).name, vec![set])
        }
        InputFormat::Wflw | InputFormat::Auto => {
            let name = path.display().to_string();
            let records = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| parse_wflw_line(l, &name, i + 1))
                .collect::<Result<Vec<_>>>()?;
            if records.is_empty() {
                return Err(Error::NoAnnotations(path.to_path_buf()));
            }
            Dataset::new("wflw", records)
        }
    }
}

fn load_pts_dir(dir: &Path) -> Result<Dataset> {
    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for entry in WalkDir::new(dir).follow_links(true) {
        let entry = entry.map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e.into(),
        })?;
        let p = entry.path();
        let is_pts = p
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pts"));
        if entry.file_type().is_file() && is_pts {
            let rel = p.strip_prefix(dir).unwrap_or(p).with_extension("");
            let id = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            files.push((id, p.to_path_buf()));
        }
    }
    if files.is_empty() {
        return Err(Error::NoAnnotations(dir.to_path_buf()));
    }
    files.sort();

    let records = files
        .par_iter()
        .map(|(id, p)| parse_pts(&read_text(p)?, id))
        .collect::<Result<Vec<_>>>()?;
    let m = majority_count(&records);
    Dataset::new(FormatDescriptor::infer(m, EyeConvention::default()).name, records)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
