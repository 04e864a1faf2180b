//! Square landmark-by-landmark matrices and their CSV / JSON layouts.

use std::io::Write;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense row-major M×M matrix indexed by landmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    m_size: usize,
    values: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(m_size: usize) -> Self {
        Self {
            m_size,
            values: vec![0.0; m_size * m_size],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m_size = rows.len();
        let mut values = Vec::with_capacity(m_size * m_size);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m_size {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {m_size}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Ok(Self { m_size, values })
    }

    pub fn from_fn(m_size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(m_size * m_size);
        for i in 0..m_size {
            for j in 0..m_size {
                values.push(f(i, j));
            }
        }
        Self { m_size, values }
    }

    pub fn m_size(&self) -> usize {
        self.m_size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m_size + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.m_size + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m_size..(i + 1) * self.m_size]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.m_size.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.m_size).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Largest absolute entry (0 for an empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Mean of the off-diagonal entries.
    pub fn mean_off_diagonal(&self) -> f64 {
        let m = self.m_size;
        if m < 2 {
            return 0.0;
        }
        let mut sum = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    sum += self.get(i, j);
                }
            }
        }
        sum / (m * (m - 1)) as f64
    }

    /// The matrix with rows and columns reordered so that entry `(a, b)` of
    /// the result is entry `(perm[a], perm[b])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self::from_fn(self.m_size, |a, b| self.get(perm[a], perm[b]))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::NonFinite {
                row: k / self.m_size,
                col: k % self.m_size,
            }),
            None => Ok(()),
        }
    }
}

impl AsRef<SquareMatrix> for SquareMatrix {
    fn as_ref(&self) -> &SquareMatrix {
        self
    }
}

macro_rules! matrix_newtype {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(SquareMatrix);

        impl $name {
            pub(crate) fn from_matrix(m: SquareMatrix) -> Self {
                Self(m)
            }

            pub fn into_inner(self) -> SquareMatrix {
                self.0
            }
        }

        impl Deref for $name {
            type Target = SquareMatrix;

            fn deref(&self) -> &SquareMatrix {
                &self.0
            }
        }

        impl AsRef<SquareMatrix> for $name {
            fn as_ref(&self) -> &SquareMatrix {
                &self.0
            }
        }
    };
}

matrix_newtype!(
    /// Mean absolute canonical correlations between landmark pairs.
    /// Symmetric, unit diagonal, entries in [0, 1].
    AffinityMatrix
);
matrix_newtype!(
    /// Prediction affinity minus ground-truth affinity. Positive entries mean
    /// the prediction over-correlates a landmark pair.
    AmeMatrix
);
matrix_newtype!(
    /// Elementwise population standard deviation over a stack of affinity
    /// matrices.
    AffinityStdMatrix
);

impl AffinityMatrix {
    /// Wraps a matrix after checking symmetry, the unit diagonal and the
    /// [0, 1] range.
    pub fn try_from_matrix(m: SquareMatrix) -> Result<Self> {
        m.check_finite()?;
        let n = m.m_size();
        for i in 0..n {
            if (m.get(i, i) - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("affinity diagonal at {i} is not 1")));
            }
            for j in 0..n {
                let v = m.get(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument(format!(
                        "affinity entry ({i}, {j}) = {v} outside [0, 1]"
                    )));
                }
                if v != m.get(j, i) {
                    return Err(Error::InvalidArgument(format!(
                        "affinity matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self(m))
    }
}

/// Serialization layout for [`export_matrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixLayout {
    Csv,
    Json,
}

impl MatrixLayout {
    /// `.json` selects JSON, anything else CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    m_size: usize,
    values: Vec<Vec<f64>>,
}

/// Rounds to nine significant digits and prints the shortest decimal that
/// reads back to the rounded value.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{v:.8e}").parse().unwrap_or(v);
    format!("{rounded}")
}

fn round_sig9(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        format!("{v:.8e}").parse().unwrap_or(v)
    }
}

/// Writes a matrix as CSV (a header of landmark indices, then one row per
/// landmark) or JSON (`{"m_size", "values"}`), nine significant digits.
pub fn export_matrix(matrix: &SquareMatrix, out: &mut impl Write, layout: MatrixLayout) -> Result<()> {
    matrix.check_finite()?;
    match layout {
        MatrixLayout::Csv => {
            let header: Vec<String> = (0..matrix.m_size()).map(|i| i.to_string()).collect();
            writeln!(out, "{}", header.join(","))?;
            for row in matrix.rows() {
                let cells: Vec<String> = row.iter().map(|&v| format_sig9(v)).collect();
                writeln!(out, "{}", cells.join(","))?;
            }
        }
        MatrixLayout::Json => {
            let doc = MatrixJson {
                m_size: matrix.m_size(),
                values: matrix
                    .rows()
                    .map(|r| r.iter().map(|&v| round_sig9(v)).collect())
                    .collect(),
            };
            serde_json::to_writer_pretty(&mut *out, &doc)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Reads a matrix written by [`export_matrix`].
pub fn import_matrix(text: &str, layout: MatrixLayout) -> Result<SquareMatrix> {
    match layout {
        MatrixLayout::Json => {
            let doc: MatrixJson = serde_json::from_str(text)?;
            let m = SquareMatrix::from_rows(&doc.values)?;
            if m.m_size() != doc.m_size {
                return Err(Error::DimensionMismatch(format!(
                    "declared m_size {} but found {} rows",
                    doc.m_size,
                    m.m_size()
                )));
            }
            Ok(m)
        }
        MatrixLayout::Csv => {
            let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
            let (_, header) = lines
                .next()
                .ok_or_else(|| Error::parse("matrix csv", 1, "empty input"))?;
            let m_size = header.split(',').count();
            let mut rows = Vec::with_capacity(m_size);
            for (i, line) in lines {
                let row = line
                    .split(',')
                    .map(|tok| {
                        tok.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::parse("matrix csv", i + 1, format!("non-numeric cell '{tok}'")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                rows.push(row);
            }
            if rows.len() != m_size {
                return Err(Error::DimensionMismatch(format!(
                    "header lists {m_size} columns but found {} rows",
                    rows.len()
                )));
            }
            SquareMatrix::from_rows(&rows)
        }
    }
}
