//! Sparse landmark subsets in the style of existing annotation formats,
//! expressed as indices into the dense 68- and 98-point schemes.
//!
//! The sparse formats were annotated independently, so these are nearest
//! equivalents rather than exact correspondences. Where a sparse point has
//! no dense counterpart (eye centers, mouth center) the closest dense point
//! is used.

/// A fixed landmark subset on a dense scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExistingFormat {
    pub name: &'static str,
    /// Name of the dense scheme the indices refer to.
    pub scheme: &'static str,
    pub indices: &'static [usize],
}

/// Five points: eyes (outer corners), nose tip, mouth corners.
pub const MAFL_STYLE: ExistingFormat = ExistingFormat {
    name: "mafl",
    scheme: "300w",
    indices: &[36, 45, 30, 48, 54],
};

/// Ten points: four eye corners, nose tip and nostrils, mouth corners and
/// lower lip center.
pub const LFW_STYLE: ExistingFormat = ExistingFormat {
    name: "lfw",
    scheme: "300w",
    indices: &[36, 39, 42, 45, 30, 31, 35, 48, 54, 57],
};

/// Nineteen points: three per eyebrow, three per eye, nose tip and nostrils,
/// mouth corners and center, chin.
pub const AFLW_STYLE: ExistingFormat = ExistingFormat {
    name: "aflw",
    scheme: "300w",
    indices: &[
        17, 19, 21, 22, 24, 26, 36, 37, 39, 42, 44, 45, 31, 30, 35, 48, 62, 54, 8,
    ],
};

/// Twenty-nine points: four per eyebrow, five per eye (corners, lids,
/// pupil), four on the nose, six on the mouth, chin.
pub const COFW_STYLE: ExistingFormat = ExistingFormat {
    name: "cofw",
    scheme: "wflw",
    indices: &[
        33, 37, 35, 40, 42, 46, 44, 49, 60, 64, 62, 66, 96, 68, 72, 70, 74, 97, 55, 59, 54, 57, 76, 82, 79, 90, 94, 85,
        16,
    ],
};

pub const ALL: [ExistingFormat; 4] = [MAFL_STYLE, LFW_STYLE, AFLW_STYLE, COFW_STYLE];

pub fn by_name(name: &str) -> Option<ExistingFormat> {
    ALL.iter().copied().find(|f| f.name.eq_ignore_ascii_case(name))
}
