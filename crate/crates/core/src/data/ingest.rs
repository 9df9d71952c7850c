//! Pose files of the public relocalization benchmarks.
//!
//! All poses are returned camera-to-world: `p` is the camera centre in world
//! coordinates and `q` rotates camera-frame vectors into the world frame.

use super::DataError;
use crate::geometry::{canonicalize_hemisphere, normalize, rotation_matrix_to_quat, Pose, Quaternion};

const BOTTOM_ROW_TOL: f64 = 1e-6;

/// Parses a per-frame 4×4 homogeneous camera-to-world matrix (16 numbers, row-major).
pub fn parse_7scenes_pose(text: &str) -> Result<Pose, DataError> {
    let values = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::Parse(format!("not a number: `{t}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != 16 {
        return Err(DataError::Parse(format!("expected 16 numbers, found {}", values.len())));
    }
    let m = |i: usize, j: usize| values[i * 4 + j];
    for (j, expected) in [0.0, 0.0, 0.0, 1.0].iter().enumerate() {
        if (m(3, j) - expected).abs() > BOTTOM_ROW_TOL {
            return Err(DataError::Parse(format!("bottom row must be 0 0 0 1, column {j} is {}", m(3, j))));
        }
    }
    let r = std::array::from_fn(|i| std::array::from_fn(|j| m(i, j)));
    let q = rotation_matrix_to_quat(&r).map_err(|e| DataError::Parse(format!("rotation block: {e}")))?;
    Ok(Pose {
        p: [m(0, 3), m(1, 3), m(2, 3)],
        q,
    })
}

/// Writes a pose as four lines of four numbers, the format read by [`parse_7scenes_pose`].
pub fn format_7scenes_pose(pose: &Pose) -> String {
    pose.to_matrix()
        .iter()
        .map(|row| row.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

/// How the quaternion column of a landmark index row is oriented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CambridgeConvention {
    /// `q` rotates world vectors into the camera frame (structure-from-motion
    /// output); it is conjugated on ingestion. Positions are camera centres.
    #[default]
    WorldToCamera,
    /// `q` already rotates camera vectors into the world frame.
    CameraToWorld,
}

/// Parses an index of `path x y z qw qx qy qz` rows.
///
/// Lines before the first data row that do not end in numbers are headers and
/// are skipped. A row whose trailing fields are all numeric but not seven of
/// them, or any unparseable line after data has started, is an error naming
/// the 1-based line number.
pub fn parse_cambridge_index(text: &str, convention: CambridgeConvention) -> Result<Vec<(String, Pose)>, DataError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let Some((path, rest)) = fields.split_first() else { continue };
        let numbers: Option<Vec<f64>> = rest.iter().map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite())).collect();
        let numbers = match numbers {
            Some(n) if !n.is_empty() => n,
            _ if rows.is_empty() => continue,
            _ => return Err(DataError::Line { line: line_no, reason: "expected a path and 7 numbers".into() }),
        };
        if numbers.len() != 7 {
            return Err(DataError::Line {
                line: line_no,
                reason: format!("expected 7 numbers after the path, found {}", numbers.len()),
            });
        }
        let n = normalize([numbers[3], numbers[4], numbers[5], numbers[6]]);
        if n.degenerate {
            return Err(DataError::Line { line: line_no, reason: "zero quaternion".into() });
        }
        let q = match convention {
            CambridgeConvention::WorldToCamera => n.q.conjugate(),
            CambridgeConvention::CameraToWorld => n.q,
        };
        rows.push((
            path.to_string(),
            Pose {
                p: [numbers[0], numbers[1], numbers[2]],
                q: canonicalize_hemisphere(q),
            },
        ));
    }
    Ok(rows)
}

/// `q` as written in an index file under `convention`, for round-trip tests and exports.
pub fn cambridge_quaternion(pose: &Pose, convention: CambridgeConvention) -> Quaternion {
    match convention {
        CambridgeConvention::WorldToCamera => pose.q.conjugate(),
        CambridgeConvention::CameraToWorld => pose.q,
    }
}
