//! Published median errors for the two public benchmarks, read-only.
//!
//! Values are `(position m, rotation deg)` per scene, in table column order,
//! followed by the table's average column.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MethodRow {
    pub method: &'static str,
    pub scenes: &'static [(f64, f64)],
    pub average: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixtureTable {
    pub dataset: &'static str,
    /// Where the numbers come from, printed with every comparison.
    pub source: &'static str,
    pub scenes: &'static [&'static str],
    pub rows: &'static [MethodRow],
}

/// Method whose published numbers a report is compared against by default.
pub const REFERENCE_METHOD: &str = "MVL-Loc";

const SEVEN_SCENES_ROWS: &[MethodRow] = &[
    MethodRow {
        method: "PoseNet",
        scenes: &[(0.32, 7.60), (0.48, 14.6), (0.31, 12.2), (0.48, 7.68), (0.47, 8.42), (0.59, 8.64), (0.47, 13.81)],
        average: (0.45, 10.42),
    },
    MethodRow {
        method: "Bayesian",
        scenes: &[(0.38, 7.24), (0.43, 13.8), (0.30, 12.3), (0.49, 8.09), (0.63, 7.18), (0.59, 7.59), (0.48, 13.22)],
        average: (0.47, 9.91),
    },
    MethodRow {
        method: "PN-Lstm",
        scenes: &[(0.24, 5.79), (0.34, 12.0), (0.22, 13.8), (0.31, 8.11), (0.34, 7.03), (0.37, 8.83), (0.41, 13.21)],
        average: (0.32, 9.82),
    },
    MethodRow {
        method: "PoseNet17",
        scenes: &[(0.14, 4.53), (0.29, 11.5), (0.19, 13.1), (0.20, 5.62), (0.27, 4.77), (0.24, 5.37), (0.36, 12.53)],
        average: (0.24, 8.20),
    },
    MethodRow {
        method: "IRPNet",
        scenes: &[(0.13, 5.78), (0.27, 9.83), (0.17, 13.2), (0.25, 6.41), (0.23, 5.83), (0.31, 7.32), (0.35, 11.91)],
        average: (0.24, 8.61),
    },
    MethodRow {
        method: "Hourglass",
        scenes: &[(0.15, 6.18), (0.27, 10.83), (0.20, 11.6), (0.26, 8.59), (0.26, 7.32), (0.29, 10.7), (0.30, 12.75)],
        average: (0.25, 9.71),
    },
    MethodRow {
        method: "AtLoc",
        scenes: &[(0.11, 4.37), (0.27, 11.7), (0.16, 11.9), (0.19, 5.61), (0.22, 4.54), (0.25, 5.62), (0.28, 10.9)],
        average: (0.21, 7.81),
    },
    MethodRow {
        method: "MSPN",
        scenes: &[(0.10, 4.76), (0.29, 11.5), (0.17, 13.2), (0.17, 6.87), (0.21, 5.53), (0.23, 6.81), (0.31, 11.81)],
        average: (0.21, 8.64),
    },
    MethodRow {
        method: "MS-Trans",
        scenes: &[(0.11, 4.67), (0.26, 9.78), (0.16, 12.8), (0.17, 5.66), (0.18, 4.44), (0.21, 5.99), (0.29, 8.45)],
        average: (0.20, 7.40),
    },
    MethodRow {
        method: "c2f-MsTrans",
        scenes: &[(0.10, 4.63), (0.25, 9.89), (0.14, 12.5), (0.16, 5.65), (0.16, 4.42), (0.18, 6.29), (0.27, 7.86)],
        average: (0.18, 7.32),
    },
    MethodRow {
        method: "MVL-Loc",
        scenes: &[(0.09, 3.95), (0.22, 9.45), (0.11, 11.9), (0.14, 5.68), (0.16, 3.82), (0.14, 6.11), (0.23, 8.11)],
        average: (0.16, 6.98),
    },
];

const CAMBRIDGE_ROWS: &[MethodRow] = &[
    MethodRow {
        method: "PoseNet",
        scenes: &[(1.94, 5.43), (0.61, 2.92), (1.16, 3.92), (2.67, 8.52)],
        average: (1.60, 5.20),
    },
    MethodRow {
        method: "BayesianPoseNet",
        scenes: &[(1.76, 4.08), (2.59, 5.18), (1.27, 7.58), (2.13, 8.42)],
        average: (1.94, 6.32),
    },
    MethodRow {
        method: "MapNet",
        scenes: &[(1.08, 1.91), (1.96, 3.95), (1.51, 4.26), (2.02, 4.57)],
        average: (1.64, 3.67),
    },
    MethodRow {
        method: "PoseNet17",
        scenes: &[(1.62, 2.31), (2.64, 3.93), (1.16, 5.77), (2.95, 6.50)],
        average: (2.09, 4.63),
    },
    MethodRow {
        method: "IRPNet",
        scenes: &[(1.21, 2.19), (1.89, 3.42), (0.74, 3.51), (1.89, 4.98)],
        average: (1.43, 3.53),
    },
    MethodRow {
        method: "PoseNet-Lstm",
        scenes: &[(0.99, 3.74), (1.53, 4.33), (1.20, 7.48), (1.54, 6.72)],
        average: (1.32, 5.57),
    },
    MethodRow {
        method: "MSPN",
        scenes: &[(1.77, 3.76), (2.55, 4.05), (2.92, 7.49), (2.67, 6.18)],
        average: (2.48, 5.37),
    },
    MethodRow {
        method: "MS-Trans",
        scenes: &[(0.85, 1.63), (1.83, 2.43), (0.88, 3.11), (1.64, 4.03)],
        average: (1.30, 2.80),
    },
    MethodRow {
        method: "c2f-MsTrans",
        scenes: &[(0.71, 2.71), (1.50, 2.98), (0.61, 2.92), (1.16, 3.92)],
        average: (0.99, 3.13),
    },
    MethodRow {
        method: "MVL-Loc",
        scenes: &[(0.62, 1.89), (1.38, 2.41), (0.63, 3.22), (1.09, 4.09)],
        average: (0.93, 2.90),
    },
];

pub const SEVEN_SCENES: FixtureTable = FixtureTable {
    dataset: "7scenes",
    source: "published 7-Scenes results table",
    scenes: &["Chess", "Fire", "Heads", "Office", "Pumpkin", "Kitchen", "Stairs"],
    rows: SEVEN_SCENES_ROWS,
};

pub const CAMBRIDGE: FixtureTable = FixtureTable {
    dataset: "cambridge",
    source: "published Cambridge Landmarks results table",
    scenes: &["King's College", "Old Hospital", "Shop Façade", "St Mary's Church"],
    rows: CAMBRIDGE_ROWS,
};

pub fn table(dataset: &str) -> Option<&'static FixtureTable> {
    [&SEVEN_SCENES, &CAMBRIDGE].into_iter().find(|t| t.dataset == dataset)
}

impl FixtureTable {
    pub fn method(&self, name: &str) -> Option<&'static MethodRow> {
        self.rows.iter().find(|r| r.method == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_averages() {
        assert_eq!(table("7scenes").unwrap().method(REFERENCE_METHOD).unwrap().average, (0.16, 6.98));
        assert_eq!(table("cambridge").unwrap().method(REFERENCE_METHOD).unwrap().average, (0.93, 2.90));
        assert!(table("nowhere").is_none());
        assert!(SEVEN_SCENES.method("Nobody").is_none());
    }

    #[test]
    fn every_row_covers_every_scene() {
        for t in [&SEVEN_SCENES, &CAMBRIDGE] {
            for r in t.rows {
                assert_eq!(r.scenes.len(), t.scenes.len(), "{} {}", t.dataset, r.method);
            }
        }
    }

    #[test]
    fn published_averages_are_close_to_the_scene_means() {
        // The tables round per-scene and average columns independently.
        for t in [&SEVEN_SCENES, &CAMBRIDGE] {
            for r in t.rows {
                let n = r.scenes.len() as f64;
                let p = r.scenes.iter().map(|s| s.0).sum::<f64>() / n;
                let q = r.scenes.iter().map(|s| s.1).sum::<f64>() / n;
                assert!((p - r.average.0).abs() < 0.02, "{} {} {p}", t.dataset, r.method);
                assert!((q - r.average.1).abs() < 0.1, "{} {} {q}", t.dataset, r.method);
            }
        }
    }
}
