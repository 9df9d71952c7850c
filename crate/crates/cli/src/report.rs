//! Line-oriented metrics report and the comparison against published tables.
//!
//! ```text
//! mvloc-report 1
//! # kind	index	name	samples	position_m	rotation_deg	accuracy
//! scene	0	Chess	32	0.031	1.2	1
//! average	-	-	96	0.029	1.1	1
//! ```
//!
//! Fields are tab-separated; floats use the shortest round-trip decimal form.
//! The `average` row carries the mean of the per-scene medians and the overall
//! scene accuracy.

use std::fmt::Write as _;

use mvloc_core::training::{MetricsReport, SceneMetrics};

use crate::fixtures::{FixtureTable, MethodRow};
use crate::CliError;

pub const REPORT_HEADER: &str = "mvloc-report 1";
const COLUMNS: &str = "# kind\tindex\tname\tsamples\tposition_m\trotation_deg\taccuracy";

pub fn format_report(report: &MetricsReport) -> String {
    let mut out = format!("{REPORT_HEADER}\n{COLUMNS}\n");
    for s in &report.scenes {
        writeln!(
            out,
            "scene\t{}\t{}\t{}\t{}\t{}\t{}",
            s.index, s.name, s.samples, s.median_position_m, s.median_rotation_deg, s.accuracy
        )
        .unwrap();
    }
    let n: usize = report.scenes.iter().map(|s| s.samples).sum();
    writeln!(
        out,
        "average\t-\t-\t{n}\t{}\t{}\t{}",
        report.mean_position_m, report.mean_rotation_deg, report.accuracy
    )
    .unwrap();
    out
}

pub fn parse_report(text: &str) -> Result<MetricsReport, CliError> {
    let bad = |line: usize, reason: &str| CliError::Runtime(format!("report line {line}: {reason}"));
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, REPORT_HEADER)) => {}
        _ => return Err(bad(1, &format!("expected header `{REPORT_HEADER}`"))),
    }
    let mut scenes = Vec::new();
    let mut average = None;
    for (no, line) in lines {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(bad(no, &format!("expected 7 tab-separated fields, found {}", f.len())));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(no, &format!("`{}` is not a number", f[i])));
        let count = |i: usize| f[i].parse::<usize>().map_err(|_| bad(no, &format!("`{}` is not a count", f[i])));
        match f[0] {
            "scene" => scenes.push(SceneMetrics {
                index: count(1)?,
                name: f[2].to_string(),
                samples: count(3)?,
                median_position_m: num(4)?,
                median_rotation_deg: num(5)?,
                accuracy: num(6)?,
            }),
            "average" => average = Some((num(4)?, num(5)?, num(6)?)),
            other => return Err(bad(no, &format!("unknown record `{other}`"))),
        }
    }
    let (mean_position_m, mean_rotation_deg, accuracy) = average.ok_or_else(|| bad(0, "missing average record"))?;
    if scenes.is_empty() {
        return Err(bad(0, "no scene records"));
    }
    Ok(MetricsReport {
        scenes,
        mean_position_m,
        mean_rotation_deg,
        accuracy,
    })
}

pub fn format_table(report: &MetricsReport) -> String {
    let mut out = format!("{:<20} {:>8} {:>12} {:>14} {:>9}\n", "scene", "samples", "position (m)", "rotation (deg)", "accuracy");
    for s in &report.scenes {
        writeln!(
            out,
            "{:<20} {:>8} {:>12.4} {:>14.3} {:>9.3}",
            s.name, s.samples, s.median_position_m, s.median_rotation_deg, s.accuracy
        )
        .unwrap();
    }
    writeln!(
        out,
        "{:<20} {:>8} {:>12.4} {:>14.3} {:>9.3}",
        "average",
        report.scenes.iter().map(|s| s.samples).sum::<usize>(),
        report.mean_position_m,
        report.mean_rotation_deg,
        report.accuracy
    )
    .unwrap();
    out
}

/// One row of a comparison: ours, published, and `ours − published`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub scene: String,
    pub ours_m: f64,
    pub published_m: f64,
    pub delta_m: f64,
    pub ours_deg: f64,
    pub published_deg: f64,
    pub delta_deg: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub dataset: &'static str,
    pub method: &'static str,
    pub source: &'static str,
    pub rows: Vec<ComparisonRow>,
    pub average: ComparisonRow,
}

fn row(scene: &str, ours: (f64, f64), published: (f64, f64)) -> ComparisonRow {
    ComparisonRow {
        scene: scene.to_string(),
        ours_m: ours.0,
        published_m: published.0,
        delta_m: ours.0 - published.0,
        ours_deg: ours.1,
        published_deg: published.1,
        delta_deg: ours.1 - published.1,
    }
}

/// Pairs every report scene with the fixture; the scene sets must be equal.
pub fn compare(report: &MetricsReport, table: &'static FixtureTable, method: &'static MethodRow) -> Result<Comparison, CliError> {
    let mut ours: Vec<&str> = report.scenes.iter().map(|s| s.name.as_str()).collect();
    let mut theirs: Vec<&str> = table.scenes.to_vec();
    ours.sort_unstable();
    theirs.sort_unstable();
    if ours != theirs {
        return Err(CliError::Runtime(format!(
            "report scenes {ours:?} do not match the {} fixture scenes {theirs:?}",
            table.dataset
        )));
    }
    let rows = table
        .scenes
        .iter()
        .zip(method.scenes)
        .map(|(name, published)| {
            let s = report.scenes.iter().find(|s| s.name == *name).expect("scene sets are equal");
            row(name, (s.median_position_m, s.median_rotation_deg), *published)
        })
        .collect();
    Ok(Comparison {
        dataset: table.dataset,
        method: method.method,
        source: table.source,
        rows,
        average: row("average", (report.mean_position_m, report.mean_rotation_deg), method.average),
    })
}

pub fn format_comparison(c: &Comparison) -> String {
    let mut out = format!(
        "reference: {} on {} ({}); published numbers, not reproduced by this desk-scale run\n",
        c.method, c.dataset, c.source
    );
    writeln!(
        out,
        "{:<20} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "scene", "ours m", "ref m", "delta m", "ours deg", "ref deg", "delta deg"
    )
    .unwrap();
    for r in c.rows.iter().chain(std::iter::once(&c.average)) {
        writeln!(
            out,
            "{:<20} {:>10.4} {:>10.2} {:>+10.4} {:>10.3} {:>10.2} {:>+10.3}",
            r.scene, r.ours_m, r.published_m, r.delta_m, r.ours_deg, r.published_deg, r.delta_deg
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{CAMBRIDGE, REFERENCE_METHOD, SEVEN_SCENES};

    fn report_from(table: &FixtureTable, values: &[(f64, f64)]) -> MetricsReport {
        let scenes: Vec<SceneMetrics> = table
            .scenes
            .iter()
            .zip(values)
            .enumerate()
            .map(|(i, (name, v))| SceneMetrics {
                index: i,
                name: name.to_string(),
                samples: 10,
                median_position_m: v.0,
                median_rotation_deg: v.1,
                accuracy: 1.0,
            })
            .collect();
        let n = scenes.len() as f64;
        MetricsReport {
            mean_position_m: scenes.iter().map(|s| s.median_position_m).sum::<f64>() / n,
            mean_rotation_deg: scenes.iter().map(|s| s.median_rotation_deg).sum::<f64>() / n,
            accuracy: 1.0,
            scenes,
        }
    }

    #[test]
    fn report_round_trips() {
        let r = report_from(&CAMBRIDGE, &[(0.1, 1.0), (0.2, 2.5), (1.0 / 3.0, 3.0), (0.4, 4.0)]);
        let text = format_report(&r);
        assert!(text.starts_with(REPORT_HEADER));
        assert!(text.contains("St Mary's Church"));
        assert_eq!(parse_report(&text).unwrap(), r);
    }

    #[test]
    fn malformed_reports_are_rejected() {
        assert!(parse_report("").is_err());
        assert!(parse_report("mvloc-report 2\n").is_err());
        assert!(parse_report("mvloc-report 1\nscene\t0\tA\t1\t0.1\t0.2\n").is_err());
        assert!(parse_report("mvloc-report 1\nscene\t0\tA\t1\t0.1\t0.2\t1\n").is_err());
        assert!(parse_report("mvloc-report 1\nscene\t0\tA\t1\tx\t0.2\t1\naverage\t-\t-\t1\t0\t0\t1\n").is_err());
    }

    #[test]
    fn equal_report_gives_zero_deltas() {
        let m = SEVEN_SCENES.method(REFERENCE_METHOD).unwrap();
        let mut r = report_from(&SEVEN_SCENES, m.scenes);
        r.mean_position_m = m.average.0;
        r.mean_rotation_deg = m.average.1;
        let c = compare(&r, &SEVEN_SCENES, m).unwrap();
        for row in c.rows.iter().chain([&c.average]) {
            assert_eq!((row.delta_m, row.delta_deg), (0.0, 0.0));
        }
        assert_eq!((c.average.published_m, c.average.published_deg), (0.16, 6.98));
    }

    #[test]
    fn deltas_are_ours_minus_published() {
        let m = CAMBRIDGE.method(REFERENCE_METHOD).unwrap();
        let r = report_from(&CAMBRIDGE, &[(0.5, 2.0), (1.5, 2.0), (0.5, 3.0), (1.0, 4.0)]);
        let c = compare(&r, &CAMBRIDGE, m).unwrap();
        assert_eq!(c.rows[0].delta_m, 0.5 - 0.62);
        assert_eq!(c.rows[3].delta_deg, 4.0 - 4.09);
        assert_eq!(c.average.delta_m, 0.875 - 0.93);
        assert_eq!(c.average.delta_deg, 2.75 - 2.90);
        let text = format_comparison(&c);
        assert!(text.contains("published numbers"));
        assert!(text.contains("ours m") && text.contains("ref deg"));
    }

    #[test]
    fn scene_sets_must_match() {
        let m = SEVEN_SCENES.method(REFERENCE_METHOD).unwrap();
        let r = report_from(&CAMBRIDGE, &[(0.1, 1.0); 4]);
        assert!(compare(&r, &SEVEN_SCENES, m).is_err());
    }
}
