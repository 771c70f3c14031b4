//! Distribution comparisons, metric tables and degradation reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::alignment::SkippedFile;
use crate::error::{Error, Result};
use crate::imgio::{self, Channel, Histogram256};
use crate::metrics::MetricReport;

/// L1 distance between two frequency vectors, in `[0, 2]`.
pub fn l1_distance(a: &[f64; 256], b: &[f64; 256]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelDistribution {
    pub channel: Channel,
    #[serde(skip)]
    pub target: [f64; 256],
    #[serde(skip)]
    pub before: [f64; 256],
    #[serde(skip)]
    pub after: [f64; 256],
    pub distance_before: f64,
    pub distance_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionComparison {
    pub channels: Vec<ChannelDistribution>,
    pub skipped: Vec<SkippedFile>,
}

impl DistributionComparison {
    pub fn channel(&self, channel: Channel) -> &ChannelDistribution {
        &self.channels[channel.index()]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("channel,bin,target_freq,before_freq,after_freq\n");
        for c in &self.channels {
            for bin in 0..256 {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    c.channel.name(),
                    bin,
                    c.target[bin],
                    c.before[bin],
                    c.after[bin]
                );
            }
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }
}

/// Per-channel histograms accumulated over every decodable image in `dir`.
pub fn directory_histograms(dir: &Path) -> Result<([Histogram256; 3], Vec<SkippedFile>)> {
    let paths = imgio::list_images(dir)?;
    let per_image: Vec<(usize, Result<[Histogram256; 3]>)> = paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let h = imgio::load_rgb(p).map(|img| Channel::ALL.map(|c| imgio::histogram(img.plane(c))));
            (i, h)
        })
        .collect();
    let mut total: [Histogram256; 3] = Default::default();
    let mut skipped = Vec::new();
    for (i, result) in per_image {
        match result {
            Ok(h) => {
                for (t, x) in total.iter_mut().zip(h.iter()) {
                    t.merge(x);
                }
            }
            Err(e) if e.is_io() => return Err(e),
            Err(e) => skipped.push(SkippedFile {
                path: paths[i].clone(),
                reason: e.to_string(),
            }),
        }
    }
    if total[0].total == 0 {
        return Err(Error::Empty(format!("no usable images in {}", dir.display())));
    }
    Ok((total, skipped))
}

/// Compares the RGB distributions of an external dataset before and after
/// alignment against the target dataset.
pub fn distribution_compare(
    target_dir: &Path,
    before_dir: &Path,
    after_dir: &Path,
) -> Result<DistributionComparison> {
    let (target, mut skipped) = directory_histograms(target_dir)?;
    let (before, s) = directory_histograms(before_dir)?;
    skipped.extend(s);
    let (after, s) = directory_histograms(after_dir)?;
    skipped.extend(s);
    Ok(compare_histograms(&target, &before, &after, skipped))
}

pub fn compare_histograms(
    target: &[Histogram256; 3],
    before: &[Histogram256; 3],
    after: &[Histogram256; 3],
    skipped: Vec<SkippedFile>,
) -> DistributionComparison {
    let channels = Channel::ALL
        .iter()
        .map(|&c| {
            let i = c.index();
            let (t, b, a) = (target[i].normalized(), before[i].normalized(), after[i].normalized());
            ChannelDistribution {
                channel: c,
                distance_before: l1_distance(&t, &b),
                distance_after: l1_distance(&t, &a),
                target: t,
                before: b,
                after: a,
            }
        })
        .collect();
    DistributionComparison { channels, skipped }
}

fn push_row(out: &mut String, stem: &str, values: &[f64; 9]) {
    out.push_str(stem);
    for v in values {
        let _ = write!(out, ",{v:.4}");
    }
    out.push('\n');
}

pub const METRIC_HEADER: &str = "stem,EN,MI,SD,SF,AG,VIF,SCD,Qabf,SSIM";

/// Column means of the reports.
pub fn mean_report(reports: &[(String, MetricReport)]) -> Result<MetricReport> {
    if reports.is_empty() {
        return Err(Error::Empty("no metric reports".into()));
    }
    let mut sum = [0.0; 9];
    for (_, r) in reports {
        for (s, v) in sum.iter_mut().zip(r.values()) {
            *s += v;
        }
    }
    Ok(MetricReport::from_values(sum.map(|s| s / reports.len() as f64)))
}

/// Stem-sorted CSV with four decimals per value and a trailing `MEAN` row.
pub fn metric_table(reports: &[(String, MetricReport)]) -> Result<String> {
    let mean = mean_report(reports)?;
    let mut sorted: Vec<&(String, MetricReport)> = reports.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = String::from(METRIC_HEADER);
    out.push('\n');
    for (stem, r) in sorted {
        push_row(&mut out, stem, &r.values());
    }
    push_row(&mut out, "MEAN", &mean.values());
    Ok(out)
}

/// Reads the `MEAN` row of a metric table.
pub fn read_mean_row(path: &Path) -> Result<MetricReport> {
    let bad = |message: String| Error::Table {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let expected: Vec<&str> = METRIC_HEADER.split(',').collect();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != expected {
        return Err(bad(format!(
            "header {:?} does not match {METRIC_HEADER:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.get(0).map(str::trim) == Some("MEAN") {
            let mut values = [0.0; 9];
            for (i, v) in values.iter_mut().enumerate() {
                let field = record.get(i + 1).unwrap_or("").trim();
                *v = field
                    .parse()
                    .map_err(|_| bad(format!("bad {} value {field:?}", MetricReport::NAMES[i])))?;
            }
            return Ok(MetricReport::from_values(values));
        }
    }
    Err(bad("missing MEAN row".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegradationRow {
    pub method: String,
    pub metric: String,
    pub in_distribution: f64,
    pub out_of_distribution: f64,
    /// `None` when the in-distribution value is zero.
    pub percent_change: Option<f64>,
}

/// `(ood - id) / id * 100`, undefined for `id == 0`.
pub fn percent_change(id: f64, ood: f64) -> Option<f64> {
    if id == 0.0 {
        None
    } else {
        Some((ood - id) / id * 100.0)
    }
}

pub fn degradation_rows(method: &str, id: &MetricReport, ood: &MetricReport) -> Vec<DegradationRow> {
    MetricReport::NAMES
        .iter()
        .zip(id.values().iter().zip(ood.values()))
        .map(|(name, (&a, b))| DegradationRow {
            method: method.to_string(),
            metric: name.to_string(),
            in_distribution: a,
            out_of_distribution: b,
            percent_change: percent_change(a, b),
        })
        .collect()
}

/// Per-metric change between the `MEAN` rows of two metric tables.
pub fn degradation_report(id_table: &Path, ood_table: &Path, method: &str) -> Result<Vec<DegradationRow>> {
    let id = read_mean_row(id_table)?;
    let ood = read_mean_row(ood_table)?;
    Ok(degradation_rows(method, &id, &ood))
}

pub fn degradation_csv(rows: &[DegradationRow]) -> String {
    let mut out = String::from("method,metric,in_distribution,out_of_distribution,percent_change\n");
    for r in rows {
        let pct = r
            .percent_change
            .map(|p| format!("{p:.4}"))
            .unwrap_or_else(|| "undefined".into());
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.method, r.metric, r.in_distribution, r.out_of_distribution, pct
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(v: f64) -> MetricReport {
        MetricReport::from_values([v, v + 1.0, v + 2.0, v + 3.0, v + 4.0, v + 5.0, 0.5, 0.25, 0.75])
    }

    #[test]
    fn single_report_table() {
        let csv = metric_table(&[("a".into(), report(1.0))]).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], METRIC_HEADER);
        assert_eq!(lines[1], "a,1.0000,2.0000,3.0000,4.0000,5.0000,6.0000,0.5000,0.2500,0.7500");
        assert_eq!(lines[2].replacen("MEAN", "a", 1), lines[1]);
        assert!(metric_table(&[]).is_err());
    }

    #[test]
    fn table_sorted_with_exact_mean() {
        let rows = vec![("b".to_string(), report(2.0)), ("a".to_string(), report(1.0)), ("c".to_string(), report(6.0))];
        let mean = mean_report(&rows).unwrap();
        assert!((mean.en - 3.0).abs() < 1e-12);
        let csv = metric_table(&rows).unwrap();
        let stems: Vec<_> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(stems, ["a", "b", "c", "MEAN"]);
        assert_eq!(csv, metric_table(&rows).unwrap());
    }

    #[test]
    fn percent_examples() {
        let p = percent_change(6.13, 4.56).unwrap();
        assert!((p - (4.56 - 6.13) / 6.13 * 100.0).abs() < 1e-12);
        assert!((p + 25.61174551386623).abs() < 1e-9);
        assert_eq!(percent_change(0.0, 3.0), None);
        assert_eq!(percent_change(2.0, 2.0), Some(0.0));
    }

    #[test]
    fn degradation_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let id = dir.path().join("id.csv");
        let ood = dir.path().join("ood.csv");
        fs::write(&id, metric_table(&[("x".into(), report(1.0))]).unwrap()).unwrap();
        fs::write(&ood, metric_table(&[("x".into(), report(2.0))]).unwrap()).unwrap();
        let same = degradation_report(&id, &id, "m").unwrap();
        assert!(same.iter().all(|r| r.percent_change == Some(0.0)));
        let rows = degradation_report(&id, &ood, "m").unwrap();
        assert_eq!(rows.len(), 9);
        assert_eq!(rows[0].metric, "EN");
        assert!((rows[0].percent_change.unwrap() - 100.0).abs() < 1e-9);
        assert!((rows[1].percent_change.unwrap() - 50.0).abs() < 1e-9);

        let no_mean = dir.path().join("nomean.csv");
        fs::write(&no_mean, format!("{METRIC_HEADER}\nx,1,1,1,1,1,1,1,1,1\n")).unwrap();
        assert!(matches!(degradation_report(&id, &no_mean, "m"), Err(Error::Table { .. })));
        let wrong = dir.path().join("wrong.csv");
        fs::write(&wrong, "stem,EN\nMEAN,1\n").unwrap();
        assert!(matches!(degradation_report(&wrong, &id, "m"), Err(Error::Table { .. })));
    }

    #[test]
    fn undefined_rows_render() {
        let mut zero = report(1.0);
        zero.en = 0.0;
        let rows = degradation_rows("m", &zero, &report(1.0));
        assert_eq!(rows[0].percent_change, None);
        let csv = degradation_csv(&rows);
        assert!(csv.lines().nth(1).unwrap().ends_with(",undefined"));
    }

    #[test]
    fn l1_bounds() {
        let mut a = [0.0; 256];
        let mut b = [0.0; 256];
        a[0] = 1.0;
        b[255] = 1.0;
        assert_eq!(l1_distance(&a, &b), 2.0);
        assert_eq!(l1_distance(&a, &a), 0.0);
    }
}
