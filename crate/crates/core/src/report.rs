//! Text renderings of analysis results and detection-file I/O.
//!
//! Every renderer is a pure function of its input, so equal inputs give
//! byte-identical output.

use std::fmt::Write as _;
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analyze::{format_percent, DetectionRateTable, FewShotReport, OverlapReport, Stat};
use crate::corpus::{ParseLabelError, SdgLabelSet};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("unknown report format `{0}` (expected csv, json or svg)")]
    UnknownFormat(String),
}

pub type Result<T, E = ReportError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    SvgBars,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "svg" | "svg_bars" | "svg-bars" => Ok(ReportFormat::SvgBars),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Names used for the two sides and the counted items in overlap tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideNames {
    pub a: String,
    pub b: String,
    /// Plural noun for the items, e.g. "Companies".
    pub items: String,
}

impl Default for SideNames {
    fn default() -> Self {
        SideNames {
            a: "A".into(),
            b: "B".into(),
            items: "Companies".into(),
        }
    }
}

/// `statistic,value,percent` rows. Averages use the items-with-detections
/// denominator; the all-items averages follow as secondary rows.
pub fn overlap_csv(report: &OverlapReport, names: &SideNames, include_empty: bool) -> String {
    let SideNames { a, b, items } = names;
    let singular = items.strip_suffix("ies").map(|s| format!("{s}y")).unwrap_or_else(|| {
        items.strip_suffix('s').unwrap_or(items).to_string()
    });
    let lower = items.to_lowercase();
    let mut out = String::from("statistic,value,percent\n");
    let mut row = |name: String, value: String, pct: String| {
        let _ = writeln!(out, "{},{value},{pct}", csv_field(&name));
    };
    let stat = |s: &Stat| (s.count.to_string(), s.percent_string());
    row(format!("Total {items}"), report.total.to_string(), "--".into());
    if include_empty {
        let (v, p) = stat(&report.intersection_including_empty);
        row(format!("Intersection: {a} vs {b} including {lower} with no detected SDGs"), v, p);
    }
    let (v, p) = stat(&report.detected_a);
    row(format!("{items} with Detected SDGs: {a}"), v, p);
    let (v, p) = stat(&report.detected_b);
    row(format!("{items} with Detected SDGs: {b}"), v, p);
    let (v, p) = stat(&report.intersection_detected);
    row(format!("Intersection: {a} vs {b}"), v, p);
    row(
        format!("Average Number of SDGs Detected per {singular}: {a}"),
        format!("{:.2}", report.avg_per_detected_a),
        "--".into(),
    );
    row(
        format!("Average Number of SDGs Detected per {singular}: {b}"),
        format!("{:.2}", report.avg_per_detected_b),
        "--".into(),
    );
    row(
        format!("Average Number of SDGs per {singular} (all {lower}): {a}"),
        format!("{:.2}", report.avg_per_item_a),
        "--".into(),
    );
    row(
        format!("Average Number of SDGs per {singular} (all {lower}): {b}"),
        format!("{:.2}", report.avg_per_item_b),
        "--".into(),
    );
    out
}

#[derive(Serialize)]
struct NamedOverlap<'a> {
    names: &'a SideNames,
    include_empty: bool,
    #[serde(flatten)]
    report: &'a OverlapReport,
}

pub fn overlap_json(report: &OverlapReport, names: &SideNames, include_empty: bool) -> String {
    let v = NamedOverlap {
        names,
        include_empty,
        report,
    };
    serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
}

/// Plot-ready `sdg,rate` pairs for one side.
pub fn rates_csv(table: &DetectionRateTable) -> String {
    let mut out = String::from("sdg,rate\n");
    for r in &table.rows {
        let _ = writeln!(out, "{},{}", r.sdg, format_percent(r.count, table.total));
    }
    out
}

/// One row per SDG with count and rate for each named side.
pub fn rates_comparison_csv(sides: &[(&str, &DetectionRateTable)]) -> String {
    let mut out = String::from("sdg");
    for (name, _) in sides {
        let _ = write!(out, ",{} count,{} rate", csv_field(name), csv_field(name));
    }
    out.push('\n');
    for sdg in 1..=17u8 {
        let _ = write!(out, "{sdg}");
        for (_, t) in sides {
            let count = t.count(sdg);
            let _ = write!(out, ",{count},{}", format_percent(count, t.total));
        }
        out.push('\n');
    }
    out
}

pub fn rates_json(sides: &[(&str, &DetectionRateTable)]) -> String {
    let v: Vec<serde_json::Value> = sides
        .iter()
        .map(|(name, t)| {
            serde_json::json!({
                "side": name,
                "total": t.total,
                "top3": t.top(3),
                "rows": t.rows,
            })
        })
        .collect();
    serde_json::to_string_pretty(&v).expect("rates serialize") + "\n"
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Grouped bar chart: 17 groups, one bar per side, y axis in percent.
pub fn rates_svg(title: &str, sides: &[(&str, &DetectionRateTable)]) -> String {
    let (width, height) = (960.0, 420.0);
    let (left, right, top, bottom) = (60.0, 20.0, 50.0, 60.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    let max_rate = sides
        .iter()
        .flat_map(|(_, t)| t.rows.iter().map(|r| r.rate))
        .fold(0.0f64, f64::max);
    let y_max = ((max_rate / 10.0).ceil() * 10.0).max(10.0);
    let group_w = plot_w / 17.0;
    let bar_w = group_w * 0.8 / sides.len().max(1) as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        width / 2.0,
        xml_escape(title)
    );
    for step in 0..=5 {
        let v = y_max * step as f64 / 5.0;
        let y = top + plot_h - plot_h * v / y_max;
        let _ = writeln!(
            s,
            r##"<line x1="{left:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.0}</text>"##,
            left + plot_w,
            left - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{left:.2}" y1="{top:.2}" x2="{left:.2}" y2="{:.2}" stroke="black"/><line x1="{left:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        top + plot_h,
        top + plot_h,
        left + plot_w,
        top + plot_h
    );
    for sdg in 1..=17u8 {
        let gx = left + group_w * (sdg - 1) as f64 + group_w * 0.1;
        let mut g = format!(r#"<g id="sdg{sdg}">"#);
        for (i, (_, t)) in sides.iter().enumerate() {
            let rate = t.rows.iter().find(|r| r.sdg == sdg).map_or(0.0, |r| r.rate);
            let h = plot_h * rate / y_max;
            let _ = write!(
                g,
                r#"<rect x="{:.2}" y="{:.2}" width="{bar_w:.2}" height="{h:.2}" fill="{}"><title>SDG {sdg}: {rate:.2}%</title></rect>"#,
                gx + bar_w * i as f64,
                top + plot_h - h,
                PALETTE[i % PALETTE.len()]
            );
        }
        let _ = writeln!(
            s,
            r#"{g}<text x="{:.2}" y="{:.2}" text-anchor="middle">{sdg}</text></g>"#,
            gx + group_w * 0.4,
            top + plot_h + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">SDG</text>"#,
        left + plot_w / 2.0,
        height - 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">Detection rate (%)</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );
    for (i, (name, _)) in sides.iter().enumerate() {
        let x = left + 10.0 + 180.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="32" width="12" height="12" fill="{}"/><text x="{:.2}" y="43">{}</text>"#,
            PALETTE[i % PALETTE.len()],
            x + 16.0,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Table with one row per true label that has items, then a totals row.
/// Percents of as-expected counts whose expected output is empty are
/// bracketed.
pub fn fewshot_csv(report: &FewShotReport) -> String {
    let mut out = String::from(
        "label,n,expected,total_identification,total_identification_pct,as_expected,as_expected_pct,correct,correct_pct\n",
    );
    for r in report.compact_rows() {
        let expected = if r.expected.is_empty() { "{}".to_string() } else { format!("SDG{}", r.sdg) };
        let (ae, aep) = if r.as_expected_bracketed {
            (format!("[{}]", r.as_expected.count), format!("[{}]", r.as_expected.percent_string()))
        } else {
            (r.as_expected.count.to_string(), r.as_expected.percent_string())
        };
        let _ = writeln!(
            out,
            "SDG{},{},{expected},{},{},{ae},{aep},{},{}",
            r.sdg,
            r.n,
            r.total_identification.count,
            r.total_identification.percent_string(),
            r.correct.count,
            r.correct.percent_string()
        );
    }
    let t = &report.totals;
    let _ = writeln!(
        out,
        "Total,{},,{},{},{},{},{},{}",
        t.n,
        t.total_identification,
        t.items_with_any.percent_string(),
        t.as_expected.count,
        t.as_expected.percent_string(),
        t.correct.count,
        t.correct.percent_string()
    );
    let _ = writeln!(out, "Average per identified item,{:.2},,,,,,,", report.avg_per_identified);
    out
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

/// `id,labels` rows with semicolon-joined labels.
pub fn detections_csv<'a>(rows: impl IntoIterator<Item = (&'a str, SdgLabelSet)>) -> String {
    let mut out = String::from("id,labels\n");
    for (id, labels) in rows {
        let _ = writeln!(out, "{},{}", csv_field(id), labels.to_semicolon_string());
    }
    out
}

#[derive(Deserialize)]
struct DetectionLine {
    id: String,
    #[serde(default)]
    labels: SdgLabelSet,
}

/// Reads `id,labels` CSV, or JSONL objects with `id` and `labels` fields
/// (e.g. LLM records) when the extension is `.jsonl`.
pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<(String, SdgLabelSet)>> {
    let path = path.as_ref();
    let io = |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    };
    let perr = |line: usize, message: String| ReportError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows = Vec::new();
    if path.extension().is_some_and(|e| e == "jsonl") {
        let file = fs::File::open(path).map_err(io)?;
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let d: DetectionLine = serde_json::from_str(&line).map_err(|e| perr(i + 1, e.to_string()))?;
            rows.push((d.id, d.labels));
        }
        return Ok(rows);
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| perr(0, e.to_string()))?;
    let headers = reader.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let (Some(id_col), Some(label_col)) = (col("id"), col("labels")) else {
        return Err(perr(1, "expected `id` and `labels` columns".into()));
    };
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| perr(line, e.to_string()))?;
        let labels = SdgLabelSet::parse_list(rec.get(label_col).unwrap_or(""))
            .map_err(|e: ParseLabelError| perr(line, e.to_string()))?;
        rows.push((rec.get(id_col).unwrap_or("").to_string(), labels));
    }
    Ok(rows)
}

pub fn write_file(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| ReportError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}
