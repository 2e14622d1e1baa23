//! CSV summaries and SVG charts.
//!
//! The accuracy chart groups bars per model with one bar per prompt mode
//! (zero-shot purple, one-shot dark blue, few-shot light blue); the ablation
//! charts show signed relative changes against the baseline arm, one panel
//! for the C sweep and one for the H sweep.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::RunReport;
use crate::{Error, Result};

pub const COLOR_ZERO_SHOT: &str = "#7d3c98"; // purple
pub const COLOR_ONE_SHOT: &str = "#1f3a93"; // dark blue
pub const COLOR_FEW_SHOT: &str = "#7fb3d5"; // light blue
const COLOR_AXIS: &str = "#2c3e50";
const COLOR_GRID: &str = "#d5d8dc";

pub fn shot_color(shots: &str) -> &'static str {
    match shots {
        "one" => COLOR_ONE_SHOT,
        "few" => COLOR_FEW_SHOT,
        _ => COLOR_ZERO_SHOT,
    }
}

/// One per-run CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub model: String,
    pub dataset: String,
    pub shots: String,
    pub c: usize,
    pub h: usize,
    pub run: u32,
    pub acc1: f64,
    pub acc3: f64,
    pub acc5: f64,
    pub n: usize,
    pub empty_count: usize,
    pub halluc_count: usize,
}

impl CsvRow {
    pub fn from_report(r: &RunReport) -> Self {
        CsvRow {
            model: r.model.clone(),
            dataset: r.dataset.clone(),
            shots: r.shots.clone(),
            c: r.c_size,
            h: r.h_size,
            run: r.run_index,
            acc1: r.acc.get(&1).copied().unwrap_or(0.0),
            acc3: r.acc.get(&3).copied().unwrap_or(0.0),
            acc5: r.acc.get(&5).copied().unwrap_or(0.0),
            n: r.n,
            empty_count: r.empty_count,
            halluc_count: r.halluc_count,
        }
    }
}

pub fn write_csv(path: &Path, rows: &[CsvRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Other(format!("csv: {e}")))?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::Other(format!("csv: {e}")))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Other(format!("csv: {e}")))?;
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        rows.push(rec.map_err(|e| Error::Other(format!("csv: {e}")))?);
    }
    Ok(rows)
}

/// One bar within a group.
#[derive(Debug, Clone)]
pub struct Bar {
    pub label: String,
    pub value: f64,
    pub color: String,
}

/// A labelled cluster of bars (e.g. one model).
#[derive(Debug, Clone)]
pub struct BarGroup {
    pub label: String,
    pub bars: Vec<Bar>,
}

/// Render a grouped bar chart. Handles negative values by anchoring bars at
/// the zero line, so the same renderer serves accuracies and relative
/// changes. Output is deterministic for identical input.
pub fn grouped_bar_svg(title: &str, y_label: &str, groups: &[BarGroup]) -> String {
    let margin_left = 70.0;
    let margin_right = 30.0;
    let margin_top = 50.0;
    let margin_bottom = 95.0;
    let bar_w = 18.0;
    let bar_gap = 4.0;
    let group_gap = 26.0;
    let bars_per_group = groups.iter().map(|g| g.bars.len()).max().unwrap_or(1) as f64;
    let group_w = bars_per_group * (bar_w + bar_gap) + group_gap;
    let plot_w = (groups.len() as f64 * group_w).max(220.0);
    let plot_h = 320.0;
    let width = margin_left + plot_w + margin_right;
    let height = margin_top + plot_h + margin_bottom;

    let mut y_min: f64 = 0.0;
    let mut y_max: f64 = 0.0;
    for bar in groups.iter().flat_map(|g| &g.bars) {
        y_min = y_min.min(bar.value);
        y_max = y_max.max(bar.value);
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_max = y_min + 1.0;
    }
    y_max += (y_max - y_min) * 0.08;
    if y_min < 0.0 {
        y_min -= (y_max - y_min) * 0.08;
    }
    let scale = plot_h / (y_max - y_min);
    let y_of = |v: f64| margin_top + (y_max - v) * scale;

    let mut svg = String::new();
    svg.push_str(&format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width:.0} {height:.0}" width="{width:.0}" height="{height:.0}" font-family="Helvetica, Arial, sans-serif">"#
    ));
    svg.push('\n');
    svg.push_str(&format!(
        r#"<text x="{:.1}" y="28" font-size="16" fill="{COLOR_AXIS}" text-anchor="middle">{}</text>"#,
        width / 2.0,
        escape(title)
    ));
    svg.push('\n');

    // horizontal gridlines at five even steps
    for step in 0..=5 {
        let v = y_min + (y_max - y_min) * step as f64 / 5.0;
        let y = y_of(v);
        svg.push_str(&format!(
            r#"<line x1="{margin_left:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{COLOR_GRID}" stroke-width="1"/>"#,
            margin_left + plot_w
        ));
        svg.push('\n');
        svg.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{COLOR_AXIS}" text-anchor="end">{v:.3}</text>"#,
            margin_left - 8.0,
            y + 4.0
        ));
        svg.push('\n');
    }
    // zero line
    let zero_y = y_of(0.0);
    svg.push_str(&format!(
        r#"<line x1="{margin_left:.1}" y1="{zero_y:.1}" x2="{:.1}" y2="{zero_y:.1}" stroke="{COLOR_AXIS}" stroke-width="1.5"/>"#,
        margin_left + plot_w
    ));
    svg.push('\n');
    svg.push_str(&format!(
        r#"<text x="18" y="{:.1}" font-size="12" fill="{COLOR_AXIS}" transform="rotate(-90 18 {:.1})" text-anchor="middle">{}</text>"#,
        margin_top + plot_h / 2.0,
        margin_top + plot_h / 2.0,
        escape(y_label)
    ));
    svg.push('\n');

    for (gi, group) in groups.iter().enumerate() {
        let gx = margin_left + gi as f64 * group_w + group_gap / 2.0;
        for (bi, bar) in group.bars.iter().enumerate() {
            let x = gx + bi as f64 * (bar_w + bar_gap);
            let top = y_of(bar.value.max(0.0));
            let bottom = y_of(bar.value.min(0.0));
            let h = (bottom - top).max(0.5);
            svg.push_str(&format!(
                r#"<rect x="{x:.1}" y="{top:.1}" width="{bar_w:.1}" height="{h:.1}" fill="{}"><title>{}: {:.4}</title></rect>"#,
                bar.color,
                escape(&format!("{} {}", group.label, bar.label)),
                bar.value
            ));
            svg.push('\n');
        }
        let label_x = gx + (bars_per_group * (bar_w + bar_gap)) / 2.0;
        let label_y = margin_top + plot_h + 14.0;
        svg.push_str(&format!(
            r#"<text x="{label_x:.1}" y="{label_y:.1}" font-size="11" fill="{COLOR_AXIS}" text-anchor="end" transform="rotate(-35 {label_x:.1} {label_y:.1})">{}</text>"#,
            escape(&group.label)
        ));
        svg.push('\n');
    }

    // legend from distinct bar labels, in first-appearance order
    let mut seen: Vec<(&str, &str)> = Vec::new();
    for bar in groups.iter().flat_map(|g| &g.bars) {
        if !seen.iter().any(|(l, _)| *l == bar.label) {
            seen.push((&bar.label, &bar.color));
        }
    }
    let legend_y = height - 16.0;
    let mut lx = margin_left;
    for (label, color) in seen {
        svg.push_str(&format!(
            r#"<rect x="{lx:.1}" y="{:.1}" width="12" height="12" fill="{color}"/>"#,
            legend_y - 10.0
        ));
        svg.push('\n');
        svg.push_str(&format!(
            r#"<text x="{:.1}" y="{legend_y:.1}" font-size="12" fill="{COLOR_AXIS}">{}</text>"#,
            lx + 16.0,
            escape(label)
        ));
        svg.push('\n');
        lx += 16.0 + 8.0 * label.len() as f64 + 24.0;
    }

    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Accuracy chart: one group per model, one bar per prompt mode.
pub fn accuracy_chart(rows: &[CsvRow], dataset: &str, k: usize) -> String {
    let mut models: Vec<&str> = rows.iter().map(|r| r.model.as_str()).collect();
    models.sort_unstable();
    models.dedup();
    let groups: Vec<BarGroup> = models
        .iter()
        .map(|model| {
            let bars = ["zero", "one", "few"]
                .iter()
                .filter_map(|shots| {
                    let values: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.model == *model && r.shots == *shots)
                        .map(|r| match k {
                            1 => r.acc1,
                            3 => r.acc3,
                            _ => r.acc5,
                        })
                        .collect();
                    if values.is_empty() {
                        return None;
                    }
                    Some(Bar {
                        label: format!("{shots}-shot"),
                        value: values.iter().sum::<f64>() / values.len() as f64,
                        color: shot_color(shots).to_string(),
                    })
                })
                .collect();
            BarGroup {
                label: model.to_string(),
                bars,
            }
        })
        .collect();
    grouped_bar_svg(
        &format!("ACC@{k} on {dataset}"),
        &format!("ACC@{k}"),
        &groups,
    )
}

/// Signed relative-change chart for one swept dimension of the ablation.
pub fn relative_change_chart(
    title: &str,
    arms: &[(String, f64)], // (arm label, relative change)
) -> String {
    let groups: Vec<BarGroup> = arms
        .iter()
        .map(|(label, value)| BarGroup {
            label: label.clone(),
            bars: vec![Bar {
                label: "rel. change".into(),
                value: *value,
                color: if *value < 0.0 {
                    "#c0392b".to_string()
                } else {
                    "#27ae60".to_string()
                },
            }],
        })
        .collect();
    grouped_bar_svg(title, "relative change vs baseline", &groups)
}
