//! SVG renderings of a capacity report: the two-input capacity matrix and the
//! per-degree stacked bar plot. Both carry a `total / max` badge.
//!
//! Every drawn quantity is also written to a `data-*` attribute with the
//! shortest round-trip formatting, so tests and scripts can read exact values back.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{format_max, CapacityReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    CapacityMatrix,
    CapacityBarPlot,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matrix" | "capacity-matrix" => Ok(PlotKind::CapacityMatrix),
            "bars" | "bar" | "capacity-bar-plot" => Ok(PlotKind::CapacityBarPlot),
            other => Err(Error::Parse(format!("unknown plot kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotOptions {
    /// Capacity mapped to the lightest colour.
    pub color_min: f64,
    /// Capacity mapped to the darkest colour.
    pub color_max: f64,
    /// Highest total degree drawn; defaults to the report's `d_max`.
    pub degree_cap: Option<u32>,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            color_min: 0.0,
            color_max: 1.0,
            degree_cap: None,
        }
    }
}

/// Capacities of one total degree split by how many inputs a term involves.
/// The constant term counts as a single-variable term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeSum {
    pub degree: u32,
    pub single: f64,
    pub two: f64,
    pub higher: f64,
}

impl DegreeSum {
    pub fn total(&self) -> f64 {
        self.single + self.two + self.higher
    }
}

/// Capacity used for drawing: corrected when available, raw otherwise.
fn shown(v: &crate::capacity::CapacityValue) -> f64 {
    v.corrected.unwrap_or(v.raw)
}

fn cap_degree(report: &CapacityReport, opts: &PlotOptions) -> u32 {
    let d = report.basis.d_max;
    opts.degree_cap.map_or(d, |c| c.min(d))
}

pub fn degree_sums(report: &CapacityReport, opts: &PlotOptions) -> Vec<DegreeSum> {
    let cap = cap_degree(report, opts);
    let mut out: Vec<DegreeSum> = (0..=cap)
        .map(|degree| DegreeSum {
            degree,
            single: 0.0,
            two: 0.0,
            higher: 0.0,
        })
        .collect();
    for v in &report.values {
        let d = v.index.total_degree();
        if d > cap {
            continue;
        }
        let slot = &mut out[d as usize];
        match v.index.n_active() {
            0 | 1 => slot.single += shown(v),
            2 => slot.two += shown(v),
            _ => slot.higher += shown(v),
        }
    }
    out
}

/// `"T / M"` with the corrected total to two decimals.
pub fn badge_text(report: &CapacityReport) -> String {
    format!(
        "{:.2} / {}",
        report.total_corrected,
        format_max(report.max_capacity)
    )
}

/// Linear white → dark-blue scale clamped to `[color_min, color_max]`.
fn color(v: f64, opts: &PlotOptions) -> String {
    let span = opts.color_max - opts.color_min;
    let t = if span > 0.0 {
        ((v - opts.color_min) / span).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(255.0, 8.0),
        lerp(255.0, 48.0),
        lerp(255.0, 107.0)
    )
}

const GRAY: &str = "#bfbfbf";
const FONT: &str = "font-family=\"sans-serif\"";

fn badge(svg: &mut String, cx: f64, cy: f64, report: &CapacityReport) {
    let _ = writeln!(
        svg,
        "<g class=\"badge\" data-total=\"{}\" data-max=\"{}\"><circle cx=\"{cx}\" cy=\"{cy}\" r=\"38\" fill=\"#ffffff\" stroke=\"#333333\" stroke-width=\"2\"/><text x=\"{cx}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"13\">{}</text></g>",
        report.total_corrected,
        report.max_capacity,
        cy + 4.5,
        badge_text(report)
    );
}

fn open_svg(w: f64, h: f64, kind: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" data-kind=\"{kind}\">"
    );
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>");
    s
}

/// Heatmap of `C(l₁, l₂)` for a two-input report; cells beyond `d_max` are gray.
pub fn capacity_matrix_svg(report: &CapacityReport, opts: &PlotOptions) -> Result<String> {
    if report.basis.q != 2 {
        return Err(Error::invalid(format!(
            "the capacity matrix needs two inputs, report has {}",
            report.basis.q
        )));
    }
    let cap = cap_degree(report, opts);
    let n = cap as usize + 1;
    let mut grid = vec![vec![None; n]; n];
    for v in &report.values {
        let d = v.index.degrees();
        let (a, b) = (d[0] as usize, d[1] as usize);
        if a < n && b < n && d[0] + d[1] <= cap {
            grid[a][b] = Some(shown(v));
        }
    }
    let cell = 40.0;
    let (left, top) = (60.0, 30.0);
    let side = cell * n as f64;
    let legend_x = left + side + 30.0;
    let width = legend_x + 130.0;
    let height = top + side + 60.0;
    let mut s = open_svg(width, height, "capacity-matrix");
    for (l1, col) in grid.iter().enumerate() {
        for (l2, val) in col.iter().enumerate() {
            let x = left + l1 as f64 * cell;
            let y = top + side - (l2 + 1) as f64 * cell;
            match val {
                Some(c) => {
                    let _ = writeln!(
                        s,
                        "<rect class=\"cell\" x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{}\" stroke=\"#ffffff\" data-l1=\"{l1}\" data-l2=\"{l2}\" data-capacity=\"{c}\"><title>C({l1},{l2}) = {c:.4}</title></rect>",
                        color(*c, opts)
                    );
                    let ink = if (c - opts.color_min) / (opts.color_max - opts.color_min) > 0.55 {
                        "#ffffff"
                    } else {
                        "#000000"
                    };
                    let _ = writeln!(
                        s,
                        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"10\" fill=\"{ink}\">{c:.2}</text>",
                        x + cell / 2.0,
                        y + cell / 2.0 + 3.5
                    );
                }
                None => {
                    let _ = writeln!(
                        s,
                        "<rect class=\"invalid\" x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{GRAY}\" stroke=\"#ffffff\" data-l1=\"{l1}\" data-l2=\"{l2}\"/>"
                    );
                }
            }
        }
    }
    for i in 0..n {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"11\">{i}</text>",
            left + (i as f64 + 0.5) * cell,
            top + side + 15.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" {FONT} font-size=\"11\">{i}</text>",
            left - 6.0,
            top + side - (i as f64 + 0.5) * cell + 4.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"12\">degree in u1</text>",
        left + side / 2.0,
        top + side + 35.0
    );
    let _ = writeln!(
        s,
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"12\" transform=\"rotate(-90 18 {})\">degree in u2</text>",
        top + side / 2.0,
        top + side / 2.0
    );
    // Colour bar.
    let bar_h = side.min(200.0);
    for i in 0..20 {
        let t = (19 - i) as f64 / 19.0;
        let v = opts.color_min + t * (opts.color_max - opts.color_min);
        let _ = writeln!(
            s,
            "<rect x=\"{legend_x}\" y=\"{}\" width=\"14\" height=\"{}\" fill=\"{}\"/>",
            top + i as f64 * bar_h / 20.0,
            bar_h / 20.0,
            color(v, opts)
        );
    }
    for (v, y) in [(opts.color_max, top + 4.0), (opts.color_min, top + bar_h)] {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{y}\" {FONT} font-size=\"10\">{v}</text>",
            legend_x + 18.0
        );
    }
    badge(&mut s, legend_x + 60.0, top + bar_h + 55.0, report);
    s.push_str("</svg>\n");
    Ok(s)
}

/// Stacked bars of summed capacity per total degree: single-variable terms at
/// the bottom, then two-variable interactions, then higher-order interactions.
pub fn capacity_bar_svg(report: &CapacityReport, opts: &PlotOptions) -> Result<String> {
    let sums = degree_sums(report, opts);
    let ymax = sums.iter().map(DegreeSum::total).fold(0.0, f64::max);
    let ymax = if ymax > 0.0 { ymax * 1.1 } else { 1.0 };
    let (left, top, plot_h) = (60.0, 30.0, 260.0);
    let bar_w = 26.0;
    let step = 36.0;
    let plot_w = step * sums.len() as f64 + 10.0;
    let width = left + plot_w + 180.0;
    let height = top + plot_h + 60.0;
    let scale = plot_h / ymax;
    let mut s = open_svg(width, height, "capacity-bar-plot");
    let base = top + plot_h;
    let _ = writeln!(
        s,
        "<line x1=\"{left}\" y1=\"{base}\" x2=\"{}\" y2=\"{base}\" stroke=\"#000000\"/><line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{base}\" stroke=\"#000000\"/>",
        left + plot_w
    );
    for i in 0..=4 {
        let v = ymax * i as f64 / 4.0;
        let y = base - v * scale;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" {FONT} font-size=\"10\">{v:.2}</text>",
            left - 5.0,
            y + 3.5
        );
    }
    let colors = ["#4c72b0", "#dd8452", "#55a868"];
    for (i, d) in sums.iter().enumerate() {
        let x = left + 10.0 + i as f64 * step;
        let _ = writeln!(
            s,
            "<g class=\"bar\" data-degree=\"{}\" data-single=\"{}\" data-two=\"{}\" data-higher=\"{}\" data-total=\"{}\">",
            d.degree,
            d.single,
            d.two,
            d.higher,
            d.total()
        );
        let mut y = base;
        for (part, c) in [d.single, d.two, d.higher].iter().zip(colors) {
            let h = part.max(0.0) * scale;
            if h > 0.0 {
                y -= h;
                let _ = writeln!(
                    s,
                    "<rect x=\"{x}\" y=\"{y}\" width=\"{bar_w}\" height=\"{h}\" fill=\"{c}\"/>"
                );
            }
        }
        let _ = writeln!(
            s,
            "<text class=\"bar-label\" x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"9\">{:.3}</text>",
            x + bar_w / 2.0,
            y - 4.0,
            d.total()
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"11\">{}</text></g>",
            x + bar_w / 2.0,
            base + 15.0,
            d.degree
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"12\">total degree</text>",
        left + plot_w / 2.0,
        base + 35.0
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" {FONT} font-size=\"12\" transform=\"rotate(-90 16 {})\">capacity</text>",
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );
    let lx = left + plot_w + 20.0;
    for (i, (label, c)) in ["single variable", "two variables", "three or more"]
        .iter()
        .zip(colors)
        .enumerate()
    {
        let y = top + 10.0 + i as f64 * 18.0;
        let _ = writeln!(
            s,
            "<rect x=\"{lx}\" y=\"{y}\" width=\"12\" height=\"12\" fill=\"{c}\"/><text x=\"{}\" y=\"{}\" {FONT} font-size=\"11\">{label}</text>",
            lx + 18.0,
            y + 10.0
        );
    }
    badge(&mut s, lx + 60.0, top + 130.0, report);
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render(report: &CapacityReport, kind: PlotKind, opts: &PlotOptions) -> Result<String> {
    match kind {
        PlotKind::CapacityMatrix => capacity_matrix_svg(report, opts),
        PlotKind::CapacityBarPlot => capacity_bar_svg(report, opts),
    }
}
