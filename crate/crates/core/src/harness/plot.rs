//! Self-contained SVG plot of a metric against achieved edge density.
//!
//! One panel per method, one polyline per (regime, topology): solid for the
//! isotropic regime, dashed for anisotropic, colored by topology. Panels share
//! the y axis.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use super::{Aggregate, Arm, Regime, SweepResult};
use crate::error::{Error, Result};
use crate::graphs::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotMetric {
    Selectivity,
    Alignment,
    R2Global,
}

impl PlotMetric {
    pub const ALL: [PlotMetric; 3] = [PlotMetric::Selectivity, PlotMetric::Alignment, PlotMetric::R2Global];

    pub fn label(self) -> &'static str {
        match self {
            PlotMetric::Selectivity => "selectivity",
            PlotMetric::Alignment => "alignment",
            PlotMetric::R2Global => "r2_global",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "selectivity" => Some(PlotMetric::Selectivity),
            "alignment" => Some(PlotMetric::Alignment),
            "r2" | "r2_global" => Some(PlotMetric::R2Global),
            _ => None,
        }
    }

    fn value(self, a: &Aggregate) -> f64 {
        match self {
            PlotMetric::Selectivity => a.selectivity.mean,
            PlotMetric::Alignment => a.alignment.mean,
            PlotMetric::R2Global => a.r2_global.mean,
        }
    }
}

const PANEL_W: f64 = 300.0;
const PANEL_H: f64 = 220.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 34.0;
const BOTTOM: f64 = 44.0;
const LEGEND_W: f64 = 170.0;

fn color(topology: &str) -> &'static str {
    match Topology::parse(topology) {
        Some(Topology::ErdosRenyi) => "#1f77b4",
        Some(Topology::BarabasiAlbert) => "#d62728",
        Some(Topology::WattsStrogatz) => "#2ca02c",
        None => "#7f7f7f",
    }
}

fn dashed(regime: &str) -> bool {
    Regime::parse(regime) == Some(Regime::Anisotropic)
}

/// Tick positions covering `[lo, hi]` with a 1/2/5 step.
fn ticks(lo: f64, hi: f64) -> (f64, f64, Vec<f64>) {
    let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) * 0.1 };
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).floor() * step;
    let end = (hi / step).ceil() * step;
    let end = if end > start { end } else { start + step };
    let count = ((end - start) / step).round() as usize;
    let marks = (0..=count).map(|i| start + step * i as f64).collect();
    (start, end, marks)
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.2}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

type Series = Vec<(f64, f64)>;

/// SVG document of `metric` against achieved density.
pub fn emit_density_plot(result: &SweepResult, metric: PlotMetric) -> Result<String> {
    // method -> (regime, topology) -> points
    let mut panels: BTreeMap<(Option<Arm>, String), BTreeMap<(Option<Regime>, String, Option<Topology>, String), Series>> =
        BTreeMap::new();
    let mut densities: Vec<f64> = Vec::new();
    for a in &result.by_density {
        let (x, y) = (a.achieved_density, metric.value(a));
        if !x.is_finite() || !y.is_finite() {
            continue;
        }
        densities.push(a.target_density.unwrap_or(x));
        panels
            .entry((Arm::parse(&a.method), a.method.clone()))
            .or_default()
            .entry((
                Regime::parse(&a.regime),
                a.regime.clone(),
                Topology::parse(&a.topology),
                a.topology.clone(),
            ))
            .or_default()
            .push((x, y));
    }
    densities.sort_by(f64::total_cmp);
    densities.dedup();
    if panels.is_empty() {
        return Err(Error::InsufficientData(format!("no finite {} values", metric.label())));
    }
    if densities.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 densities, found {}",
            densities.len()
        )));
    }
    for series in panels.values_mut().flat_map(|p| p.values_mut()) {
        series.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    let all = panels.values().flat_map(|p| p.values()).flatten();
    let (mut xlo, mut xhi, mut ylo, mut yhi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in all {
        xlo = xlo.min(x);
        xhi = xhi.max(x);
        ylo = ylo.min(y);
        yhi = yhi.max(y);
    }
    let (x0, x1, xticks) = ticks(xlo, xhi);
    let (y0, y1, yticks) = ticks(ylo, yhi);

    let cell_w = LEFT + PANEL_W + RIGHT;
    let width = cell_w * panels.len() as f64 + LEGEND_W;
    let height = TOP + PANEL_H + BOTTOM;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);

    let mut legend = BTreeSet::new();
    for (i, ((_, method), series)) in panels.iter().enumerate() {
        let ox = i as f64 * cell_w + LEFT;
        let oy = TOP;
        let sx = |x: f64| ox + (x - x0) / (x1 - x0) * PANEL_W;
        let sy = |y: f64| oy + PANEL_H - (y - y0) / (y1 - y0) * PANEL_H;
        let _ = writeln!(svg, r#"<g class="panel" data-method="{method}">"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{method}</text>"#,
            ox + PANEL_W / 2.0,
            oy - 12.0
        );
        for &t in &xticks {
            let x = sx(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{oy}" x2="{x:.2}" y2="{}" stroke="#e5e5e5"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
                oy + PANEL_H,
                oy + PANEL_H + 15.0,
                fmt_tick(t)
            );
        }
        for &t in &yticks {
            let y = sy(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{ox}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#e5e5e5"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                ox + PANEL_W,
                ox - 6.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            svg,
            r#"<rect x="{ox}" y="{oy}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">achieved density</text>"#,
            ox + PANEL_W / 2.0,
            oy + PANEL_H + 34.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">{}</text>"#,
            ox - 42.0,
            oy + PANEL_H / 2.0,
            ox - 42.0,
            oy + PANEL_H / 2.0,
            metric.label()
        );
        for (key, pts) in series {
            legend.insert(key.clone());
            let (_, regime, _, topology) = key;
            let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let dash = if dashed(regime) { r#" stroke-dasharray="6,4""# } else { "" };
            let _ = writeln!(
                svg,
                r#"<polyline class="series" data-regime="{regime}" data-topology="{topology}" points="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"#,
                coords.join(" "),
                color(topology)
            );
            for &(x, y) in pts {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#,
                    sx(x),
                    sy(y),
                    color(topology)
                );
            }
        }
        svg.push_str("</g>\n");
    }

    let lx = cell_w * panels.len() as f64 + 8.0;
    let _ = writeln!(svg, r#"<g class="legend">"#);
    for (i, (_, regime, _, topology)) in legend.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let dash = if dashed(regime) { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"{dash}/><text x="{}" y="{}">{topology} {regime}</text>"#,
            lx + 28.0,
            color(topology),
            lx + 34.0,
            y + 4.0
        );
    }
    svg.push_str("</g>\n</svg>\n");
    Ok(svg)
}
