//! Standalone SVG line charts of node series with flagged steps marked.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use graphvrnn::detection::DetectionReport;
use graphvrnn::GraphSeries;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];
const FLAG_COLOR: &str = "#d62728";

/// Up to `limit` nodes ordered by how often they were localized, then by
/// index; falls back to the first nodes when nothing was localized.
pub fn default_nodes(report: &DetectionReport, nodes: usize, limit: usize) -> Vec<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for hits in &report.localized {
        for h in hits {
            *counts.entry(h.node).or_default() += 1;
        }
    }
    let mut ranked: Vec<(usize, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out: Vec<usize> = ranked.into_iter().map(|(n, _)| n).take(limit).collect();
    if out.is_empty() {
        out = (0..nodes.min(limit)).collect();
    }
    out
}

pub struct PlotData {
    pub nodes: Vec<usize>,
    pub channel: usize,
    /// Series step of report row 0.
    pub start: usize,
    /// `values[i][t]` for `nodes[i]`.
    pub values: Vec<Vec<f64>>,
    pub flags: Vec<bool>,
}

impl PlotData {
    pub fn new(series: &GraphSeries, report: &DetectionReport, start: usize, nodes: &[usize], channel: usize) -> Result<Self, String> {
        if start + report.len() > series.len() {
            return Err(format!(
                "report covers steps {start}..{} but the series has {}",
                start + report.len(),
                series.len()
            ));
        }
        if channel >= series.channels() {
            return Err(format!("channel {channel} out of range ({} channels)", series.channels()));
        }
        if let Some(&n) = nodes.iter().find(|&&n| n >= series.nodes()) {
            return Err(format!("node {n} out of range ({} nodes)", series.nodes()));
        }
        let values = nodes
            .iter()
            .map(|&n| (0..report.len()).map(|t| series.get(start + t, channel, n)).collect())
            .collect();
        Ok(Self { nodes: nodes.to_vec(), channel, start, values, flags: report.flags.clone() })
    }

    /// `t,node,value,flagged`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,node,value,flagged")?;
        for (i, node) in self.nodes.iter().enumerate() {
            for (t, v) in self.values[i].iter().enumerate() {
                writeln!(out, "{},{node},{v},{}", self.start + t, self.flags[t] as u8)?;
            }
        }
        Ok(())
    }

    pub fn svg(&self) -> String {
        let len = self.flags.len().max(2);
        let (lo, hi) = self
            .values
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0), lo.max(0.0) + 1.0) };
        let x = |t: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * t as f64 / (len - 1) as f64;
        let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<g stroke="black" stroke-width="1"><line x1="{MARGIN}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{b}"/></g>"#,
            b = HEIGHT - MARGIN,
            r = WIDTH - MARGIN
        );
        let _ = writeln!(
            s,
            r#"<g font-family="sans-serif" font-size="11"><text x="{MARGIN}" y="{}">{}</text><text x="{}" y="{}" text-anchor="end">{}</text><text x="4" y="{}">{hi:.3}</text><text x="4" y="{}">{lo:.3}</text></g>"#,
            HEIGHT - MARGIN + 16.0,
            self.start,
            WIDTH - MARGIN,
            HEIGHT - MARGIN + 16.0,
            self.start + self.flags.len().saturating_sub(1),
            MARGIN + 4.0,
            HEIGHT - MARGIN,
        );
        for (i, node) in self.nodes.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let points: Vec<String> =
                self.values[i].iter().enumerate().map(|(t, &v)| format!("{:.2},{:.2}", x(t), y(v))).collect();
            let _ = writeln!(
                s,
                r#"<polyline class="series" data-node="{node}" fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                points.join(" ")
            );
            for (t, &v) in self.values[i].iter().enumerate() {
                if self.flags[t] {
                    let _ = writeln!(
                        s,
                        r#"<circle class="flag" data-node="{node}" data-t="{}" cx="{:.2}" cy="{:.2}" r="2.5" fill="{FLAG_COLOR}"/>"#,
                        self.start + t,
                        x(t),
                        y(v)
                    );
                }
            }
            let _ = writeln!(
                s,
                r#"<text font-family="sans-serif" font-size="11" x="{}" y="{}" fill="{color}">node {node} ch {}</text>"#,
                WIDTH - MARGIN - 90.0,
                MARGIN + 14.0 * i as f64,
                self.channel
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
