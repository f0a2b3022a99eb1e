//! Deterministic SVG rendering of sweep summaries and the demo series.
//!
//! Output depends only on the input values; numbers are written with fixed
//! precision so identical inputs give byte-identical files.

use std::fmt::Write;

use crate::envs::DomainId;
use crate::forecast::Algorithm;
use crate::harness::{DemoOutput, SummaryRow};

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 240.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 40.0;
const LEGEND_H: f64 = 28.0;
/// Lines with more points than this are drawn without point markers.
const MAX_LINE_MARKERS: usize = 50;

fn color(algorithm: Algorithm) -> &'static str {
    match algorithm {
        Algorithm::Open => "#1b9e77",
        Algorithm::ProWls => "#d95f02",
        Algorithm::Wis => "#7570b3",
        Algorithm::Swis => "#e7298a",
        Algorithm::NaiveAr => "#66a61e",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Points,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub style: Style,
    pub points: Vec<(f64, f64)>,
    /// Symmetric error bar half-widths, one per point.
    pub errors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Dashed vertical marker.
    pub marker: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (lo, hi) = values
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !lo.is_finite() {
            return Range { lo: 0.0, hi: 1.0 };
        }
        if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
            let pad = 0.5 * lo.abs().max(1.0);
            return Range { lo: lo - pad, hi: hi + pad };
        }
        Range { lo, hi }
    }

    fn padded(self) -> Self {
        let pad = 0.04 * (self.hi - self.lo);
        Range { lo: self.lo - pad, hi: self.hi + pad }
    }

    fn ticks(&self) -> Vec<f64> {
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        (first..=last).map(|k| k as f64 * step).collect()
    }
}

fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Panel {
    fn render(&self, out: &mut String, ox: f64, oy: f64) {
        let xr = Range::of(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).chain(self.marker)).padded();
        let yr = Range::of(self.series.iter().flat_map(|s| {
            s.points.iter().enumerate().flat_map(move |(k, p)| {
                let e = s.errors.as_ref().map_or(0.0, |e| e[k]);
                [p.1 - e, p.1 + e]
            })
        }))
        .padded();
        let (x0, x1) = (ox + MARGIN_L, ox + PANEL_W - MARGIN_R);
        let (y0, y1) = (oy + PANEL_H - MARGIN_B, oy + MARGIN_T);
        let sx = |x: f64| x0 + (x - xr.lo) / (xr.hi - xr.lo) * (x1 - x0);
        let sy = |y: f64| y0 + (y - yr.lo) / (yr.hi - yr.lo) * (y1 - y0);

        let _ = writeln!(out, r##"<g>"##);
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"##,
            (x0 + x1) / 2.0,
            oy + 18.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
            x1 - x0,
            y0 - y1
        );
        for t in xr.ticks() {
            let x = sx(t);
            let _ =
                writeln!(out, r##"<line x1="{x:.1}" y1="{y0:.1}" x2="{x:.1}" y2="{:.1}" stroke="#333"/>"##, y0 + 4.0);
            let _ = writeln!(
                out,
                r##"<text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"##,
                y0 + 15.0,
                fmt_num(t)
            );
        }
        for t in yr.ticks() {
            let y = sy(t);
            let _ =
                writeln!(out, r##"<line x1="{:.1}" y1="{y:.1}" x2="{x0:.1}" y2="{y:.1}" stroke="#333"/>"##, x0 - 4.0);
            let _ = writeln!(
                out,
                r##"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"##,
                x0 - 6.0,
                y + 3.0,
                fmt_num(t)
            );
        }
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"##,
            (x0 + x1) / 2.0,
            y0 + 32.0,
            escape(&self.x_label)
        );
        let (lx, ly) = (ox + 14.0, (y0 + y1) / 2.0);
        let _ = writeln!(
            out,
            r##"<text x="{lx:.1}" y="{ly:.1}" text-anchor="middle" font-size="11" transform="rotate(-90 {lx:.1} {ly:.1})">{}</text>"##,
            escape(&self.y_label)
        );
        if let Some(m) = self.marker {
            let x = sx(m);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.1}" y1="{y0:.1}" x2="{x:.1}" y2="{y1:.1}" stroke="#999" stroke-dasharray="4 3"/>"##
            );
        }
        for s in &self.series {
            let pts: Vec<(f64, f64)> = s.points.iter().map(|&(x, y)| (sx(x), sy(y))).collect();
            if let Some(errs) = &s.errors {
                for ((x, y), e) in s.points.iter().zip(errs) {
                    let (px, lo, hi) = (sx(*x), sy(y - e), sy(y + e));
                    let _ = writeln!(
                        out,
                        r##"<line class="err" x1="{px:.1}" y1="{lo:.1}" x2="{px:.1}" y2="{hi:.1}" stroke="{}"/>"##,
                        s.color
                    );
                }
            }
            if s.style == Style::Line && pts.len() > 1 {
                let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
                let _ = writeln!(
                    out,
                    r##"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"##,
                    path.join(" "),
                    s.color
                );
            }
            if s.style == Style::Line && pts.len() > MAX_LINE_MARKERS {
                continue;
            }
            let radius = if s.style == Style::Points { 1.5 } else { 3.0 };
            for (x, y) in &pts {
                let _ = writeln!(out, r##"<circle cx="{x:.1}" cy="{y:.1}" r="{radius}" fill="{}"/>"##, s.color);
            }
        }
        let _ = writeln!(out, "</g>");
    }
}

fn legend_step(label: &str) -> f64 {
    24.0 + 7.0 * label.chars().count() as f64
}

fn legend(out: &mut String, entries: &[(String, String)], y: f64) {
    let mut x = MARGIN_L;
    for (label, color) in entries {
        let _ = writeln!(out, r##"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{color}"/>"##, y - 10.0);
        let _ = writeln!(out, r##"<text x="{:.1}" y="{y:.1}" font-size="11">{}</text>"##, x + 16.0, escape(label));
        x += legend_step(label);
    }
}

/// Lays out panels on a grid of `cols` columns with an optional legend.
pub fn figure(panels: &[Panel], cols: usize, legend_entries: &[(String, String)]) -> String {
    let cols = cols.max(1);
    let rows = panels.len().div_ceil(cols).max(1);
    let legend_w: f64 = MARGIN_L + legend_entries.iter().map(|(l, _)| legend_step(l)).sum::<f64>();
    let width = (PANEL_W * cols as f64).max(legend_w);
    let height = PANEL_H * rows as f64 + LEGEND_H;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"##
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="white"/>"##);
    for (k, panel) in panels.iter().enumerate() {
        panel.render(&mut out, (k % cols) as f64 * PANEL_W, (k / cols) as f64 * PANEL_H);
    }
    legend(&mut out, legend_entries, height - 10.0);
    out.push_str("</svg>\n");
    out
}

/// Bias panels (top row) and MSE panels (bottom row), one column per domain,
/// speed on the x axis and one line per algorithm with standard-error bars.
/// An empty summary yields a single pair of empty axes.
pub fn sweep_figure(summary: &[SummaryRow]) -> String {
    let mut domains: Vec<DomainId> = summary.iter().map(|r| r.domain).collect();
    domains.sort();
    domains.dedup();
    let mut algorithms: Vec<Algorithm> = summary.iter().map(|r| r.algorithm).collect();
    algorithms.sort();
    algorithms.dedup();

    let panel = |domain: Option<DomainId>, mse: bool| {
        let name = domain.map_or(String::from("no data"), |d| d.to_string());
        let series = algorithms
            .iter()
            .filter_map(|&alg| {
                let mut cells: Vec<&SummaryRow> =
                    summary.iter().filter(|r| Some(r.domain) == domain && r.algorithm == alg && r.n_ok > 0).collect();
                cells.sort_by(|a, b| a.speed.total_cmp(&b.speed));
                if cells.is_empty() {
                    return None;
                }
                Some(Series {
                    label: alg.to_string(),
                    color: color(alg).into(),
                    style: Style::Line,
                    points: cells.iter().map(|r| (r.speed, if mse { r.mse } else { r.abs_bias })).collect(),
                    errors: Some(cells.iter().map(|r| if mse { r.se_mse } else { r.se_bias }).collect()),
                })
            })
            .collect();
        Panel {
            title: format!("{name}: {}", if mse { "MSE" } else { "absolute bias" }),
            x_label: "speed".into(),
            y_label: if mse { "MSE".into() } else { "|bias|".into() },
            series,
            marker: None,
        }
    };

    let columns: Vec<Option<DomainId>> =
        if domains.is_empty() { vec![None] } else { domains.into_iter().map(Some).collect() };
    let mut panels: Vec<Panel> = columns.iter().map(|d| panel(*d, false)).collect();
    panels.extend(columns.iter().map(|d| panel(*d, true)));
    let legend_entries: Vec<(String, String)> =
        algorithms.iter().map(|a| (a.to_string(), color(*a).to_string())).collect();
    figure(&panels, columns.len(), &legend_entries)
}

fn indexed(start: usize, values: &[f64]) -> Vec<(f64, f64)> {
    values.iter().enumerate().map(|(k, v)| ((start + k) as f64, *v)).collect()
}

/// The three demo panels: true performance with the deployment boundary, the
/// raw per-episode estimates, and the denoised series with the forecast.
pub fn demo_figures(demo: &DemoOutput) -> [String; 3] {
    let boundary = Some(demo.n as f64 + 0.5);
    let truth = Series {
        label: "true J".into(),
        color: "#333333".into(),
        style: Style::Line,
        points: indexed(1, &demo.true_j),
        errors: None,
    };
    let past_truth = Series { points: indexed(1, &demo.true_j[..demo.n]), ..truth.clone() };
    let raw = Series {
        label: "PDIS estimate".into(),
        color: "#7570b3".into(),
        style: Style::Points,
        points: indexed(1, &demo.j_hat),
        errors: None,
    };
    let denoised = Series {
        label: "denoised".into(),
        color: "#1b9e77".into(),
        style: Style::Line,
        points: indexed(demo.denoised_start, &demo.denoised),
        errors: None,
    };
    let forecast = Series {
        label: "OPEN forecast".into(),
        color: "#d95f02".into(),
        style: Style::Line,
        points: indexed(demo.n + 1, &demo.forecast),
        errors: None,
    };
    let title = |what: &str| format!("{} speed {}: {what}", demo.domain, fmt_num(demo.speed));
    let entries = |s: &[&Series]| s.iter().map(|s| (s.label.clone(), s.color.clone())).collect::<Vec<_>>();
    let panel = |what: &str, series: Vec<Series>| Panel {
        title: title(what),
        x_label: "episode".into(),
        y_label: "performance".into(),
        series,
        marker: boundary,
    };
    [
        figure(&[panel("true performance", vec![truth.clone()])], 1, &entries(&[&truth])),
        figure(
            &[panel("per-episode estimates", vec![raw.clone(), past_truth.clone()])],
            1,
            &entries(&[&raw, &past_truth]),
        ),
        figure(
            &[panel("denoised and forecast", vec![raw.clone(), denoised.clone(), forecast.clone(), truth.clone()])],
            1,
            &entries(&[&raw, &denoised, &forecast, &truth]),
        ),
    ]
}
