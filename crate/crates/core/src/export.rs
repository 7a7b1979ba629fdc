//! CSV tables and self-contained SVG line plots.
//!
//! Floats are written in scientific notation with 17 significant digits, which
//! round-trips every `f64` exactly.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::census::{CensusReport, RecurrenceProfile};
use crate::error::{Error, Result};
use crate::invariants::{DriftRecord, DriftScaling};
use crate::pingpong_map::{NonInjectivityExample, OrbitTrace, PhaseStateTV};
use crate::torus_flow::DecompositionRow;

/// `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Domain(format!("csv: {e}"))
}

fn write_table<W: Write>(out: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

fn read_table<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitRow {
    pub step: usize,
    pub t: f64,
    pub e: f64,
    pub v: f64,
    pub w: f64,
    pub residual: f64,
}

pub fn orbit_rows(trace: &OrbitTrace) -> Vec<OrbitRow> {
    trace
        .states
        .iter()
        .zip(&trace.w_values)
        .zip(&trace.residuals)
        .enumerate()
        .map(|(step, ((s, &w), &residual))| OrbitRow {
            step,
            t: s.t,
            e: s.e,
            v: s.speed(),
            w,
            residual,
        })
        .collect()
}

pub fn write_orbit_csv<W: Write>(out: W, trace: &OrbitTrace) -> Result<()> {
    write_table(
        out,
        &["step", "t", "e", "v", "w", "residual"],
        orbit_rows(trace).into_iter().map(|r| {
            vec![
                r.step.to_string(),
                fmt_f64(r.t),
                fmt_f64(r.e),
                fmt_f64(r.v),
                fmt_f64(r.w),
                fmt_f64(r.residual),
            ]
        }),
    )
}

pub fn read_orbit_csv<R: Read>(input: R) -> Result<Vec<OrbitRow>> {
    read_table(input)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub e0: f64,
    pub drift: f64,
    pub delta_bound: f64,
    pub ratio: f64,
}

pub fn write_drift_csv<W: Write>(out: W, records: &[DriftRecord]) -> Result<()> {
    write_table(
        out,
        &["e0", "drift", "delta_bound", "ratio"],
        records
            .iter()
            .map(|r| vec![fmt_f64(r.e0), fmt_f64(r.drift), fmt_f64(r.delta_bound), fmt_f64(r.ratio())]),
    )
}

pub fn read_drift_csv<R: Read>(input: R) -> Result<Vec<DriftRow>> {
    read_table(input)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionCsvRow {
    pub set_id: usize,
    pub haar_estimate: f64,
    pub product_estimate: f64,
    pub diff: f64,
    pub three_sigma: f64,
    pub pass: bool,
}

pub fn write_decomposition_csv<W: Write>(out: W, rows: &[DecompositionRow]) -> Result<()> {
    write_table(
        out,
        &["set_id", "haar_estimate", "product_estimate", "diff", "three_sigma", "pass"],
        rows.iter().map(|r| {
            vec![
                r.set_id.to_string(),
                fmt_f64(r.haar_estimate),
                fmt_f64(r.product_estimate),
                fmt_f64(r.diff),
                fmt_f64(r.three_sigma),
                r.passes().to_string(),
            ]
        }),
    )
}

pub fn read_decomposition_csv<R: Read>(input: R) -> Result<Vec<DecompositionCsvRow>> {
    read_table(input)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub e0: f64,
    pub max_drift: f64,
}

pub fn write_drift_scaling_csv<W: Write>(out: W, scaling: &DriftScaling) -> Result<()> {
    write_table(
        out,
        &["e0", "max_drift"],
        scaling
            .energies
            .iter()
            .zip(&scaling.max_drift)
            .map(|(&e, &d)| vec![fmt_f64(e), fmt_f64(d)]),
    )
}

pub fn read_drift_scaling_csv<R: Read>(input: R) -> Result<Vec<ScalingRow>> {
    read_table(input)
}

/// One row per `(ω index, horizon)`; `omega_index` is empty for pooled rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensusRow {
    pub omega_index: Option<usize>,
    pub horizon: usize,
    pub escaping_candidate: usize,
    pub returned: usize,
    pub left_domain: usize,
    pub alive: usize,
    pub fraction: f64,
    pub sigma: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

pub fn census_rows(report: &CensusReport) -> Vec<CensusRow> {
    let per = report
        .per_omega
        .iter()
        .flat_map(|om| om.escape.iter().map(move |ef| (Some(om.index), ef)));
    let pooled = report.pooled.iter().map(|ef| (None, ef));
    per.chain(pooled)
        .map(|(omega_index, ef)| CensusRow {
            omega_index,
            horizon: ef.horizon,
            escaping_candidate: ef.counts.escaping_candidate,
            returned: ef.counts.returned,
            left_domain: ef.counts.left_domain,
            alive: ef.counts.alive,
            fraction: ef.fraction,
            sigma: ef.sigma,
            wilson_lo: ef.wilson95.0,
            wilson_hi: ef.wilson95.1,
        })
        .collect()
}

pub fn write_census_csv<W: Write>(out: W, report: &CensusReport) -> Result<()> {
    write_table(
        out,
        &[
            "omega_index",
            "horizon",
            "escaping_candidate",
            "returned",
            "left_domain",
            "alive",
            "fraction",
            "sigma",
            "wilson_lo",
            "wilson_hi",
        ],
        census_rows(report).into_iter().map(|r| {
            vec![
                r.omega_index.map(|i| i.to_string()).unwrap_or_default(),
                r.horizon.to_string(),
                r.escaping_candidate.to_string(),
                r.returned.to_string(),
                r.left_domain.to_string(),
                r.alive.to_string(),
                fmt_f64(r.fraction),
                fmt_f64(r.sigma),
                fmt_f64(r.wilson_lo),
                fmt_f64(r.wilson_hi),
            ]
        }),
    )
}

pub fn read_census_csv<R: Read>(input: R) -> Result<Vec<CensusRow>> {
    read_table(input)
}

/// `first_return_step` is empty on the no-return row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceRow {
    pub first_return_step: Option<usize>,
    pub count: usize,
}

pub fn write_recurrence_csv<W: Write>(out: W, profile: &RecurrenceProfile) -> Result<()> {
    let rows = profile
        .histogram
        .iter()
        .map(|&(k, c)| vec![k.to_string(), c.to_string()])
        .chain(std::iter::once(vec![String::new(), profile.no_return.to_string()]));
    write_table(out, &["first_return_step", "count"], rows)
}

pub fn read_recurrence_csv<R: Read>(input: R) -> Result<Vec<RecurrenceRow>> {
    read_table(input)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRow {
    pub label: String,
    pub t: f64,
    pub v: f64,
    pub max_difference: f64,
}

/// Both preimages, both images and the predicted common image.
pub fn counterexample_rows(ex: &NonInjectivityExample) -> Vec<CounterexampleRow> {
    let row = |label: &str, s: PhaseStateTV| CounterexampleRow {
        label: label.into(),
        t: s.t,
        v: s.v,
        max_difference: ex.max_image_difference,
    };
    vec![
        row("preimage_1", ex.preimages[0]),
        row("preimage_2", ex.preimages[1]),
        row("image_1", ex.images[0]),
        row("image_2", ex.images[1]),
        row("predicted_image", ex.predicted_image),
    ]
}

pub fn write_counterexample_csv<W: Write>(out: W, ex: &NonInjectivityExample) -> Result<()> {
    write_table(
        out,
        &["label", "t", "v", "max_difference"],
        counterexample_rows(ex)
            .into_iter()
            .map(|r| vec![r.label, fmt_f64(r.t), fmt_f64(r.v), fmt_f64(r.max_difference)]),
    )
}

pub fn read_counterexample_csv<R: Read>(input: R) -> Result<Vec<CounterexampleRow>> {
    read_table(input)
}

/// A named polyline for [`svg_line_plot`].
pub struct Series<'a> {
    pub label: String,
    pub points: &'a [(f64, f64)],
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Standalone SVG line plot with axes ranges, labels and a legend.
pub fn svg_line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let (w, h, m) = (720.0, 440.0, 60.0);
    let finite = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 <= 0.0 {
        let pad = y0.abs().max(1.0) * 0.05;
        y0 -= pad;
        y1 += pad;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        w / 2.0,
        escape_xml(title)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        w / 2.0,
        h - 15.0,
        escape_xml(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape_xml(y_label)
    );
    for (val, x, anchor) in [(x0, m, "start"), (x1, w - m, "end")] {
        let _ = writeln!(svg, r#"<text x="{x}" y="{}" text-anchor="{anchor}">{val:.4e}</text>"#, h - m + 16.0);
    }
    for (val, y) in [(y0, h - m), (y1, m)] {
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" text-anchor="end">{val:.4e}</text>"#, m - 4.0);
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.3},{:.3}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = m + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#,
            w - m - 4.0,
            escape_xml(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// `(t_n, E_n)` trace of an orbit.
pub fn orbit_svg(trace: &OrbitTrace) -> String {
    let pts: Vec<(f64, f64)> = trace.states.iter().map(|s| (s.t, s.e)).collect();
    svg_line_plot(
        "energy at wall impacts",
        "t",
        "E",
        &[Series {
            label: "E".into(),
            points: &pts,
        }],
    )
}

/// Escape-candidate fraction versus horizon, one line per ω plus the pool.
pub fn census_svg(report: &CensusReport) -> String {
    let curve = |e: &[crate::census::EscapeFraction]| -> Vec<(f64, f64)> {
        e.iter().map(|ef| (ef.horizon as f64, ef.fraction)).collect()
    };
    let mut data: Vec<(String, Vec<(f64, f64)>)> = report
        .per_omega
        .iter()
        .map(|om| (format!("omega {}", om.index), curve(&om.escape)))
        .collect();
    data.push(("pooled".into(), curve(&report.pooled)));
    let series: Vec<Series<'_>> = data
        .iter()
        .map(|(label, pts)| Series {
            label: label.clone(),
            points: pts,
        })
        .collect();
    svg_line_plot("escape-candidate fraction", "horizon (steps)", "fraction", &series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pingpong_map::{OrbitStatus, PhaseStateTE};

    #[test]
    fn seventeen_digits_round_trip() {
        for &x in &[0.1, 1.0 / 3.0, std::f64::consts::PI * 1e-300, -2.5e17, f64::MAX, 5e-324] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn orbit_csv_round_trip() {
        let trace = OrbitTrace {
            states: vec![PhaseStateTE::new(0.1, 3.7), PhaseStateTE::new(1.0 / 3.0, 4.2)],
            residuals: vec![0.0, 1e-15],
            w_values: vec![14.8, 17.0],
            status: OrbitStatus::Completed(1),
        };
        let mut buf = Vec::new();
        write_orbit_csv(&mut buf, &trace).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("step,t,e,v,w,residual\n"));
        assert_eq!(read_orbit_csv(buf.as_slice()).unwrap(), orbit_rows(&trace));
    }

    #[test]
    fn svg_is_well_formed() {
        let pts = [(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN)];
        let svg = svg_line_plot("a<b", "x", "y", &[Series { label: "s".into(), points: &pts }]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        assert!(!svg.contains("NaN"));
    }
}
