//! Sweep-result emission: one CSV with every row field, plus SVG line
//! plots of the momentum correlation width, the EPR products against the
//! 1/2 threshold, and the entropy sum against ln(2 pi e).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::certify::{entropic_threshold, SweepRow, EPR_THRESHOLD};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "delta_t_ns,dxm,dxm_uncertainty,dkp,dkp_uncertainty,\
epr_raw_product,epr_raw_uncertainty,epr_raw_certified,\
epr_subtracted_product,epr_subtracted_uncertainty,epr_subtracted_certified,\
epr_variance_product,epr_variance_uncertainty,epr_variance_certified,\
entropy_hx_nats,entropy_hk_nats,entropy_sum_nats,entropy_certified,\
raw_pairs_position,raw_pairs_momentum,accidental_pairs_position,accidental_pairs_momentum,\
error";

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Render the sweep table as CSV text with a stable column set.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        match &row.data {
            Some(d) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},",
                    row.delta_t_ns,
                    d.dxm.value,
                    d.dxm.uncertainty,
                    d.dkp.value,
                    d.dkp.uncertainty,
                    d.epr_raw.product,
                    d.epr_raw.uncertainty,
                    d.epr_raw.certified,
                    d.epr_subtracted.product,
                    d.epr_subtracted.uncertainty,
                    d.epr_subtracted.certified,
                    d.epr_variance.product,
                    d.epr_variance.uncertainty,
                    d.epr_variance.certified,
                    d.entropy.hx,
                    d.entropy.hk,
                    d.entropy.sum,
                    d.entropy.certified,
                    d.raw_pairs_position,
                    d.raw_pairs_momentum,
                    d.accidental_pairs_position,
                    d.accidental_pairs_momentum,
                );
            }
            None => {
                let error = row.error.as_deref().unwrap_or("unknown");
                let _ = writeln!(
                    out,
                    "{},,,,,,,,,,,,,,,,,,,,,,{}",
                    row.delta_t_ns,
                    csv_escape(error)
                );
            }
        }
    }
    out
}

struct Series<'a> {
    name: &'a str,
    color: &'a str,
    points: Vec<(f64, f64)>,
}

/// Minimal SVG line plot: log10 x-axis, linear y-axis, optional dashed
/// threshold line carrying its value in a `data-threshold` attribute.
fn svg_line_plot(title: &str, y_label: &str, series: &[Series], threshold: Option<f64>) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const ML: f64 = 70.0;
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 50.0;

    let xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    let mut ys: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .collect();
    if let Some(t) = threshold {
        ys.push(t);
    }
    let (x_min, x_max) = bounds(&xs);
    let (x_min, x_max) = (x_min.log10(), x_max.log10());
    let (y_min, y_max) = bounds(&ys);
    let y_pad = 0.08 * (y_max - y_min).max(1e-12);
    let (y_min, y_max) = (y_min - y_pad, y_max + y_pad);
    let x_span = (x_max - x_min).max(1e-12);

    let to_x = |x: f64| ML + (x.log10() - x_min) / x_span * (W - ML - MR);
    let to_y = |y: f64| H - MB - (y - y_min) / (y_max - y_min) * (H - MT - MB);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{title}</text>",
        W / 2.0
    );
    // Axes.
    let _ = writeln!(
        svg,
        "<line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        H - MB,
        W - MR,
        H - MB
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>",
        H - MB
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">coincidence window (ns, log scale)</text>",
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{}\" font-size=\"13\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">{y_label}</text>",
        (H - MB + MT) / 2.0,
        (H - MB + MT) / 2.0
    );
    // Decade ticks.
    let mut decade = x_min.floor() as i64;
    while (decade as f64) <= x_max {
        let x = 10f64.powi(decade as i32);
        if (decade as f64) >= x_min {
            let px = to_x(x);
            let _ = writeln!(
                svg,
                "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"black\"/>",
                H - MB,
                H - MB + 5.0
            );
            let _ = writeln!(
                svg,
                "<text x=\"{px}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{x}</text>",
                H - MB + 20.0
            );
        }
        decade += 1;
    }
    for frac in [0.0, 0.5, 1.0] {
        let y = y_min + frac * (y_max - y_min);
        let py = to_y(y);
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{ML}\" y2=\"{py}\" stroke=\"black\"/>",
            ML - 5.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{y:.4}</text>",
            ML - 8.0,
            py + 4.0
        );
    }
    if let Some(t) = threshold {
        let py = to_y(t);
        let _ = writeln!(
            svg,
            "<line class=\"threshold\" data-threshold=\"{t}\" x1=\"{ML}\" y1=\"{py}\" x2=\"{}\" y2=\"{py}\" stroke=\"red\" stroke-dasharray=\"6 4\"/>",
            W - MR
        );
    }
    for (i, s) in series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", to_x(x), to_y(y)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline data-series=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>",
            s.name,
            s.color,
            path.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\"/>",
                to_x(x),
                to_y(y),
                s.color
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{}\">{}</text>",
            W - MR - 170.0,
            MT + 16.0 * (i as f64 + 1.0),
            s.color,
            s.name
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        if v.is_finite() {
            min = min.min(v);
            max = max.max(v);
        }
    }
    if !min.is_finite() {
        (0.0, 1.0)
    } else if min == max {
        (min - 0.5, max + 0.5)
    } else {
        (min, max)
    }
}

fn collect<F: Fn(&crate::certify::SweepData) -> f64>(rows: &[SweepRow], f: F) -> Vec<(f64, f64)> {
    rows.iter()
        .filter_map(|r| r.data.as_ref().map(|d| (r.delta_t_ns, f(d))))
        .collect()
}

/// Write `results.csv` and the three SVG plots into `out_dir`, returning
/// the paths written. An empty table produces only the CSV header.
pub fn emit_results(rows: &[SweepRow], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let mut written = Vec::new();

    let csv_path = out_dir.join("results.csv");
    std::fs::write(&csv_path, sweep_csv(rows)).map_err(|e| Error::Io {
        path: csv_path.clone(),
        source: e,
    })?;
    written.push(csv_path);

    if rows.iter().all(|r| r.data.is_none()) {
        return Ok(written);
    }

    let plots = [
        (
            "dkp_vs_delta_t.svg",
            svg_line_plot(
                "Momentum correlation width vs coincidence window",
                "dk+ (rad/um)",
                &[Series {
                    name: "raw fit",
                    color: "#1f77b4",
                    points: collect(rows, |d| d.dkp.value),
                }],
                None,
            ),
        ),
        (
            "epr_vs_delta_t.svg",
            svg_line_plot(
                "EPR-Reid product vs coincidence window",
                "dx- * dk+",
                &[
                    Series {
                        name: "raw fit",
                        color: "#1f77b4",
                        points: collect(rows, |d| d.epr_raw.product),
                    },
                    Series {
                        name: "subtracted fit",
                        color: "#2ca02c",
                        points: collect(rows, |d| d.epr_subtracted.product),
                    },
                    Series {
                        name: "formal variance",
                        color: "#9467bd",
                        points: collect(rows, |d| d.epr_variance.product),
                    },
                ],
                Some(EPR_THRESHOLD),
            ),
        ),
        (
            "entropy_vs_delta_t.svg",
            svg_line_plot(
                "Conditional entropy sum vs coincidence window",
                "h(x2|x1) + h(k2|k1) (nats)",
                &[Series {
                    name: "entropy sum",
                    color: "#d62728",
                    points: collect(rows, |d| d.entropy.sum),
                }],
                Some(entropic_threshold()),
            ),
        ),
    ];
    for (name, svg) in plots {
        let path = out_dir.join(name);
        std::fs::write(&path, svg).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        written.push(path);
    }
    Ok(written)
}
