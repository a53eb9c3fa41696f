//! Static SVG line charts from summary CSVs: mean regret against one
//! experiment axis, one series per (scenario, policy) pair, with standard
//! deviation error bars.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: row {row}: {message}")]
    BadRow {
        path: String,
        row: usize,
        message: String,
    },
    #[error("unknown plot axis '{0}' (expected n-p, n-q, gamma, kappa, c-i or c-r)")]
    UnknownAxis(String),
    #[error("nothing to plot")]
    Empty,
}

/// One row of a `.summary.csv` file.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub policy: String,
    pub n_q: u64,
    pub n_p: u64,
    pub gamma: f64,
    pub kappa: f64,
    pub c_index: f64,
    pub c_radius: f64,
    pub replications: u32,
    pub mean_regret: f64,
    pub sd_regret: f64,
}

impl SummaryRow {
    /// Value of the requested axis column.
    pub fn axis_value(&self, axis: &str) -> Result<f64, PlotError> {
        match normalise_axis(axis)? {
            "n_p" => Ok(self.n_p as f64),
            "n_q" => Ok(self.n_q as f64),
            "gamma" => Ok(self.gamma),
            "kappa" => Ok(self.kappa),
            "c_i" => Ok(self.c_index),
            "c_r" => Ok(self.c_radius),
            _ => unreachable!(),
        }
    }
}

fn normalise_axis(axis: &str) -> Result<&'static str, PlotError> {
    match axis.to_ascii_lowercase().replace('-', "_").as_str() {
        "n_p" | "np" => Ok("n_p"),
        "n_q" | "nq" => Ok("n_q"),
        "gamma" => Ok("gamma"),
        "kappa" => Ok("kappa"),
        "c_i" | "ci" => Ok("c_i"),
        "c_r" | "cr" => Ok("c_r"),
        other => Err(PlotError::UnknownAxis(other.to_string())),
    }
}

/// Reads one summary CSV.
pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, PlotError> {
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|source| PlotError::Csv {
        path: display.clone(),
        source,
    })?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| PlotError::Csv {
            path: display.clone(),
            source,
        })?;
        let bad = |message: String| PlotError::BadRow {
            path: display.clone(),
            row: i + 2,
            message,
        };
        if record.len() != 11 {
            return Err(bad(format!("expected 11 columns, got {}", record.len())));
        }
        let field = |k: usize| record.get(k).unwrap_or("").to_string();
        let num = |k: usize| -> Result<f64, PlotError> {
            record
                .get(k)
                .unwrap_or("")
                .parse()
                .map_err(|_| bad(format!("column {k} is not a number")))
        };
        rows.push(SummaryRow {
            scenario: field(0),
            policy: field(1),
            n_q: num(2)? as u64,
            n_p: num(3)? as u64,
            gamma: num(4)?,
            kappa: num(5)?,
            c_index: num(6)?,
            c_radius: num(7)?,
            replications: num(8)? as u32,
            mean_regret: num(9)?,
            sd_regret: num(10)?,
        });
    }
    Ok(rows)
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Renders `mean_regret` (with `sd_regret` error bars) against the chosen
/// axis, one series per (scenario, policy) pair.
pub fn render_summary_svg(
    rows: &[SummaryRow],
    axis: &str,
    title: &str,
) -> Result<String, PlotError> {
    let axis_label = normalise_axis(axis)?;
    if rows.is_empty() {
        return Err(PlotError::Empty);
    }

    let mut series: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for row in rows {
        let key = format!("{} {}", row.scenario, row.policy);
        series
            .entry(key)
            .or_default()
            .push((row.axis_value(axis)?, row.mean_regret, row.sd_regret));
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    let xs: Vec<f64> = rows
        .iter()
        .map(|r| r.axis_value(axis))
        .collect::<Result<_, _>>()?;
    let (x_min, x_max) = min_max(&xs);
    let lows: Vec<f64> = rows.iter().map(|r| r.mean_regret - r.sd_regret).collect();
    let highs: Vec<f64> = rows.iter().map(|r| r.mean_regret + r.sd_regret).collect();
    let (y_min, y_max) = (min_max(&lows).0.min(0.0), min_max(&highs).1);

    let x_span = (x_max - x_min).max(1e-12);
    let y_span = (y_max - y_min).max(1e-12);
    let to_x = |v: f64| MARGIN_L + (v - x_min) / x_span * (WIDTH - MARGIN_L - MARGIN_R);
    let to_y = |v: f64| HEIGHT - MARGIN_B - (v - y_min) / y_span * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        escape(title)
    ));

    // Axes and ticks.
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    for k in 0..=4 {
        let fx = x_min + x_span * k as f64 / 4.0;
        let px = to_x(fx);
        svg.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{y0}\" x2=\"{px}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{px}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            y0 + 5.0,
            y0 + 20.0,
            tick_label(fx)
        ));
        let fy = y_min + y_span * k as f64 / 4.0;
        let py = to_y(fy);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{x0}\" y2=\"{py}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"end\">{}</text>\n",
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            tick_label(fy)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        axis_label
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">mean cumulative regret</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    ));

    // Series: error bars, polyline, markers, legend entry.
    for (s, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[s % COLORS.len()];
        for &(x, m, sd) in pts {
            if sd > 0.0 {
                let (px, top, bot) = (to_x(x), to_y(m + sd), to_y(m - sd));
                svg.push_str(&format!(
                    "<line x1=\"{px}\" y1=\"{top}\" x2=\"{px}\" y2=\"{bot}\" \
                     stroke=\"{color}\" stroke-width=\"1\"/>\n\
                     <line x1=\"{}\" y1=\"{top}\" x2=\"{}\" y2=\"{top}\" stroke=\"{color}\"/>\n\
                     <line x1=\"{}\" y1=\"{bot}\" x2=\"{}\" y2=\"{bot}\" stroke=\"{color}\"/>\n",
                    px - 4.0,
                    px + 4.0,
                    px - 4.0,
                    px + 4.0
                ));
            }
        }
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, m, _)| format!("{:.2},{:.2}", to_x(x), to_y(m)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            path.join(" ")
        ));
        for &(x, m, _) in pts {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                to_x(x),
                to_y(m)
            ));
        }
        let ly = MARGIN_T + 16.0 * s as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" \
             stroke-width=\"2\"/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            x1 + 10.0,
            x1 + 34.0,
            x1 + 40.0,
            ly + 4.0,
            escape(name)
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_svg(path: &Path, content: &str) -> Result<(), PlotError> {
    std::fs::write(path, content).map_err(|source| PlotError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{:.0}", v)
    } else {
        format!("{:.3}", v)
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
