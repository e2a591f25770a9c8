//! Deterministic SVG learning-curve and boxplot rendering.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{AlcConfig, LearningCurve};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// One learning curve to draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    pub curve: LearningCurve,
    pub alc: f64,
    pub config: AlcConfig,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{:.2}\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, x_label: &str, y_lo: f64, y_hi: f64) {
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        out,
        "<path d=\"M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}\" stroke=\"black\" fill=\"none\"/>"
    );
    for i in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{v:.2}</text>",
            x0 - 6.0,
            y + 3.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
}

/// Step plot of NAUC over log-scaled time, one series per report, with ALC in the legend.
pub fn render_plot(series: &[PlotSeries]) -> Result<String> {
    if series.is_empty() {
        return Err(Error::Config("plot needs at least one report".into()));
    }
    let mut out = String::new();
    header(&mut out, "NAUC learning curves");
    axes(&mut out, "time (log scale, normalized to budget)", -1.0, 1.0);
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let y_of = |v: f64| y0 + (y1 - y0) * (v + 1.0) / 2.0;
    let _ = writeln!(
        out,
        "<line x1=\"{x0:.2}\" y1=\"{0:.2}\" x2=\"{x1:.2}\" y2=\"{0:.2}\" stroke=\"#cccccc\"/>",
        y_of(0.0)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let scale = |t: f64| {
            let t = t.clamp(0.0, s.config.budget);
            x0 + (x1 - x0) * (t / s.config.t0).ln_1p() / (s.config.budget / s.config.t0).ln_1p()
        };
        let mut d = format!("M{:.2},{:.2}", x0, y_of(0.0));
        for &(t, v) in s.curve.points().iter().filter(|p| p.0 <= s.config.budget) {
            let x = scale(t);
            let _ = write!(d, " H{x:.2} V{:.2}", y_of(v));
        }
        let _ = write!(d, " H{x1:.2}");
        let _ = writeln!(
            out,
            "<path d=\"{d}\" stroke=\"{color}\" stroke-width=\"1.5\" fill=\"none\"/>"
        );
        let ly = TOP + 16.0 * i as f64 + 10.0;
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>\
             <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\">{} (ALC {:.4})</text>",
            x1 + 10.0,
            x1 + 28.0,
            x1 + 32.0,
            ly + 3.0,
            escape(&s.label),
            s.alc
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// One box per group of values (e.g. per-seed ALC of an ablation cell).
pub fn render_boxplot(title: &str, groups: &[(String, Vec<f64>)]) -> Result<String> {
    if groups.is_empty() || groups.iter().all(|(_, v)| v.is_empty()) {
        return Err(Error::Config("boxplot needs at least one value".into()));
    }
    let all = groups.iter().flat_map(|(_, v)| v.iter().copied());
    let lo = all.clone().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = all.fold(f64::NEG_INFINITY, f64::max).max(lo + 1e-9);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, "", lo, hi);
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let y_of = |v: f64| y0 + (y1 - y0) * (v - lo) / (hi - lo);
    let slot = (x1 - x0) / groups.len() as f64;
    for (i, (name, values)) in groups.iter().enumerate() {
        let cx = x0 + slot * (i as f64 + 0.5);
        let _ = writeln!(
            out,
            "<text x=\"{cx:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            y0 + 14.0,
            escape(name)
        );
        if values.is_empty() {
            continue;
        }
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let [min, q1, med, q3, max] = [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| y_of(quantile(&sorted, q)));
        let half = (slot * 0.25).min(30.0);
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            "<line x1=\"{cx:.2}\" y1=\"{min:.2}\" x2=\"{cx:.2}\" y2=\"{max:.2}\" stroke=\"black\"/>\n\
             <rect x=\"{:.2}\" y=\"{q3:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\" fill-opacity=\"0.4\" stroke=\"black\"/>\n\
             <line x1=\"{:.2}\" y1=\"{med:.2}\" x2=\"{:.2}\" y2=\"{med:.2}\" stroke=\"black\" stroke-width=\"2\"/>",
            cx - half,
            2.0 * half,
            q1 - q3,
            cx - half,
            cx + half
        );
        for v in values {
            let _ = writeln!(
                out,
                "<circle cx=\"{cx:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"{color}\"/>",
                y_of(*v)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg(svg: &str, path: &Path) -> Result<()> {
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(label: &str, v: f64) -> PlotSeries {
        let curve = LearningCurve::from_points([(0.0, v)]).unwrap();
        let config = AlcConfig::default();
        PlotSeries {
            label: label.into(),
            alc: curve.alc(&config),
            curve,
            config,
        }
    }

    #[test]
    fn constant_curve_is_flat_with_matching_label() {
        let svg = render_plot(&[series("run", 0.5)]).unwrap();
        assert!(svg.contains("run (ALC 0.5000)"));
        assert!(svg.contains("M60.00,190.00 H60.00 V110.00 H460.00"), "{svg}");
    }

    #[test]
    fn two_series_get_distinct_colors_and_legend() {
        let svg = render_plot(&[series("a", 0.2), series("b", 0.7)]).unwrap();
        assert!(svg.contains(PALETTE[0]) && svg.contains(PALETTE[1]));
        assert!(svg.contains("a (ALC") && svg.contains("b (ALC"));
    }

    #[test]
    fn output_is_deterministic() {
        let input = [series("x", 0.3), series("y<z", -0.1)];
        assert_eq!(render_plot(&input).unwrap(), render_plot(&input).unwrap());
        let groups = vec![("n".to_string(), vec![0.1, 0.4, 0.3]), ("m".to_string(), vec![0.2])];
        assert_eq!(
            render_boxplot("t", &groups).unwrap(),
            render_boxplot("t", &groups).unwrap()
        );
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(render_plot(&[]), Err(Error::Config(_))));
        assert!(matches!(render_boxplot("t", &[]), Err(Error::Config(_))));
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }
}
