//! Overlaid histogram rendering for simulated error distributions.

use std::fmt::Write;

/// Number of bins in every histogram.
pub(crate) const BINS: usize = 60;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLOURS: [&str; 4] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a"];

/// Bin counts of `values` on `[lo, hi]` split into [`BINS`] equal bins; the
/// right edge is included in the last bin.
pub(crate) fn bin_counts(values: &[f64], lo: f64, hi: f64) -> Vec<usize> {
    let mut counts = vec![0usize; BINS];
    let width = (hi - lo) / BINS as f64;
    for &v in values {
        if !(lo..=hi).contains(&v) || width <= 0.0 {
            continue;
        }
        let bin = (((v - lo) / width) as usize).min(BINS - 1);
        counts[bin] += 1;
    }
    counts
}

/// Step outlines of each series' histogram on a shared axis.
pub(crate) fn overlaid_histograms(title: &str, series: &[(&str, &[f64])]) -> String {
    let lo = 0.0_f64.min(
        series
            .iter()
            .flat_map(|(_, v)| v.iter().copied())
            .fold(f64::INFINITY, f64::min),
    );
    let hi = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max)
        .max(lo + 1e-12);
    let all_counts: Vec<Vec<usize>> = series.iter().map(|(_, v)| bin_counts(v, lo, hi)).collect();
    let peak = all_counts.iter().flatten().copied().max().unwrap_or(1).max(1) as f64;

    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x_at = |bin: usize| MARGIN + plot_w * bin as f64 / BINS as f64;
    let y_at = |count: usize| HEIGHT - MARGIN - plot_h * count as f64 / peak;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="25" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>"#,
        WIDTH / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
        HEIGHT - MARGIN,
        WIDTH - MARGIN
    );
    for (label, value) in [(format!("{lo:.3}"), MARGIN), (format!("{hi:.3}"), WIDTH - MARGIN)] {
        let _ = writeln!(
            svg,
            r#"<text x="{value}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{label}</text>"#,
            HEIGHT - MARGIN + 18.0
        );
    }
    for (i, ((name, _), counts)) in series.iter().zip(&all_counts).enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let mut points = format!("{:.2},{:.2}", x_at(0), y_at(0));
        for (b, &c) in counts.iter().enumerate() {
            let _ = write!(points, " {:.2},{:.2} {:.2},{:.2}", x_at(b), y_at(c), x_at(b + 1), y_at(c));
        }
        let _ = write!(points, " {:.2},{:.2}", x_at(BINS), y_at(0));
        let _ = writeln!(
            svg,
            r#"<polyline points="{points}" fill="{colour}" fill-opacity="0.25" stroke="{colour}" stroke-width="1.5"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" fill="{colour}">{name}</text>"#,
            WIDTH - MARGIN - 90.0,
            MARGIN + 18.0 * i as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}
