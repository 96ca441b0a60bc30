//! Minimal static SVG renderings of the report figures.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const M: f64 = 50.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn scale(v: f64, (lo, hi): (f64, f64), from: f64, to: f64) -> f64 {
    from + (v - lo) / (hi - lo) * (to - from)
}

fn axes(s: &mut String, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        s,
        "<line x1=\"{M}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n<line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{}\" stroke=\"black\"/>",
        H - M,
        W - M,
        H - M,
        H - M
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", W / 2.0, H - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">{}</text>",
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

/// One or more y series over shared x values, each scaled to its own range.
pub fn line_chart(title: &str, xlabel: &str, xs: &[f64], series: &[(&str, Vec<f64>)]) -> String {
    let mut s = header(title);
    axes(&mut s, xlabel, "value (each series scaled)");
    let xb = bounds(xs.iter().copied());
    for (i, (name, ys)) in series.iter().enumerate() {
        let yb = bounds(ys.iter().copied().filter(|v| v.is_finite()));
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .filter(|(_, y)| y.is_finite())
            .map(|(&x, &y)| format!("{:.1},{:.1}", scale(x, xb, M, W - M), scale(y, yb, H - M, M)))
            .collect();
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>", pts.join(" "));
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{} [{:.3}, {:.3}]</text>",
            W - M - 160.0,
            M + 14.0 * i as f64,
            escape(name),
            yb.0,
            yb.1
        );
    }
    for &x in xs {
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{x}</text>", scale(x, xb, M, W - M), H - M + 14.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Scatter plot coloured by cluster letter index.
pub fn scatter(title: &str, points: &[[f64; 2]], groups: &[usize], names: &[String]) -> String {
    let mut s = header(title);
    axes(&mut s, "t-SNE 1", "t-SNE 2");
    let xb = bounds(points.iter().map(|p| p[0]));
    let yb = bounds(points.iter().map(|p| p[1]));
    for (p, &g) in points.iter().zip(groups) {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"1.5\" fill=\"{}\" fill-opacity=\"0.6\"/>",
            scale(p[0], xb, M, W - M),
            scale(p[1], yb, H - M, M),
            PALETTE[g % PALETTE.len()]
        );
    }
    for (i, n) in names.iter().enumerate() {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>",
            W - M + 8.0,
            M + 14.0 * i as f64,
            PALETTE[i % PALETTE.len()],
            escape(n)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Diverging heat map of a square matrix; empty cells are drawn grey.
pub fn heatmap(title: &str, labels: &[String], cells: &[Vec<Option<f64>>], marked: &[Vec<bool>]) -> String {
    let mut s = header(title);
    let n = labels.len().max(1) as f64;
    let side = (H - 2.0 * M).min(W - 2.0 * M) / n;
    let vmax = cells.iter().flatten().flatten().fold(1e-12f64, |m, v| m.max(v.abs()));
    for (a, row) in cells.iter().enumerate() {
        for (b, v) in row.iter().enumerate() {
            let fill = match v {
                None => "#cccccc".to_string(),
                Some(v) => {
                    let t = (v.abs() / vmax).min(1.0);
                    let c = (255.0 * (1.0 - t)).round() as u8;
                    if *v >= 0.0 {
                        format!("#ff{c:02x}{c:02x}")
                    } else {
                        format!("#{c:02x}{c:02x}ff")
                    }
                }
            };
            let (x, y) = (M + b as f64 * side, M + a as f64 * side);
            let _ = writeln!(s, "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{side:.1}\" height=\"{side:.1}\" fill=\"{fill}\" stroke=\"white\"/>");
            let text = v.map_or(String::new(), |v| format!("{v:.1}{}", if marked[a][b] { "*" } else { "" }));
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{text}</text>",
                x + side / 2.0,
                y + side / 2.0 + 4.0
            );
        }
    }
    for (i, l) in labels.iter().enumerate() {
        let c = M + (i as f64 + 0.5) * side;
        let _ = writeln!(s, "<text x=\"{c:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>", M - 6.0, escape(l));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", M - 6.0, c + 4.0, escape(l));
    }
    s.push_str("</svg>\n");
    s
}
