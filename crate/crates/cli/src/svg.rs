//! Minimal hand-written SVG line chart; CSV stays the authoritative
//! record and this is a convenience view of it.

pub struct Series {
    pub name: String,
    /// (x, y) pairs in drawing order.
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 76.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 24.0;
const BOTTOM: f64 = 58.0;
const PALETTE: [&str; 4] = ["#1b6ca8", "#d1495b", "#3e8e5a", "#8a5ab8"];

pub fn accuracy_vs_rejection(series: &[Series]) -> String {
    chart(series, "rejection rate", "accuracy on accepted")
}

fn bounds(series: &[Series], pick: impl Fn(&(f64, f64)) -> f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for p in &s.points {
            lo = lo.min(pick(p));
            hi = hi.max(pick(p));
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.05;
        hi += 0.05;
    }
    let pad = 0.06 * (hi - lo);
    (lo - pad, hi + pad)
}

fn chart(series: &[Series], x_label: &str, y_label: &str) -> String {
    let (xlo, xhi) = bounds(series, |p| p.0);
    let (ylo, yhi) = bounds(series, |p| p.1);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - xlo) / (xhi - xlo) * plot_w;
    let py = |y: f64| HEIGHT - BOTTOM - (y - ylo) / (yhi - ylo) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    out.push_str(&format!("<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"));

    for i in 0..5 {
        let t = i as f64 / 4.0;
        let xv = xlo + t * (xhi - xlo);
        let yv = ylo + t * (yhi - ylo);
        let gx = px(xv);
        let gy = py(yv);
        out.push_str(&format!(
            "<line x1=\"{gx:.2}\" y1=\"{TOP}\" x2=\"{gx:.2}\" y2=\"{:.2}\" stroke=\"#e3e3e3\"/>\n",
            HEIGHT - BOTTOM
        ));
        out.push_str(&format!(
            "<line x1=\"{LEFT}\" y1=\"{gy:.2}\" x2=\"{:.2}\" y2=\"{gy:.2}\" stroke=\"#e3e3e3\"/>\n",
            WIDTH - RIGHT
        ));
        out.push_str(&format!(
            "<text x=\"{gx:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#444444\">{xv:.3}</text>\n",
            HEIGHT - BOTTOM + 20.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" fill=\"#444444\">{yv:.3}</text>\n",
            LEFT - 8.0,
            gy + 4.0
        ));
    }
    out.push_str(&format!(
        "<line x1=\"{LEFT}\" y1=\"{0:.2}\" x2=\"{1:.2}\" y2=\"{0:.2}\" stroke=\"#222222\"/>\n",
        HEIGHT - BOTTOM,
        WIDTH - RIGHT
    ));
    out.push_str(&format!(
        "<line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{:.2}\" stroke=\"#222222\"/>\n",
        HEIGHT - BOTTOM
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#222222\">{x_label}</text>\n",
        LEFT + plot_w / 2.0,
        HEIGHT - 14.0
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{ceny:.2}\" text-anchor=\"middle\" fill=\"#222222\" \
         transform=\"rotate(-90 18 {ceny:.2})\">{y_label}</text>\n",
        ceny = TOP + plot_h / 2.0
    ));

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.len() > 1 {
            let path: Vec<String> =
                s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
                path.join(" ")
            ));
        }
        for &(x, y) in &s.points {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{color}\"/>\n",
                px(x),
                py(y)
            ));
        }
        let ly = TOP + 16.0 + 18.0 * i as f64;
        out.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
            LEFT + 10.0,
            ly - 10.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{ly:.2}\" fill=\"#222222\">{}</text>\n",
            LEFT + 28.0,
            s.name
        ));
    }
    if series.iter().all(|s| s.points.is_empty()) {
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#888888\">no completed runs</text>\n",
            LEFT + plot_w / 2.0,
            TOP + plot_h / 2.0
        ));
    }
    out.push_str("</svg>\n");
    out
}
