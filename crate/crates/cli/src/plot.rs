use std::fmt::Write;

use vidorder::fluid::TokenTrace;
use vidorder::model::MBIT;

/// Token level over time as a piecewise-linear SVG chart.
pub fn trace_svg(trace: &TokenTrace) -> String {
    let (w, h, pad) = (640.0, 320.0, 60.0);
    let (t0, t1) = trace.horizon();
    let span = if t1 > t0 { t1 - t0 } else { 1.0 };
    let top = trace.breakpoints.iter().map(|b| b.tokens_bits).fold(0.0, f64::max).max(1.0) * 1.1 / MBIT;
    let px = |t: f64| pad + (t - t0) / span * (w - 2.0 * pad);
    let py = |mb: f64| h - pad - mb / top * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<path d="M{pad} {pad} V{} H{}" stroke="black" fill="none"/>"#, h - pad, w - pad);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.2}</text>"#, pad - 6.0, py(top * f) + 4.0, top * f);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{:.1}</text>"#, px(t0 + span * f), h - pad + 18.0, t0 + span * f);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">time (s)</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(s, r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">tokens (Mb)</text>"#, h / 2.0);
    let points: Vec<String> = trace
        .breakpoints
        .iter()
        .map(|b| format!("{:.2},{:.2}", px(b.time_s), py(b.tokens_bits / MBIT)))
        .collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##, points.join(" "));
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use vidorder::fluid::simulate;
    use vidorder::model::interleaving_demo;

    #[test]
    fn one_point_per_breakpoint() {
        let (videos, bucket, blocked, _) = interleaving_demo();
        let sim = simulate(&videos, &blocked, &bucket).unwrap();
        let svg = trace_svg(&sim.trace);
        let polyline = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let inner = polyline.split('"').nth(1).unwrap();
        assert_eq!(inner.split(' ').count(), sim.trace.breakpoints.len());
        assert!(svg.ends_with("</svg>\n"));
    }
}
