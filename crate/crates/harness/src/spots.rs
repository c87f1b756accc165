//! Spot diagrams: the PD array and every LED's light spot, to scale, as SVG.

use std::fmt::Write as _;
use std::path::Path;

use lensvlc_core::geometry::{LensState, Pose};
use lensvlc_core::optics::polygon::{self, Point2};
use lensvlc_core::optics::{spot_reports, ReceiverConfig, RoomConfig, SpotReport};

use crate::error::Result;

/// What the renderer saw.
#[derive(Debug, Clone)]
pub struct SpotSummary {
    pub reports: Vec<SpotReport>,
    /// LEDs whose spot crosses the array's bounding square.
    pub clipped: Vec<usize>,
    /// LEDs with a spot on the PD plane at all.
    pub visible: Vec<usize>,
}

impl SpotSummary {
    pub fn new(pose: &Pose, lens: &LensState, room: &RoomConfig, rx: &ReceiverConfig) -> SpotSummary {
        let reports = spot_reports(pose, lens, room, rx);
        let visible = reports.iter().filter(|r| r.area > 0.0).map(|r| r.led).collect();
        let clipped = reports.iter().filter(|r| r.area > 0.0 && r.clipped_by_array(rx)).map(|r| r.led).collect();
        SpotSummary { reports, clipped, visible }
    }
}

const PX_PER_MM: f64 = 24.0;

fn hue(i: usize) -> f64 {
    (i as f64 * 137.508) % 360.0
}

fn path_d(poly: &[Point2], to_px: &impl Fn(Point2) -> (f64, f64)) -> String {
    let mut d = String::new();
    for (k, p) in poly.iter().enumerate() {
        let (x, y) = to_px(*p);
        let _ = write!(d, "{}{x:.2},{y:.2} ", if k == 0 { "M" } else { "L" });
    }
    d.push('Z');
    d
}

/// SVG of the PD grid, each spot outline with its LED index, and the spot
/// area that lands on a PD shaded. The view spans three array widths; spots
/// beyond it are cut by the viewport.
pub fn render_svg(summary: &SpotSummary, rx: &ReceiverConfig, title: &str) -> String {
    let half = rx.array_half_extent();
    let view = 3.0 * half;
    let size = 2.0 * view * 1e3 * PX_PER_MM;
    let to_px = |p: Point2| ((p[0] + view) * 1e3 * PX_PER_MM, (view - p[1]) * 1e3 * PX_PER_MM);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0}" height="{:.0}" viewBox="0 0 {size:.2} {:.2}">"#,
        size + 30.0,
        size + 30.0
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(s, r#"<text x="6" y="{:.1}" font-family="sans-serif" font-size="14">{title}</text>"#, size + 20.0);
    for j in 0..rx.n_r {
        let sq = rx.pd_square(j);
        let _ = writeln!(
            s,
            r##"<path d="{}" fill="#eeeeee" stroke="#555555" stroke-width="1"/>"##,
            path_d(&sq, &to_px)
        );
    }
    let (a, b) = (to_px([-half, half]), to_px([half, -half]));
    let _ = writeln!(
        s,
        r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#000000" stroke-dasharray="6 4"/>"##,
        a.0,
        a.1,
        b.0 - a.0,
        b.1 - a.1
    );
    for r in summary.reports.iter().filter(|r| r.area > 0.0) {
        let h = hue(r.led);
        for j in 0..rx.n_r {
            if r.pd_fractions[j] > 0.0 {
                let part = polygon::clip_convex(&r.outline, &rx.pd_square(j));
                if part.len() >= 3 {
                    let _ = writeln!(s, r#"<path d="{}" fill="hsl({h:.0},70%,45%)" fill-opacity="0.55"/>"#, path_d(&part, &to_px));
                }
            }
        }
        let _ = writeln!(
            s,
            r#"<path d="{}" fill="hsl({h:.0},70%,60%)" fill-opacity="0.2" stroke="hsl({h:.0},70%,35%)" stroke-width="1.2"/>"#,
            path_d(&r.outline, &to_px)
        );
        let n = r.outline.len() as f64;
        let c = [r.outline.iter().map(|p| p[0]).sum::<f64>() / n, r.outline.iter().map(|p| p[1]).sum::<f64>() / n];
        let (x, y) = to_px(c);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            r.led
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Renders the spot diagram for one pose and lens to `path`.
pub fn spot_diagram(pose: &Pose, lens: &LensState, room: &RoomConfig, rx: &ReceiverConfig, path: &Path) -> Result<SpotSummary> {
    let summary = SpotSummary::new(pose, lens, room, rx);
    let title = format!(
        "f = {:.2} cm, theta_L = {:.1} deg, phi_L = {:.1} deg; {} of {} visible spots clipped",
        lens.f * 100.0,
        lens.theta_l.to_degrees(),
        lens.phi_l.to_degrees(),
        summary.clipped.len(),
        summary.visible.len()
    );
    std::fs::write(path, render_svg(&summary, rx, &title))?;
    Ok(summary)
}
