//! Minimal SVG line plots for densities and trajectory fans: plain
//! polylines in a fixed viewport, no styling dependencies, deterministic
//! text output.

use bohmlab_core::{Grid, Trajectory};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 40.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn map(v: f64, lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> f64 {
    let span = if hi > lo { hi - lo } else { 1.0 };
    out_lo + (v - lo) / span * (out_hi - out_lo)
}

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{:.2},{:.2}", x, y))
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" points=\"{}\"/>\n",
        color,
        coords.join(" ")
    )
}

fn document(body: String, title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{m}\" y=\"24\" font-family=\"monospace\" font-size=\"14\">{title}</text>\n\
         {body}</svg>\n",
        w = WIDTH,
        h = HEIGHT,
        m = MARGIN,
        title = title,
        body = body
    )
}

/// Overlaid 1D density snapshots, one polyline per labelled time.
pub fn density_plot(grid: &Grid, labelled_fields: &[(f64, Vec<f64>)], title: &str) -> String {
    let ax = grid.axis(0);
    let peak = labelled_fields
        .iter()
        .flat_map(|(_, f)| f.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let mut body = String::new();
    for (k, (t, field)) in labelled_fields.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<(f64, f64)> = field
            .iter()
            .enumerate()
            .map(|(i, rho)| {
                (
                    map(ax.coord(i), ax.min, ax.max, MARGIN, WIDTH - MARGIN),
                    map(*rho, 0.0, peak, HEIGHT - MARGIN, MARGIN),
                )
            })
            .collect();
        body.push_str(&polyline(&points, color));
        body.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\" fill=\"{}\">t={}</text>\n",
            WIDTH - MARGIN - 90.0,
            MARGIN + 16.0 * (k + 1) as f64,
            color,
            t
        ));
    }
    document(body, title)
}

/// Trajectory fan: time on the horizontal axis, the first coordinate on
/// the vertical axis, up to `limit` members.
pub fn trajectory_fan(trajectories: &[Trajectory], limit: usize, title: &str) -> String {
    let shown = &trajectories[..trajectories.len().min(limit)];
    let (mut t_lo, mut t_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for traj in shown {
        for (t, p) in traj.samples() {
            t_lo = t_lo.min(*t);
            t_hi = t_hi.max(*t);
            x_lo = x_lo.min(p.coord(0));
            x_hi = x_hi.max(p.coord(0));
        }
    }
    let mut body = String::new();
    for (k, traj) in shown.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<(f64, f64)> = traj
            .samples()
            .iter()
            .map(|(t, p)| {
                (
                    map(*t, t_lo, t_hi, MARGIN, WIDTH - MARGIN),
                    map(p.coord(0), x_lo, x_hi, HEIGHT - MARGIN, MARGIN),
                )
            })
            .collect();
        body.push_str(&polyline(&points, color));
    }
    document(body, title)
}
