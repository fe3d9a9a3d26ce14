use std::path::Path;

use fabricore::trajectory::Trajectory;
use plotters::prelude::*;

/// Joint positions over time, one line per joint.
pub fn joint_svg(traj: &Trajectory, path: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let rows = &traj.rows;
    let t_end = rows.last().map_or(1.0, |r| r.t).max(1e-9);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in rows {
        for v in r.q.iter() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !(lo < hi) {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);

    let root = SVGBackend::new(path, (960, 540)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("joint positions", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..t_end, (lo - pad)..(hi + pad))?;
    chart.configure_mesh().x_desc("t [s]").y_desc("q [rad]").draw()?;
    for j in 0..traj.dof {
        let color = Palette99::pick(j).to_rgba();
        chart
            .draw_series(LineSeries::new(rows.iter().map(|r| (r.t, r.q[j])), color.stroke_width(1)))?
            .label(format!("q{j}"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 15, y)], color));
    }
    if traj.dof <= 12 {
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).draw()?;
    }
    root.present()?;
    Ok(())
}
