//! Line plots of a run's key metrics (backlog, τ, ρ_AI, κ) as one SVG.

use std::path::{Path, PathBuf};

use govsim_core::metrics::{read_metrics, MetricsRow};
use plotters::prelude::*;

use crate::{CliError, Result};

type Series = (&'static str, fn(&MetricsRow) -> f64);

const PANELS: [Series; 4] = [
    ("backlog", |r| r.backlog as f64),
    ("tau", |r| r.tau),
    ("rho_ai", |r| r.rho_ai),
    ("concentration", |r| r.concentration),
];

/// Writes `<dir>/metrics.svg` and returns its path.
pub fn plot_run(dir: &Path) -> Result<PathBuf> {
    let rows = read_metrics(&dir.join("metrics.csv"))?;
    let out = dir.join("metrics.svg");
    draw(&rows, &out).map_err(|e| CliError::Usage(format!("plotting {} failed: {e}", dir.display())))?;
    Ok(out)
}

fn draw(rows: &[MetricsRow], out: &Path) -> std::result::Result<(), Box<dyn std::error::Error>> {
    let root = SVGBackend::new(out, (900, 900)).into_drawing_area();
    root.fill(&WHITE)?;
    let t_max = rows.len().max(1) as f64;
    for ((name, f), area) in PANELS.iter().zip(root.split_evenly((4, 1))) {
        let ys: Vec<f64> = rows.iter().map(f).collect();
        let hi = ys.iter().copied().fold(0.0f64, f64::max);
        let hi = if hi > 0.0 { hi * 1.05 } else { 1.0 };
        let mut chart = ChartBuilder::on(&area)
            .margin(8)
            .caption(*name, ("sans-serif", 16))
            .x_label_area_size(24)
            .y_label_area_size(48)
            .build_cartesian_2d(0f64..t_max, 0f64..hi)?;
        chart.configure_mesh().light_line_style(WHITE).draw()?;
        chart.draw_series(LineSeries::new(
            rows.iter().zip(&ys).map(|(r, y)| (r.t as f64, *y)),
            &BLUE,
        ))?;
    }
    root.present()?;
    Ok(())
}
