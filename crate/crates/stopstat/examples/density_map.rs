//! Weighted KDE grid and bandwidth sweep.
//!
//! Builds a usage-weighted density surface over the synthetic city, renders
//! it as ASCII art, and sweeps the bandwidth to show how the surface melts
//! from three sharp hubs into one broad blob as h grows.

use stopstat::geo::Projection;
use stopstat::kde::{bandwidth_sweep, estimate_density, GridSpec};
use stopstat::synth::synthetic_city;

const RAMP: &[u8] = b" .:-=+*#%@";

fn main() -> stopstat::Result<()> {
    let city = synthetic_city(7);
    let projection =
        Projection::centered_on(city.stops.iter().map(|s| (s.latitude, s.longitude)))?;
    let points = city
        .stops
        .iter()
        .map(|s| projection.project(s.latitude, s.longitude))
        .collect::<stopstat::Result<Vec<_>>>()?;
    let weights: Vec<f64> = city
        .stops
        .iter()
        .map(|s| city.expected_usage[&s.stop_id] as f64)
        .collect();

    let sweep_m = [100.0, 300.0, 500.0, 800.0, 1000.0];
    let h = 300.0;
    let padding = 3.0 * sweep_m.last().copied().unwrap_or(h);
    let spec = GridSpec::covering(&points, 96, 96, padding)?;
    let grid = estimate_density(&points, &weights, &spec, h, h)?;

    println!(
        "grid: {}x{} cells of {:.0} m x {:.0} m, bandwidth {} m",
        spec.nx, spec.ny, spec.cell_width, spec.cell_height, h
    );
    println!("density integrates to {:.4} (mass near 1 means the grid captures the kernel tails)", grid.integral());
    let (ix, iy, peak) = grid.max_cell();
    let (px, py) = spec.cell_center(ix, iy);
    let (lat, lon) = projection.unproject(stopstat::geo::ProjectedPoint::new(px, py));
    println!(
        "peak cell ({ix}, {iy}) at ({lat:.4}, {lon:.4}), density {peak:.3e}, intensity {:.1} pings per cell",
        grid.intensity_at(ix, iy)
    );
    println!(
        "heaviest designed hub is {} at ({:.4}, {:.4})",
        city.hub_stop_id, city.hub_latitude, city.hub_longitude
    );

    // Max-pool the grid into terminal-sized ASCII, north up.
    let (cols, rows) = (48usize, 24usize);
    println!();
    for row in (0..rows).rev() {
        let mut line = String::with_capacity(cols);
        for col in 0..cols {
            let mut block_max = 0.0f64;
            for iy in (row * spec.ny / rows)..((row + 1) * spec.ny / rows) {
                for ix in (col * spec.nx / cols)..((col + 1) * spec.nx / cols) {
                    block_max = block_max.max(grid.value_at(ix, iy));
                }
            }
            let shade = (block_max / peak * (RAMP.len() - 1) as f64).round() as usize;
            line.push(RAMP[shade.min(RAMP.len() - 1)] as char);
        }
        println!("  |{line}|");
    }

    println!("\nbandwidth sweep (same grid, same weights):");
    println!("  {:>6}  {:>12}  {:>10}  {}", "h (m)", "peak density", "top-decile", "maxima");
    for entry in bandwidth_sweep(&points, &weights, &spec, &sweep_m)? {
        println!(
            "  {:>6.0}  {:>12.3e}  {:>9.1}%  {:>6}",
            entry.summary.h_m,
            entry.summary.max_density,
            entry.summary.top_decile_mass_fraction * 100.0,
            entry.grid.strict_local_maxima().len()
        );
    }
    println!("peaks only ever flatten as h grows; smoothing cannot sharpen the surface");
    Ok(())
}
