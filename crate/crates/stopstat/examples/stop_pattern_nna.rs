//! Clark-Evans regularity test on stop locations.
//!
//! Compares two point patterns: the clumped stops of the synthetic city
//! and a uniform random scatter of the same extent. The nearest-neighbour
//! index R tells them apart (R < 1 clustered, R near 1 random, R > 1
//! dispersed), and the z test says whether the departure is significant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stopstat::geo::{ProjectedPoint, Projection};
use stopstat::ingest::Stop;
use stopstat::nna::{run_nna_on_stops, NnaConfig, NnaResult};
use stopstat::synth::synthetic_city;

fn describe(label: &str, result: &NnaResult) {
    println!("{label}:");
    println!("  N = {}, area = {:.3} km^2", result.n, result.area / 1e6);
    println!(
        "  observed mean NN distance  {:>9.2} m",
        result.r_bar_a
    );
    println!(
        "  expected under CSR         {:>9.2} m",
        result.r_bar_e
    );
    println!(
        "  R = {:.3}, z = {:.2}, p = {}",
        result.r, result.z, result.p_value
    );
    println!("  verdict at alpha {}: {:?}", result.alpha, result.pattern);
}

fn main() -> stopstat::Result<()> {
    let config = NnaConfig::default();

    let city = synthetic_city(7);
    let (clustered, _) = run_nna_on_stops(&city.stops, &config)?;
    describe("synthetic city stops (three clumps)", &clustered);

    // Uniform scatter over a 5 km square centred on the same city.
    let reference = Projection::new(55.94, -3.2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let scatter: Vec<Stop> = (0..500)
        .map(|i| {
            let x = rng.random_range(-2_500.0..2_500.0);
            let y = rng.random_range(-2_500.0..2_500.0);
            let (latitude, longitude) = reference.unproject(ProjectedPoint::new(x, y));
            Stop {
                stop_id: format!("u{i:03}"),
                name: format!("Uniform {i}"),
                latitude,
                longitude,
            }
        })
        .collect();
    let (random, _) = run_nna_on_stops(&scatter, &config)?;
    println!();
    describe("uniform random scatter", &random);

    assert!(clustered.r < random.r);
    println!(
        "\nthe clumped pattern sits well below the scatter (R {:.3} vs {:.3})",
        clustered.r, random.r
    );
    Ok(())
}
