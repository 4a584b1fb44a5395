//! Clark-Evans nearest-neighbour analysis.
//!
//! Given a point set, the observed mean nearest-neighbour distance is
//! compared with the expectation under complete spatial randomness at the
//! same density. The ratio (the nearest-neighbour index) reads below 1 for
//! clustered patterns and above 1 for dispersed ones; a z-test against the
//! CSR sampling distribution says whether the departure is real.
//! City-scale point sets push |z| far beyond where the two-tailed p-value
//! is representable as an `f64`, so significance is carried in log10 space
//! throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{self, AreaMethod, ProjectedPoint, Projection};
use crate::ingest::Stop;

/// Clark-Evans constant: sd of the mean NN distance under CSR is
/// `0.26136 / sqrt(N * rho)`.
pub const CLARK_EVANS_SIGMA: f64 = 0.26136;

/// |z| at which the p-value computation switches from `erfc` to the
/// asymptotic tail expansion. At the switch both branches agree to about
/// four significant figures in log10 p.
pub const ERFC_CUTOVER_Z: f64 = 8.0;

/// Arithmetic mean of nearest-neighbour distances (`r_bar_A`).
pub fn mean_nn_distance(distances: &[f64]) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::Domain("mean of an empty distance set".into()));
    }
    for &d in distances {
        if !(d >= 0.0) || !d.is_finite() {
            return Err(Error::Domain(format!(
                "distances must be finite and non-negative, got {d}"
            )));
        }
    }
    Ok(distances.iter().sum::<f64>() / distances.len() as f64)
}

/// Expected mean nearest-neighbour distance under CSR:
/// `r_bar_E = 1 / (2 sqrt(rho))` with `rho = N / area`.
pub fn expected_nn_distance(n: usize, area_m2: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain(
            "expected NN distance needs at least one point".into(),
        ));
    }
    if !(area_m2 > 0.0) || !area_m2.is_finite() {
        return Err(Error::Domain(format!(
            "area must be positive and finite, got {area_m2}"
        )));
    }
    Ok(1.0 / (2.0 * (n as f64 / area_m2).sqrt()))
}

/// Nearest-neighbour index `R = r_bar_A / r_bar_E`.
pub fn nni(r_bar_a: f64, r_bar_e: f64) -> Result<f64> {
    if !(r_bar_e > 0.0) || !r_bar_e.is_finite() {
        return Err(Error::Domain(format!(
            "expected mean distance must be positive, got {r_bar_e}"
        )));
    }
    if !(r_bar_a >= 0.0) || !r_bar_a.is_finite() {
        return Err(Error::Domain(format!(
            "observed mean distance must be non-negative, got {r_bar_a}"
        )));
    }
    Ok(r_bar_a / r_bar_e)
}

/// Standard error of the mean NN distance under CSR.
pub fn sigma_expected(n: usize, rho: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("sigma of an empty point set".into()));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Domain(format!(
            "point density must be positive and finite, got {rho}"
        )));
    }
    Ok(CLARK_EVANS_SIGMA / (n as f64 * rho).sqrt())
}

/// Z-test of the observed mean against the CSR expectation:
/// `z = (r_bar_A - r_bar_E) / sigma_rE`, p-value two-tailed in log10 space.
pub fn z_test(r_bar_a: f64, r_bar_e: f64, n: usize, rho: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::Domain(format!(
            "z-test needs at least 2 points, got {n}"
        )));
    }
    let sigma = sigma_expected(n, rho)?;
    let z = (r_bar_a - r_bar_e) / sigma;
    Ok((z, log10_two_tailed_p(z)?))
}

/// log10 of the two-tailed normal p-value for a given z-score.
///
/// For |z| <= 8 this is `log10(erfc(|z| / sqrt 2))`, exact to machine
/// precision. Beyond that `erfc` underflows, so the standard tail expansion
/// `Q(z) = phi(z)/z * (1 - 1/z^2 + 3/z^4)` is evaluated directly in log
/// space; its relative error at z = 8 is already below 1e-4 and shrinks as
/// z grows. The result is always finite: p never underflows to zero.
pub fn log10_two_tailed_p(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::Domain(format!("z-score must be finite, got {z}")));
    }
    let a = z.abs();
    if a <= ERFC_CUTOVER_Z {
        let p = libm::erfc(a / std::f64::consts::SQRT_2);
        Ok(p.log10())
    } else {
        let ln_p = std::f64::consts::LN_2 - a * a / 2.0 - a.ln()
            - 0.5 * (2.0 * std::f64::consts::PI).ln()
            + (-1.0 / (a * a) + 3.0 / (a * a * a * a)).ln_1p();
        Ok(ln_p / std::f64::consts::LN_10)
    }
}

/// Two-tailed p-value as `(mantissa, exponent)` with `1 <= mantissa < 10`,
/// i.e. `p = mantissa * 10^exponent`. Representable even when the p-value
/// itself underflows.
pub fn p_value_parts(z: f64) -> Result<(f64, i64)> {
    let log10_p = log10_two_tailed_p(z)?;
    let exponent = log10_p.floor();
    let mantissa = 10f64.powf(log10_p - exponent);
    Ok((mantissa, exponent as i64))
}

/// `"3.65e-2075"`-style rendering of the two-tailed p-value.
pub fn format_p_value(z: f64) -> Result<String> {
    let (mantissa, exponent) = p_value_parts(z)?;
    Ok(format!("{mantissa:.3}e{exponent}"))
}

/// Verdict of the Clark-Evans test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialPattern {
    /// Significantly closer spacing than CSR (`R < 1`).
    Clustered,
    /// Significantly wider spacing than CSR (`R > 1`).
    Dispersed,
    /// No significant departure from CSR.
    Random,
}

/// One histogram bin: `[lower, upper)` except the last, which is closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower_m: f64,
    pub upper_m: f64,
    pub count: u64,
}

/// Fixed-width histogram of nearest-neighbour distances over `[0, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    pub bins: Vec<HistogramBin>,
}

impl DistanceHistogram {
    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn bin_width_m(&self) -> f64 {
        self.bins.first().map_or(0.0, |b| b.upper_m - b.lower_m)
    }

    pub fn max_distance_m(&self) -> f64 {
        self.bins.last().map_or(0.0, |b| b.upper_m)
    }
}

/// Bin distances into `bins` equal-width bins spanning `[0, max]`. A
/// degenerate all-zero distance set lands entirely in the first bin.
pub fn distance_histogram(distances: &[f64], bins: usize) -> Result<DistanceHistogram> {
    if bins == 0 {
        return Err(Error::Domain("histogram needs at least one bin".into()));
    }
    if distances.is_empty() {
        return Err(Error::Domain("histogram of an empty distance set".into()));
    }
    let mut max = 0.0f64;
    for &d in distances {
        if !(d >= 0.0) || !d.is_finite() {
            return Err(Error::Domain(format!(
                "distances must be finite and non-negative, got {d}"
            )));
        }
        max = max.max(d);
    }
    let width = max / bins as f64;
    let mut counts = vec![0u64; bins];
    for &d in distances {
        let idx = if width > 0.0 {
            ((d / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[idx] += 1;
    }
    Ok(DistanceHistogram {
        bins: counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| HistogramBin {
                lower_m: i as f64 * width,
                // The top edge is the true maximum, not bins * width, so the
                // cover is exact despite rounding.
                upper_m: if i + 1 == bins {
                    max
                } else {
                    (i + 1) as f64 * width
                },
                count,
            })
            .collect(),
    })
}

/// Knobs for [`run_nna`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnaConfig {
    pub area_method: AreaMethod,
    pub histogram_bins: usize,
    /// Two-tailed significance level for the CSR test.
    pub alpha: f64,
}

impl Default for NnaConfig {
    fn default() -> Self {
        NnaConfig {
            area_method: AreaMethod::ConvexHull,
            histogram_bins: 50,
            alpha: 0.01,
        }
    }
}

/// Full output of one Clark-Evans run. Serialized field names follow the
/// conventional symbols (`r_bar_A`, `R`, `sigma_rE`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnaResult {
    #[serde(rename = "N")]
    pub n: usize,
    pub area_method: AreaMethod,
    /// Study area in square metres.
    pub area: f64,
    /// Point density `N / area`, per square metre.
    pub rho: f64,
    /// Observed mean NN distance, metres.
    #[serde(rename = "r_bar_A")]
    pub r_bar_a: f64,
    /// Expected mean NN distance under CSR, metres.
    #[serde(rename = "r_bar_E")]
    pub r_bar_e: f64,
    /// Nearest-neighbour index.
    #[serde(rename = "R")]
    pub r: f64,
    /// Standard error of the CSR mean, metres.
    #[serde(rename = "sigma_rE")]
    pub sigma_r_e: f64,
    pub z: f64,
    pub log10_p_two_tailed: f64,
    /// Human-readable p, `mantissa e exponent`.
    pub p_value: String,
    pub alpha: f64,
    pub significant: bool,
    pub pattern: SpatialPattern,
    pub histogram: DistanceHistogram,
}

/// Run the complete analysis on a projected point set.
pub fn run_nna(points: &[ProjectedPoint], config: &NnaConfig) -> Result<NnaResult> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {}",
            config.alpha
        )));
    }
    let area = geo::study_area(points, config.area_method)?;
    let distances = geo::nearest_neighbor_distances(points)?;
    let r_bar_a = mean_nn_distance(&distances)?;
    let r_bar_e = expected_nn_distance(area.point_count, area.area_m2)?;
    let r = nni(r_bar_a, r_bar_e)?;
    let (z, log10_p_two_tailed) = z_test(r_bar_a, r_bar_e, area.point_count, area.density_per_m2)?;
    let significant = log10_p_two_tailed < config.alpha.log10();
    let pattern = if !significant {
        SpatialPattern::Random
    } else if z < 0.0 {
        SpatialPattern::Clustered
    } else {
        SpatialPattern::Dispersed
    };
    Ok(NnaResult {
        n: area.point_count,
        area_method: config.area_method,
        area: area.area_m2,
        rho: area.density_per_m2,
        r_bar_a,
        r_bar_e,
        r,
        sigma_r_e: sigma_expected(area.point_count, area.density_per_m2)?,
        z,
        log10_p_two_tailed,
        p_value: format_p_value(z)?,
        alpha: config.alpha,
        significant,
        pattern,
        histogram: distance_histogram(&distances, config.histogram_bins)?,
    })
}

/// Project a stop set onto its own centroid and run the analysis there.
pub fn run_nna_on_stops(stops: &[Stop], config: &NnaConfig) -> Result<(NnaResult, Projection)> {
    if stops.len() < 3 {
        return Err(Error::Domain(format!(
            "nearest-neighbour analysis needs at least 3 stops, got {}",
            stops.len()
        )));
    }
    let projection = Projection::centered_on(stops.iter().map(|s| (s.latitude, s.longitude)))?;
    let points = stops
        .iter()
        .map(|s| projection.project(s.latitude, s.longitude))
        .collect::<Result<Vec<_>>>()?;
    Ok((run_nna(&points, config)?, projection))
}
