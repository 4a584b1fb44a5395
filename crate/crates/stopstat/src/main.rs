//! Command-line front end. All analysis lives in the library; this binary
//! parses flags, merges optional config files, and prints short summaries.
//!
//! Every verb accepts `--config PATH` naming a flat TOML document whose
//! keys are the verb's long flag names with underscores (`area_method`,
//! `max_distance`, ...). Config values override flags, so one shared file
//! can pin a whole workflow; keys a verb does not use are ignored.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stopstat::cluster::KmeansConfig;
use stopstat::geo::AreaMethod;
use stopstat::ingest::{
    poll as run_feed_poll, FeedClient, PollConfig, SnapshotStore, DEFAULT_POLL_INTERVAL_S,
};
use stopstat::kde::DEFAULT_GRID_SIZE;
use stopstat::nna::NnaConfig;
use stopstat::report::{
    read_stops_file, run_clean, run_cluster_files, run_kde_files, run_nna_file, run_pipeline,
    sidecar_path, write_services_csv, write_usage_csv, PipelineConfig, DEFAULT_K,
};
use stopstat::usage::{assign_with_max_distance, service_frequency_table};
use stopstat::{Error, Result};

#[derive(Parser)]
#[command(
    name = "stopstat",
    version,
    about = "Spatial analysis for live public-transport feeds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Poll a live feed and append vehicle snapshots to a store
    Poll(PollArgs),
    /// Apply the cleaning rules to a snapshot store
    Clean(CleanArgs),
    /// Count observations per nearest stop
    Usage(UsageArgs),
    /// Tabulate observation counts per service
    Services(ServicesArgs),
    /// Clark-Evans nearest-neighbour analysis of the stop pattern
    Nna(NnaArgs),
    /// Usage-weighted kernel density surface over the stop network
    Kde(KdeArgs),
    /// k-means clustering of stops on location and usage
    Cluster(ClusterArgs),
    /// Run cleanse, usage, nna, kde, and cluster end to end
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AreaArg {
    /// Convex hull of the point set
    Hull,
    /// Axis-aligned bounding box
    Bbox,
}

impl From<AreaArg> for AreaMethod {
    fn from(a: AreaArg) -> AreaMethod {
        match a {
            AreaArg::Hull => AreaMethod::ConvexHull,
            AreaArg::Bbox => AreaMethod::BoundingBox,
        }
    }
}

#[derive(Args)]
struct PollArgs {
    /// Feed base URL (expects /vehicle_locations and /stops)
    #[arg(long)]
    endpoint: Option<String>,
    /// Seconds between fetches
    #[arg(long)]
    interval: Option<u64>,
    /// Total run time in seconds
    #[arg(long)]
    duration: Option<u64>,
    /// Snapshot store to append to
    #[arg(long)]
    out: Option<PathBuf>,
    /// Static API key sent as an X-API-Key header
    #[arg(long)]
    api_key: Option<String>,
    /// Batch id prefix (defaults to the start epoch second)
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CleanArgs {
    /// Snapshot store to read
    #[arg(long = "in", value_name = "PATH")]
    input: Option<PathBuf>,
    /// Where to write the surviving records (store format)
    #[arg(long)]
    out: Option<PathBuf>,
    /// GeoJSON depot zones; defaults to the built-in Edinburgh set
    #[arg(long)]
    depots: Option<PathBuf>,
    /// Where to write the audit report JSON
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct UsageArgs {
    /// Snapshot store of (ideally cleansed) observations
    #[arg(long)]
    observations: Option<PathBuf>,
    /// Stops file (store sidecar document or bare JSON array)
    #[arg(long)]
    stops: Option<PathBuf>,
    /// Output CSV (stop_id,vehicle_count)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip observations farther than this from every stop, in metres
    #[arg(long)]
    max_distance: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ServicesArgs {
    /// Snapshot store of (ideally cleansed) observations
    #[arg(long)]
    observations: Option<PathBuf>,
    /// Keep the most frequent N services
    #[arg(long)]
    top: Option<usize>,
    /// Output CSV (service_name,count)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct NnaArgs {
    /// Stops file (store sidecar document or bare JSON array)
    #[arg(long)]
    stops: Option<PathBuf>,
    /// Study-area measurement
    #[arg(long, value_enum)]
    area_method: Option<AreaArg>,
    /// Nearest-neighbour distance histogram bins
    #[arg(long)]
    bins: Option<usize>,
    /// Two-tailed significance level
    #[arg(long)]
    alpha: Option<f64>,
    /// Output JSON
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct KdeArgs {
    /// Stops file (store sidecar document or bare JSON array)
    #[arg(long)]
    stops: Option<PathBuf>,
    /// Usage CSV weighting each stop (stop_id,vehicle_count)
    #[arg(long)]
    usage: Option<PathBuf>,
    /// Kernel bandwidth in metres
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Extra bandwidths to sweep, comma-separated metres
    #[arg(long, value_name = "METERS,METERS,...")]
    sweep: Option<String>,
    /// Grid cells per axis
    #[arg(long)]
    grid: Option<usize>,
    /// Output CSV; metadata lands next to it as <out>.json
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    /// Stops file (store sidecar document or bare JSON array)
    #[arg(long)]
    stops: Option<PathBuf>,
    /// Usage CSV supplying the count feature (stop_id,vehicle_count)
    #[arg(long)]
    usage: Option<PathBuf>,
    /// Number of clusters
    #[arg(long)]
    k: Option<usize>,
    /// Seed for the k-means++ restarts
    #[arg(long)]
    seed: Option<u64>,
    /// Independent restarts; the lowest-inertia run wins
    #[arg(long)]
    restarts: Option<usize>,
    /// Output CSV; model and summary JSON land next to it
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Snapshot store (with its .stops.json sidecar)
    #[arg(long)]
    store: Option<PathBuf>,
    /// Directory for all outputs and the manifest
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// GeoJSON depot zones; defaults to the built-in Edinburgh set
    #[arg(long)]
    zones: Option<PathBuf>,
    #[arg(long, value_enum)]
    area_method: Option<AreaArg>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Kernel bandwidth in metres
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Extra bandwidths to sweep, comma-separated metres
    #[arg(long, value_name = "METERS,METERS,...")]
    sweep: Option<String>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Skip observations farther than this from every stop, in metres
    #[arg(long)]
    max_distance: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (verb, result) = match cli.command {
        Command::Poll(args) => ("poll", cmd_poll(args)),
        Command::Clean(args) => ("clean", cmd_clean(args)),
        Command::Usage(args) => ("usage", cmd_usage(args)),
        Command::Services(args) => ("services", cmd_services(args)),
        Command::Nna(args) => ("nna", cmd_nna(args)),
        Command::Kde(args) => ("kde", cmd_kde(args)),
        Command::Cluster(args) => ("cluster", cmd_cluster(args)),
        Command::Pipeline(args) => ("pipeline", cmd_pipeline(args)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Pipeline errors already carry their stage; tag everything else
            // with the verb so the message always names the failing stage.
            let tagged = match e {
                e @ Error::Stage { .. } => e,
                other => Error::stage(verb, other),
            };
            eprintln!("error: {tagged}");
            ExitCode::FAILURE
        }
    }
}

// Config file helpers. A flat TOML table; every getter rejects values of
// the wrong type but never complains about extra keys.

fn load_config(path: Option<&Path>) -> Result<toml::Table> {
    let Some(path) = path else {
        return Ok(toml::Table::new());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn cfg_string(table: &toml::Table, key: &str) -> Result<Option<String>> {
    match table.get(key) {
        None => Ok(None),
        Some(toml::Value::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(Error::Config(format!(
            "config key '{key}' must be a string, got {other}"
        ))),
    }
}

fn cfg_path(table: &toml::Table, key: &str) -> Result<Option<PathBuf>> {
    Ok(cfg_string(table, key)?.map(PathBuf::from))
}

fn cfg_u64(table: &toml::Table, key: &str) -> Result<Option<u64>> {
    match table.get(key) {
        None => Ok(None),
        Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
        Some(other) => Err(Error::Config(format!(
            "config key '{key}' must be a non-negative integer, got {other}"
        ))),
    }
}

fn cfg_usize(table: &toml::Table, key: &str) -> Result<Option<usize>> {
    Ok(cfg_u64(table, key)?.map(|v| v as usize))
}

fn cfg_f64(table: &toml::Table, key: &str) -> Result<Option<f64>> {
    match table.get(key) {
        None => Ok(None),
        Some(toml::Value::Float(f)) => Ok(Some(*f)),
        Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
        Some(other) => Err(Error::Config(format!(
            "config key '{key}' must be a number, got {other}"
        ))),
    }
}

fn cfg_sweep(table: &toml::Table, key: &str) -> Result<Option<Vec<f64>>> {
    match table.get(key) {
        None => Ok(None),
        Some(toml::Value::String(s)) => Ok(Some(parse_sweep(s)?)),
        Some(toml::Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                toml::Value::Float(f) => Ok(*f),
                toml::Value::Integer(i) => Ok(*i as f64),
                other => Err(Error::Config(format!(
                    "config key '{key}' must list numbers, got {other}"
                ))),
            })
            .collect::<Result<Vec<f64>>>()
            .map(Some),
        Some(other) => Err(Error::Config(format!(
            "config key '{key}' must be a number list or comma string, got {other}"
        ))),
    }
}

fn cfg_area(table: &toml::Table, key: &str) -> Result<Option<AreaMethod>> {
    Ok(match cfg_string(table, key)?.as_deref() {
        None => None,
        Some("hull") | Some("convex_hull") => Some(AreaMethod::ConvexHull),
        Some("bbox") | Some("bounding_box") => Some(AreaMethod::BoundingBox),
        Some(other) => {
            return Err(Error::Config(format!(
                "config key '{key}': unknown area method '{other}' (use hull or bbox)"
            )))
        }
    })
}

fn parse_sweep(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::Config(format!("bad sweep value '{t}': {e}")))
        })
        .collect()
}

fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing required {what}")))
}

fn epoch_now() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

fn cmd_poll(mut args: PollArgs) -> Result<()> {
    let table = load_config(args.config.as_deref())?;
    if let Some(v) = cfg_string(&table, "endpoint")? {
        args.endpoint = Some(v);
    }
    if let Some(v) = cfg_u64(&table, "interval")? {
        args.interval = Some(v);
    }
    if let Some(v) = cfg_u64(&table, "duration")? {
        args.duration = Some(v);
    }
    if let Some(v) = cfg_path(&table, "out")? {
        args.out = Some(v);
    }
    if let Some(v) = cfg_string(&table, "api_key")? {
        args.api_key = Some(v);
    }
    if let Some(v) = cfg_string(&table, "run_id")? {
        args.run_id = Some(v);
    }

    let endpoint = require(args.endpoint, "--endpoint (config 'endpoint')")?;
    let out = require(args.out, "--out (config 'out')")?;
    let interval_s = args.interval.unwrap_or(DEFAULT_POLL_INTERVAL_S);
    let poll_config = PollConfig {
        interval_s,
        duration_s: args.duration.unwrap_or(interval_s),
        run_id: args.run_id,
    };
    let mut client = FeedClient::new(&endpoint);
    if let Some(key) = args.api_key {
        client = client.with_api_key(key);
    }
    let store = SnapshotStore::open(&out)?;
    // The stop registry changes rarely; fetch it once per run and keep
    // polling vehicles even if it is unavailable.
    match client.fetch_stops() {
        Ok(stops) => {
            store.write_stops(&stops, epoch_now())?;
            println!(
                "stops: wrote {} entries to {}",
                stops.len(),
                store.stops_path().display()
            );
        }
        Err(e) => log::warn!("stop registry fetch failed: {e}"),
    }
    let summary = run_feed_poll(&client, &poll_config, &store)?;
    println!(
        "poll: {} attempts, {} batches appended, {} records, {} fetch failures",
        summary.attempts,
        summary.batches_appended,
        summary.records_appended,
        summary.fetch_failures
    );
    Ok(())
}

fn cmd_clean(mut args: CleanArgs) -> Result<()> {
    let table = load_config(args.config.as_deref())?;
    if let Some(v) = cfg_path(&table, "in")? {
        args.input = Some(v);
    }
    if let Some(v) = cfg_path(&table, "out")? {
        args.out = Some(v);
    }
    if let Some(v) = cfg_path(&table, "depots")? {
        args.depots = Some(v);
    }
    if let Some(v) = cfg_path(&table, "report")? {
        args.report = Some(v);
    }

    let input = require(args.input, "--in (config 'in')")?;
    let out = require(args.out, "--out (config 'out')")?;
    let report = run_clean(&input, &out, args.depots.as_deref(), args.report.as_deref())?;
    println!(
        "clean: kept {} of {} observations ({} removed) -> {}",
        report.output_count,
        report.input_count,
        report.removed_total(),
        out.display()
    );
    println!(
        "  null heading {}, depot {}, inactive route {}, unserviced {}",
        report.removed_null_heading,
        report.removed_depot,
        report.removed_inactive_route,
        report.removed_unserviced
    );
    Ok(())
}

fn cmd_usage(mut args: UsageArgs) -> Result<()> {
    let table = load_config(args.config.as_deref())?;
    if let Some(v) = cfg_path(&table, "observations")? {
        args.observations = Some(v);
    }
    if let Some(v) = cfg_path(&table, "stops")? {
        args.stops = Some(v);
    }
    if let Some(v) = cfg_path(&table, "out")? {
        args.out = Some(v);
    }
    if let Some(v) = cfg_f64(&table, "max_distance")? {
        args.max_distance = Some(v);
    }

    let observations_path = require(args.observations, "--observations (config 'observations')")?;
    let stops_path = require(args.stops, "--stops (config 'stops')")?;
    let out = require(args.out, "--out (config 'out')")?;
    let observations = SnapshotStore::open(&observations_path)?.read_observations()?;
    let stops = read_stops_file(&stops_path)?;
    let outcome = assign_with_max_distance(&observations, &stops, args.max_distance)?;
    if outcome.skipped_beyond_max > 0 {
        log::warn!(
            "{} observations were farther than {:?} m from every stop",
            outcome.skipped_beyond_max,
            args.max_distance
        );
    }
    write_usage_csv(&out, &outcome.usage)?;
    println!(
        "usage: assigned {} observations across {} stops -> {}",
        outcome.assigned,
        outcome.usage.len(),
        out.display()
    );
    Ok(())
}

fn cmd_services(mut args: ServicesArgs) -> Result<()> {
    let table = load_config(args.config.as_deref())?;
    if let Some(v) = cfg_path(&table, "observations")? {
        args.observations = Some(v);
    }
    if let Some(v) = cfg_usize(&table, "top")? {
        args.top = Some(v);
    }
    if let Some(v) = cfg_path(&table, "out")? {
        args.out = Some(v);
    }

    let observations_path = require(args.observations, "--observations (config 'observations')")?;
    let out = require(args.out, "--out (config 'out')")?;
    let top = args.top.unwrap_or(10);
    let observations = SnapshotStore::open(&observations_path)?.read_observations()?;
    let services = service_frequency_table(&observations, top);
    write_services_csv(&out, &services)?;
    println!(
        "services: top {} of the observed services -> {}",
        services.len(),
        out.display()
    );
    Ok(())
}

fn cmd_nna(mut args: NnaArgs) -> Result<()> {
    let table = load_config(args.config.as_deref())?;
    if let Some(v) = cfg_path(&table, "stops")? {
        args.stops = Some(v);
    }
    if let Some(v) = cfg_usize(&table, "bins")? {
        args.bins = Some(v);
    }
    if let Some(v) = cfg_f64(&table, "alpha")? {
        args.alpha = Some(v);
    }
    if let Some(v) = cfg_path(&table, "out")? {
        args.out = Some(v);
    }
    let area_from_config = cfg_area(&table, "area_method")?;

    let stops = require(args.stops, "--stops (config 'stops')")?;
    let out = require(args.out, "--out (config 'out')")?;
    let defaults = NnaConfig::default();
    let nna_config = NnaConfig {
        area_method: area_from_config
            .or(args.area_method.map(AreaMethod::from))
            .unwrap_or(defaults.area_method),
        histogram_bins: args.bins.unwrap_or(defaults.histogram_bins),
        alpha: args.alpha.unwrap_or(defaults.alpha),
    };
    let result = run_nna_file(&stops, &out, &nna_config)?;
    println!(
        "nna: N={} R={:.4} z={:.3} p={} pattern={:?} -> {}",
        result.n,
        result.r,
        result.z,
        result.p_value,
        result.pattern,
        out.display()
    );
    Ok(())
}

fn cmd_kde(mut args: KdeArgs) -> Result<()> {
    let table = load_config(args.config.as_deref())?;
    if let Some(v) = cfg_path(&table, "stops")? {
        args.stops = Some(v);
    }
    if let Some(v) = cfg_path(&table, "usage")? {
        args.usage = Some(v);
    }
    if let Some(v) = cfg_f64(&table, "bandwidth")? {
        args.bandwidth = Some(v);
    }
    if let Some(v) = cfg_usize(&table, "grid")? {
        args.grid = Some(v);
    }
    if let Some(v) = cfg_path(&table, "out")? {
        args.out = Some(v);
    }
    let sweep = match cfg_sweep(&table, "sweep")? {
        Some(values) => values,
        None => args.sweep.as_deref().map(parse_sweep).transpose()?.unwrap_or_default(),
    };

    let stops = require(args.stops, "--stops (config 'stops')")?;
    let usage = require(args.usage, "--usage (config 'usage')")?;
    let bandwidth = require(args.bandwidth, "--bandwidth (config 'bandwidth')")?;
    let out = require(args.out, "--out (config 'out')")?;
    let grid = args.grid.unwrap_or(DEFAULT_GRID_SIZE);
    let sidecar = run_kde_files(&stops, &usage, &out, bandwidth, &sweep, grid)?;
    println!(
        "kde: {}x{} grid, h={} m, peak {:.6e} at cell ({}, {}), integral {:.4} -> {}",
        sidecar.grid.nx,
        sidecar.grid.ny,
        sidecar.bandwidth_m,
        sidecar.max_density,
        sidecar.argmax_cell.0,
        sidecar.argmax_cell.1,
        sidecar.integral,
        out.display()
    );
    println!("  metadata: {}", sidecar_path(&out).display());
    Ok(())
}

fn cmd_cluster(mut args: ClusterArgs) -> Result<()> {
    let table = load_config(args.config.as_deref())?;
    if let Some(v) = cfg_path(&table, "stops")? {
        args.stops = Some(v);
    }
    if let Some(v) = cfg_path(&table, "usage")? {
        args.usage = Some(v);
    }
    if let Some(v) = cfg_usize(&table, "k")? {
        args.k = Some(v);
    }
    if let Some(v) = cfg_u64(&table, "seed")? {
        args.seed = Some(v);
    }
    if let Some(v) = cfg_usize(&table, "restarts")? {
        args.restarts = Some(v);
    }
    if let Some(v) = cfg_path(&table, "out")? {
        args.out = Some(v);
    }

    let stops = require(args.stops, "--stops (config 'stops')")?;
    let usage = require(args.usage, "--usage (config 'usage')")?;
    let out = require(args.out, "--out (config 'out')")?;
    let defaults = KmeansConfig::default();
    let kmeans_config = KmeansConfig {
        seed: args.seed.unwrap_or(defaults.seed),
        restarts: args.restarts.unwrap_or(defaults.restarts),
        ..defaults
    };
    let k = args.k.unwrap_or(DEFAULT_K);
    let model = run_cluster_files(&stops, &usage, &out, k, &kmeans_config)?;
    println!(
        "cluster: k={} inertia={:.6} iterations={} sizes={:?} -> {}",
        model.k,
        model.inertia,
        model.iterations,
        model.cluster_sizes(),
        out.display()
    );
    Ok(())
}

fn cmd_pipeline(mut args: PipelineArgs) -> Result<()> {
    let table = load_config(args.config.as_deref())?;
    if let Some(v) = cfg_path(&table, "store")? {
        args.store = Some(v);
    }
    if let Some(v) = cfg_path(&table, "out_dir")? {
        args.out_dir = Some(v);
    }
    if let Some(v) = cfg_path(&table, "zones")? {
        args.zones = Some(v);
    }
    if let Some(v) = cfg_usize(&table, "bins")? {
        args.bins = Some(v);
    }
    if let Some(v) = cfg_f64(&table, "alpha")? {
        args.alpha = Some(v);
    }
    if let Some(v) = cfg_f64(&table, "bandwidth")? {
        args.bandwidth = Some(v);
    }
    if let Some(v) = cfg_usize(&table, "grid")? {
        args.grid = Some(v);
    }
    if let Some(v) = cfg_usize(&table, "k")? {
        args.k = Some(v);
    }
    if let Some(v) = cfg_u64(&table, "seed")? {
        args.seed = Some(v);
    }
    if let Some(v) = cfg_usize(&table, "restarts")? {
        args.restarts = Some(v);
    }
    if let Some(v) = cfg_f64(&table, "max_distance")? {
        args.max_distance = Some(v);
    }
    let area_from_config = cfg_area(&table, "area_method")?;
    let sweep = match cfg_sweep(&table, "sweep")? {
        Some(values) => Some(values),
        None => args.sweep.as_deref().map(parse_sweep).transpose()?,
    };

    let store = require(args.store, "--store (config 'store')")?;
    let out_dir = require(args.out_dir, "--out-dir (config 'out_dir')")?;
    let mut config = PipelineConfig::new(store, out_dir);
    config.zones_path = args.zones;
    if let Some(v) = area_from_config.or(args.area_method.map(AreaMethod::from)) {
        config.area_method = v;
    }
    if let Some(v) = args.bins {
        config.histogram_bins = v;
    }
    if let Some(v) = args.alpha {
        config.alpha = v;
    }
    if let Some(v) = args.bandwidth {
        config.bandwidth_m = v;
    }
    if let Some(v) = sweep {
        config.sweep_m = v;
    }
    if let Some(v) = args.grid {
        config.grid_size = v;
    }
    if let Some(v) = args.k {
        config.k = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.restarts {
        config.restarts = v;
    }
    config.max_distance_m = args.max_distance;

    let manifest = run_pipeline(&config)?;
    for stage in &manifest.stages {
        println!(
            "stage {}: {} output(s) in {} ms",
            stage.name,
            stage.outputs.len(),
            stage.duration_ms
        );
    }
    for warning in &manifest.warnings {
        println!("warning: {warning}");
    }
    println!(
        "pipeline: manifest at {}",
        config.out_dir.join("manifest.json").display()
    );
    Ok(())
}
