//! Capture vehicle snapshots against a mock feed.
//!
//! Stands up a tiny HTTP server on a loopback port that speaks just enough
//! of the feed protocol (`/vehicle_locations` and `/stops`), then drives a
//! two-slot poll against it and inspects what landed in the store.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use stopstat::ingest::{poll, FeedClient, PollConfig, SnapshotStore};

fn respond(stream: &mut TcpStream, body: &str) {
    let response = format!(
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        body.len(),
        body
    );
    let _ = stream.write_all(response.as_bytes());
}

fn vehicles_payload(fetch: usize) -> String {
    // Two buses creep north a little on every fetch; timestamps advance so
    // successive batches hold distinct (vehicle_id, timestamp) records.
    let t = 1_700_000_000 + fetch as i64 * 60;
    format!(
        concat!(
            r#"{{"vehicles":["#,
            r#"{{"vehicle_id":"201","service_name":"16","latitude":{:.6},"longitude":-3.19,"#,
            r#""heading":12.0,"destination":"Colinton","next_stop":"bb-01","last_gps_fix":{}}},"#,
            r#"{{"vehicle_id":"202","service_name":"27","latitude":{:.6},"longitude":-3.21,"#,
            r#""heading":200.0,"destination":"Hunter's Tryst","next_stop":"bb-02","last_gps_fix":{}}}"#,
            r#"]}}"#
        ),
        55.9500 + fetch as f64 * 0.0004,
        t,
        55.9610 + fetch as f64 * 0.0004,
        t
    )
}

const STOPS_PAYLOAD: &str = r#"{"stops":[
    {"stop_id":"bb-01","name":"Bread Street","latitude":55.9462,"longitude":-3.2037},
    {"stop_id":"bb-02","name":"Lothian Road","latitude":55.9478,"longitude":-3.2062},
    {"stop_id":"bb-03","name":"Morrison Street","latitude":55.9455,"longitude":-3.2129}
]}"#;

fn serve(listener: TcpListener, stop: Arc<AtomicBool>) {
    let fetches = AtomicUsize::new(0);
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(mut stream) = stream else { continue };
        let mut head = Vec::new();
        let mut byte = [0u8; 1];
        while !head.ends_with(b"\r\n\r\n") && stream.read(&mut byte).is_ok_and(|n| n == 1) {
            head.push(byte[0]);
        }
        let head = String::from_utf8_lossy(&head);
        if head.starts_with("GET /stops") {
            respond(&mut stream, STOPS_PAYLOAD);
        } else if head.starts_with("GET /vehicle_locations") {
            let fetch = fetches.fetch_add(1, Ordering::SeqCst);
            respond(&mut stream, &vehicles_payload(fetch));
        } else {
            let _ = stream.write_all(b"HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
        }
    }
}

fn main() -> stopstat::Result<()> {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind a loopback port");
    let addr = listener.local_addr().expect("local address");
    let stop = Arc::new(AtomicBool::new(false));
    let server = {
        let stop = Arc::clone(&stop);
        std::thread::spawn(move || serve(listener, stop))
    };

    let dir = tempfile::tempdir().expect("temp dir");
    let store_path = dir.path().join("snapshots.ndjson");
    let store = SnapshotStore::open(&store_path)?;
    let client = FeedClient::new(format!("http://{addr}"));

    let stops = client.fetch_stops()?;
    store.write_stops(&stops, 1_700_000_000)?;
    println!("stop registry: {} stops -> {}", stops.len(), store.stops_path().display());

    // Two slots: one fetch at t = 0 and one at t = 1 s.
    let config = PollConfig {
        interval_s: 1,
        duration_s: 1,
        run_id: Some("demo".into()),
    };
    let summary = poll(&client, &config, &store)?;
    println!(
        "poll: {} attempts, {} batches, {} records, {} failures",
        summary.attempts, summary.batches_appended, summary.records_appended, summary.fetch_failures
    );

    println!("\nstored records:");
    for record in store.read_all()? {
        println!(
            "  {} vehicle {} service {} at ({:.4}, {:.4}) t={}",
            record.batch_id,
            record.vehicle_id,
            record.service_name.as_deref().unwrap_or("-"),
            record.latitude,
            record.longitude,
            record.timestamp
        );
    }

    stop.store(true, Ordering::SeqCst);
    let _ = TcpStream::connect(addr); // unblock the accept loop
    let _ = server.join();
    Ok(())
}
