//! Serves a fixture responder on a loopback port until killed.
//!
//! Usage: `mock-gateway <responder.json> [addr] [embedding-dim]`

use logicscan_testkit::{server::gateway_handler, FixtureResponder, MockServer};

fn main() {
    let mut args = std::env::args().skip(1);
    let Some(path) = args.next() else {
        eprintln!("usage: mock-gateway <responder.json> [addr] [embedding-dim]");
        std::process::exit(2);
    };
    let addr = args.next().unwrap_or_else(|| "127.0.0.1:0".into());
    let dim = args.next().and_then(|d| d.parse().ok()).unwrap_or(64);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| {
        eprintln!("{path}: {e}");
        std::process::exit(2);
    });
    let responder = FixtureResponder::from_json(&text).unwrap_or_else(|e| {
        eprintln!("{path}: {e}");
        std::process::exit(2);
    });
    let server = MockServer::bind(&addr, gateway_handler(responder, dim)).unwrap_or_else(|e| {
        eprintln!("{addr}: {e}");
        std::process::exit(2);
    });
    println!("{}", server.url());
    loop {
        std::thread::park();
    }
}
