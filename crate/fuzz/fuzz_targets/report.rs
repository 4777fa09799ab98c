#![no_main]

use libfuzzer_sys::fuzz_target;
use logicscan::checker::{reports_from_json, reports_to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(reports) = reports_from_json(text) {
        assert_eq!(reports_from_json(&reports_to_json(&reports)).ok(), Some(reports));
    }
});
