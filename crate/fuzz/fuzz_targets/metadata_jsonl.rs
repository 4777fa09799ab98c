#![no_main]

use libfuzzer_sys::fuzz_target;
use logicscan::corpus::{parse_metadata_jsonl, to_jsonl};

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_metadata_jsonl(data, "fuzz.jsonl") {
        let again = parse_metadata_jsonl(to_jsonl(&rows).as_bytes(), "fuzz.jsonl").expect("own output parses");
        assert_eq!(again, rows);
    }
});
