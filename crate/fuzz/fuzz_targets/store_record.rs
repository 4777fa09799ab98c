#![no_main]

use libfuzzer_sys::fuzz_target;
use logicscan::miner::FunctionRecord;

// Records are read back from `records/<id>.json` in a store directory.
fuzz_target!(|data: &[u8]| {
    if let Ok(record) = serde_json::from_slice::<FunctionRecord>(data) {
        let _ = record.validate();
    }
});
