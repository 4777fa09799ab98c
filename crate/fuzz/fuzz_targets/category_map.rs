#![no_main]

use libfuzzer_sys::fuzz_target;
use logicscan::corpus::{categorize, tokenize_contract_name, CategoryMap};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(map) = CategoryMap::from_json(text) {
        let _ = categorize(&tokenize_contract_name("AaveLendingPoolV2", &map), &map);
    }
});
