#![no_main]

use libfuzzer_sys::fuzz_target;
use logicscan::solidity::{count_explicit_checks, ParsedSource};

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    let Ok(parsed) = ParsedSource::parse(src) else { return };
    for entry in parsed.public_functions() {
        if let Ok(expanded) = parsed.expand(&entry) {
            let _ = count_explicit_checks(&expanded);
            let _ = parsed.find_state_variable_writers(&expanded);
        }
    }
});
