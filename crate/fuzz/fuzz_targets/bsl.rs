#![no_main]

use libfuzzer_sys::fuzz_target;
use logicscan::bsl::{parse_bsl, print_bsl};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_bsl(text) {
        assert_eq!(parse_bsl(&print_bsl(&spec)), Ok(spec));
    }
});
