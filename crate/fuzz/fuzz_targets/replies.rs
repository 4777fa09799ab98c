#![no_main]

use libfuzzer_sys::fuzz_target;
use logicscan::bsl::ConditionName;
use logicscan::checker::{parse_deviations, parse_verdicts};
use logicscan::miner::extract_bsl;

fuzz_target!(|data: &[u8]| {
    let Ok(reply) = std::str::from_utf8(data) else { return };
    let names: Vec<ConditionName> =
        ["amount_le_balance", "health_factor_ge_threshold"].iter().map(|n| ConditionName::new(*n).unwrap()).collect();
    if let Ok(verdicts) = parse_verdicts(reply, &names) {
        assert_eq!(verdicts.len(), names.len());
    }
    if let Ok(deviations) = parse_deviations(reply, &names) {
        assert_eq!(deviations.len(), names.len());
    }
    let _ = logicscan::bsl::parse_bsl(extract_bsl(reply));
});
