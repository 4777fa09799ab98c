use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use logicscan::llm::{Backends, FnBackend, Request, Role, TemplateId, Templates};
use logicscan::miner::{contract_from_path, mine_function, mine_source, MineOutcome, MAX_REPAIRS};
use logicscan::solidity::ParsedSource;
use logicscan_testkit::FixtureResponder;
use proptest::prelude::*;

fn source(checks: usize) -> String {
    let mut body = String::new();
    for i in 0..checks {
        body.push_str(&format!("        require(reserve{i} >= amount);\n"));
    }
    let vars: String = (0..checks).map(|i| format!("    uint256 reserve{i};\n")).collect();
    format!("pragma solidity ^0.8.2;\ncontract Pool {{\n{vars}    function burn(uint256 amount) external {{\n{body}    }}\n}}\n")
}

fn spec(checks: usize) -> String {
    let names: Vec<String> = (0..checks).map(|i| format!("reserve{i}_ge_amount")).collect();
    format!("order(check[{}], burn)", names.join(", "))
}

fn backend(responder: FixtureResponder) -> Arc<FnBackend> {
    Arc::new(FnBackend::new(move |r: &Request<'_>| {
        let conv: Vec<(String, String)> = r
            .messages
            .iter()
            .map(|m| (if m.role == Role::User { "user" } else { "assistant" }.to_string(), m.content.clone()))
            .collect();
        Ok(responder.reply(&conv))
    }))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn repair_turns_are_bounded(checks in 0usize..4, valid_at in 0usize..8, syntax_errors in any::<bool>()) {
        let src = source(checks);
        let parsed = ParsedSource::parse(&src).unwrap();
        let x = parsed.expand(&parsed.public_functions()[0]).unwrap();
        let bad = if syntax_errors { "order(check[x] burn)".to_string() } else { spec(checks + 1) };
        let replies: Vec<String> = (0..=valid_at).map(|i| if i == valid_at { spec(checks) } else { bad.clone() }).collect();
        let responder = FixtureResponder { bsl: BTreeMap::from([("burn".to_string(), replies)]), ..Default::default() };
        let mut meta = contract_from_path(Path::new("pool.sol"), Some("Lending".into()));
        meta.solidity_major = Some(8);
        let templates = Templates::default();
        let (outcome, session) = mine_function(&meta, &x, &backend(responder.clone()), &templates);
        let r4 = session.turns_of(TemplateId::R4Repair);
        prop_assert!(r4 <= MAX_REPAIRS as usize);
        prop_assert_eq!(r4 as u32, outcome.attempts());
        match &outcome {
            MineOutcome::Success { record, attempts } => {
                prop_assert!(valid_at <= MAX_REPAIRS as usize);
                prop_assert_eq!(*attempts as usize, valid_at);
                record.validate().unwrap();
            }
            MineOutcome::Skipped { attempts, .. } => {
                prop_assert!(valid_at > MAX_REPAIRS as usize);
                prop_assert_eq!(*attempts, MAX_REPAIRS);
            }
        }
        let (again, session2) = mine_function(&meta, &x, &backend(responder), &templates);
        prop_assert_eq!(format!("{again:?}"), format!("{outcome:?}"));
        prop_assert_eq!(session2.transcript, session.transcript);
    }
}

#[test]
fn contract_mining_is_deterministic_under_parallelism() {
    let src = include_str!("fixtures/lending.sol");
    let mut meta = contract_from_path(Path::new("lending.sol"), Some("Lending".into()));
    meta.solidity_major = None;
    let run = |parallelism| {
        let backends = Backends { parallelism, ..Backends::uniform(backend(FixtureResponder::default())) };
        let mined = mine_source(&meta, src, "lending.sol", &backends, &Templates::default());
        mined
            .outcomes
            .into_iter()
            .map(|(name, outcome, session)| (name, format!("{outcome:?}"), session.transcript))
            .collect::<Vec<_>>()
    };
    let serial = run(1);
    assert!(serial.len() >= 5);
    assert_eq!(run(4), serial);
}
