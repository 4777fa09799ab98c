use std::collections::BTreeSet;

use logicscan::solidity::{count_explicit_checks, explicit_checks_in, ParsedSource};
use logicscan_testkit::oracle;
use proptest::prelude::*;

fn occurrences(hay: &str, needle: &str) -> usize {
    hay.matches(needle).count()
}

const STATE: &[&str] = &["s0", "s1", "s2", "s3"];

#[derive(Debug, Clone)]
enum Stmt {
    Require(usize),
    Assert(usize),
    IfRevert(usize),
    Assign(usize),
    AddAssign(usize),
    MapWrite,
    Increment(usize),
    Local(usize),
    Call(usize),
}

fn stmt() -> impl Strategy<Value = Stmt> {
    prop_oneof![
        (0..STATE.len()).prop_map(Stmt::Require),
        (0..STATE.len()).prop_map(Stmt::Assert),
        (0..STATE.len()).prop_map(Stmt::IfRevert),
        (0..STATE.len()).prop_map(Stmt::Assign),
        (0..STATE.len()).prop_map(Stmt::AddAssign),
        Just(Stmt::MapWrite),
        (0..STATE.len()).prop_map(Stmt::Increment),
        (0..STATE.len()).prop_map(Stmt::Local),
        (0usize..3).prop_map(Stmt::Call),
    ]
}

fn render(s: &Stmt) -> String {
    match s {
        Stmt::Require(v) => format!("require({} >= a, \"low\");", STATE[*v]),
        Stmt::Assert(v) => format!("assert({} != 7);", STATE[*v]),
        Stmt::IfRevert(v) => format!("if ({} == 0) {{ revert(); }}", STATE[*v]),
        Stmt::Assign(v) => format!("{} = a;", STATE[*v]),
        Stmt::AddAssign(v) => format!("{} += 1;", STATE[*v]),
        Stmt::MapWrite => "m0[msg.sender] = a;".into(),
        Stmt::Increment(v) => format!("{}++;", STATE[*v]),
        Stmt::Local(v) => format!("uint256 t = {};", STATE[*v]),
        Stmt::Call(i) => format!("i{i}(a);"),
    }
}

#[derive(Debug, Clone)]
struct Contract {
    publics: Vec<(Vec<Stmt>, bool)>,
    internals: Vec<Vec<Stmt>>,
}

fn contract() -> impl Strategy<Value = Contract> {
    (
        prop::collection::vec((prop::collection::vec(stmt(), 0..5), any::<bool>()), 1..4),
        prop::collection::vec(prop::collection::vec(stmt(), 0..4), 3),
    )
        .prop_map(|(publics, internals)| Contract { publics, internals })
}

fn source(c: &Contract) -> String {
    let mut out = String::from("pragma solidity ^0.8.4;\ncontract Gen {\n");
    for v in STATE {
        out.push_str(&format!("    uint256 {v};\n"));
    }
    out.push_str("    mapping(address => uint256) m0;\n");
    out.push_str("    modifier guarded() {\n        require(s0 > 0);\n        _;\n    }\n");
    let body = |stmts: &[Stmt]| stmts.iter().map(|s| format!("        {}\n", render(s))).collect::<String>();
    for (i, stmts) in c.internals.iter().enumerate() {
        out.push_str(&format!("    function i{i}(uint256 a) internal {{\n{}    }}\n", body(stmts)));
    }
    for (i, (stmts, guarded)) in c.publics.iter().enumerate() {
        let m = if *guarded { " guarded" } else { "" };
        out.push_str(&format!("    function p{i}(uint256 a) external{m} {{\n{}    }}\n", body(stmts)));
    }
    out.push_str("}\n");
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn expansion_properties(c in contract()) {
        let src = source(&c);
        let parsed = ParsedSource::parse(&src).unwrap();
        let functions = parsed.all_functions();
        for entry in parsed.public_functions() {
            let x = parsed.expand(&entry).unwrap();
            prop_assert_eq!(&parsed.expand(&entry).unwrap(), &x);

            let total = count_explicit_checks(&x).len();
            prop_assert!(total >= explicit_checks_in(&entry.body_text).len());
            let expected = occurrences(&x.expanded_source, "require(")
                + occurrences(&x.expanded_source, "assert(")
                + occurrences(&x.expanded_source, "if (");
            prop_assert_eq!(total, expected, "{}", x.expanded_source);

            let inlined: BTreeSet<&str> = x.parts.iter().map(|p| p.name.as_str()).collect();
            let others: Vec<(String, String)> = functions
                .iter()
                .filter(|f| !inlined.contains(f.name.as_str()))
                .map(|f| (f.name.clone(), f.body_text.clone()))
                .collect();
            let read: Vec<String> = STATE
                .iter()
                .chain(["m0"].iter())
                .filter(|v| x.expanded_source.split(|ch: char| !ch.is_ascii_alphanumeric() && ch != '_').any(|w| w == **v))
                .map(|v| v.to_string())
                .collect();
            let expected = oracle::writers_by_regex(&others, &read);
            let got: BTreeSet<String> = parsed.find_state_variable_writers(&x).into_iter().map(|w| w.name).collect();
            prop_assert_eq!(got, expected, "{}", src);
        }
    }
}

#[test]
fn fixture_writers_are_sound() {
    let src = include_str!("fixtures/lending.sol");
    let parsed = ParsedSource::parse(src).unwrap();
    let functions: Vec<(String, String)> =
        parsed.all_functions().into_iter().map(|f| (f.name.clone(), f.body_text.clone())).collect();
    let state: Vec<String> = parsed.state_variables().into_iter().collect();
    for entry in parsed.public_functions() {
        let x = parsed.expand(&entry).unwrap();
        for w in parsed.find_state_variable_writers(&x) {
            let own = functions.iter().filter(|(n, _)| *n == w.name).cloned().collect::<Vec<_>>();
            assert!(!oracle::writers_by_regex(&own, &state).is_empty(), "{} is not a writer", w.name);
        }
    }
}
