use logicscan::bsl::{check_count, parse_bsl, print_bsl, ActionName, BslSpec, ConditionName};
use logicscan_testkit::oracle;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,14}"
}

fn spec() -> impl Strategy<Value = BslSpec> {
    (prop::collection::vec(ident(), 0..7), ident()).prop_map(|(checks, action)| {
        BslSpec::new(
            checks.into_iter().map(|c| ConditionName::new(c).unwrap()).collect(),
            ActionName::new(action).unwrap(),
        )
    })
}

/// Concrete syntax with arbitrary legal whitespace between tokens.
fn spaced(spec: &BslSpec, gaps: &[&str]) -> String {
    let mut gap = gaps.iter().cycle();
    let mut out = String::new();
    let mut push = |tok: &str| {
        out.push_str(gap.next().unwrap());
        out.push_str(tok);
    };
    push("order");
    push("(");
    push("check");
    push("[");
    for (i, c) in spec.checks.iter().enumerate() {
        if i > 0 {
            push(",");
        }
        push(c.as_str());
    }
    push("]");
    push(",");
    push(spec.action.as_str());
    push(")");
    out.push_str(gap.next().unwrap());
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn print_then_parse_is_identity(s in spec()) {
        let text = print_bsl(&s);
        prop_assert!(oracle::bsl_accepts(&text));
        prop_assert_eq!(parse_bsl(&text).unwrap(), s);
    }

    #[test]
    fn check_count_matches_split_oracle(s in spec()) {
        let text = print_bsl(&s);
        prop_assert_eq!(Some(check_count(&s)), oracle::bsl_check_count(&text));
    }

    #[test]
    fn whitespace_is_insignificant(s in spec(), gaps in prop::collection::vec("[ \t\n\r\x0c]{0,3}", 1..8)) {
        let gaps: Vec<&str> = gaps.iter().map(String::as_str).collect();
        let text = spaced(&s, &gaps);
        prop_assert!(oracle::bsl_accepts(&text));
        prop_assert_eq!(parse_bsl(&text).unwrap(), s);
    }

    #[test]
    fn parser_agrees_with_regex_on_mutants(s in spec(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut text = print_bsl(&s);
        for _ in 0..3 {
            text = oracle::mutate(&text, &mut rng);
            prop_assert_eq!(parse_bsl(&text).is_ok(), oracle::bsl_accepts(&text), "{:?}", text);
        }
    }

    #[test]
    fn arbitrary_strings_never_half_parse(text in "\\PC{0,40}") {
        match parse_bsl(&text) {
            Ok(spec) => {
                prop_assert!(oracle::bsl_accepts(&text));
                prop_assert_eq!(parse_bsl(&print_bsl(&spec)).unwrap(), spec);
            }
            Err(e) => {
                prop_assert!(!oracle::bsl_accepts(&text));
                prop_assert!(e.offset <= text.len());
            }
        }
    }
}

#[test]
fn thousand_near_misses_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e65_6172);
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let mut rejected = 0;
    while rejected < 1000 {
        let s = spec().new_tree(&mut runner).unwrap().current();
        let mutant = oracle::mutate(&print_bsl(&s), &mut rng);
        if oracle::bsl_accepts(&mutant) {
            continue;
        }
        assert!(parse_bsl(&mutant).is_err(), "accepted near miss {mutant:?}");
        rejected += 1;
    }
}

#[test]
fn error_messages_are_stable() {
    let cases = [
        ("", "offset 0: expected \"order\", found end of input"),
        ("order(check[a,], x)", "offset 14: expected condition identifier, found \"]\""),
        ("order(check[a] x)", "offset 15: expected \",\", found \"x\""),
        ("order(check[A], x)", "offset 12: expected condition identifier or \"]\", found \"A\""),
        ("order(check[a], x) y", "offset 19: expected end of input, found \"y\""),
    ];
    for (input, message) in cases {
        assert_eq!(parse_bsl(input).unwrap_err().to_string(), message, "{input:?}");
    }
}
