#![no_main]

use libfuzzer_sys::fuzz_target;
use nullframe::exprdsl::{eval_jet2, parse_expression};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Parsing must never panic; on success, printing must round-trip and
    // evaluation must never panic either.
    if let Ok(ast) = parse_expression(text, 4) {
        let printed = ast.to_string();
        let reparsed = parse_expression(&printed, 4).expect("printed form parses");
        assert_eq!(ast, reparsed);
        let _ = eval_jet2(&ast, &[0.3, -0.7, 1.1, 0.05]);
    }
});
