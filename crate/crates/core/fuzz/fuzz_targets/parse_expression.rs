#![no_main]

use libfuzzer_sys::fuzz_target;
use tcsde::model::parse_expression;

fuzz_target!(|data: &[u8]| {
    if let Ok(src) = std::str::from_utf8(data) {
        if let Ok(expr) = parse_expression(src) {
            let _ = expr.eval(0.5, -1.25);
            // The printed form reparses to the same tree.
            let again = parse_expression(&expr.to_string()).expect("printed expression parses");
            assert_eq!(again, expr);
        }
    }
});
