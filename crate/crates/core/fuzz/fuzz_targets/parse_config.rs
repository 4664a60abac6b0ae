#![no_main]

use libfuzzer_sys::fuzz_target;
use tcsde::cli_io::{emit_config, parse_config};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = parse_config(text) {
            // Accepted configs must survive a round trip.
            let again = parse_config(&emit_config(&config)).expect("emitted config parses");
            assert_eq!(again, config);
        }
    }
});
