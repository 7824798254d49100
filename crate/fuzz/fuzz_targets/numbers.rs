#![no_main]

use doqkd::config::{parse_count, parse_real};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_real(s);
        let _ = parse_count(s);
    }
});
