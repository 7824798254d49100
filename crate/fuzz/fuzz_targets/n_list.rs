#![no_main]

use doqkd::config::parse_n_list;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(list) = parse_n_list(s) {
            assert!(!list.is_empty());
        }
    }
});
