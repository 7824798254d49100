#![no_main]

use doqkd::config::parse_lengths;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(lengths) = parse_lengths(s) {
            assert!(lengths.iter().all(|l| l.is_finite() && *l >= 0.0));
            assert!(lengths.windows(2).all(|w| w[0] <= w[1]));
        }
    }
});
