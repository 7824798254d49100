#![no_main]

use doqkd::config::parse_grid_spec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(grid) = parse_grid_spec(s) {
            assert!(!grid.is_empty());
            assert!(grid.windows(2).all(|w| w[0] < w[1]));
        }
    }
});
