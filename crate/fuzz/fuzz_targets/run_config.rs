#![no_main]

use doqkd::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::parse(text) {
            // anything that parses must also yield usable contexts
            for d in cfg.dimensions() {
                cfg.context(d).expect("validated config builds a context");
            }
        }
    }
});
