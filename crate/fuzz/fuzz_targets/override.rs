#![no_main]

use entropic_mfg::harness::{parse_override, ExperimentConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_override(text);
        let items: Vec<&str> = text.split('\n').collect();
        if let Ok(cfg) = ExperimentConfig::default().with_overrides(&items) {
            cfg.validate()
                .expect("overrides must produce a valid config");
        }
    }
});
