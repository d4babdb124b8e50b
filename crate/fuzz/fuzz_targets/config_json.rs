#![no_main]

use entropic_mfg::harness::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::from_json_str(text) {
            let again = ExperimentConfig::from_json_str(&cfg.to_json())
                .expect("serialized config must reload");
            assert_eq!(again, cfg);
        }
    }
});
