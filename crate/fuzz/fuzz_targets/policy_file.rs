#![no_main]

use entropic_mfg::simulate::PolicyParams;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(p) = PolicyParams::from_json_str(text) {
            assert!(p.m_hat.is_finite());
            assert!(p.sigma2.iter().all(|v| v.is_finite() && *v > 0.0));
        }
    }
});
