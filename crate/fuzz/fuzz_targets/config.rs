#![no_main]

use libfuzzer_sys::fuzz_target;
use mno_core::config::ExperimentConfig;
use mno_core::gradcheck::GradCheckConfig;

fuzz_target!(|bytes: &[u8]| {
    let Ok(text) = std::str::from_utf8(bytes) else { return };
    if let Ok(cfg) = ExperimentConfig::from_toml(text) {
        assert!(ExperimentConfig::from_toml(&cfg.to_toml()).is_ok());
    }
    let _ = GradCheckConfig::from_toml(text);
});
