#![no_main]

use libfuzzer_sys::fuzz_target;
use raresim_bench::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = text.parse::<ExperimentConfig>() {
            assert!(config.replications >= 1);
            config.validate().expect("parsed configs are valid");
        }
    }
});
