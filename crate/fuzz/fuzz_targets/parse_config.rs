#![no_main]

use hexplane::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::parse(text) {
        let _ = cfg.validate();
        RunConfig::parse(&cfg.to_toml()).unwrap();
    }
});
