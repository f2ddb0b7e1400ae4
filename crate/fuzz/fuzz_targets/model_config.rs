#![no_main]
use gridcast_cli::config::parse_model_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_model_config(text, None, None) {
            assert!(cfg.validate().is_ok());
        }
    }
});
