#![no_main]
use gridcast_cli::config::parse_search_space;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_search_space(text, Some(4), Some(1));
    }
});
