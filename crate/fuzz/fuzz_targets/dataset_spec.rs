#![no_main]
use gridcast_cli::dataset::parse_dataset_spec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_dataset_spec(text);
    }
});
