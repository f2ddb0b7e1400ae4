#![no_main]
use gridcast_core::ingest::parse_incidence;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(parsed) = parse_incidence(data) {
        assert_eq!(parsed.value.len() % 24, 0);
    }
});
