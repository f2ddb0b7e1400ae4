#![no_main]
use gridcast_core::ingest::{parse_gefc_load, GEFC_EXCLUDED_ZONES};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = parse_gefc_load(data, GEFC_EXCLUDED_ZONES) {
        assert!(set.substations.iter().all(|s| s.len() == set.grid.len()));
    }
});
