#![no_main]
use gridcast_core::ingest::parse_gefc_temperature;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_gefc_temperature(data);
});
