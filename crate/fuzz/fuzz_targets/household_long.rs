#![no_main]
use gridcast_core::ingest::parse_household_long;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(series) = parse_household_long(data) {
        for s in &series {
            assert_eq!(s.values().len(), s.quality().len());
        }
    }
});
