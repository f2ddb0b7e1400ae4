#![no_main]
use gridcast_core::eval::{check_same_windows, read_scores_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(scores) = read_scores_csv(data) {
        assert!(check_same_windows(&scores, &scores).is_ok());
    }
});
