#![no_main]
use gridcast_core::preprocess::HolidayCalendar;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = HolidayCalendar::parse(data);
});
