#![no_main]
use gridcast_models::TrainedModel;
use libfuzzer_sys::fuzz_target;

// Input layout: sidecar JSON, a zero byte, then checkpoint bytes.
fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == 0) else {
        return;
    };
    let Ok(sidecar) = std::str::from_utf8(&data[..split]) else {
        return;
    };
    let _ = TrainedModel::from_bytes(&data[split + 1..], sidecar);
});
