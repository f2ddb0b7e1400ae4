#![no_main]
use gridcast_nn::{decode_checkpoint, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = decode_checkpoint(data) {
        // Whatever decodes must re-encode to the same bytes.
        let again = encode_checkpoint(
            ck.seed,
            &ck.config_hash,
            ck.tensors.iter().map(|(n, t)| (n.as_str(), t)),
        );
        assert_eq!(again, data);
    }
});
