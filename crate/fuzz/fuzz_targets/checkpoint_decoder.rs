#![no_main]

use fracpinn::checkpoint::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(ck) = decode(text) {
        assert_eq!(decode(&encode(&ck)).expect("encoded checkpoint decodes"), ck);
    }
});
