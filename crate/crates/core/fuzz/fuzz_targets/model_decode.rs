#![no_main]

use libfuzzer_sys::fuzz_target;
use simdoa::model_file::{decode, encode};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(file) = decode(text) {
        let again = encode(&file.geometry, file.beta, &file.phases);
        assert_eq!(decode(&again).expect("re-encoded model decodes"), file);
    }
});
