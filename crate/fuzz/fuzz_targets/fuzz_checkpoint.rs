#![no_main]

use gradgrow::checkpoint::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(net) = decode(text) {
        let text = encode(&net);
        let again = decode(&text).expect("encoded checkpoint decodes");
        assert_eq!(encode(&again), text);
    }
});
