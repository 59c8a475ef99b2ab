#![no_main]

use gradgrow::harness::ConfigFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ConfigFile::parse(text) {
        let again = ConfigFile::parse(&cfg.to_toml()).expect("serialized config parses");
        assert_eq!(again, cfg);
    }
});
