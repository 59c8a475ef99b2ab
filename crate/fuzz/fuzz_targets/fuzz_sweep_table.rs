#![no_main]

use gradgrow::harness::sweep::{header_line, parse_table};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rows) = parse_table(text) {
        let mut out = header_line();
        for row in &rows {
            out.push_str(&row.to_line());
        }
        let again = parse_table(&out).expect("written table parses");
        let lines: String = again.iter().map(|r| r.to_line()).collect();
        assert_eq!(header_line() + &lines, out);
    }
});
