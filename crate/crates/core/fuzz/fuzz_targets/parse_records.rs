#![no_main]

use lft_core::io::{load_records, parse_records_bytes, write_records, Delimiter, IndexBase, RecordFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&flags, body)) = data.split_first() else { return };
    let format = RecordFormat {
        delimiter: if flags & 1 == 0 { Delimiter::Whitespace } else { Delimiter::Comma },
        index_base: if flags & 2 == 0 { IndexBase::Zero } else { IndexBase::One },
    };
    if let Ok(entries) = parse_records_bytes(body, format) {
        let mut out = Vec::new();
        write_records(&mut out, &entries, format).unwrap();
        assert_eq!(parse_records_bytes(&out, format).unwrap(), entries);
    }
    let _ = load_records(body, format, None);
});
