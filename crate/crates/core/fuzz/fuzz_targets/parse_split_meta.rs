#![no_main]

use lft_core::io::SplitMetadata;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(meta) = SplitMetadata::parse(text) {
        assert_eq!(SplitMetadata::parse(&meta.to_json()).unwrap(), meta);
    }
});
