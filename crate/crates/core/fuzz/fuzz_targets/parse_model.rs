#![no_main]

use lft_core::FactorModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = FactorModel::parse_text(text) {
        let again = FactorModel::parse_text(&model.to_text()).unwrap();
        assert_eq!(again, model);
    }
});
