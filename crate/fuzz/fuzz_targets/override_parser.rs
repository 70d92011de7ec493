#![no_main]

use fracpinn_cli::config::{parse_config, parse_override};
use libfuzzer_sys::fuzz_target;

const BASE: &str = "[experiment]\nkind = forward_fpoisson\n";

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok((key, value)) = parse_override(text) {
        assert!(key.contains('.'));
        assert_eq!(value, value.trim());
        let mut raw = parse_config(BASE).unwrap();
        raw.apply_overrides(&[text.to_string()]).expect("accepted override applies");
        assert_eq!(raw.entries[&key].0, value);
    }
});
