#![no_main]

use fracpinn_cli::config::{parse_config, ExperimentConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(raw) = parse_config(text) {
        if let Ok(cfg) = ExperimentConfig::from_raw(&raw) {
            let again = ExperimentConfig::from_text(&cfg.to_text(), &[]).expect("resolved config reparses");
            assert_eq!(again, cfg);
        }
    }
});
