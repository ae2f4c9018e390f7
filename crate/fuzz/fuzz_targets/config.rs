#![no_main]

use libfuzzer_sys::fuzz_target;
use qfiae::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = RunConfig::from_toml(text) {
        let written = config.to_toml();
        RunConfig::from_toml(&written).expect("written config parses");
    }
});
