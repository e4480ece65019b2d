#![no_main]

use libfuzzer_sys::fuzz_target;

// The TOML config loader must never panic, whatever the file contents.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = ringrc::config::Config::from_toml_str(text);
    }
});
