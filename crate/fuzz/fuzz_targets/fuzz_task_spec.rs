#![no_main]

use libfuzzer_sys::fuzz_target;
use ringrc::tasks::TaskSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = text.parse::<TaskSpec>() {
            // Accepted specs must survive a display/parse round trip.
            let again: TaskSpec = spec.to_string().parse().unwrap();
            assert_eq!(spec, again);
        }
    }
});
