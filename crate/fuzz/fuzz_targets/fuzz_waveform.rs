#![no_main]

use libfuzzer_sys::fuzz_target;
use ringrc::waveform::OpticalWaveform;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(wf) = OpticalWaveform::from_dump(text) {
            // Accepted dumps must round trip.
            let again = OpticalWaveform::from_dump(&wf.to_dump()).unwrap();
            assert_eq!(wf, again);
        }
    }
});
