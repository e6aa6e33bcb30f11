#![no_main]

use fsim_synth::pipeline::{parse_generated, parse_plan};
use fsim_synth::Purpose;
use libfuzzer_sys::fuzz_target;

// Provider replies are untrusted text.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_plan(text);
    for purpose in [Purpose::Controller, Purpose::Model, Purpose::View] {
        let _ = parse_generated(purpose, text);
    }
});
