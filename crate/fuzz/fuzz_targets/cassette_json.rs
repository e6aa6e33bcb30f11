#![no_main]

use fsim_synth::Cassette;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(json) = std::str::from_utf8(data) else { return };
    if let Ok(c) = Cassette::parse(json) {
        let text = c.to_json();
        assert_eq!(Cassette::parse(&text).expect("reparses").to_json(), text);
    }
    let _ = fsim_synth::Transcript::from_json(json);
});
