#![no_main]

use fsim_core::dsl::{format_program, load};
use libfuzzer_sys::fuzz_target;

// Anything that loads must survive a format/load round trip unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    match load(src) {
        Ok(p) => {
            let text = format_program(&p);
            let back = load(&text).expect("formatted output reloads");
            assert_eq!(back, p);
            assert_eq!(format_program(&back), text);
        }
        Err(diags) => {
            for d in diags {
                assert!(d.span.start <= d.span.end && d.span.end <= src.len());
                let _ = d.render(src);
            }
        }
    }
});
