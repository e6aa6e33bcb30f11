#![no_main]

use fsim_core::dsl::{parse_patch, patch_from_doc, patch_to_doc};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(json) = std::str::from_utf8(data) else { return };
    if let Ok(patch) = parse_patch(json) {
        let again = patch_from_doc(&patch_to_doc(&patch)).expect("a parsed patch converts back");
        assert_eq!(again, patch);
    }
});
