#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(manifest) = pixseg::data::manifest::parse_manifest(text) {
            let again = pixseg::data::manifest::parse_manifest(&manifest.to_text())
                .expect("serialized manifest reparses");
            assert_eq!(again, manifest);
        }
    }
});
