#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // must never panic or over-allocate; round-trip decoded images exactly
    if let Ok(image) = pixseg::data::pnm::decode_ppm(data) {
        let bytes = pixseg::data::pnm::encode_ppm(&image).expect("decoded image re-encodes");
        let again = pixseg::data::pnm::decode_ppm(&bytes).expect("re-encoded image decodes");
        assert_eq!(again.shape(), image.shape());
        assert_eq!(again.data(), image.data());
    }
});
