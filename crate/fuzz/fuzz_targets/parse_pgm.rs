#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(mask) = pixseg::data::pnm::decode_pgm(data) {
        let bytes = pixseg::data::pnm::encode_pgm(&mask);
        let again = pixseg::data::pnm::decode_pgm(&bytes).expect("re-encoded mask decodes");
        assert_eq!(again, mask);
    }
});
