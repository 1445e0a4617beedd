#![no_main]

use libfuzzer_sys::fuzz_target;

use pixseg::train::runlog;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(log) = runlog::parse_csv(text) {
            let again = runlog::parse_csv(&log.to_csv()).expect("serialized log reparses");
            assert_eq!(again, log);
        }
    }
});
