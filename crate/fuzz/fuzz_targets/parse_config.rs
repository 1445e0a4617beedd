#![no_main]

use libfuzzer_sys::fuzz_target;

use pixseg::train::TrainConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = TrainConfig::desk_preset().apply_text(text) {
            let again = TrainConfig::default()
                .apply_text(&config.to_text())
                .expect("serialized config reparses");
            assert_eq!(again.to_text(), config.to_text());
        }
    }
});
