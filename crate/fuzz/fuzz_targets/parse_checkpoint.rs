#![no_main]

use libfuzzer_sys::fuzz_target;

use pixseg::model::checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = checkpoint::decode(data) {
        let bytes = checkpoint::encode(&model);
        let again = checkpoint::decode(&bytes).expect("re-encoded checkpoint decodes");
        assert_eq!(again.config, model.config);
        assert_eq!(again.params, model.params);
    }
});
