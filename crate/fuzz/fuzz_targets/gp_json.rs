#![no_main]

use libfuzzer_sys::fuzz_target;
use raresim_core::gp::GpModel;

fuzz_target!(|data: &[u8]| {
    let Ok(json) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = GpModel::from_json(json) {
        let x = model.designs().row(0).to_vec();
        if let Ok(p) = model.predict(&x) {
            assert!(p.variance >= 0.0);
        }
        let again = GpModel::from_json(&model.to_json()).expect("re-encoded model decodes");
        assert_eq!(again.observations(), model.observations());
    }
});
