#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(scene) = gazeguide_core::load_scene(data) {
        // anything accepted must survive a round trip
        let bytes = gazeguide_core::save_scene(&scene);
        let again = gazeguide_core::load_scene(&bytes).expect("canonical scene reloads");
        assert_eq!(scene, again);
    }
});
