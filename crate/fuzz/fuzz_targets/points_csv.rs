#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = repgeom::io::read_points_csv(data);
    let _ = repgeom::io::read_word_list(data);
});
