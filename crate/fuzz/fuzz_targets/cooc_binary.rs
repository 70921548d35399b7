#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = repgeom::io::parse_cooc_binary(data) {
        let mut out = Vec::new();
        repgeom::io::write_cooc_binary(&t, &mut out).unwrap();
        let again = repgeom::io::parse_cooc_binary(&out).expect("written table reparses");
        assert_eq!(again.entries(), t.entries());
    }
});
