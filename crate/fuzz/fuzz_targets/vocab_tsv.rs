#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(v) = repgeom::io::read_vocab_tsv(data) {
        let mut out = Vec::new();
        repgeom::io::write_vocab_tsv(&v, &mut out).unwrap();
        let again = repgeom::io::read_vocab_tsv(out.as_slice()).expect("written vocabulary reparses");
        assert_eq!(again.len(), v.len());
    }
});
