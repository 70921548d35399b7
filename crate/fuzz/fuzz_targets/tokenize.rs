#![no_main]

use libfuzzer_sys::fuzz_target;
use repgeom::corpus::{tokenize_corpus, DocSplit, TokenizeRules};

fuzz_target!(|data: &[u8]| {
    for split in [DocSplit::Line, DocSplit::BlankLine] {
        let rules = TokenizeRules {
            doc_split: split,
            vocab_size: Some(50),
            ..Default::default()
        };
        if let Ok((docs, vocab)) = tokenize_corpus(data, &rules) {
            assert!(docs.iter().flatten().all(|&id| (id as usize) < vocab.len()));
        }
    }
});
