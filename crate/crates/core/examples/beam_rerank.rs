//! Beam-decodes each extracted sentence and reranks the combinations to
//! minimize repeated bigrams across the summary.

use summ::abstractor::{Abstractor, AbstractorConfig};
use summ::corpus::{tokenize, Vocabulary, RESERVED};
use summ::decoding::{beam_rewrite, rerank, repeated_ngrams, DecodeConfig};

fn main() -> summ::Result<()> {
    let words = "the cat sat on mat a dog ran in park and then".split(' ');
    let vocab = Vocabulary::from_tokens(RESERVED.iter().map(|s| s.to_string()).chain(words.map(String::from)).collect())?;
    let abs = Abstractor::new(
        AbstractorConfig {
            vocab_size: vocab.len(),
            emb_dim: 8,
            hidden: 8,
        },
        3,
    );
    let cfg = DecodeConfig {
        max_len: 8,
        ..DecodeConfig::default()
    };
    let sents = [tokenize("the cat sat on the mat"), tokenize("a dog ran in the park")];
    let beams: Vec<_> = sents.iter().map(|s| beam_rewrite(&abs, &vocab, s, cfg.beam, &cfg)).collect();
    for (i, b) in beams.iter().enumerate() {
        println!("sentence {i}:");
        for h in b {
            println!("  {:7.3}  {}", h.score, h.tokens.join(" "));
        }
    }
    let best = rerank(&beams, 2, cfg.rerank_cap);
    let top: Vec<_> = beams.iter().map(|b| b[0].tokens.clone()).collect();
    println!("top beams: {} repeated bigrams", repeated_ngrams(&top, 2));
    println!("reranked choice {:?}: {} repeated bigrams", best.choice, best.repeated);
    Ok(())
}
