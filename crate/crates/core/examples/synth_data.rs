//! Generates a small synthetic corpus and prints one pair with its salient
//! sentence indices.

use summ::corpus::{generate_synthetic_corpus, SynthConfig};

fn main() -> summ::Result<()> {
    let pairs = generate_synthetic_corpus(&SynthConfig {
        n_docs: 5,
        vocab_size: 50,
        sents_per_doc: 6,
        salient_per_doc: 2,
        noise_rate: 0.2,
        seed: 7,
    })?;
    let p = &pairs[0];
    println!("document {}:", p.id());
    for (i, s) in p.document.sentences.iter().enumerate() {
        println!("  [{i}] {}", s.join(" "));
    }
    println!("salient: {:?}", p.salient);
    println!("summary:");
    for s in &p.summary {
        println!("  {}", s.join(" "));
    }
    Ok(())
}
