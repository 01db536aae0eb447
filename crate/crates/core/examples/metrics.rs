//! ROUGE-1/2/L and novel n-gram ratios for a hand-written example.

use summ::corpus::{tokenize, Document};
use summ::metrics::{novel_ngram_ratio, rouge_l, rouge_n};

fn main() -> summ::Result<()> {
    let reference = tokenize("police killed the gunman");
    let hyp = tokenize("the gunman was shot down by police");
    for n in 1..=2 {
        let s = rouge_n(&hyp, &reference, n);
        println!("ROUGE-{n}: p {:.3} r {:.3} f {:.3}", s.precision, s.recall, s.f1);
    }
    let l = rouge_l(&hyp, &reference);
    println!("ROUGE-L: p {:.3} r {:.3} f {:.3}", l.precision, l.recall, l.f1);

    let doc = Document::new("d", vec![tokenize("the gunman was shot by police on friday")])?;
    for n in 1..=3 {
        println!("novel {n}-grams: {:.3}", novel_ngram_ratio(&[hyp.clone()], &doc, n));
    }
    Ok(())
}
