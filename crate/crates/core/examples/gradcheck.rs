//! Finite-difference check of the extractor's cross-entropy gradient.

use summ::extractor::{Extractor, ExtractorConfig};
use summ::substrate::{finite_difference_check, Tape};

fn main() -> summ::Result<()> {
    let cfg = ExtractorConfig {
        vocab_size: 20,
        emb_dim: 4,
        conv_filters: 2,
        hidden: 8,
    };
    let ext = Extractor::new(cfg, 1);
    let doc = vec![vec![4, 5, 6], vec![7, 8, 9, 10], vec![11, 12]];
    let labels = vec![1, 2];
    let report = finite_difference_check(
        &ext.params,
        |p| {
            let mut t = Tape::new(p);
            let l = ext.ml_loss_on_tape(&mut t, &doc, &labels).expect("labels in range");
            (t.scalar(l), t.backward(l))
        },
        1e-5,
    );
    println!(
        "checked {} coordinates: max relative error {:.2e}, max absolute error {:.2e}",
        report.checked, report.max_rel_error, report.max_abs_error
    );
    if let Some((name, idx, analytic, numeric)) = report.worst {
        println!("worst: {name}[{idx}] analytic {analytic:.6e} numeric {numeric:.6e}");
    }
    Ok(())
}
