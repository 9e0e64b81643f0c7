//! Trains the router on the bundled corpus with the default settings and
//! writes the model to the path given as the only argument.
//!
//!     cargo run --release -p tutorloop-classifier --example train_bundled -- crates/cli/assets/router.bin

use tutorloop_classifier::{parse_corpus, save_model, train, TrainConfig, BUNDLED_CORPUS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .ok_or("usage: train_bundled <model path>")?;
    let corpus = parse_corpus(BUNDLED_CORPUS)?;
    let (model, report) = train(&corpus, &TrainConfig::default())?;
    for e in &report.epochs {
        println!(
            "epoch {:>2}  loss {:.5}  held-out accuracy {:?}",
            e.epoch, e.train_loss, e.heldout_accuracy
        );
    }
    save_model(&model, &out)?;
    println!("wrote {out}");
    Ok(())
}
