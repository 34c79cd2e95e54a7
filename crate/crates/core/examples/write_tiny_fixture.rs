//! Regenerates `fixtures/tiny-lm.txt` from the reference seed.

use std::path::PathBuf;

use steerlab_core::model::TinyModel;

fn main() -> steerlab_core::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/tiny-lm.txt")));
    TinyModel::reference().save(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}
