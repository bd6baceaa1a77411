//! Split a labeled corpus into a class-balanced labeled set and an
//! unlabeled pool and print the manifest head.

use interlude::data::{split_dataset, write_manifest, LabeledCorpus, Sample, SplitOptions};

fn main() -> interlude::Result<()> {
    let n = 100;
    let corpus = LabeledCorpus::new(
        (0..n).map(|i| Sample::Vector(vec![i as f64])).collect(),
        (0..n).map(|i| i % 3).collect(),
        3,
    )?;
    let split = split_dataset(&corpus, 10, 0, SplitOptions::default())?;
    println!(
        "{} labeled (per class {:?}), {} unlabeled",
        split.labeled.len(),
        split.class_counts,
        split.unlabeled.len()
    );
    let mut buf = Vec::new();
    write_manifest(&split, &mut buf).map_err(|e| interlude::Error::io("<manifest>", e))?;
    for line in String::from_utf8_lossy(&buf).lines().take(12) {
        println!("{line}");
    }
    Ok(())
}
