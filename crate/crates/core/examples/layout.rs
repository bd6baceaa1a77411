//! Print the slot order of every batch layout and count its
//! labeled/unlabeled adjacencies.
//!
//! cargo run --example layout [B] [mu]

use interlude::layout::{interdigitate, LayoutKind, Role};

fn main() -> interlude::Result<()> {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<usize>().expect("integer argument"));
    let b = args.next().unwrap_or(2);
    let mu = args.next().unwrap_or(2);
    let names = |prefix: &str, n: usize| (1..=n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>();
    for kind in LayoutKind::ALL {
        let batch = match interdigitate(
            names("x", b).into_iter().map(|s| s + "w").collect(),
            names("x", b).into_iter().map(|s| s + "s").collect(),
            names("u", mu * b).into_iter().map(|s| s + "w").collect(),
            names("u", mu * b).into_iter().map(|s| s + "s").collect(),
            kind,
        ) {
            Ok(batch) => batch,
            Err(e) => {
                println!("{kind}: {e}");
                continue;
            }
        };
        let adj = batch.count_lu_adjacencies();
        let order: Vec<&str> = batch.samples().map(|s| s.as_str()).collect();
        println!(
            "{kind}: lu={} ll={} uu={}\n  {}",
            adj.lu,
            adj.ll,
            adj.uu,
            order.join(" ")
        );
        let tags: Vec<_> = batch.tags().collect();
        let labeled_then_unlabeled = (0..tags.len())
            .filter(|&p| tags[p].role == Role::Labeled && tags[(p + 1) % tags.len()].role == Role::Unlabeled)
            .count();
        println!(
            "  labeled slots followed by an unlabeled slot: {labeled_then_unlabeled} of {}",
            2 * b
        );
    }
    Ok(())
}
