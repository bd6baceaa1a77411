//! Draw one weak and one strong realization and apply each to a labeled
//! image and its unlabeled companions, so the whole group shares the same
//! transformation.

use interlude::data::{draw_aug_params, get_aug, AugPolicy, Image, Sample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gradient(offset: u8) -> Sample {
    let data = (0..8 * 8)
        .flat_map(|i| {
            let v = ((i % 8) * 32) as u8;
            [v.wrapping_add(offset), 0, 255 - v]
        })
        .collect();
    Sample::Image(Image::new(8, 8, 3, data).expect("8x8x3 buffer"))
}

fn main() -> interlude::Result<()> {
    let policy = AugPolicy::image(8, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (weak, strong) = draw_aug_params(&policy, &mut rng);
    println!("weak realization:   {:?}", weak.params);
    println!("strong realization: {:?}", strong.params);

    let labeled = gradient(0);
    let group = vec![gradient(10), gradient(20), gradient(30)];
    let views = get_aug(&labeled, &group, group.len(), &weak, &strong)?;

    let first_row = |s: &Sample| match s {
        Sample::Image(img) => (0..img.width).map(|x| img.get(0, x, 0)).collect::<Vec<_>>(),
        Sample::Vector(v) => v.iter().map(|x| *x as u8).collect(),
    };
    println!("labeled weak   {:?}", first_row(&views.labeled_w));
    for (i, u) in views.unlabeled_w.iter().enumerate() {
        println!("unlabeled {i} w  {:?}", first_row(u));
    }
    println!("labeled strong {:?}", first_row(&views.labeled_s));
    let replay = weak.apply(&labeled)?;
    println!(
        "replaying the weak realization is identical: {}",
        replay == views.labeled_w
    );
    Ok(())
}
