//! Drive the self-adaptive threshold with a stream of increasingly
//! confident predictions and report the fairness term along the way.

use interlude::adaptive::AdaptiveState;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn batch(rng: &mut ChaCha8Rng, n: usize, c: usize, sharpness: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, c), |_| (sharpness * rng.random::<f64>()).exp())
}

fn normalize(mut q: Array2<f64>) -> Array2<f64> {
    for mut row in q.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    q
}

fn main() -> interlude::Result<()> {
    let c = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut state = AdaptiveState::new(c, 0.99)?;
    println!(
        "t=0 tau {:.4} thresholds {:?}",
        state.tau_global,
        state.class_thresholds()?
    );
    for t in 1..=500 {
        let sharpness = 1.0 + t as f64 / 50.0;
        let q_w = normalize(batch(&mut rng, 56, c, sharpness));
        let q_s = normalize(batch(&mut rng, 56, c, sharpness));
        state = state.observe(&q_w)?;
        if t % 100 == 0 {
            let th = state.class_thresholds()?;
            println!(
                "t={t} tau {:.4} thresholds [{}] saf {:.4}",
                state.tau_global,
                th.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(", "),
                state.saf_loss(&q_w, &q_s)?
            );
        }
    }
    Ok(())
}
