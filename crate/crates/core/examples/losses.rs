//! Evaluate each loss term on small hand-checkable inputs.

use interlude::layout::GroupedRows;
use interlude::losses::{
    delta_consistency_loss, instance_consistency_loss, supervised_loss, total_loss, GroupedPredictions, LossParts,
    LossWeights, PseudoLabel, Threshold,
};
use ndarray::array;

fn main() -> interlude::Result<()> {
    let sup = supervised_loss(&array![[0.9, 0.1], [0.2, 0.8]], &[0, 1])?;
    println!("supervised: {sup:.6} (-(ln 0.9 + ln 0.8)/2)");

    let inst = instance_consistency_loss(
        &array![[0.97, 0.03]],
        &array![[0.6, 0.4]],
        &Threshold::Fixed(0.95),
        PseudoLabel::Hard,
    )?;
    println!(
        "instance consistency: {:.6} (-ln 0.6), mask rate {}",
        inst.value, inst.mask_rate
    );

    let g = GroupedPredictions::new(
        GroupedRows {
            p_w: array![[0.8, 0.2]],
            p_s: array![[0.6, 0.4]],
            q_w: array![[0.7, 0.3], [0.9, 0.1]],
            q_s: array![[0.5, 0.5], [0.9, 0.1]],
            mu: 2,
        },
        vec![0],
    )?;
    let dc = delta_consistency_loss(&g)?;
    println!("delta consistency: {dc:.6}");

    let parts = LossParts {
        l_sup: sup,
        l_unsup: inst.value,
        l_dc: dc,
        l_saf: None,
        mask_rate: inst.mask_rate,
    };
    let weights = LossWeights {
        lambda_u: 1.0,
        lambda_dc: 1.0,
        lambda_saf: 0.0,
    };
    println!("{:#?}", total_loss(&parts, &weights, false)?);
    Ok(())
}
