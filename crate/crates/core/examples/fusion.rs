//! Build the circular-shift fusion operator, check its properties and
//! apply it to a small embedding matrix.

use interlude::fusion::FusionPlan;
use ndarray::array;

fn main() -> interlude::Result<()> {
    let plan = FusionPlan::circular_shift(4, 0.1)?;
    println!("I + A for Q = 4, alpha = 0.1:\n{:.2}", plan.dense());

    let report = plan.validate();
    println!(
        "full rank {} (det {:.4}, min singular value {:.4}), diagonally dominant {}, unit rows {}",
        report.full_rank,
        report.determinant,
        report.min_singular_value,
        report.diagonal_dominant,
        report.unit_row_norms
    );
    if let Some(eigs) = plan.eigenvalues() {
        for (k, (re, im)) in eigs.iter().enumerate() {
            println!("  eigenvalue {k}: {re:.4} {im:+.4}i");
        }
    }

    let z = array![[1.0, 0.0], [0.0, 1.0], [2.0, 2.0], [-1.0, 3.0]];
    let fused = plan.apply(&z)?;
    println!("Z:\n{z}\nZ':\n{fused:.3}");
    let back = plan.invert(&fused)?;
    println!(
        "max |Z - invert(Z')| = {:.2e}",
        (&back - &z).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    );
    Ok(())
}
