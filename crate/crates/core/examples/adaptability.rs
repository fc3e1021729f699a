//! Disagreement/agreement distributions, normalized entropy and the game
//! value on a hand-made batch of P and Q logits.

use adasg::adapt::{adaptability_report, game_value, LogitsPair};
use adasg::engine::Tensor;

fn main() -> adasg::Result<()> {
    // row 0: Q copies P; row 1: Q is shifted by a constant; row 2: Q flips the
    // winning class; row 3: mild disagreement
    let zp = Tensor::from_rows(&[
        vec![2.0, 0.5, -1.0],
        vec![2.0, 0.5, -1.0],
        vec![4.0, 0.0, 0.0],
        vec![1.0, 0.8, 0.2],
    ])?;
    let zq = Tensor::from_rows(&[
        vec![2.0, 0.5, -1.0],
        vec![3.0, 1.5, 0.0],
        vec![0.0, 4.0, 0.0],
        vec![0.6, 1.0, 0.2],
    ])?;
    let lp = LogitsPair::new(zp, zq)?;
    let rep = adaptability_report(&lp)?;

    println!("row  p_ds                      h_info   H'      H");
    for i in 0..lp.batch() {
        let p: Vec<String> = rep.p_ds.row(i).iter().map(|v| format!("{v:.3}")).collect();
        println!(
            "{i}    [{}]   {:.4}   {:.4}  {:.4}",
            p.join(", "),
            rep.h_info[i],
            rep.h_norm[i],
            rep.h[i]
        );
    }
    println!(
        "ln C = {:.4}, batch min = {:.4}",
        rep.max_const, rep.batch_min
    );
    println!("H_C row 2 = {:?}", rep.h_c.row(2));
    println!("R = {:.6}", game_value(&lp));
    Ok(())
}
