//! Min/max linear quantization of one tensor at every supported width.

use adasg::engine::Tensor;
use adasg::quant::{dequantize, quantize, MAX_BITS, MIN_BITS};

fn main() -> adasg::Result<()> {
    let theta = Tensor::vector(vec![-0.9, -0.31, -0.05, 0.0, 0.12, 0.47, 0.8, 1.3]);
    println!("theta = {:?}", theta.data());
    for bits in MIN_BITS..=MAX_BITS {
        let q = quantize(&theta, bits)?;
        let back = dequantize(&q);
        let worst = theta
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "{bits} bits  range {:?}  codes {:?}  max error {:.4} (step/2 = {:.4})",
            q.code_range(),
            q.codes,
            worst,
            q.step() / 2.0
        );
    }
    Ok(())
}
