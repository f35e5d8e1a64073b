//! Entropy references for the binary flip chain and the tokenized-loss bound.

use imgbpe::markov::{joint_entropy_exact, prop2_bound, remark1_rate, stationary, MarkovKernel};

fn main() -> imgbpe::Result<()> {
    let kernel = MarkovKernel::binary_flip(0.9, 0.9)?;
    let pi = stationary(&kernel)?;
    for d in [256, 1024, 4096, 65536] {
        let r = prop2_bound(&kernel, &pi, d)?;
        println!(
            "D={d:>6}  H(pi)={:.6}  H_inf={:.6}  eps={:.4}  bound={:.6}",
            r.h_pi, r.h_inf, r.epsilon, r.prop2_bound
        );
    }
    for m in 1..=4 {
        println!("m={m}  H(image)={:.6} nats", joint_entropy_exact(&kernel, &pi, m)?);
    }
    for delta in [0.3, 0.2, 0.1, 0.05, 0.01] {
        let s = remark1_rate(delta)?;
        println!("delta={delta:<5} bound/H_inf={:.4}", s.ratio);
    }
    Ok(())
}
