//! Generate grids from both synthetic sources and print one of each.

use imgbpe::markov::{gen_defn1, gen_scenario, stationary, Axis, Defn1Params, MarkovKernel};

fn main() -> imgbpe::Result<()> {
    let kernel = MarkovKernel::binary_flip(0.1, 0.1)?;
    let pi = stationary(&kernel)?;
    for axis in [Axis::Column, Axis::Row] {
        println!("independent chains along {axis:?}:");
        print!("{}", gen_scenario(&kernel, &pi, 12, axis, 1)?.to_text());
    }

    // A three-symbol kernel that cycles 0 -> 1 -> 2 with some stickiness.
    let cyclic = MarkovKernel::new(vec![vec![0.6, 0.4, 0.0], vec![0.0, 0.6, 0.4], vec![0.4, 0.0, 0.6]])?;
    let pi = stationary(&cyclic)?;
    println!("cyclic kernel, stationary {:?}:", pi.probs);
    print!("{}", gen_scenario(&cyclic, &pi, 10, Axis::Column, 2)?.to_text());

    let params = Defn1Params::new(0.1, 0.1, 1)?;
    println!("2D first-order process:");
    print!("{}", gen_defn1(&params, 12, 3)?.to_text());
    Ok(())
}
