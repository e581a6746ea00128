//! Compares the implicit ensemble of all cascade instantiations with explicit
//! enumeration on a random model. Vote counts match a per-path listing of
//! member choices, and the implicit pass is far cheaper than running every
//! instantiation of the whole tree.
//!
//! `cargo run --release --example implicit_ensemble`

use std::time::Instant;

use handcascade::cascade::testing::{random_descriptor, random_model};
use handcascade::cascade::{classify_ensemble, classify_oracle, instantiation_count, path_enumeration, OracleMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = random_model(&mut rng, 7, 3);
    println!(
        "{} nodes, {} members each, {} cascade instantiations",
        model.tree.len(),
        model.ensembles[0].members.len(),
        instantiation_count(&model)
    );

    let inputs: Vec<Vec<f64>> = (0..200).map(|_| random_descriptor(&mut rng, &model)).collect();
    let t = Instant::now();
    let implicit: Vec<_> = inputs.iter().map(|x| classify_ensemble(x, &model)).collect();
    let implicit_time = t.elapsed();
    let mut agree = 0;
    for (x, v) in inputs.iter().zip(&implicit) {
        agree += usize::from(path_enumeration(x, &model)? == v.votes);
    }
    let t = Instant::now();
    for x in &inputs {
        classify_oracle(x, &model, &OracleMode::Enumerate { cap: 1 << 20 })?;
    }
    let explicit_time = t.elapsed();

    println!(
        "vote counts agree with path enumeration on {agree}/{} inputs",
        inputs.len()
    );
    println!("implicit {implicit_time:?}, whole-tree enumeration {explicit_time:?}");
    let x = &implicit[0];
    for r in x.ranked().iter().take(3) {
        println!("class {} votes {} margin {:.3}", r.class, r.votes, r.margin);
    }
    Ok(())
}
