//! Compares the analytic loss gradient with central finite differences on
//! a random four-zone dataset.

use gridreduce::learn::{loss, loss_and_grad, Dataset};
use gridreduce::reduce::{EquivalentParams, ReducedNetwork, TieLine};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> gridreduce::Result<()> {
    let tie = |a, b| TieLine {
        from_zone: a,
        to_zone: b,
        crossings: vec![],
    };
    let rn = ReducedNetwork::new(4, 0, vec![tie(0, 1), tie(0, 3), tie(1, 2), tie(1, 3), tie(2, 3)])?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data = Dataset::new(
        DMatrix::from_fn(3, 40, |_, _| rng.random_range(-1.0..1.0)),
        DMatrix::from_fn(5, 40, |_, _| rng.random_range(-1.0..1.0)),
    )?;
    let x: Vec<f64> = (0..13)
        .map(|i| if i < 5 { rng.random_range(5.0..20.0) } else { rng.random_range(-0.05..0.05) })
        .collect();
    let params = EquivalentParams::unpack(&x, 5, 4)?;
    let analytic = loss_and_grad(&rn, &params, &data)?.1.pack();

    let h = 1e-6;
    println!("{:>3} {:>16} {:>16} {:>10}", "k", "analytic", "central diff", "rel err");
    for k in 0..x.len() {
        let at = |d: f64| {
            let mut y = x.clone();
            y[k] += d;
            loss(&rn, &EquivalentParams::unpack(&y, 5, 4).unwrap(), &data)
        };
        let fd = (at(h)? - at(-h)?) / (2.0 * h);
        let rel = (analytic[k] - fd).abs() / analytic[k].abs().max(1e-8);
        println!("{k:>3} {:>16.9e} {:>16.9e} {rel:>10.2e}", analytic[k], fd);
    }
    Ok(())
}
