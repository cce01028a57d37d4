//! Trains the four-zone equivalent on the base case alone; with more
//! parameters than targets the fit becomes exact.

use gridreduce::learn::{build_dataset, evaluate, generate_scenarios, optimize, HyperParams, Method};
use gridreduce::netmodel::parse_case;
use gridreduce::reduce::{build_reduction, init_params, load_partition};

fn main() -> gridreduce::Result<()> {
    let net = parse_case(include_str!("../data/case6.m"))?;
    let zp = load_partition(include_str!("../data/zones6.json"), &net)?;
    let (rn, _, _) = build_reduction(&net, &zp)?;
    let start = init_params(&net, &rn)?;
    let base_case = generate_scenarios(&net, 1, 0.0, 0)?.with_split(1, 0)?;
    let data = build_dataset(&net, &zp, &base_case)?;

    let hp = HyperParams {
        tol: 1e-12,
        ..Default::default()
    };
    for method in Method::ALL {
        let report = optimize(&rn, &data, &start, method, &hp)?;
        let m = evaluate(&rn, &report.params, &data, net.base_mva)?;
        println!(
            "{method:>6}: MAE {:.2e} MW after {} iterations ({:?})",
            m.mae_mw, report.iterations, report.stop
        );
    }
    let m = evaluate(&rn, &start, &data, net.base_mva)?;
    println!("baseline MAE {:.3} MW", m.mae_mw);
    Ok(())
}
