//! Trains the four-zone equivalent of the six-bus system on random
//! injection scenarios and compares it against the untrained baseline.
//!
//! cargo run --example train_six_bus -- [method] [scenarios]

use gridreduce::learn::{build_dataset, evaluate, generate_scenarios, optimize, HyperParams, Method};
use gridreduce::netmodel::parse_case;
use gridreduce::reduce::{build_reduction, init_params, load_partition};

fn main() -> gridreduce::Result<()> {
    let mut args = std::env::args().skip(1);
    let method: Method = args.next().as_deref().unwrap_or("lbfgs").parse()?;
    let count: usize = args.next().map(|s| s.parse().expect("scenario count")).unwrap_or(10_000);

    let net = parse_case(include_str!("../data/case6.m"))?;
    let zp = load_partition(include_str!("../data/zones6.json"), &net)?;
    let (rn, _, _) = build_reduction(&net, &zp)?;
    let start = init_params(&net, &rn)?;

    let scen = generate_scenarios(&net, count, 0.15, 7)?;
    let data = build_dataset(&net, &zp, &scen)?;
    let (train, test) = (data.train(), data.test());
    println!("{} train / {} test scenarios, {} discarded", train.len(), test.len(), data.discarded);

    let hp = HyperParams {
        batch_size: std::env::var("BS").ok().map(|s| s.parse().unwrap()),
        max_iter: std::env::var("IT").ok().map(|s| s.parse().unwrap()),
        ..Default::default()
    };
    let report = optimize(&rn, &train, &start, method, &hp)?;
    println!(
        "{method}: {} iterations in {:.2} s, stop {:?}",
        report.iterations, report.wall_time, report.stop
    );

    let base = evaluate(&rn, &start, &test, net.base_mva)?;
    let fit = evaluate(&rn, &report.params, &test, net.base_mva)?;
    println!("{:<10} {:>12} {:>12}", "", "baseline", "trained");
    println!("{:<10} {:>12.4} {:>12.4}", "MAE MW", base.mae_mw, fit.mae_mw);
    println!("{:<10} {:>12.5} {:>12.5}", "max pu", base.inf_norm_loss, fit.inf_norm_loss);
    println!("{:<10} {:>12.5} {:>12.5}", "loss", base.sq_two_norm_loss, fit.sq_two_norm_loss);
    println!("b     = {:?}", report.params.b);
    println!("gamma = {:?}", report.params.gamma);
    println!("rho   = {:?}", report.params.rho);
    Ok(())
}
