//! Evaluates the reduced DC model with a fixed set of reference parameters
//! at the six-bus base case and compares it with the aggregated AC flows.

use gridreduce::acpf::{solve_ac, AcOptions};
use gridreduce::dcpf::dc_flows;
use gridreduce::netmodel::parse_case;
use gridreduce::reduce::{
    aggregate_flows, aggregate_injections, build_reduction, init_params, load_partition, EquivalentParams,
};

fn main() -> gridreduce::Result<()> {
    let net = parse_case(include_str!("../data/case6.m"))?;
    let zp = load_partition(include_str!("../data/zones6.json"), &net)?;
    let (rn, flow_agg, inj_agg) = build_reduction(&net, &zp)?;
    let reference: EquivalentParams = serde_json::from_str(include_str!("../data/params6.json"))?;

    let p = net.p_injections();
    let p_r = aggregate_injections(&p, &inj_agg, &zp)?;
    let sol = solve_ac(&net, &p, &AcOptions::default())?;
    let ac = aggregate_flows(&sol.p_flow_from, &flow_agg)?;
    let fitted = dc_flows(&rn, &reference, &p_r)?.flows;
    let plain = dc_flows(&rn, &init_params(&net, &rn)?, &p_r)?.flows;

    let mw = net.base_mva;
    println!("{:>6} {:>10} {:>12} {:>12}", "tie", "AC MW", "DC fitted", "DC 1/x");
    for (k, label) in rn.tie_labels().iter().enumerate() {
        println!("{:>6} {:>10.2} {:>12.2} {:>12.2}", label, ac[k] * mw, fitted[k] * mw, plain[k] * mw);
    }
    let mae = |v: &[f64]| v.iter().zip(&ac).map(|(a, b)| (a - b).abs()).sum::<f64>() / ac.len() as f64 * mw;
    println!("{:>6} {:>10} {:>12.3} {:>12.3}", "MAE", "", mae(&fitted), mae(&plain));
    Ok(())
}
