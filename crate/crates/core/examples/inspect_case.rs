//! Parses a matrix-text case file, prints a summary and checks that the
//! writer reproduces the parsed network exactly.
//!
//! cargo run --example inspect_case -- [path/to/case.m]

use gridreduce::netmodel::{parse_case, to_case_text, BusKind};

fn main() -> gridreduce::Result<()> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => include_str!("../data/case118.m").to_string(),
    };
    let net = parse_case(&text)?;
    let kinds = |k| net.buses.iter().filter(|b| b.kind == k).count();
    println!("base power   {} MVA", net.base_mva);
    println!(
        "buses        {} (slack {}, PV {}, PQ {})",
        net.bus_count(),
        kinds(BusKind::Slack),
        kinds(BusKind::PV),
        kinds(BusKind::PQ)
    );
    println!("branches     {}", net.branch_count());
    println!("reference    bus {}", net.ref_bus);
    let taps = net.branches.iter().filter(|b| b.tap_ratio != 1.0).count();
    println!("transformers {taps} off-nominal taps");
    let net_p: f64 = net.p_injections().iter().sum();
    println!("net injection {:.2} MW (losses and slack balance)", net_p * net.base_mva);

    let again = parse_case(&to_case_text(&net))?;
    println!("round trip   {}", if again == net { "exact" } else { "DIFFERS" });
    Ok(())
}
