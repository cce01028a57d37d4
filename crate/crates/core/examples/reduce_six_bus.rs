//! Collapses the six-bus case onto four zones and shows the tie-lines, the
//! aggregation matrices and the baseline susceptances.

use gridreduce::netmodel::parse_case;
use gridreduce::reduce::{aggregate_injections, build_reduction, init_params, load_partition};

fn main() -> gridreduce::Result<()> {
    let net = parse_case(include_str!("../data/case6.m"))?;
    let zp = load_partition(include_str!("../data/zones6.json"), &net)?;
    let (rn, flows, injections) = build_reduction(&net, &zp)?;
    println!("{} zones (reference {}), {} tie-lines", rn.zone_count, rn.ref_zone, rn.tie_count());
    for z in 0..zp.zone_count {
        println!("  zone {z}: buses {:?}", zp.members(z));
    }
    let b0 = init_params(&net, &rn)?.b;
    for (k, tie) in rn.tie_lines.iter().enumerate() {
        let branches: Vec<String> = tie
            .crossings
            .iter()
            .map(|c| {
                let br = &net.branches[c.branch];
                format!("{}{}-{}", if c.sign < 0 { "-" } else { "+" }, br.from_bus, br.to_bus)
            })
            .collect();
        println!("  tie {} {:>5}  b0 = {:>6.2}  via {}", k, rn.tie_labels()[k], b0[k], branches.join(" "));
    }
    println!("branch-to-tie aggregation:\n{}", flows.matrix());
    println!("bus-to-zone aggregation:\n{}", injections.matrix());
    println!("reduced incidence (reference column removed):\n{}", rn.incidence);
    let p_r = aggregate_injections(&net.p_injections(), &injections, &zp)?;
    println!("non-reference zone injections, MW: {:?}", p_r.iter().map(|p| p * net.base_mva).collect::<Vec<_>>());
    Ok(())
}
