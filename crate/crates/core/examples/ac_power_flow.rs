//! Newton-Raphson AC power flow on the six-bus case: bus voltages and
//! branch flows at the nominal injections.

use gridreduce::acpf::{branch_flows, solve_ac, AcOptions};
use gridreduce::netmodel::parse_case;

fn main() -> gridreduce::Result<()> {
    let net = parse_case(include_str!("../data/case6.m"))?;
    let sol = solve_ac(&net, &net.p_injections(), &AcOptions::default())?;
    println!(
        "converged after {} mismatch evaluations, max mismatch {:.2e} pu",
        sol.iterations, sol.max_mismatch
    );
    println!("{:>4} {:>8} {:>10}", "bus", "|V| pu", "angle deg");
    for (i, bus) in net.buses.iter().enumerate() {
        println!("{:>4} {:>8.5} {:>10.4}", bus.id, sol.v_mag[i], sol.v_ang[i].to_degrees());
    }
    println!("{:>8} {:>10} {:>10}", "branch", "P MW", "Q MVAr");
    for (br, (p, q)) in net.branches.iter().zip(branch_flows(&net, &sol)) {
        println!(
            "{:>8} {:>10.3} {:>10.3}",
            format!("{}-{}", br.from_bus, br.to_bus),
            p * net.base_mva,
            q * net.base_mva
        );
    }
    Ok(())
}
