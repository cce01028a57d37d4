//! Power transfer distribution factors of the four-zone equivalent and a
//! check that they reproduce the angle-based DC solution.

use gridreduce::dcpf::{dc_flows, ptdf_matrix};
use gridreduce::netmodel::parse_case;
use gridreduce::reduce::{build_reduction, init_params, load_partition};

fn main() -> gridreduce::Result<()> {
    let net = parse_case(include_str!("../data/case6.m"))?;
    let zp = load_partition(include_str!("../data/zones6.json"), &net)?;
    let (rn, _, _) = build_reduction(&net, &zp)?;
    let params = init_params(&net, &rn)?;
    let phi = ptdf_matrix(&rn, &params.b)?;
    println!("PTDF, rows = ties {:?}, columns = zones {:?}:{phi:.4}", rn.tie_labels(), rn.non_ref_zones());

    let p_r = [3.0, 0.5, 0.5];
    let via_ptdf = &phi * nalgebra::DVector::from_column_slice(&p_r);
    let via_angles = dc_flows(&rn, &params, &p_r)?.flows;
    let gap = via_ptdf.iter().zip(&via_angles).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max |PTDF flows - angle flows| = {gap:.2e} pu");
    Ok(())
}
