//! Test-side oracles and random instance builders. Nothing here calls the
//! library's solvers.

#![allow(dead_code, clippy::needless_range_loop)]

use gridreduce::learn::Dataset;
use gridreduce::netmodel::{parse_case, Branch, Bus, BusKind, Network};
use gridreduce::reduce::{load_partition, EquivalentParams, ReducedNetwork, TieLine, ZonePartition};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const CASE6: &str = include_str!("../../data/case6.m");
pub const ZONES6: &str = include_str!("../../data/zones6.json");
pub const PARAMS6: &str = include_str!("../../data/params6.json");
pub const CASE118: &str = include_str!("../../data/case118.m");
pub const ZONES118: &str = include_str!("../../data/zones118.json");

pub fn six_bus() -> (Network, ZonePartition) {
    let net = parse_case(CASE6).unwrap();
    let zp = load_partition(ZONES6, &net).unwrap();
    (net, zp)
}

/// Gaussian elimination with partial pivoting on a copy of `a`.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, &bi)| {
        let mut r = row.clone();
        r.push(bi);
        r
    }).collect();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
        m.swap(k, piv);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..=n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
        x[k] = (m[k][n] - s) / m[k][k];
    }
    x
}

/// Signed incidence row of a tie over non-reference zones.
pub fn incidence_row(tie: &TieLine, zone_count: usize, ref_zone: usize) -> Vec<f64> {
    let col = |z: usize| if z < ref_zone { Some(z) } else if z > ref_zone { Some(z - 1) } else { None };
    let mut row = vec![0.0; zone_count - 1];
    if let Some(c) = col(tie.from_zone) {
        row[c] += 1.0;
    }
    if let Some(c) = col(tie.to_zone) {
        row[c] -= 1.0;
    }
    row
}

/// `Σ_e b_e a_e a_eᵀ` accumulated one tie at a time.
pub fn bprime_rank_one(rn: &ReducedNetwork, b: &[f64]) -> Vec<Vec<f64>> {
    let n = rn.zone_count - 1;
    let mut out = vec![vec![0.0; n]; n];
    for (tie, &be) in rn.tie_lines.iter().zip(b) {
        let a = incidence_row(tie, rn.zone_count, rn.ref_zone);
        for i in 0..n {
            for j in 0..n {
                out[i][j] += be * a[i] * a[j];
            }
        }
    }
    out
}

/// Reduced DC flows for one scenario from scratch.
pub fn naive_flows(rn: &ReducedNetwork, params: &EquivalentParams, p_r: &[f64]) -> Vec<f64> {
    let bp = bprime_rank_one(rn, &params.b);
    let rhs: Vec<f64> = p_r.iter().zip(&params.gamma).map(|(p, g)| p - g).collect();
    let theta = gauss_solve(&bp, &rhs);
    rn.tie_lines
        .iter()
        .enumerate()
        .map(|(k, tie)| {
            let a = incidence_row(tie, rn.zone_count, rn.ref_zone);
            let diff: f64 = a.iter().zip(&theta).map(|(x, y)| x * y).sum();
            params.b[k] * diff + params.rho[k]
        })
        .collect()
}

/// Double loop over scenarios and ties.
pub fn naive_loss(rn: &ReducedNetwork, params: &EquivalentParams, data: &Dataset) -> f64 {
    let mut total = 0.0;
    for m in 0..data.len() {
        let p_r: Vec<f64> = data.inputs.column(m).iter().copied().collect();
        let flows = naive_flows(rn, params, &p_r);
        for k in 0..rn.tie_count() {
            let r = flows[k] - data.targets[(k, m)];
            total += r * r;
        }
    }
    total / rn.tie_count() as f64
}

fn tie(a: usize, b: usize) -> TieLine {
    TieLine {
        from_zone: a.min(b),
        to_zone: a.max(b),
        crossings: vec![],
    }
}

/// Connected reduced network: a random spanning tree plus extra ties.
pub fn random_reduced(rng: &mut ChaCha8Rng, zones: usize, extra: usize) -> ReducedNetwork {
    let mut pairs = std::collections::BTreeSet::new();
    for z in 1..zones {
        pairs.insert((rng.random_range(0..z), z));
    }
    for _ in 0..extra {
        let a = rng.random_range(0..zones);
        let b = rng.random_range(0..zones);
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    let ref_zone = rng.random_range(0..zones);
    ReducedNetwork::new(zones, ref_zone, pairs.into_iter().map(|(a, b)| tie(a, b)).collect()).unwrap()
}

pub fn random_params(rng: &mut ChaCha8Rng, rn: &ReducedNetwork) -> EquivalentParams {
    EquivalentParams {
        b: (0..rn.tie_count()).map(|_| rng.random_range(2.0..20.0)).collect(),
        gamma: (0..rn.zone_count - 1).map(|_| rng.random_range(-0.05..0.05)).collect(),
        rho: (0..rn.tie_count()).map(|_| rng.random_range(-0.05..0.05)).collect(),
    }
}

/// Dataset generated by `truth` through the naive model plus noise.
pub fn random_dataset(
    rng: &mut ChaCha8Rng,
    rn: &ReducedNetwork,
    truth: &EquivalentParams,
    scenarios: usize,
    noise: f64,
) -> Dataset {
    let n = rn.zone_count - 1;
    let inputs = DMatrix::from_fn(n, scenarios, |_, _| rng.random_range(-1.5..1.5));
    let mut targets = DMatrix::zeros(rn.tie_count(), scenarios);
    for m in 0..scenarios {
        let p: Vec<f64> = inputs.column(m).iter().copied().collect();
        for (k, f) in naive_flows(rn, truth, &p).into_iter().enumerate() {
            targets[(k, m)] = f + noise * rng.random_range(-1.0..1.0);
        }
    }
    Dataset::new(inputs, targets).unwrap()
}

/// Each parameter scaled by an independent factor in `1 ± spread`.
pub fn perturb(rng: &mut ChaCha8Rng, p: &EquivalentParams, spread: f64) -> EquivalentParams {
    let mut f = |v: &Vec<f64>| v.iter().map(|x| x * (1.0 + rng.random_range(-spread..spread))).collect();
    EquivalentParams {
        b: f(&p.b),
        gamma: f(&p.gamma),
        rho: f(&p.rho),
    }
}

/// Random connected lossless network with one slack bus at id 1 and
/// balanced PQ injections, together with a random zone partition.
pub fn random_lossless_network(rng: &mut ChaCha8Rng, buses: usize, zones: usize) -> (Network, ZonePartition) {
    let mut branches = Vec::new();
    let line = |from: usize, to: usize, x: f64| {
        let (g, b) = Branch::series_from_impedance(0.0, x);
        Branch {
            from_bus: from,
            to_bus: to,
            series_g: g,
            series_b: b,
            shunt_g: 0.0,
            shunt_b: 0.0,
            tap_ratio: 1.0,
            phase_shift: 0.0,
            resistance: 0.0,
            reactance: x,
        }
    };
    for i in 2..=buses {
        let j = rng.random_range(1..i);
        let (f, t) = if rng.random_bool(0.5) { (i, j) } else { (j, i) };
        branches.push(line(f, t, rng.random_range(0.05..0.3)));
    }
    for _ in 0..buses / 2 {
        let a = rng.random_range(1..=buses);
        let b = rng.random_range(1..=buses);
        if a != b {
            branches.push(line(a, b, rng.random_range(0.05..0.3)));
        }
    }
    let bus_list = (1..=buses)
        .map(|id| Bus {
            id,
            kind: if id == 1 { BusKind::Slack } else { BusKind::PQ },
            p_inj: if id == 1 { 0.0 } else { rng.random_range(-0.3..0.3) },
            q_inj: 0.0,
            v_mag_setpoint: 1.0,
            shunt_g: 0.0,
            shunt_b: 0.0,
        })
        .collect();
    let net = Network {
        base_mva: 100.0,
        buses: bus_list,
        branches,
        ref_bus: 1,
    };
    let mut ids: Vec<usize> = (1..=buses).collect();
    ids.shuffle(rng);
    let mut groups = vec![Vec::new(); zones];
    for (k, id) in ids.into_iter().enumerate() {
        groups[k % zones].push(id);
    }
    let zp = ZonePartition::from_groups(&groups, &net).unwrap();
    (net, zp)
}
