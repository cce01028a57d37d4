//! Domain types for the original (unreduced) power network.
//!
//! All electrical quantities are stored in per unit on [`Network::base_mva`];
//! conversion to MW happens only at report boundaries.

mod case;

use std::collections::{HashMap, HashSet, VecDeque};

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

pub use case::{parse_case, to_case_text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    PV,
    PQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    /// Generation minus load, per unit.
    pub p_inj: f64,
    pub q_inj: f64,
    /// Voltage magnitude held at Slack and PV buses; flat-start guess elsewhere.
    pub v_mag_setpoint: f64,
    pub shunt_g: f64,
    pub shunt_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub series_g: f64,
    pub series_b: f64,
    /// Total line charging; each terminal carries half.
    pub shunt_g: f64,
    pub shunt_b: f64,
    pub tap_ratio: f64,
    /// Radians.
    pub phase_shift: f64,
    pub resistance: f64,
    pub reactance: f64,
}

impl Branch {
    /// Series admittance from raw impedance, `y = 1 / (r + jx)`.
    pub fn series_from_impedance(r: f64, x: f64) -> (f64, f64) {
        let y = Complex::new(1.0, 0.0) / Complex::new(r, x);
        (y.re, y.im)
    }

    pub fn series_admittance(&self) -> Complex<f64> {
        Complex::new(self.series_g, self.series_b)
    }

    /// Two-port admittance block `(y_ff, y_ft, y_tf, y_tt)` with the
    /// off-nominal tap on the from side.
    pub fn two_port(&self) -> [Complex<f64>; 4] {
        let ys = self.series_admittance();
        let ysh = Complex::new(self.shunt_g, self.shunt_b) * 0.5;
        let t = Complex::from_polar(self.tap_ratio, self.phase_shift);
        let y_tt = ys + ysh;
        let y_ff = y_tt / (self.tap_ratio * self.tap_ratio);
        let y_ft = -ys / t.conj();
        let y_tf = -ys / t;
        [y_ff, y_ft, y_tf, y_tt]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub ref_bus: usize,
}

/// One broken [`Network`] invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    DuplicateBusId { bus: usize },
    NoSlack,
    DuplicateSlack { buses: Vec<usize> },
    RefBusNotSlack { bus: usize },
    NonPositiveSetpoint { bus: usize },
    DanglingBranch { branch: usize, bus: usize },
    SelfLoop { branch: usize },
    ZeroSeriesAdmittance { branch: usize },
    NonPositiveTap { branch: usize },
    Disconnected { unreached: Vec<usize> },
}

impl Network {
    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Map from bus id to its position in [`Network::buses`].
    pub fn bus_positions(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect()
    }

    pub fn ref_position(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.id == self.ref_bus)
    }

    pub fn p_injections(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.p_inj).collect()
    }

    pub fn q_injections(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.q_inj).collect()
    }

    /// Checks every structural invariant. An empty list means the network
    /// is usable by the solvers.
    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }
}

pub fn validate(net: &Network) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut seen = HashSet::new();
    for bus in &net.buses {
        if !seen.insert(bus.id) {
            out.push(Violation::DuplicateBusId { bus: bus.id });
        }
    }

    let slacks: Vec<usize> = net
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Slack)
        .map(|b| b.id)
        .collect();
    match slacks.len() {
        0 => out.push(Violation::NoSlack),
        1 => {
            if slacks[0] != net.ref_bus {
                out.push(Violation::RefBusNotSlack { bus: net.ref_bus });
            }
        }
        _ => out.push(Violation::DuplicateSlack { buses: slacks }),
    }

    for bus in &net.buses {
        if bus.kind != BusKind::PQ && !(bus.v_mag_setpoint > 0.0) {
            out.push(Violation::NonPositiveSetpoint { bus: bus.id });
        }
    }

    let mut structurally_ok = true;
    for (k, br) in net.branches.iter().enumerate() {
        for end in [br.from_bus, br.to_bus] {
            if !seen.contains(&end) {
                out.push(Violation::DanglingBranch { branch: k, bus: end });
                structurally_ok = false;
            }
        }
        if br.from_bus == br.to_bus {
            out.push(Violation::SelfLoop { branch: k });
        }
        if br.series_g == 0.0 && br.series_b == 0.0 {
            out.push(Violation::ZeroSeriesAdmittance { branch: k });
        }
        if !(br.tap_ratio > 0.0) {
            out.push(Violation::NonPositiveTap { branch: k });
        }
    }

    if structurally_ok && !net.buses.is_empty() {
        let unreached = unreachable_buses(net);
        if !unreached.is_empty() {
            out.push(Violation::Disconnected { unreached });
        }
    }
    out
}

/// Buses not reachable from the first bus over in-service branches.
fn unreachable_buses(net: &Network) -> Vec<usize> {
    let pos = net.bus_positions();
    let n = net.buses.len();
    let mut adj = vec![Vec::new(); n];
    for br in &net.branches {
        if let (Some(&f), Some(&t)) = (pos.get(&br.from_bus), pos.get(&br.to_bus)) {
            adj[f].push(t);
            adj[t].push(f);
        }
    }
    let mut visited = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    visited[0] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !visited[v] {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    (0..n).filter(|&k| !visited[k]).map(|k| net.buses[k].id).collect()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn lossless_branch(from: usize, to: usize, x: f64) -> Branch {
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
    }

    pub fn bus(id: usize, kind: BusKind, p: f64) -> Bus {
        Bus {
            id,
            kind,
            p_inj: p,
            q_inj: 0.0,
            v_mag_setpoint: 1.0,
            shunt_g: 0.0,
            shunt_b: 0.0,
        }
    }

    pub fn two_bus(load_pu: f64) -> Network {
        Network {
            base_mva: 100.0,
            buses: vec![bus(1, BusKind::Slack, 0.0), bus(2, BusKind::PQ, -load_pu)],
            branches: vec![lossless_branch(1, 2, 0.1)],
            ref_bus: 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn valid_two_bus_has_no_violations() {
        assert!(two_bus(0.5).validate().is_empty());
    }

    #[test]
    fn two_slacks_reported() {
        let mut net = two_bus(0.5);
        net.buses[1].kind = BusKind::Slack;
        let v = net.validate();
        assert_eq!(v, vec![Violation::DuplicateSlack { buses: vec![1, 2] }]);
    }

    #[test]
    fn dangling_branch_reported() {
        let mut net = two_bus(0.5);
        net.branches.push(lossless_branch(2, 99, 0.1));
        let v = net.validate();
        assert!(v.contains(&Violation::DanglingBranch { branch: 1, bus: 99 }));
    }

    #[test]
    fn island_reported() {
        let mut net = two_bus(0.5);
        net.buses.push(bus(3, BusKind::PQ, 0.0));
        assert_eq!(
            net.validate(),
            vec![Violation::Disconnected { unreached: vec![3] }]
        );
    }

    #[test]
    fn series_admittance_of_pure_reactance() {
        let (g, b) = Branch::series_from_impedance(0.0, 0.1);
        assert_eq!(g, 0.0);
        assert!((b + 10.0).abs() < 1e-12);
    }

    #[test]
    fn nominal_two_port_is_symmetric() {
        let br = lossless_branch(1, 2, 0.1);
        let [ff, ft, tf, tt] = br.two_port();
        assert_eq!(ff, tt);
        assert_eq!(ft, tf);
        assert!((ff + ft).norm() < 1e-12);
    }
}
