//! Zonal reduction: every zone collapses to one equivalent bus, and every
//! pair of zones joined by at least one original branch gets exactly one
//! equivalent tie-line.
//!
//! Tie-lines are oriented from the lower to the higher zone id and listed in
//! lexicographic order of their zone pair. Zone ids are contiguous; zones
//! listed in the zone file come first, then one singleton per unlisted bus in
//! network order.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::netmodel::Network;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZonePartition {
    /// Bus id to zone id.
    pub assignment: BTreeMap<usize, usize>,
    pub zone_count: usize,
    pub ref_zone: usize,
}

#[derive(Debug, Deserialize)]
struct ZoneFile {
    zones: Vec<Vec<usize>>,
}

impl ZonePartition {
    /// Builds a partition from explicit bus groups; unlisted buses become
    /// singleton zones.
    pub fn from_groups(groups: &[Vec<usize>], net: &Network) -> Result<Self> {
        let known = net.bus_positions();
        let mut assignment = BTreeMap::new();
        for (z, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::MalformedZones(format!("zone {z} is empty")));
            }
            for &bus in group {
                if !known.contains_key(&bus) {
                    return Err(Error::UnknownBus(bus));
                }
                if assignment.insert(bus, z).is_some() {
                    return Err(Error::OverlappingZones { bus });
                }
            }
        }
        let mut zone_count = groups.len();
        for bus in &net.buses {
            if let std::collections::btree_map::Entry::Vacant(e) = assignment.entry(bus.id) {
                e.insert(zone_count);
                zone_count += 1;
            }
        }
        let ref_zone = assignment[&net.ref_bus];
        Ok(Self {
            assignment,
            zone_count,
            ref_zone,
        })
    }

    pub fn singletons(net: &Network) -> Self {
        Self::from_groups(&[], net).expect("singleton partition is always valid")
    }

    pub fn zone_of(&self, bus: usize) -> usize {
        self.assignment[&bus]
    }

    pub fn members(&self, zone: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .filter(|(_, &z)| z == zone)
            .map(|(&b, _)| b)
            .collect()
    }

    /// SHA-256 over the bus-to-zone map, hex encoded. Identifies artifacts
    /// built from the same reduction.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (bus, zone) in &self.assignment {
            h.update(format!("{bus}:{zone};"));
        }
        h.update(format!("ref={}", self.ref_zone));
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses a `{"zones": [[bus ids]...]}` document. Blank text means no
/// explicit zones.
pub fn load_partition(text: &str, net: &Network) -> Result<ZonePartition> {
    if text.trim().is_empty() {
        return Ok(ZonePartition::singletons(net));
    }
    let file: ZoneFile =
        serde_json::from_str(text).map_err(|e| Error::MalformedZones(e.to_string()))?;
    ZonePartition::from_groups(&file.zones, net)
}

/// One original branch crossing a tie-line, with its orientation relative
/// to the tie (+1 when its from bus lies in the tie's from zone).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crossing {
    pub branch: usize,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieLine {
    pub from_zone: usize,
    pub to_zone: usize,
    pub crossings: Vec<Crossing>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetwork {
    pub zone_count: usize,
    pub ref_zone: usize,
    pub tie_lines: Vec<TieLine>,
    /// `|ties| x (zones - 1)`; reference column removed.
    pub incidence: DMatrix<f64>,
}

impl ReducedNetwork {
    /// Assembles the reduced network from an already enumerated tie list.
    pub fn new(zone_count: usize, ref_zone: usize, tie_lines: Vec<TieLine>) -> Result<Self> {
        if ref_zone >= zone_count {
            return Err(Error::InvalidArgument(format!(
                "reference zone {ref_zone} out of range for {zone_count} zones"
            )));
        }
        let col = |z: usize| -> Option<usize> {
            match z.cmp(&ref_zone) {
                std::cmp::Ordering::Less => Some(z),
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Greater => Some(z - 1),
            }
        };
        let mut incidence = DMatrix::zeros(tie_lines.len(), zone_count - 1);
        for (k, tie) in tie_lines.iter().enumerate() {
            if tie.from_zone >= zone_count || tie.to_zone >= zone_count || tie.from_zone == tie.to_zone {
                return Err(Error::InvalidArgument(format!(
                    "tie-line {k} joins invalid zones {}-{}",
                    tie.from_zone, tie.to_zone
                )));
            }
            if let Some(c) = col(tie.from_zone) {
                incidence[(k, c)] = 1.0;
            }
            if let Some(c) = col(tie.to_zone) {
                incidence[(k, c)] = -1.0;
            }
        }
        let rn = Self {
            zone_count,
            ref_zone,
            tie_lines,
            incidence,
        };
        let components = rn.components();
        if components != 1 {
            return Err(Error::DisconnectedReduction { components });
        }
        Ok(rn)
    }

    pub fn tie_count(&self) -> usize {
        self.tie_lines.len()
    }

    /// Zones other than the reference, in column order of the incidence.
    pub fn non_ref_zones(&self) -> Vec<usize> {
        (0..self.zone_count).filter(|&z| z != self.ref_zone).collect()
    }

    /// Incidence with the reference column restored, `|ties| x zones`.
    pub fn full_incidence(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.tie_count(), self.zone_count);
        for (k, tie) in self.tie_lines.iter().enumerate() {
            m[(k, tie.from_zone)] = 1.0;
            m[(k, tie.to_zone)] = -1.0;
        }
        m
    }

    fn components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.zone_count).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut c = x;
            while p[c] != r {
                let next = p[c];
                p[c] = r;
                c = next;
            }
            r
        }
        for tie in &self.tie_lines {
            let a = find(&mut parent, tie.from_zone);
            let b = find(&mut parent, tie.to_zone);
            parent[a] = b;
        }
        (0..self.zone_count).filter(|&z| find(&mut parent, z) == z).count()
    }

    /// Human-readable tie labels, e.g. `"0->3"`.
    pub fn tie_labels(&self) -> Vec<String> {
        self.tie_lines
            .iter()
            .map(|t| format!("{}->{}", t.from_zone, t.to_zone))
            .collect()
    }
}

/// Signed branch-to-tie summation matrix, stored row-sparse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowAggregator {
    pub branch_count: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl FlowAggregator {
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.branch_count);
        for (k, row) in self.rows.iter().enumerate() {
            for &(e, s) in row {
                m[(k, e)] = s;
            }
        }
        m
    }
}

/// Zone membership per bus, i.e. the 0/1 zone-bus matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionAggregator {
    pub zone_count: usize,
    /// Zone of each bus, in network bus order.
    pub zone_of_bus: Vec<usize>,
}

impl InjectionAggregator {
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.zone_count, self.zone_of_bus.len());
        for (j, &z) in self.zone_of_bus.iter().enumerate() {
            m[(z, j)] = 1.0;
        }
        m
    }
}

pub fn build_reduction(
    net: &Network,
    zp: &ZonePartition,
) -> Result<(ReducedNetwork, FlowAggregator, InjectionAggregator)> {
    let mut pairs: BTreeMap<(usize, usize), Vec<Crossing>> = BTreeMap::new();
    for (e, br) in net.branches.iter().enumerate() {
        let zf = *zp.assignment.get(&br.from_bus).ok_or(Error::UnknownBus(br.from_bus))?;
        let zt = *zp.assignment.get(&br.to_bus).ok_or(Error::UnknownBus(br.to_bus))?;
        if zf == zt {
            continue;
        }
        let (key, sign) = if zf < zt { ((zf, zt), 1) } else { ((zt, zf), -1) };
        pairs.entry(key).or_default().push(Crossing { branch: e, sign });
    }
    let tie_lines: Vec<TieLine> = pairs
        .into_iter()
        .map(|((a, b), crossings)| TieLine {
            from_zone: a,
            to_zone: b,
            crossings,
        })
        .collect();

    let flows = FlowAggregator {
        branch_count: net.branches.len(),
        rows: tie_lines
            .iter()
            .map(|t| t.crossings.iter().map(|c| (c.branch, c.sign as f64)).collect())
            .collect(),
    };
    let injections = InjectionAggregator {
        zone_count: zp.zone_count,
        zone_of_bus: net.buses.iter().map(|b| zp.zone_of(b.id)).collect(),
    };
    let rn = ReducedNetwork::new(zp.zone_count, zp.ref_zone, tie_lines)?;
    Ok((rn, flows, injections))
}

/// `Ψ_g P` with the reference-zone entry dropped.
pub fn aggregate_injections(
    p: &[f64],
    g: &InjectionAggregator,
    zp: &ZonePartition,
) -> Result<Vec<f64>> {
    if p.len() != g.zone_of_bus.len() {
        return Err(Error::DimensionMismatch {
            context: "aggregate_injections",
            expected: g.zone_of_bus.len(),
            got: p.len(),
        });
    }
    let mut full = vec![0.0; g.zone_count];
    for (&z, &pj) in g.zone_of_bus.iter().zip(p) {
        full[z] += pj;
    }
    full.remove(zp.ref_zone);
    Ok(full)
}

/// `Ψ_flow p_ac`: signed sum of crossing branch flows per tie-line.
pub fn aggregate_flows(p_ac: &[f64], f: &FlowAggregator) -> Result<Vec<f64>> {
    if p_ac.len() != f.branch_count {
        return Err(Error::DimensionMismatch {
            context: "aggregate_flows",
            expected: f.branch_count,
            got: p_ac.len(),
        });
    }
    Ok(f.rows
        .iter()
        .map(|row| row.iter().map(|&(e, s)| s * p_ac[e]).sum())
        .collect())
}

/// Learnable parameters of the reduced DC model. `gamma` is indexed over
/// non-reference zones in increasing zone id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalentParams {
    pub b: Vec<f64>,
    pub gamma: Vec<f64>,
    pub rho: Vec<f64>,
}

impl EquivalentParams {
    pub fn zeros_for(rn: &ReducedNetwork) -> Self {
        Self {
            b: vec![0.0; rn.tie_count()],
            gamma: vec![0.0; rn.zone_count - 1],
            rho: vec![0.0; rn.tie_count()],
        }
    }

    pub fn len(&self) -> usize {
        self.b.len() + self.gamma.len() + self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Optimizer vector in the fixed order `[b; gamma; rho]`.
    pub fn pack(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        x.extend_from_slice(&self.b);
        x.extend_from_slice(&self.gamma);
        x.extend_from_slice(&self.rho);
        x
    }

    pub fn unpack(x: &[f64], ties: usize, zones: usize) -> Result<Self> {
        let expected = 2 * ties + zones - 1;
        if x.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "EquivalentParams::unpack",
                expected,
                got: x.len(),
            });
        }
        Ok(Self {
            b: x[..ties].to_vec(),
            gamma: x[ties..ties + zones - 1].to_vec(),
            rho: x[ties + zones - 1..].to_vec(),
        })
    }

    pub fn check_shape(&self, rn: &ReducedNetwork) -> Result<()> {
        let checks = [
            ("params.b", rn.tie_count(), self.b.len()),
            ("params.gamma", rn.zone_count - 1, self.gamma.len()),
            ("params.rho", rn.tie_count(), self.rho.len()),
        ];
        for (context, expected, got) in checks {
            if expected != got {
                return Err(Error::DimensionMismatch {
                    context,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }
}

/// Baseline parameters: parallel combination `Σ 1/x` of the crossing
/// branches for each tie, zero biases.
pub fn init_params(net: &Network, rn: &ReducedNetwork) -> Result<EquivalentParams> {
    let mut b = Vec::with_capacity(rn.tie_count());
    for tie in &rn.tie_lines {
        let mut sum = 0.0;
        for c in &tie.crossings {
            let x = net.branches[c.branch].reactance;
            if x == 0.0 {
                return Err(Error::ZeroReactanceBranch { branch: c.branch });
            }
            sum += 1.0 / x;
        }
        b.push(sum);
    }
    Ok(EquivalentParams {
        b,
        gamma: vec![0.0; rn.zone_count - 1],
        rho: vec![0.0; rn.tie_count()],
    })
}

/// Net injection per zone implied by tie flows: `A_fullᵀ p`.
pub fn zone_balance(rn: &ReducedNetwork, tie_flows: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rn.zone_count];
    for (tie, &p) in rn.tie_lines.iter().zip(tie_flows) {
        out[tie.from_zone] += p;
        out[tie.to_zone] -= p;
    }
    out
}

/// Counts of buses per zone.
pub fn zone_sizes(zp: &ZonePartition) -> Vec<usize> {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &z in zp.assignment.values() {
        *counts.entry(z).or_default() += 1;
    }
    (0..zp.zone_count).map(|z| counts.get(&z).copied().unwrap_or(0)).collect()
}

/// Zone pairs touched by at least one crossing branch.
pub fn connected_pairs(rn: &ReducedNetwork) -> BTreeSet<(usize, usize)> {
    rn.tie_lines.iter().map(|t| (t.from_zone, t.to_zone)).collect()
}
