//! Training data: AC ground truth aggregated onto the reduced network.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenarios::ScenarioSet;
use crate::acpf::{solve_ac_with, AcOptions};
use crate::error::{Error, Result};
use crate::netmodel::Network;
use crate::reduce::{
    aggregate_flows, aggregate_injections, build_reduction, EquivalentParams, ReducedNetwork,
    TieLine, ZonePartition,
};

/// Column-per-scenario inputs and targets, both in per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `(zones - 1) x S` aggregated injections of the non-reference zones.
    pub inputs: DMatrix<f64>,
    /// `ties x S` inter-zonal AC flows.
    pub targets: DMatrix<f64>,
    pub scenario_ids: Vec<usize>,
    pub train_mask: Vec<bool>,
    /// Scenarios dropped because the AC solve failed.
    pub discarded: usize,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        if inputs.ncols() != targets.ncols() {
            return Err(Error::DimensionMismatch {
                context: "Dataset columns",
                expected: inputs.ncols(),
                got: targets.ncols(),
            });
        }
        let s = inputs.ncols();
        Ok(Self {
            inputs,
            targets,
            scenario_ids: (0..s).collect(),
            train_mask: vec![true; s],
            discarded: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, cols: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_columns(cols),
            targets: self.targets.select_columns(cols),
            scenario_ids: cols.iter().map(|&c| self.scenario_ids[c]).collect(),
            train_mask: cols.iter().map(|&c| self.train_mask[c]).collect(),
            discarded: 0,
        }
    }

    fn split_by(&self, train: bool) -> Self {
        let cols: Vec<usize> = (0..self.len()).filter(|&c| self.train_mask[c] == train).collect();
        self.select(&cols)
    }

    pub fn train(&self) -> Self {
        self.split_by(true)
    }

    pub fn test(&self) -> Self {
        self.split_by(false)
    }
}

/// Provenance stored next to a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: String,
    pub zone_hash: String,
    pub case_hash: String,
    pub seed: u64,
    pub sigma: f64,
    pub base_mva: f64,
    pub zone_count: usize,
    pub ref_zone: usize,
    pub tie_lines: Vec<(usize, usize)>,
    pub init_params: EquivalentParams,
    pub scenario_count: usize,
    pub discarded: usize,
}

impl DatasetMeta {
    /// Reduced network with the recorded topology (crossing lists omitted).
    pub fn reduced_network(&self) -> Result<ReducedNetwork> {
        let ties = self
            .tie_lines
            .iter()
            .map(|&(a, b)| TieLine {
                from_zone: a,
                to_zone: b,
                crossings: vec![],
            })
            .collect();
        ReducedNetwork::new(self.zone_count, self.ref_zone, ties)
    }
}

/// Fraction of failed AC solves above which dataset construction aborts.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

/// Solves the AC power flow for every scenario and aggregates the result
/// onto `zp`. Scenarios without a converged solution are dropped.
/// Zone injections and tie-line flows of one solved scenario.
type Row = (Vec<f64>, Vec<f64>);

pub fn build_dataset(net: &Network, zp: &ZonePartition, scen: &ScenarioSet) -> Result<Dataset> {
    if scen.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (rn, flow_agg, inj_agg) = build_reduction(net, zp)?;
    let opts = AcOptions::default();
    let results: Vec<Result<Option<Row>>> = (0..scen.len())
        .into_par_iter()
        .map(|m| {
            let sol = match solve_ac_with(net, &scen.p[m], &scen.q[m], &opts) {
                Ok(sol) => sol,
                Err(e) if e.is_numerical() => return Ok(None),
                Err(e) => return Err(e),
            };
            let target = aggregate_flows(&sol.p_flow_from, &flow_agg)?;
            let input = aggregate_injections(&scen.p[m], &inj_agg, zp)?;
            Ok(Some((input, target)))
        })
        .collect();

    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut ids = Vec::new();
    let mut mask = Vec::new();
    let mut failed = 0;
    for (m, r) in results.into_iter().enumerate() {
        match r? {
            Some((i, t)) => {
                inputs.extend(i);
                targets.extend(t);
                ids.push(m);
                mask.push(scen.is_train(m));
            }
            None => failed += 1,
        }
    }
    if failed as f64 > MAX_FAILURE_FRACTION * scen.len() as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total: scen.len(),
        });
    }
    if ids.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let s = ids.len();
    Ok(Dataset {
        inputs: DMatrix::from_vec(rn.zone_count - 1, s, inputs),
        targets: DMatrix::from_vec(rn.tie_count(), s, targets),
        scenario_ids: ids,
        train_mask: mask,
        discarded: failed,
    })
}

/// Writes one row per scenario: id, split, zone injections, tie targets.
pub fn write_dataset_csv<W: Write>(data: &Dataset, rn: &ReducedNetwork, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["scenario".to_string(), "split".to_string()];
    header.extend(rn.non_ref_zones().iter().map(|z| format!("P_zone{z}")));
    header.extend(rn.tie_labels().iter().map(|l| format!("p_{l}")));
    w.write_record(&header).map_err(csv_err)?;
    for c in 0..data.len() {
        let mut row = vec![
            data.scenario_ids[c].to_string(),
            if data.train_mask[c] { "train" } else { "test" }.to_string(),
        ];
        row.extend(data.inputs.column(c).iter().map(|v| v.to_string()));
        row.extend(data.targets.column(c).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(input: R, meta: &DatasetMeta) -> Result<Dataset> {
    let zones = meta.zone_count - 1;
    let ties = meta.tie_lines.len();
    let mut r = csv::Reader::from_reader(input);
    let width = r.headers().map_err(csv_err)?.len();
    if width != 2 + zones + ties {
        return Err(Error::DimensionMismatch {
            context: "dataset columns",
            expected: 2 + zones + ties,
            got: width,
        });
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut ids = Vec::new();
    let mut mask = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        ids.push(parse_field::<usize>(&rec[0])?);
        mask.push(match &rec[1] {
            "train" => true,
            "test" => false,
            other => return Err(Error::InvalidArgument(format!("unknown split label {other:?}"))),
        });
        for f in rec.iter().skip(2).take(zones) {
            inputs.push(parse_field::<f64>(f)?);
        }
        for f in rec.iter().skip(2 + zones) {
            targets.push(parse_field::<f64>(f)?);
        }
    }
    let s = ids.len();
    Ok(Dataset {
        inputs: DMatrix::from_vec(zones, s, inputs),
        targets: DMatrix::from_vec(ties, s, targets),
        scenario_ids: ids,
        train_mask: mask,
        discarded: meta.discarded,
    })
}

fn parse_field<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad numeric field {s:?}")))
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}
