//! Monte Carlo injection scenarios around the nominal operating point.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::csv_err;
use crate::error::{Error, Result};
use crate::netmodel::Network;

/// Injection scenarios, one row per scenario in network bus order. Rows
/// `0..train_count` form the training split, the rest the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub bus_ids: Vec<usize>,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub seed: u64,
    pub sigma: f64,
    pub train_count: usize,
    pub test_count: usize,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn with_split(mut self, train: usize, test: usize) -> Result<Self> {
        if train + test != self.len() {
            return Err(Error::InvalidArgument(format!(
                "split {train}/{test} does not add up to {} scenarios",
                self.len()
            )));
        }
        self.train_count = train;
        self.test_count = test;
        Ok(self)
    }

    pub fn is_train(&self, m: usize) -> bool {
        m < self.train_count
    }
}

/// Default train share when no explicit split is given.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// Draws `count` scenarios with every bus injection multiplied by
/// `1 + ε`, `ε ~ N(0, sigma)` independently per bus and scenario. Reactive
/// injections share the factor of their bus (constant power factor).
pub fn generate_scenarios(net: &Network, count: usize, sigma: f64, seed: u64) -> Result<ScenarioSet> {
    if count == 0 {
        return Err(Error::InvalidArgument("scenario count must be at least 1".into()));
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidArgument(format!("sigma {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_nom = net.p_injections();
    let q_nom = net.q_injections();
    let n = p_nom.len();

    let mut p = Vec::with_capacity(count);
    let mut q = Vec::with_capacity(count);
    for _ in 0..count {
        let mut prow = Vec::with_capacity(n);
        let mut qrow = Vec::with_capacity(n);
        for i in 0..n {
            let factor = 1.0 + normal.sample(&mut rng);
            prow.push(p_nom[i] * factor);
            qrow.push(q_nom[i] * factor);
        }
        p.push(prow);
        q.push(qrow);
    }
    let train_count = ((count as f64) * DEFAULT_TRAIN_FRACTION).round() as usize;
    Ok(ScenarioSet {
        bus_ids: net.buses.iter().map(|b| b.id).collect(),
        p,
        q,
        seed,
        sigma,
        train_count,
        test_count: count - train_count,
    })
}

/// Recovers the `ε` draws from a scenario set (buses with zero nominal
/// injection carry no information and are skipped).
pub fn perturbations(net: &Network, set: &ScenarioSet) -> Vec<f64> {
    let p_nom = net.p_injections();
    set.p
        .iter()
        .flat_map(|row| {
            row.iter()
                .zip(&p_nom)
                .filter(|(_, &nom)| nom != 0.0)
                .map(|(&v, &nom)| v / nom - 1.0)
                .collect::<Vec<_>>()
        })
        .collect()
}

/// One row per scenario: id, split, active then reactive injection per bus.
pub fn write_scenarios_csv<W: Write>(set: &ScenarioSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["scenario".to_string(), "split".to_string()];
    header.extend(set.bus_ids.iter().map(|id| format!("P_bus{id}")));
    header.extend(set.bus_ids.iter().map(|id| format!("Q_bus{id}")));
    w.write_record(&header).map_err(csv_err)?;
    for m in 0..set.len() {
        let mut row = vec![
            m.to_string(),
            if set.is_train(m) { "train" } else { "test" }.to_string(),
        ];
        row.extend(set.p[m].iter().map(|v| v.to_string()));
        row.extend(set.q[m].iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a scenario file for a network with buses `bus_ids`; seed and
/// sigma are taken from the caller (they live in the sidecar).
pub fn read_scenarios_csv<R: Read>(input: R, bus_ids: &[usize], seed: u64, sigma: f64) -> Result<ScenarioSet> {
    let n = bus_ids.len();
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let expected: Vec<String> = bus_ids.iter().map(|id| format!("P_bus{id}")).collect();
    if header.len() != 2 + 2 * n || header.iter().skip(2).take(n).ne(expected.iter().map(String::as_str)) {
        return Err(Error::InvalidArgument(
            "scenario columns do not match the buses of the case".into(),
        ));
    }
    let (mut p, mut q) = (Vec::new(), Vec::new());
    let (mut train, mut seen_test) = (0, false);
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        match &rec[1] {
            "train" if !seen_test => train += 1,
            "test" => seen_test = true,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "split label {other:?} out of order in scenario {}",
                    &rec[0]
                )))
            }
        }
        let vals = rec
            .iter()
            .skip(2)
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::InvalidArgument(format!("scenario {}: {e}", &rec[0])))?;
        p.push(vals[..n].to_vec());
        q.push(vals[n..].to_vec());
    }
    let count = p.len();
    Ok(ScenarioSet {
        bus_ids: bus_ids.to_vec(),
        p,
        q,
        seed,
        sigma,
        train_count: train,
        test_count: count - train,
    })
}
