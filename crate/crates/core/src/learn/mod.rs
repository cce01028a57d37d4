//! Offline learning of the reduced model parameters from AC scenarios.

pub mod dataset;
pub mod metrics;
pub mod objective;
pub mod optim;
pub mod scenarios;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use dataset::{build_dataset, Dataset, DatasetMeta};
pub use metrics::{evaluate, Metrics};
pub use objective::{grad, loss, loss_and_grad, predict};
pub use optim::{minimize, Method, MinimizeOptions, MinimizeResult, StopReason};
pub use scenarios::{generate_scenarios, ScenarioSet};

use crate::error::{Error, Result};
use crate::reduce::{EquivalentParams, ReducedNetwork};
use optim::{Point, Stepper};

pub const DEFAULT_FULL_BATCH_ITERATIONS: usize = 500;
pub const DEFAULT_EPOCHS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Iterations (full batch) or epochs (mini-batch); method default if unset.
    pub max_iter: Option<usize>,
    pub tol: f64,
    /// Scenarios per mini-batch; `None` trains on the full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub lbfgs_memory: usize,
    /// Lower bound on every `b` entry (truncated Newton only).
    pub b_lower_bound: Option<f64>,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            max_iter: None,
            tol: 1e-6,
            batch_size: None,
            seed: 0,
            lbfgs_memory: 10,
            b_lower_bound: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub params: EquivalentParams,
    /// Training loss at the start and after every iteration or epoch.
    pub loss_history: Vec<f64>,
    pub grad_norm_history: Vec<f64>,
    pub method: Method,
    pub iterations: usize,
    pub stop: StopReason,
    pub wall_time: f64,
}

/// Equality on everything but the wall-clock time.
impl PartialEq for TrainReport {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
            && self.loss_history == other.loss_history
            && self.grad_norm_history == other.grad_norm_history
            && self.method == other.method
            && self.iterations == other.iterations
            && self.stop == other.stop
    }
}

type Eval = (f64, Vec<f64>);

fn objective<'a>(
    rn: &'a ReducedNetwork,
    data: &'a Dataset,
) -> impl FnMut(&[f64]) -> Result<Eval> + 'a {
    move |x: &[f64]| {
        let p = EquivalentParams::unpack(x, rn.tie_count(), rn.zone_count)?;
        let (l, g) = loss_and_grad(rn, &p, data)?;
        Ok((l, g.pack()))
    }
}

fn minimize_options(rn: &ReducedNetwork, hp: &HyperParams, max_iter: usize) -> MinimizeOptions {
    let lower = hp.b_lower_bound.map(|lb| {
        let mut v = vec![f64::NEG_INFINITY; 2 * rn.tie_count() + rn.zone_count - 1];
        v[..rn.tie_count()].fill(lb);
        v
    });
    MinimizeOptions {
        max_iter,
        tol: hp.tol,
        lbfgs_memory: hp.lbfgs_memory,
        lower,
    }
}

/// Fits the reduced model to `data` starting from `start`.
pub fn optimize(
    rn: &ReducedNetwork,
    data: &Dataset,
    start: &EquivalentParams,
    method: Method,
    hp: &HyperParams,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    start.check_shape(rn)?;
    let clock = Instant::now();
    let batch = hp.batch_size.filter(|&b| b > 0 && b < data.len());
    let (x, loss_history, grad_norm_history, iterations, stop) = match batch {
        None => {
            let opts = minimize_options(rn, hp, hp.max_iter.unwrap_or(DEFAULT_FULL_BATCH_ITERATIONS));
            let r = minimize(&mut objective(rn, data), &start.pack(), method, &opts)?;
            (r.x, r.loss_history, r.grad_norm_history, r.iterations, r.stop)
        }
        Some(bs) => mini_batch(rn, data, start, method, hp, bs)?,
    };
    Ok(TrainReport {
        params: EquivalentParams::unpack(&x, rn.tie_count(), rn.zone_count)?,
        loss_history,
        grad_norm_history,
        method,
        iterations,
        stop,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

type Trace = (Vec<f64>, Vec<f64>, Vec<f64>, usize, StopReason);

/// Epochs over shuffled batches with one step per batch. Curvature memory
/// is discarded at every epoch boundary.
fn mini_batch(
    rn: &ReducedNetwork,
    data: &Dataset,
    start: &EquivalentParams,
    method: Method,
    hp: &HyperParams,
    batch_size: usize,
) -> Result<Trace> {
    let epochs = hp.max_iter.unwrap_or(DEFAULT_EPOCHS);
    let opts = minimize_options(rn, hp, epochs);
    let mut stepper = Stepper::new(method, &opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut full = objective(rn, data);

    let mut x = start.pack();
    let full_point = |x: Vec<f64>, full: &mut dyn FnMut(&[f64]) -> Result<Eval>| -> Result<Point> {
        let (f, g) = full(&x).map_err(|e| match e {
            Error::SingularSystem(msg) => Error::TrainingAborted {
                iteration: 0,
                reason: format!("singular model: {msg}"),
            },
            e => e,
        })?;
        Ok(Point { x, f, g })
    };
    let mut p = full_point(x.clone(), &mut full)?;
    let mut loss_history = vec![p.f];
    let mut grad_norm_history = vec![stepper.projected_grad_norm(&p)];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch = 0;
    let stop = loop {
        if *grad_norm_history.last().unwrap() <= hp.tol {
            break StopReason::GradientTolerance;
        }
        if epoch >= epochs {
            break StopReason::MaxIterations;
        }
        epoch += 1;
        stepper.reset();
        order.shuffle(&mut rng);
        let mut moved = false;
        for chunk in order.chunks(batch_size) {
            let sub = data.select(chunk);
            let mut obj = objective(rn, &sub);
            let (f, g) = match obj(&x) {
                Ok(v) => v,
                Err(Error::SingularSystem(msg)) => {
                    return Err(Error::TrainingAborted {
                        iteration: epoch,
                        reason: format!("singular model: {msg}"),
                    })
                }
                Err(e) => return Err(e),
            };
            let bp = Point { x: x.clone(), f, g };
            if let Some(next) = stepper.step(&mut obj, &bp, epoch)? {
                x = next.x;
                moved = true;
            }
        }
        p = full_point(x.clone(), &mut full)?;
        loss_history.push(p.f);
        grad_norm_history.push(stepper.projected_grad_norm(&p));
        if !moved {
            break StopReason::LineSearchStalled;
        }
    };
    Ok((p.x, loss_history, grad_norm_history, epoch, stop))
}

/// Trained parameters with the topology they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub zone_hash: String,
    pub dataset_hash: String,
    pub seed: u64,
    pub method: Method,
    pub ref_zone: usize,
    pub zone_count: usize,
    pub tie_order: Vec<String>,
    pub b: Vec<f64>,
    pub gamma: Vec<f64>,
    pub rho: Vec<f64>,
    pub final_loss: f64,
    pub iterations: usize,
    pub stop: StopReason,
}

impl Checkpoint {
    pub fn params(&self) -> EquivalentParams {
        EquivalentParams {
            b: self.b.clone(),
            gamma: self.gamma.clone(),
            rho: self.rho.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduce::TieLine;
    use nalgebra::DMatrix;

    fn triangle() -> ReducedNetwork {
        let tie = |a, b| TieLine {
            from_zone: a,
            to_zone: b,
            crossings: vec![],
        };
        ReducedNetwork::new(3, 0, vec![tie(0, 1), tie(0, 2), tie(1, 2)]).unwrap()
    }

    fn synthetic(s: usize) -> Dataset {
        let rn = triangle();
        let truth = EquivalentParams {
            b: vec![8.0, 5.0, 3.0],
            gamma: vec![0.02, -0.01],
            rho: vec![0.01, -0.02, 0.005],
        };
        let inputs = DMatrix::from_fn(2, s, |i, m| ((i * 7 + m * 3) as f64).sin() * 0.8);
        let targets = predict(&rn, &truth, &inputs).unwrap();
        Dataset::new(inputs, targets).unwrap()
    }

    fn start() -> EquivalentParams {
        EquivalentParams {
            b: vec![10.0, 10.0, 10.0],
            gamma: vec![0.0; 2],
            rho: vec![0.0; 3],
        }
    }

    #[test]
    fn full_batch_methods_fit_noise_free_data() {
        let rn = triangle();
        let data = synthetic(30);
        for method in [Method::BFGS, Method::LBFGS, Method::TNC] {
            let hp = HyperParams {
                tol: 1e-10,
                max_iter: Some(2000),
                ..Default::default()
            };
            let r = optimize(&rn, &data, &start(), method, &hp).unwrap();
            assert!(*r.loss_history.last().unwrap() < 1e-14, "{method}: {:?}", r.loss_history.last());
            assert!(r.loss_history.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn mini_batch_improves_and_is_deterministic() {
        let rn = triangle();
        let data = synthetic(50);
        let hp = HyperParams {
            batch_size: Some(10),
            max_iter: Some(5),
            seed: 4,
            ..Default::default()
        };
        let a = optimize(&rn, &data, &start(), Method::LBFGS, &hp).unwrap();
        let b = optimize(&rn, &data, &start(), Method::LBFGS, &hp).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iterations, 5);
        assert!(a.loss_history.last().unwrap() < &a.loss_history[0]);
    }

    #[test]
    fn bound_requires_tnc() {
        let rn = triangle();
        let hp = HyperParams {
            b_lower_bound: Some(1e-6),
            ..Default::default()
        };
        assert!(optimize(&rn, &synthetic(5), &start(), Method::BFGS, &hp).is_err());
        let r = optimize(&rn, &synthetic(5), &start(), Method::TNC, &hp).unwrap();
        assert!(r.params.b.iter().all(|&b| b >= 1e-6));
    }
}
