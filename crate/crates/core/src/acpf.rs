//! Newton–Raphson AC power flow in polar coordinates.
//!
//! Unknowns are the angles of all non-slack buses followed by the voltage
//! magnitudes of PQ buses. The mismatch is `specified - computed` injection,
//! active power for every non-slack bus and reactive power for every PQ bus.
//! Branches use the standard two-port model, so off-nominal taps and phase
//! shifters are handled; with unit taps the flow expressions reduce to
//!
//! ```text
//! p_ij = V_i² (g + g_sh) - V_i V_j (g cos θ_ij + b sin θ_ij)
//! q_ij = -V_i² (b + b_sh) - V_i V_j (g sin θ_ij - b cos θ_ij)
//! ```

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, minimum_degree_order, SparseLu, Triplets};
use crate::netmodel::{BusKind, Network};

/// Bus count from which the Newton step uses the sparse factorization.
pub const SPARSE_THRESHOLD: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcOptions {
    /// Convergence threshold on the mismatch ∞-norm, per unit.
    pub tol: f64,
    /// Cap on Newton steps.
    pub max_iter: usize,
}

impl Default for AcOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcSolution {
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
    pub p_flow_from: Vec<f64>,
    pub q_flow_from: Vec<f64>,
    pub converged: bool,
    /// Mismatch evaluations performed (Newton steps + 1).
    pub iterations: usize,
    pub max_mismatch: f64,
}

/// Bus admittance matrix in row-compressed form.
#[derive(Debug, Clone)]
pub struct YBus {
    rows: Vec<Vec<(usize, Complex<f64>)>>,
}

impl YBus {
    pub fn new(net: &Network) -> Self {
        let n = net.buses.len();
        let pos = net.bus_positions();
        let mut dense_rows: Vec<std::collections::BTreeMap<usize, Complex<f64>>> =
            vec![Default::default(); n];
        for (k, bus) in net.buses.iter().enumerate() {
            let y = Complex::new(bus.shunt_g, bus.shunt_b);
            if y != Complex::new(0.0, 0.0) {
                *dense_rows[k].entry(k).or_default() += y;
            }
        }
        for br in &net.branches {
            let f = pos[&br.from_bus];
            let t = pos[&br.to_bus];
            let [ff, ft, tf, tt] = br.two_port();
            *dense_rows[f].entry(f).or_default() += ff;
            *dense_rows[f].entry(t).or_default() += ft;
            *dense_rows[t].entry(f).or_default() += tf;
            *dense_rows[t].entry(t).or_default() += tt;
        }
        let rows = dense_rows
            .into_iter()
            .map(|r| r.into_iter().collect())
            .collect();
        Self { rows }
    }

    pub fn row(&self, i: usize) -> &[(usize, Complex<f64>)] {
        &self.rows[i]
    }

    /// Computed complex injections `S_i = V_i conj(Σ_k Y_ik V_k)`.
    pub fn injections(&self, v_mag: &[f64], v_ang: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.rows.len();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            let (mut pi, mut qi) = (0.0, 0.0);
            for &(k, y) in &self.rows[i] {
                let d = v_ang[i] - v_ang[k];
                let (s, c) = d.sin_cos();
                let vv = v_mag[i] * v_mag[k];
                pi += vv * (y.re * c + y.im * s);
                qi += vv * (y.re * s - y.im * c);
            }
            p[i] = pi;
            q[i] = qi;
        }
        (p, q)
    }
}

/// Bus classification and variable layout shared by mismatch and Jacobian.
#[derive(Debug, Clone)]
struct Layout {
    pvpq: Vec<usize>,
    pq: Vec<usize>,
    /// Column of the angle unknown per bus, if any.
    ang_col: Vec<Option<usize>>,
    /// Column of the magnitude unknown per bus, if any.
    mag_col: Vec<Option<usize>>,
}

impl Layout {
    fn new(net: &Network) -> Self {
        let n = net.buses.len();
        let pvpq: Vec<usize> = (0..n).filter(|&k| net.buses[k].kind != BusKind::Slack).collect();
        let pq: Vec<usize> = (0..n).filter(|&k| net.buses[k].kind == BusKind::PQ).collect();
        let mut ang_col = vec![None; n];
        let mut mag_col = vec![None; n];
        for (c, &k) in pvpq.iter().enumerate() {
            ang_col[k] = Some(c);
        }
        for (c, &k) in pq.iter().enumerate() {
            mag_col[k] = Some(pvpq.len() + c);
        }
        Self {
            pvpq,
            pq,
            ang_col,
            mag_col,
        }
    }

    fn dim(&self) -> usize {
        self.pvpq.len() + self.pq.len()
    }
}

fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}

fn mismatch_vector(
    ybus: &YBus,
    layout: &Layout,
    p_spec: &[f64],
    q_spec: &[f64],
    v_mag: &[f64],
    v_ang: &[f64],
) -> Vec<f64> {
    let (p, q) = ybus.injections(v_mag, v_ang);
    layout
        .pvpq
        .iter()
        .map(|&k| p_spec[k] - p[k])
        .chain(layout.pq.iter().map(|&k| q_spec[k] - q[k]))
        .collect()
}

/// Mismatch `[ΔP(non-slack); ΔQ(PQ)]` using the network's own injections.
pub fn ac_mismatch(net: &Network, v_mag: &[f64], v_ang: &[f64]) -> Result<Vec<f64>> {
    let n = net.buses.len();
    check_len("ac_mismatch v_mag", n, v_mag.len())?;
    check_len("ac_mismatch v_ang", n, v_ang.len())?;
    let ybus = YBus::new(net);
    let layout = Layout::new(net);
    Ok(mismatch_vector(
        &ybus,
        &layout,
        &net.p_injections(),
        &net.q_injections(),
        v_mag,
        v_ang,
    ))
}

/// Jacobian of the computed injections with respect to `[θ(non-slack); V(PQ)]`.
fn injection_jacobian(ybus: &YBus, layout: &Layout, v_mag: &[f64], v_ang: &[f64]) -> Triplets {
    let n = v_mag.len();
    let (p, q) = ybus.injections(v_mag, v_ang);
    let mut t = Triplets::new(layout.dim());
    let p_row: Vec<Option<usize>> = layout.ang_col.clone();
    let q_row: Vec<Option<usize>> = layout.mag_col.clone();
    for i in 0..n {
        if p_row[i].is_none() && q_row[i].is_none() {
            continue;
        }
        for &(k, y) in ybus.row(i) {
            let (g, b) = (y.re, y.im);
            if k == i {
                let vi = v_mag[i];
                let dp_dth = -q[i] - b * vi * vi;
                let dp_dv = p[i] / vi + g * vi;
                let dq_dth = p[i] - g * vi * vi;
                let dq_dv = q[i] / vi - b * vi;
                stamp(&mut t, p_row[i], layout.ang_col[i], dp_dth);
                stamp(&mut t, p_row[i], layout.mag_col[i], dp_dv);
                stamp(&mut t, q_row[i], layout.ang_col[i], dq_dth);
                stamp(&mut t, q_row[i], layout.mag_col[i], dq_dv);
            } else {
                let d = v_ang[i] - v_ang[k];
                let (s, c) = d.sin_cos();
                let vv = v_mag[i] * v_mag[k];
                let dp_dth = vv * (g * s - b * c);
                let dp_dv = v_mag[i] * (g * c + b * s);
                let dq_dth = -vv * (g * c + b * s);
                let dq_dv = v_mag[i] * (g * s - b * c);
                stamp(&mut t, p_row[i], layout.ang_col[k], dp_dth);
                stamp(&mut t, p_row[i], layout.mag_col[k], dp_dv);
                stamp(&mut t, q_row[i], layout.ang_col[k], dq_dth);
                stamp(&mut t, q_row[i], layout.mag_col[k], dq_dv);
            }
        }
    }
    t
}

fn stamp(t: &mut Triplets, row: Option<usize>, col: Option<usize>, v: f64) {
    if let (Some(r), Some(c)) = (row, col) {
        t.push(r, c, v);
    }
}

/// Jacobian of [`ac_mismatch`] with respect to `[θ(non-slack); V(PQ)]`.
pub fn mismatch_jacobian(net: &Network, v_mag: &[f64], v_ang: &[f64]) -> Result<DMatrix<f64>> {
    let n = net.buses.len();
    check_len("mismatch_jacobian v_mag", n, v_mag.len())?;
    check_len("mismatch_jacobian v_ang", n, v_ang.len())?;
    let ybus = YBus::new(net);
    let layout = Layout::new(net);
    Ok(-injection_jacobian(&ybus, &layout, v_mag, v_ang).to_dense())
}

/// Solves the AC power flow with the network's reactive injections.
pub fn solve_ac(net: &Network, p_injections: &[f64], opts: &AcOptions) -> Result<AcSolution> {
    solve_ac_with(net, p_injections, &net.q_injections(), opts)
}

/// Solves the AC power flow from a flat start. Active injections of the
/// slack bus and reactive injections of slack/PV buses are ignored.
pub fn solve_ac_with(
    net: &Network,
    p_injections: &[f64],
    q_injections: &[f64],
    opts: &AcOptions,
) -> Result<AcSolution> {
    let n = net.buses.len();
    check_len("solve_ac p_injections", n, p_injections.len())?;
    check_len("solve_ac q_injections", n, q_injections.len())?;
    let ybus = YBus::new(net);
    let layout = Layout::new(net);

    let mut v_mag: Vec<f64> = net
        .buses
        .iter()
        .map(|b| match b.kind {
            BusKind::PQ => 1.0,
            _ => b.v_mag_setpoint,
        })
        .collect();
    let mut v_ang = vec![0.0; n];

    let sparse = n >= SPARSE_THRESHOLD;
    let mut order: Option<Vec<usize>> = None;

    let mut steps = 0;
    loop {
        let f = mismatch_vector(&ybus, &layout, p_injections, q_injections, &v_mag, &v_ang);
        let max_mismatch = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !max_mismatch.is_finite() {
            return Err(Error::NonConvergence {
                iterations: steps + 1,
                max_mismatch,
            });
        }
        if max_mismatch <= opts.tol {
            let mut sol = AcSolution {
                v_mag,
                v_ang,
                p_flow_from: Vec::new(),
                q_flow_from: Vec::new(),
                converged: true,
                iterations: steps + 1,
                max_mismatch,
            };
            let flows = branch_flows(net, &sol);
            sol.p_flow_from = flows.iter().map(|f| f.0).collect();
            sol.q_flow_from = flows.iter().map(|f| f.1).collect();
            return Ok(sol);
        }
        if steps >= opts.max_iter {
            return Err(Error::NonConvergence {
                iterations: steps + 1,
                max_mismatch,
            });
        }

        // J_calc dx = f, since f = spec - calc.
        let jac = injection_jacobian(&ybus, &layout, &v_mag, &v_ang);
        let dx: Vec<f64> = if sparse {
            let ord = order.get_or_insert_with(|| minimum_degree_order(jac.n, &jac.entries));
            SparseLu::factor(&jac, ord)
                .ok_or(Error::SingularJacobian)?
                .solve(&f)
        } else {
            linalg::dense_solve(jac.to_dense(), &DVector::from_vec(f))
                .ok_or(Error::SingularJacobian)?
                .iter()
                .copied()
                .collect()
        };
        for (c, &k) in layout.pvpq.iter().enumerate() {
            v_ang[k] += dx[c];
        }
        let off = layout.pvpq.len();
        for (c, &k) in layout.pq.iter().enumerate() {
            v_mag[k] += dx[off + c];
        }
        steps += 1;
    }
}

/// Active and reactive flow per branch at the from terminal, per unit.
pub fn branch_flows(net: &Network, sol: &AcSolution) -> Vec<(f64, f64)> {
    terminal_flows(net, sol, true)
}

/// Same as [`branch_flows`] but measured at the to terminal (into the branch).
pub fn branch_flows_to(net: &Network, sol: &AcSolution) -> Vec<(f64, f64)> {
    terminal_flows(net, sol, false)
}

fn terminal_flows(net: &Network, sol: &AcSolution, from_end: bool) -> Vec<(f64, f64)> {
    let pos = net.bus_positions();
    net.branches
        .iter()
        .map(|br| {
            let f = pos[&br.from_bus];
            let t = pos[&br.to_bus];
            let vf = Complex::from_polar(sol.v_mag[f], sol.v_ang[f]);
            let vt = Complex::from_polar(sol.v_mag[t], sol.v_ang[t]);
            let [ff, ft, tf, tt] = br.two_port();
            let s = if from_end {
                vf * (ff * vf + ft * vt).conj()
            } else {
                vt * (tf * vf + tt * vt).conj()
            };
            (s.re, s.im)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::fixtures::{bus, lossless_branch, two_bus};
    use crate::netmodel::Network;

    #[test]
    fn flat_start_zero_injection_has_zero_mismatch() {
        let net = two_bus(0.0);
        let f = ac_mismatch(&net, &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!(f.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn two_bus_flat_start_mismatch_is_the_load() {
        let net = two_bus(0.5);
        let f = ac_mismatch(&net, &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!((f[0] + 0.5).abs() < 1e-15);
        assert!(f[1].abs() < 1e-12);
    }

    #[test]
    fn mismatch_rejects_wrong_length() {
        let net = two_bus(0.5);
        assert!(matches!(
            ac_mismatch(&net, &[1.0], &[0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_injection_solves_in_one_iteration() {
        let net = two_bus(0.0);
        let sol = solve_ac(&net, &[0.0, 0.0], &AcOptions::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.v_ang, vec![0.0, 0.0]);
        assert_eq!(sol.v_mag, vec![1.0, 1.0]);
        assert!(sol.p_flow_from.iter().all(|p| p.abs() < 1e-15));
    }

    #[test]
    fn flows_vanish_for_equal_phasors() {
        let net = two_bus(0.0);
        let sol = AcSolution {
            v_mag: vec![1.0, 1.0],
            v_ang: vec![0.2, 0.2],
            p_flow_from: vec![],
            q_flow_from: vec![],
            converged: true,
            iterations: 1,
            max_mismatch: 0.0,
        };
        let (p, q) = branch_flows(&net, &sol)[0];
        assert!(p.abs() < 1e-14 && q.abs() < 1e-14);
    }

    #[test]
    fn lossless_line_flow_is_sine_law() {
        let net = two_bus(0.0);
        let sol = AcSolution {
            v_mag: vec![1.0, 1.0],
            v_ang: vec![0.05, 0.0],
            p_flow_from: vec![],
            q_flow_from: vec![],
            converged: true,
            iterations: 1,
            max_mismatch: 0.0,
        };
        let (p, _) = branch_flows(&net, &sol)[0];
        assert!((p - 10.0 * 0.05f64.sin()).abs() < 1e-13);
        assert!((p - 0.49979).abs() < 1e-5);
    }

    #[test]
    fn two_bus_matches_bisection_oracle() {
        // PV receiving end keeps V = 1 so the flow obeys p = sin(δ)/x exactly.
        let mut net = two_bus(0.5);
        net.buses[1].kind = BusKind::PV;
        let sol = solve_ac(&net, &[0.0, -0.5], &AcOptions::default()).unwrap();

        let (mut lo, mut hi) = (0.0f64, std::f64::consts::FRAC_PI_2);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid.sin() / 0.1 < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let delta = 0.5 * (lo + hi);
        assert!((sol.v_ang[1] + delta).abs() < 1e-9);
        assert!((sol.p_flow_from[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn radial_pq_load_balances_slack() {
        let net = two_bus(0.5);
        let sol = solve_ac(&net, &[0.0, -0.5], &AcOptions::default()).unwrap();
        assert!(sol.max_mismatch <= 1e-8);
        assert!((sol.p_flow_from[0] - 0.5).abs() < 1e-8);
        let to = branch_flows_to(&net, &sol);
        // Lossless: what leaves the from end arrives at the to end.
        assert!((sol.p_flow_from[0] + to[0].0).abs() < 1e-8);
    }

    #[test]
    fn non_convergence_is_reported() {
        // 20 pu across x = 0.1 exceeds the maximum transfer of 10 pu.
        let net = two_bus(20.0);
        let err = solve_ac(&net, &[0.0, -20.0], &AcOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. } | Error::SingularJacobian));
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        // A ring of 600 buses with a few chords forces the sparse path.
        let n = 600;
        let mut buses = vec![bus(1, BusKind::Slack, 0.0)];
        for k in 2..=n {
            let p = if k % 3 == 0 { 0.02 } else { -0.01 };
            buses.push(bus(k, if k % 7 == 0 { BusKind::PV } else { BusKind::PQ }, p));
        }
        let mut branches: Vec<_> = (1..=n).map(|k| lossless_branch(k, k % n + 1, 0.01)).collect();
        for k in (1..n).step_by(50) {
            branches.push(lossless_branch(k, (k + n / 2 - 1) % n + 1, 0.02));
        }
        let net = Network {
            base_mva: 100.0,
            buses,
            branches,
            ref_bus: 1,
        };
        assert!(net.validate().is_empty());
        let p = net.p_injections();
        let sparse = solve_ac(&net, &p, &AcOptions::default()).unwrap();

        let ybus = YBus::new(&net);
        let layout = Layout::new(&net);
        let mut v = vec![1.0; n];
        let mut a = vec![0.0; n];
        let q = net.q_injections();
        for _ in 0..20 {
            let f = mismatch_vector(&ybus, &layout, &p, &q, &v, &a);
            if f.iter().all(|x| x.abs() < 1e-10) {
                break;
            }
            let jac = injection_jacobian(&ybus, &layout, &v, &a).to_dense();
            let dx = linalg::dense_solve(jac, &DVector::from_vec(f)).unwrap();
            for (c, &k) in layout.pvpq.iter().enumerate() {
                a[k] += dx[c];
            }
            for (c, &k) in layout.pq.iter().enumerate() {
                v[k] += dx[layout.pvpq.len() + c];
            }
        }
        for k in 0..n {
            assert!((sparse.v_ang[k] - a[k]).abs() < 1e-8);
            assert!((sparse.v_mag[k] - v[k]).abs() < 1e-8);
        }
    }
}
