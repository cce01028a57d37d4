//! Reader and writer for the matrix-text (`mpc.*`) case format.
//!
//! Only `baseMVA`, `bus`, `gen` and `branch` are read; cost tables and
//! operating limits are ignored. Out-of-service branches and generators are
//! dropped, isolated (type 4) buses are dropped together with their branches.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{validate, Branch, Bus, BusKind, Network, Violation};
use crate::error::{Error, Result};

const BUS_COLS: usize = 9;
const GEN_COLS: usize = 8;
const BRANCH_COLS: usize = 11;

pub fn parse_case(text: &str) -> Result<Network> {
    let cleaned: String = text
        .lines()
        .map(|l| l.split('%').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n");

    let base_mva = scalar(&cleaned, "baseMVA")?;
    if !(base_mva > 0.0) {
        return Err(Error::MalformedCase(format!("baseMVA must be positive, got {base_mva}")));
    }
    let bus_rows = matrix(&cleaned, "bus", BUS_COLS)?;
    let gen_rows = matrix(&cleaned, "gen", GEN_COLS)?;
    let branch_rows = matrix(&cleaned, "branch", BRANCH_COLS)?;

    // Generator contributions per bus, in file order.
    let mut gen_p: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut gen_q: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut gen_v: HashMap<usize, f64> = HashMap::new();
    for row in &gen_rows {
        if row[7] <= 0.0 {
            continue;
        }
        let bus = as_id(row[0], "gen bus")?;
        gen_p.entry(bus).or_default().push(row[1]);
        gen_q.entry(bus).or_default().push(row[2]);
        gen_v.entry(bus).or_insert(row[5]);
    }

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut isolated = Vec::new();
    for row in &bus_rows {
        let id = as_id(row[0], "bus id")?;
        let has_gen = gen_p.contains_key(&id);
        let kind = match row[1] as i64 {
            1 => BusKind::PQ,
            2 if has_gen => BusKind::PV,
            2 => BusKind::PQ,
            3 => BusKind::Slack,
            4 => {
                isolated.push(id);
                continue;
            }
            other => {
                return Err(Error::MalformedCase(format!("bus {id}: unknown bus type {other}")))
            }
        };
        let (pd, qd, gs, bs, vm) = (row[2], row[3], row[4], row[5], row[7]);
        let pg = gen_p.get(&id).map_or(0.0, |v| v.iter().fold(0.0, |a, x| a + x));
        let qg = gen_q.get(&id).map_or(0.0, |v| v.iter().fold(0.0, |a, x| a + x));
        let v_mag_setpoint = match kind {
            BusKind::PQ => 1.0,
            _ => gen_v.get(&id).copied().unwrap_or(vm),
        };
        buses.push(Bus {
            id,
            kind,
            p_inj: (pg - pd) / base_mva,
            q_inj: (qg - qd) / base_mva,
            v_mag_setpoint,
            shunt_g: gs / base_mva,
            shunt_b: bs / base_mva,
        });
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for row in &branch_rows {
        if row[10] <= 0.0 {
            continue;
        }
        let from_bus = as_id(row[0], "branch from bus")?;
        let to_bus = as_id(row[1], "branch to bus")?;
        if isolated.contains(&from_bus) || isolated.contains(&to_bus) {
            continue;
        }
        let (r, x) = (row[2], row[3]);
        if r == 0.0 && x == 0.0 {
            return Err(Error::MalformedCase(format!(
                "branch {from_bus}-{to_bus} has zero impedance"
            )));
        }
        let (series_g, series_b) = Branch::series_from_impedance(r, x);
        let tap_ratio = if row[8] == 0.0 { 1.0 } else { row[8] };
        branches.push(Branch {
            from_bus,
            to_bus,
            series_g,
            series_b,
            shunt_g: 0.0,
            shunt_b: row[4],
            tap_ratio,
            phase_shift: row[9].to_radians(),
            resistance: r,
            reactance: x,
        });
    }

    let ref_bus = buses
        .iter()
        .find(|b| b.kind == BusKind::Slack)
        .map(|b| b.id)
        .ok_or(Error::NoSlack)?;

    let net = Network {
        base_mva,
        buses,
        branches,
        ref_bus,
    };
    let violations = validate(&net);
    if let Some(Violation::Disconnected { unreached }) = violations
        .iter()
        .find(|v| matches!(v, Violation::Disconnected { .. }))
    {
        return Err(Error::Disconnected {
            from: net.buses[0].id,
            unreached: unreached.len(),
        });
    }
    if !violations.is_empty() {
        return Err(Error::InvalidNetwork(violations));
    }
    Ok(net)
}

/// Writes a network back to case text such that [`parse_case`] reproduces
/// it field for field.
pub fn to_case_text(net: &Network) -> String {
    let base = net.base_mva;
    let mut s = String::new();
    let _ = writeln!(s, "function mpc = gridreduce_export");
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {:?};", base);
    let _ = writeln!(s, "\n%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin");
    let _ = writeln!(s, "mpc.bus = [");
    for b in &net.buses {
        let kind = match b.kind {
            BusKind::PQ => 1,
            BusKind::PV => 2,
            BusKind::Slack => 3,
        };
        let pd = encode_exact(b.p_inj, -b.p_inj * base, |pd| (0.0 - pd) / base);
        let qd = encode_exact(b.q_inj, -b.q_inj * base, |qd| (0.0 - qd) / base);
        let gs = encode_exact(b.shunt_g, b.shunt_g * base, |g| g / base);
        let bs = encode_exact(b.shunt_b, b.shunt_b * base, |x| x / base);
        let _ = writeln!(
            s,
            "\t{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t1\t{:?}\t0\t0\t1\t1.1\t0.9;",
            b.id, kind, pd, qd, gs, bs, b.v_mag_setpoint
        );
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(s, "\n%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin");
    let _ = writeln!(s, "mpc.gen = [");
    for b in net.buses.iter().filter(|b| b.kind != BusKind::PQ) {
        let _ = writeln!(
            s,
            "\t{}\t0\t0\t9999\t-9999\t{:?}\t{:?}\t1\t9999\t-9999;",
            b.id, b.v_mag_setpoint, base
        );
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(
        s,
        "\n%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax"
    );
    let _ = writeln!(s, "mpc.branch = [");
    for br in &net.branches {
        let angle = encode_exact(br.phase_shift, br.phase_shift.to_degrees(), f64::to_radians);
        let _ = writeln!(
            s,
            "\t{}\t{}\t{:?}\t{:?}\t{:?}\t0\t0\t0\t{:?}\t{:?}\t1\t-360\t360;",
            br.from_bus, br.to_bus, br.resistance, br.reactance, br.shunt_b, br.tap_ratio, angle
        );
    }
    let _ = writeln!(s, "];");
    s
}

/// Finds a float near `guess` that `decode` maps exactly onto `target`.
fn encode_exact(target: f64, guess: f64, decode: impl Fn(f64) -> f64) -> f64 {
    if decode(guess) == target || !guess.is_finite() {
        return guess;
    }
    let (mut up, mut down) = (guess, guess);
    for _ in 0..512 {
        up = up.next_up();
        down = down.next_down();
        if decode(up) == target {
            return up;
        }
        if decode(down) == target {
            return down;
        }
    }
    guess
}

fn as_id(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < usize::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::MalformedCase(format!("{what} must be a non-negative integer, got {v}")))
    }
}

/// Locates `mpc.<name> =` and returns the text after the `=`.
fn assignment<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    let key = format!("mpc.{name}");
    let mut from = 0;
    while let Some(off) = text[from..].find(&key) {
        let after = &text[from + off + key.len()..];
        let trimmed = after.trim_start();
        if let Some(rest) = trimmed.strip_prefix('=') {
            return Some(rest);
        }
        from += off + key.len();
    }
    None
}

fn scalar(text: &str, name: &str) -> Result<f64> {
    let rest = assignment(text, name)
        .ok_or_else(|| Error::MalformedCase(format!("missing mpc.{name}")))?;
    let value = rest.split(';').next().unwrap_or("").trim();
    value
        .parse()
        .map_err(|_| Error::MalformedCase(format!("mpc.{name}: not a number: {value:?}")))
}

fn matrix(text: &str, name: &str, min_cols: usize) -> Result<Vec<Vec<f64>>> {
    let rest = assignment(text, name)
        .ok_or_else(|| Error::MalformedCase(format!("missing mpc.{name} table")))?;
    let open = rest
        .find('[')
        .ok_or_else(|| Error::MalformedCase(format!("mpc.{name}: expected '['")))?;
    let close = rest[open..]
        .find(']')
        .ok_or_else(|| Error::MalformedCase(format!("mpc.{name}: unterminated table")))?;
    let body = &rest[open + 1..open + close];

    let mut rows = Vec::new();
    for (k, raw) in body.split([';', '\n']).enumerate() {
        let fields: Vec<&str> = raw
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .collect();
        if fields.is_empty() {
            continue;
        }
        let row = fields
            .iter()
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    Error::MalformedCase(format!("mpc.{name}: non-numeric field {t:?}"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() < min_cols {
            return Err(Error::MalformedCase(format!(
                "mpc.{name}: row {k} has {} columns, need at least {min_cols}",
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}
