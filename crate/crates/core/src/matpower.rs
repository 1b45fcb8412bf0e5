//! MATPOWER case text import.
//!
//! Only `baseMVA`, `bus`, `gen` and `branch` are read. Out-of-service branches
//! and generators are dropped, a nonzero tap ratio marks a transformer, bus
//! `Pd` becomes the load, and generator `Pg` is rescaled so total dispatch
//! matches total demand.

use crate::error::{Error, Result};
use crate::network::*;
use crate::powerflow::{bus_injections, flows_with_slack, GridIndex};

/// Multiplier on the base-case flow used when a branch has no rating.
pub const UNRATED_LIMIT_FACTOR: f64 = 1.5;
/// Smallest limit assigned to an unrated branch, MW.
pub const UNRATED_LIMIT_FLOOR: f64 = 10.0;

/// Which imported branches are open to maintenance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaintainableSet {
    #[default]
    Transformers,
    Lines,
    All,
    None,
}

impl MaintainableSet {
    fn admits(self, kind: BranchKind) -> bool {
        match self {
            MaintainableSet::Transformers => kind == BranchKind::Transformer,
            MaintainableSet::Lines => kind == BranchKind::Line,
            MaintainableSet::All => true,
            MaintainableSet::None => false,
        }
    }
}

// 1-based MATPOWER column numbers
const BUS_I: usize = 1;
const BUS_PD: usize = 3;
const GEN_BUS: usize = 1;
const GEN_PG: usize = 2;
const GEN_STATUS: usize = 8;
const GEN_PMAX: usize = 9;
const GEN_PMIN: usize = 10;
const F_BUS: usize = 1;
const T_BUS: usize = 2;
const BR_X: usize = 4;
const RATE_A: usize = 6;
const TAP: usize = 9;
const BR_STATUS: usize = 11;

fn strip_comments(text: &str) -> String {
    text.lines()
        .map(|l| l.split('%').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Byte offset just past `mpc.<name> =`, if the assignment exists.
fn assignment(text: &str, name: &str) -> Option<usize> {
    let needle = format!("mpc.{name}");
    let mut from = 0;
    while let Some(off) = text[from..].find(&needle) {
        let end = from + off + needle.len();
        let rest = text[end..].trim_start();
        if let Some(after) = rest.strip_prefix('=') {
            return Some(text.len() - after.len());
        }
        from = end;
    }
    None
}

fn scalar(text: &str, name: &str) -> Result<f64> {
    let start = assignment(text, name).ok_or_else(|| Error::MissingBlock(name.into()))?;
    let body = text[start..].split(';').next().unwrap_or("").trim();
    body.parse::<f64>().map_err(|_| Error::Parse {
        block: name.into(),
        row: 1,
        column: 1,
        message: format!("expected a number, found `{body}`"),
    })
}

fn matrix(text: &str, name: &str, min_cols: usize) -> Result<Vec<Vec<f64>>> {
    let start = assignment(text, name).ok_or_else(|| Error::MissingBlock(name.into()))?;
    let rest = text[start..].trim_start();
    let body = rest.strip_prefix('[').ok_or_else(|| Error::Parse {
        block: name.into(),
        row: 0,
        column: 0,
        message: "expected `[` after assignment".into(),
    })?;
    let end = body.find(']').ok_or_else(|| Error::Parse {
        block: name.into(),
        row: 0,
        column: 0,
        message: "unterminated matrix".into(),
    })?;
    let mut rows = Vec::new();
    for raw in body[..end].split([';', '\n']) {
        let fields: Vec<&str> = raw
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        if fields.is_empty() {
            continue;
        }
        let row_no = rows.len() + 1;
        let mut row = Vec::with_capacity(fields.len());
        for (c, f) in fields.iter().enumerate() {
            let v = f.parse::<f64>().map_err(|_| Error::Parse {
                block: name.into(),
                row: row_no,
                column: c + 1,
                message: format!("`{f}` is not a number"),
            })?;
            row.push(v);
        }
        if row.len() < min_cols {
            return Err(Error::Parse {
                block: name.into(),
                row: row_no,
                column: row.len() + 1,
                message: format!("row has {} columns, need at least {min_cols}", row.len()),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

fn bus_id(v: f64, block: &str, row: usize, column: usize) -> Result<BusId> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(BusId(v as u32))
    } else {
        Err(Error::Parse {
            block: block.into(),
            row,
            column,
            message: format!("`{v}` is not a valid bus number"),
        })
    }
}

pub fn parse_matpower(case_text: &str) -> Result<Network> {
    parse_matpower_with(case_text, MaintainableSet::default())
}

pub fn parse_matpower_with(case_text: &str, maintainable: MaintainableSet) -> Result<Network> {
    let text = strip_comments(case_text);
    let base_mva = scalar(&text, "baseMVA")?;
    let bus_rows = matrix(&text, "bus", BUS_PD)?;
    let gen_rows = matrix(&text, "gen", GEN_PMIN)?;
    let branch_rows = matrix(&text, "branch", BR_STATUS)?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut loads = Vec::new();
    let mut fixed_injections = Vec::new();
    for (r, row) in bus_rows.iter().enumerate() {
        let id = bus_id(row[BUS_I - 1], "bus", r + 1, BUS_I)?;
        buses.push(Bus { id, name: format!("Bus {id}") });
        let pd = row[BUS_PD - 1];
        if pd > 0.0 {
            loads.push(Load { bus: id, demand: pd, served: pd });
        } else if pd < 0.0 {
            // negative demand is a fixed, non-dispatchable injection
            fixed_injections.push(Generator { bus: id, p_max: -pd, p_min: -pd, dispatch: -pd });
        }
    }

    let mut generators = Vec::new();
    for (r, row) in gen_rows.iter().enumerate() {
        if row[GEN_STATUS - 1] <= 0.0 {
            continue;
        }
        let p_max = row[GEN_PMAX - 1];
        let p_min = row[GEN_PMIN - 1].max(0.0).min(p_max);
        generators.push(Generator {
            bus: bus_id(row[GEN_BUS - 1], "gen", r + 1, GEN_BUS)?,
            p_max,
            p_min,
            dispatch: row[GEN_PG - 1],
        });
    }
    let n_adjustable = generators.len();
    generators.extend(fixed_injections);

    let mut branches = Vec::new();
    let mut rated = Vec::new();
    for (r, row) in branch_rows.iter().enumerate() {
        if row[BR_STATUS - 1] == 0.0 {
            continue;
        }
        let kind = if row[TAP - 1] != 0.0 {
            BranchKind::Transformer
        } else {
            BranchKind::Line
        };
        let rate = row[RATE_A - 1];
        rated.push(rate > 0.0);
        branches.push(Branch {
            id: BranchId(r as u32 + 1),
            from_bus: bus_id(row[F_BUS - 1], "branch", r + 1, F_BUS)?,
            to_bus: bus_id(row[T_BUS - 1], "branch", r + 1, T_BUS)?,
            reactance: row[BR_X - 1],
            // placeholder until the base-case flow is known
            flow_limit: if rate > 0.0 { rate } else { 1.0 },
            kind,
            maintainable: maintainable.admits(kind),
        });
    }

    let mut network = Network { base_mva, buses, branches, generators, loads };

    let fixed: f64 = network.generators[n_adjustable..].iter().map(|g| g.dispatch).sum();
    let target = network.total_demand() - fixed;
    rescale_dispatch(&mut network.generators[..n_adjustable], target);

    // structural problems must surface before any flow computation
    let violations = network.validate();
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }

    if rated.iter().any(|r| !r) {
        let grid = GridIndex::new(&network);
        let dispatch: Vec<f64> = network.generators.iter().map(|g| g.dispatch).collect();
        let served: Vec<f64> = network.loads.iter().map(|l| l.served).collect();
        let injection = bus_injections(&grid, &dispatch, &served);
        let flows = flows_with_slack(&grid, &vec![true; grid.n_branch()], &injection)?;
        for ((br, &is_rated), f) in network.branches.iter_mut().zip(&rated).zip(&flows) {
            if !is_rated {
                br.flow_limit = (UNRATED_LIMIT_FACTOR * f.abs()).max(UNRATED_LIMIT_FLOOR);
            }
        }
    }
    Ok(network)
}

/// Scales dispatch by a common factor, clamping each unit to its limits, so
/// that the total equals `target` (as far as capacity allows). Units with zero
/// scheduled output only participate if the scheduled units cannot cover the
/// target on their own.
fn rescale_dispatch(gens: &mut [Generator], target: f64) {
    if gens.is_empty() {
        return;
    }
    let scheduled_cap: f64 = gens.iter().filter(|g| g.dispatch > 0.0).map(|g| g.p_max).sum();
    let weights: Vec<f64> = if scheduled_cap >= target {
        gens.iter().map(|g| g.dispatch.max(0.0)).collect()
    } else {
        gens.iter().map(|g| g.p_max).collect()
    };
    let at = |s: f64, g: &Generator, w: f64| (s * w).clamp(g.p_min, g.p_max);
    let total = |s: f64| -> f64 { gens.iter().zip(&weights).map(|(g, &w)| at(s, g, w)).sum() };

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while total(hi) < target && hi < 1e12 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let dispatch: Vec<f64> = gens.iter().zip(&weights).map(|(g, &w)| at(hi, g, w)).collect();
    for (g, d) in gens.iter_mut().zip(dispatch) {
        g.dispatch = d;
    }
    // put the bisection residual on the unit with the most room to absorb it
    let residual = target - gens.iter().map(|g| g.dispatch).sum::<f64>();
    let room = |g: &Generator| {
        if residual > 0.0 {
            g.p_max - g.dispatch
        } else {
            g.dispatch - g.p_min
        }
    };
    if let Some(g) = gens
        .iter_mut()
        .max_by(|a, b| room(a).total_cmp(&room(b)))
        .filter(|g| room(g) >= residual.abs())
    {
        g.dispatch += residual;
    }
}

/// The IEEE 57-bus case as distributed with MATPOWER.
pub const IEEE57: &str = include_str!("../data/case57.m");
/// The IEEE 300-bus case as distributed with MATPOWER.
pub const IEEE300: &str = include_str!("../data/case300.m");
