//! Source-to-target assignment and frame-by-frame transport plans.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, TaskInstance, TrapLayout, TrapSite};
use crate::metrics::DisplacementStats;

/// Slack on the frame count so that exact multiples of δ are not rounded up.
const FRAME_SLACK: f64 = 1e-9;

/// Relative weight of the squared-length term that separates equal-length matchings.
const TIE_BREAK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    #[default]
    Distance,
    Squared,
}

impl CostKind {
    pub fn eval(self, a: [f64; 3], b: [f64; 3]) -> f64 {
        let d = distance(a, b);
        match self {
            CostKind::Distance => d,
            CostKind::Squared => d * d,
        }
    }
}

impl std::str::FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distance" => Ok(CostKind::Distance),
            "squared" => Ok(CostKind::Squared),
            other => Err(Error::Config(format!("unknown cost `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub source: usize,
    pub target: usize,
    pub from: [f64; 3],
    pub to: [f64; 3],
}

impl Pair {
    pub fn length(&self) -> f64 {
        distance(self.from, self.to)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// One pair per target, in target order.
    pub pairs: Vec<Pair>,
    pub unmatched: Vec<usize>,
    pub cost: f64,
}

impl Assignment {
    fn from_matching(sources: &[TrapSite], targets: &[TrapSite], matched: Vec<usize>, kind: CostKind) -> Self {
        let mut used = vec![false; sources.len()];
        let pairs: Vec<Pair> = matched
            .iter()
            .enumerate()
            .map(|(t, &s)| {
                used[s] = true;
                Pair {
                    source: s,
                    target: t,
                    from: sources[s].pos(),
                    to: targets[t].pos(),
                }
            })
            .collect();
        let cost = pairs.iter().map(|p| kind.eval(p.from, p.to)).sum();
        Assignment {
            pairs,
            unmatched: (0..sources.len()).filter(|s| !used[*s]).collect(),
            cost,
        }
    }

    pub fn source_of(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.source).collect()
    }
}

/// Rectangular minimum-cost assignment of every row to a distinct column.
/// Rows ≤ columns. Returns the column of each row.
fn hungarian(cost: &[Vec<f64>], cols: usize) -> Vec<usize> {
    let n = cost.len();
    let m = cols;
    // 1-based potentials; p[j] = row matched to column j
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Minimum-cost assignment of every target to a distinct source.
pub fn assign(sources: &TrapLayout, targets: &TrapLayout, kind: CostKind) -> Result<Assignment> {
    assign_with_required(sources.sites(), targets.sites(), &vec![false; sources.len()], kind)
}

/// As [`assign`], but every source flagged in `required` must be matched.
pub fn assign_with_required(
    sources: &[TrapSite],
    targets: &[TrapSite],
    required: &[bool],
    kind: CostKind,
) -> Result<Assignment> {
    if sources.len() < targets.len() {
        return Err(Error::Infeasible {
            sources: sources.len(),
            targets: targets.len(),
        });
    }
    if required.len() != sources.len() {
        return Err(Error::dims(sources.len(), required.len()));
    }
    let forced = required.iter().filter(|r| **r).count();
    if forced > targets.len() {
        return Err(Error::Invalid(format!(
            "{forced} required sources for {} targets",
            targets.len()
        )));
    }
    if targets.is_empty() {
        return Ok(Assignment::from_matching(sources, targets, Vec::new(), kind));
    }
    let mut cost: Vec<Vec<f64>> = targets
        .iter()
        .map(|t| sources.iter().map(|s| kind.eval(s.pos(), t.pos())).collect())
        .collect();
    if kind == CostKind::Distance {
        // among equal-length matchings prefer the one with the smallest squared
        // lengths, which avoids nested moves along a common line
        let scale = cost.iter().flatten().cloned().fold(0.0, f64::max);
        if scale > 0.0 {
            for c in cost.iter_mut().flatten() {
                *c += TIE_BREAK * *c * *c / scale;
            }
        }
    }
    if forced > 0 {
        let max = cost.iter().flatten().cloned().fold(0.0, f64::max);
        let bonus = 2.0 * (targets.len() as f64 + 1.0) * max.max(f64::MIN_POSITIVE);
        for row in &mut cost {
            for (c, r) in row.iter_mut().zip(required) {
                if *r {
                    *c -= bonus;
                }
            }
        }
    }
    let matched = hungarian(&cost, sources.len());
    Ok(Assignment::from_matching(sources, targets, matched, kind))
}

/// Exhaustive minimum over all injections. Test oracle, at most 8 targets.
pub fn brute_force_assign(sources: &TrapLayout, targets: &TrapLayout, kind: CostKind) -> Result<Assignment> {
    const LIMIT: usize = 8;
    let (s, t) = (sources.sites(), targets.sites());
    if t.len() > LIMIT {
        return Err(Error::Invalid(format!("brute force limited to {LIMIT} targets")));
    }
    if s.len() < t.len() {
        return Err(Error::Infeasible {
            sources: s.len(),
            targets: t.len(),
        });
    }
    fn search(
        row: usize,
        cost: &[Vec<f64>],
        used: &mut Vec<bool>,
        cur: &mut Vec<usize>,
        acc: f64,
        best: &mut (f64, Vec<usize>),
    ) {
        if row == cost.len() {
            if acc < best.0 {
                *best = (acc, cur.clone());
            }
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                search(row + 1, cost, used, cur, acc + cost[row][j], best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let cost: Vec<Vec<f64>> = t
        .iter()
        .map(|tt| s.iter().map(|ss| kind.eval(ss.pos(), tt.pos())).collect())
        .collect();
    let mut best = (f64::INFINITY, Vec::new());
    search(0, &cost, &mut vec![false; s.len()], &mut Vec::new(), 0.0, &mut best);
    Ok(Assignment::from_matching(s, t, best.1, kind))
}

/// One moving trap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapPath {
    pub source: usize,
    pub target: usize,
    pub layer: usize,
    pub intensity: f64,
    /// Positions for frames 0..=L in meters.
    pub waypoints: Vec<[f64; 3]>,
}

impl TrapPath {
    pub fn length(&self) -> f64 {
        distance(self.waypoints[0], *self.waypoints.last().unwrap())
    }
}

/// Per-frame trap positions for a whole rearrangement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    /// Number of transport steps L; there are L + 1 frames.
    pub frames: usize,
    pub max_step: f64,
    pub layer_z: Vec<f64>,
    pub traps: Vec<TrapPath>,
}

fn frame_count(d_max: f64, max_step: f64) -> usize {
    if d_max <= 0.0 {
        0
    } else {
        (d_max / max_step - FRAME_SLACK).ceil().max(1.0) as usize
    }
}

fn waypoints(from: [f64; 3], to: [f64; 3], steps: usize) -> Vec<[f64; 3]> {
    let mut out: Vec<[f64; 3]> = (0..steps)
        .map(|k| {
            let t = k as f64 / steps as f64;
            [0, 1, 2].map(|c| from[c] + (to[c] - from[c]) * t)
        })
        .collect();
    out.push(to);
    out
}

/// Straight-line plan with a shared frame count.
pub fn discretize(assignment: &Assignment, max_step: f64) -> Result<TransportPlan> {
    if !(max_step > 0.0) || !max_step.is_finite() {
        return Err(Error::Invalid(format!("max step must be positive, got {max_step}")));
    }
    let d_max = assignment.pairs.iter().map(Pair::length).fold(0.0, f64::max);
    let frames = frame_count(d_max, max_step);
    let traps = assignment
        .pairs
        .iter()
        .map(|p| TrapPath {
            source: p.source,
            target: p.target,
            layer: 0,
            intensity: 1.0,
            waypoints: waypoints(p.from, p.to, frames),
        })
        .collect();
    Ok(TransportPlan {
        frames,
        max_step,
        layer_z: vec![0.0],
        traps,
    })
}

/// Assign within each target layer, then discretize with one global frame count.
pub fn plan_task(instance: &TaskInstance, max_step: f64, kind: CostKind) -> Result<TransportPlan> {
    let src = instance.source.sites();
    let tgt = instance.target.sites();
    let mut pairs = Vec::with_capacity(tgt.len());
    let mut cost = 0.0;
    let mut unmatched = Vec::new();
    for layer in 0..instance.layer_count() {
        let s_idx: Vec<usize> = (0..src.len()).filter(|&i| instance.source_group[i] == layer).collect();
        let t_idx: Vec<usize> = (0..tgt.len()).filter(|&i| instance.target_layer[i] == layer).collect();
        let s_sites: Vec<TrapSite> = s_idx.iter().map(|&i| src[i]).collect();
        let t_sites: Vec<TrapSite> = t_idx.iter().map(|&i| tgt[i]).collect();
        let req: Vec<bool> = s_idx.iter().map(|&i| instance.required[i]).collect();
        let a = assign_with_required(&s_sites, &t_sites, &req, kind).map_err(|e| match e {
            Error::Infeasible { .. } => Error::Underfilled {
                layer,
                occupied: s_sites.len(),
                targets: t_sites.len(),
            },
            other => other,
        })?;
        cost += a.cost;
        unmatched.extend(a.unmatched.iter().map(|&k| s_idx[k]));
        pairs.extend(a.pairs.into_iter().map(|p| Pair {
            source: s_idx[p.source],
            target: t_idx[p.target],
            ..p
        }));
    }
    pairs.sort_by_key(|p| p.target);
    let merged = Assignment { pairs, unmatched, cost };
    let mut plan = discretize(&merged, max_step)?;
    for trap in &mut plan.traps {
        trap.layer = instance.target_layer[trap.target];
        trap.intensity = instance.target_intensities[trap.target];
    }
    plan.layer_z = instance.layer_z.clone();
    Ok(plan)
}

impl TransportPlan {
    pub fn trap_count(&self) -> usize {
        self.traps.len()
    }

    /// Number of frames including frame 0.
    pub fn frame_total(&self) -> usize {
        self.frames + 1
    }

    pub fn positions(&self, frame: usize) -> Vec<[f64; 3]> {
        self.traps.iter().map(|t| t.waypoints[frame]).collect()
    }

    /// Trap layout of one frame; site ids are trap indices.
    pub fn layout(&self, frame: usize) -> Result<TrapLayout> {
        if frame > self.frames {
            return Err(Error::Invalid(format!("frame {frame} beyond plan length {}", self.frames)));
        }
        TrapLayout::from_points(&self.positions(frame))
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.traps.iter().map(|t| t.intensity).collect()
    }

    pub fn layers(&self) -> Vec<usize> {
        self.traps.iter().map(|t| t.layer).collect()
    }

    pub fn displacement(&self) -> DisplacementStats {
        let lengths: Vec<f64> = self.traps.iter().map(TrapPath::length).collect();
        DisplacementStats::from_lengths(&lengths)
    }

    /// Largest displacement of any trap between consecutive frames.
    pub fn realized_max_step(&self) -> f64 {
        self.traps
            .iter()
            .flat_map(|t| t.waypoints.windows(2).map(|w| distance(w[0], w[1])))
            .fold(0.0, f64::max)
    }
}
