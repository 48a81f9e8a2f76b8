//! Multimodal transit network: stops, directed line segments, lines and the
//! enumerated user paths between OD pairs.

mod paths;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use paths::{enumerate_paths, enumerate_paths_where, path_rank_cost};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub id: String,
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Regular,
    Emergency,
    Depot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmergencyRole {
    ShortTurn,
    Detour,
    Bridging,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: String,
    pub line: usize,
    pub from: String,
    pub to: String,
    pub run_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: String,
    pub mode: String,
    pub kind: LineKind,
    pub role: Option<EmergencyRole>,
    /// Regular line an emergency line is derived from.
    pub parent: Option<String>,
    pub stops: Vec<String>,
    /// Round-trip time in minutes; zero for depots.
    pub round_trip_time: f64,
    pub base_fleet: f64,
    pub max_fleet: f64,
    pub vehicle_capacity: f64,
}

impl Line {
    pub fn is_depot(&self) -> bool {
        self.kind == LineKind::Depot
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OdPair {
    pub origin: String,
    pub destination: String,
}

impl OdPair {
    pub fn new(origin: impl Into<String>, destination: impl Into<String>) -> Self {
        Self { origin: origin.into(), destination: destination.into() }
    }
}

impl std::fmt::Display for OdPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}->{}", self.origin, self.destination)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub id: String,
    pub od: usize,
    /// Segment indices in travel order.
    pub segments: Vec<usize>,
    /// Subset of `segments` where a vehicle is boarded.
    pub boardings: Vec<usize>,
    pub run_time: f64,
}

impl Path {
    /// `δ_{h,s}`.
    pub fn uses_segment(&self, s: usize) -> bool {
        self.segments.contains(&s)
    }

    /// Lines boarded, one entry per boarding segment.
    pub fn boarded_lines<'a>(&'a self, net: &'a TransitNetwork) -> impl Iterator<Item = usize> + 'a {
        self.boardings.iter().map(move |&s| net.segments[s].line)
    }

    /// `δ_{h,l}`.
    pub fn boards_line(&self, net: &TransitNetwork, line: usize) -> bool {
        self.boarded_lines(net).any(|l| l == line)
    }

    pub fn segment_ids<'a>(&'a self, net: &'a TransitNetwork) -> impl Iterator<Item = &'a str> + 'a {
        self.segments.iter().map(move |&s| net.segments[s].id.as_str())
    }
}

fn default_k() -> usize {
    6
}

fn default_transfer_penalty() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub run_time: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub id: String,
    pub mode: String,
    pub stops: Vec<String>,
    pub round_trip_time: f64,
    #[serde(default)]
    pub base_fleet: f64,
    pub max_fleet: f64,
    /// Overrides the mode's vehicle capacity.
    #[serde(default)]
    pub capacity: Option<f64>,
    /// Per-hop run times, applied in both directions.
    #[serde(default)]
    pub run_times: Option<Vec<f64>>,
    #[serde(default = "LineSpec::default_kind")]
    pub kind: LineKind,
    #[serde(default)]
    pub role: Option<EmergencyRole>,
    #[serde(default)]
    pub parent: Option<String>,
}

impl LineSpec {
    fn default_kind() -> LineKind {
        LineKind::Regular
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepotSpec {
    pub id: String,
    pub mode: String,
    pub fleet: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub stops: Vec<Stop>,
    pub modes: BTreeMap<String, ModeSpec>,
    pub lines: Vec<LineSpec>,
    #[serde(default)]
    pub depots: Vec<DepotSpec>,
    #[serde(default = "default_k")]
    pub paths_per_od: usize,
    /// Minutes added per boarding beyond the first when ranking paths.
    #[serde(default = "default_transfer_penalty")]
    pub transfer_penalty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitNetwork {
    pub stops: Vec<Stop>,
    pub modes: BTreeMap<String, ModeSpec>,
    pub lines: Vec<Line>,
    pub segments: Vec<Segment>,
    pub ods: Vec<OdPair>,
    /// `paths[w]` holds the ranked path set of OD `w`.
    pub paths: Vec<Vec<Path>>,
    pub paths_per_od: usize,
    pub transfer_penalty: f64,
}

impl TransitNetwork {
    pub fn line_index(&self, id: &str) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    pub fn segment_index(&self, id: &str) -> Option<usize> {
        self.segments.iter().position(|s| s.id == id)
    }

    pub fn stop_exists(&self, id: &str) -> bool {
        self.stops.iter().any(|s| s.id == id)
    }

    pub fn segments_of_line(&self, line: usize) -> impl Iterator<Item = usize> + '_ {
        self.segments.iter().enumerate().filter(move |(_, s)| s.line == line).map(|(i, _)| i)
    }

    pub fn all_paths(&self) -> impl Iterator<Item = &Path> {
        self.paths.iter().flatten()
    }
}

pub fn segment_id(line: &str, from: &str, to: &str) -> String {
    format!("{line}:{from}>{to}")
}

fn line_from_spec(spec: &LineSpec, modes: &BTreeMap<String, ModeSpec>) -> Result<Line> {
    let mode = modes
        .get(&spec.mode)
        .ok_or_else(|| Error::InvalidParameter(format!("line `{}` uses undeclared mode `{}`", spec.id, spec.mode)))?;
    if !(spec.round_trip_time > 0.0) {
        return Err(Error::NonPositiveTime(format!("round trip of line `{}`", spec.id)));
    }
    if !(spec.base_fleet >= 0.0 && spec.base_fleet <= spec.max_fleet) {
        return Err(Error::InvalidFleet(spec.id.clone(), "need 0 <= base_fleet <= max_fleet".into()));
    }
    if spec.kind == LineKind::Emergency && spec.base_fleet != 0.0 {
        return Err(Error::InvalidFleet(spec.id.clone(), "emergency lines start with no fleet".into()));
    }
    if spec.kind == LineKind::Depot {
        return Err(Error::InvalidParameter(format!("line `{}`: depots are declared separately", spec.id)));
    }
    if spec.stops.len() < 2 {
        return Err(Error::InvalidParameter(format!("line `{}` needs at least two stops", spec.id)));
    }
    let capacity = spec.capacity.unwrap_or(mode.capacity);
    if !(capacity > 0.0) {
        return Err(Error::InvalidParameter(format!("line `{}` has nonpositive capacity", spec.id)));
    }
    Ok(Line {
        id: spec.id.clone(),
        mode: spec.mode.clone(),
        kind: spec.kind,
        role: spec.role,
        parent: spec.parent.clone(),
        stops: spec.stops.clone(),
        round_trip_time: spec.round_trip_time,
        base_fleet: spec.base_fleet,
        max_fleet: spec.max_fleet,
        vehicle_capacity: capacity,
    })
}

fn push_line_segments(
    line_idx: usize,
    spec: &LineSpec,
    default_run: f64,
    stops: &HashSet<&str>,
    segments: &mut Vec<Segment>,
) -> Result<()> {
    for stop in &spec.stops {
        if !stops.contains(stop.as_str()) {
            return Err(Error::UnknownStop { line: spec.id.clone(), stop: stop.clone() });
        }
    }
    if let Some(rt) = &spec.run_times {
        if rt.len() + 1 != spec.stops.len() {
            return Err(Error::InvalidParameter(format!(
                "line `{}` lists {} run times for {} hops",
                spec.id,
                rt.len(),
                spec.stops.len() - 1
            )));
        }
    }
    for (hop, pair) in spec.stops.windows(2).enumerate() {
        let run = spec.run_times.as_ref().map_or(default_run, |rt| rt[hop]);
        if !(run > 0.0) {
            return Err(Error::NonPositiveTime(format!("segment {}-{} of line `{}`", pair[0], pair[1], spec.id)));
        }
        for (a, b) in [(&pair[0], &pair[1]), (&pair[1], &pair[0])] {
            let id = segment_id(&spec.id, a, b);
            if segments.iter().any(|s| s.id == id) {
                return Err(Error::DuplicateId(id));
            }
            segments.push(Segment { id, line: line_idx, from: a.clone(), to: b.clone(), run_time: run });
        }
    }
    Ok(())
}

/// Builds a network and enumerates `spec.paths_per_od` paths for each OD pair.
pub fn build_network(spec: &NetworkSpec, ods: &[OdPair]) -> Result<TransitNetwork> {
    let mut seen = HashSet::new();
    for stop in &spec.stops {
        if !seen.insert(stop.id.as_str()) {
            return Err(Error::DuplicateId(stop.id.clone()));
        }
    }
    for (name, mode) in &spec.modes {
        if !(mode.run_time > 0.0) {
            return Err(Error::NonPositiveTime(format!("default run time of mode `{name}`")));
        }
    }
    if spec.paths_per_od == 0 {
        return Err(Error::InvalidParameter("paths_per_od must be at least 1".into()));
    }
    let mut ids = HashSet::new();
    let mut lines = Vec::new();
    let mut segments = Vec::new();
    for ls in &spec.lines {
        if !ids.insert(ls.id.clone()) {
            return Err(Error::DuplicateId(ls.id.clone()));
        }
        let line = line_from_spec(ls, &spec.modes)?;
        push_line_segments(lines.len(), ls, spec.modes[&ls.mode].run_time, &seen, &mut segments)?;
        lines.push(line);
    }
    for d in &spec.depots {
        if !ids.insert(d.id.clone()) {
            return Err(Error::DuplicateId(d.id.clone()));
        }
        let mode = spec
            .modes
            .get(&d.mode)
            .ok_or_else(|| Error::InvalidParameter(format!("depot `{}` uses undeclared mode `{}`", d.id, d.mode)))?;
        if !(d.fleet >= 0.0) {
            return Err(Error::InvalidFleet(d.id.clone(), "negative depot fleet".into()));
        }
        lines.push(Line {
            id: d.id.clone(),
            mode: d.mode.clone(),
            kind: LineKind::Depot,
            role: None,
            parent: None,
            stops: Vec::new(),
            round_trip_time: 0.0,
            base_fleet: d.fleet,
            max_fleet: d.fleet,
            vehicle_capacity: mode.capacity,
        });
    }
    let mut net = TransitNetwork {
        stops: spec.stops.clone(),
        modes: spec.modes.clone(),
        lines,
        segments,
        ods: Vec::new(),
        paths: Vec::new(),
        paths_per_od: spec.paths_per_od,
        transfer_penalty: spec.transfer_penalty,
    };
    validate_parents(&net)?;
    net.ods = ods.to_vec();
    net.paths = enumerate_all(&net)?;
    Ok(net)
}

fn validate_parents(net: &TransitNetwork) -> Result<()> {
    for line in &net.lines {
        if let Some(p) = &line.parent {
            let parent = net.line_index(p).ok_or_else(|| Error::UnknownLine(p.clone()))?;
            if net.lines[parent].mode != line.mode {
                return Err(Error::CrossModeArc(p.clone(), line.id.clone()));
            }
        }
    }
    Ok(())
}

fn enumerate_all(net: &TransitNetwork) -> Result<Vec<Vec<Path>>> {
    let mut out = Vec::with_capacity(net.ods.len());
    for (w, od) in net.ods.iter().enumerate() {
        if od.origin == od.destination {
            return Err(Error::DegenerateOd(od.origin.clone()));
        }
        for stop in [&od.origin, &od.destination] {
            if !net.stop_exists(stop) {
                return Err(Error::UnknownStop { line: format!("OD {od}"), stop: stop.clone() });
            }
        }
        let mut paths = enumerate_paths(net, od, net.paths_per_od);
        // Keep the best paths that avoid emergency lines so the unrelocated
        // system always has somewhere to send its users.
        if net.lines.iter().any(|l| l.kind == LineKind::Emergency) {
            let regular = |s: usize| net.lines[net.segments[s].line].kind != LineKind::Emergency;
            for p in enumerate_paths_where(net, od, net.paths_per_od, regular) {
                if !paths.iter().any(|q| q.segments == p.segments) {
                    paths.push(p);
                }
            }
        }
        if paths.is_empty() {
            return Err(Error::Disconnected { origin: od.origin.clone(), destination: od.destination.clone() });
        }
        for (i, p) in paths.iter_mut().enumerate() {
            p.od = w;
            p.id = format!("{od}#{i}");
        }
        out.push(paths);
    }
    Ok(out)
}

/// Removes `broken` segments, adds `emergency` lines and re-enumerates paths.
/// The input network is left untouched.
pub fn apply_disruption(net: &TransitNetwork, broken: &[String], emergency: &[LineSpec]) -> Result<TransitNetwork> {
    let mut removed = HashSet::new();
    for id in broken {
        if net.segment_index(id).is_none() {
            return Err(Error::UnknownSegment(id.clone()));
        }
        removed.insert(id.as_str());
    }
    let mut out = net.clone();
    out.segments.retain(|s| !removed.contains(s.id.as_str()));
    let stops: HashSet<&str> = net.stops.iter().map(|s| s.id.as_str()).collect();
    for spec in emergency {
        if out.line_index(&spec.id).is_some() {
            return Err(Error::DuplicateId(spec.id.clone()));
        }
        let mut spec = spec.clone();
        spec.kind = LineKind::Emergency;
        let line = line_from_spec(&spec, &out.modes)?;
        let default_run = out.modes[&spec.mode].run_time;
        let idx = out.lines.len();
        push_line_segments(idx, &spec, default_run, &stops, &mut out.segments)?;
        out.lines.push(line);
    }
    validate_parents(&out)?;
    out.paths = enumerate_all(&out)?;
    Ok(out)
}

/// Average path cost in minutes: headway waits at each boarding plus run time.
pub fn path_cost(net: &TransitNetwork, path: &Path, fleet: &[f64], gamma: f64, epsilon: f64) -> Result<f64> {
    let mut wait = 0.0;
    for l in path.boarded_lines(net) {
        let y = fleet[l];
        if y < epsilon {
            return Err(Error::UnservedLine(net.lines[l].id.clone()));
        }
        wait += gamma * net.lines[l].round_trip_time / (2.0 * y);
    }
    Ok(wait + path.run_time)
}

/// Base fleets indexed like `net.lines`.
pub fn base_fleet(net: &TransitNetwork) -> Vec<f64> {
    net.lines.iter().map(|l| l.base_fleet).collect()
}

/// Map from segment id to index, for matching segments across networks.
pub fn segment_lookup(net: &TransitNetwork) -> HashMap<&str, usize> {
    net.segments.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect()
}
