//! Expanding and merging ball construction with a queryable merge tree.
//!
//! Every live ball carries a fixed base radius `rho`, so that its radius at
//! time `t` is `c^t rho`. Two balls become tangent at the closed-form time
//! `log_c(d / (rho_i + rho_j))`; pair events sit in a heap with lazy deletion.
//! When balls touch they are replaced by one ball centred at the
//! radius-weighted centroid with radius equal to the sum of radii, which
//! contains both and satisfies the diameter bound with equality. A merge that
//! is a pure containment keeps the container.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::model::{DislocationMeasure, Domain};

/// Relative tolerance used to decide tangency.
const TOUCH_TOL: f64 = 1e-12;

/// Default cap on the number of merge nodes created by one run.
pub const DEFAULT_MAX_MERGES: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub id: usize,
    pub center: Vec2,
    pub radius: f64,
}

impl Ball {
    pub fn new(id: usize, center: Vec2, radius: f64) -> Self {
        Ball { id, center, radius }
    }

    pub fn contains_point(&self, p: Vec2, tol: f64) -> bool {
        (p - self.center).norm() <= self.radius * (1.0 + tol)
    }

    /// Closed containment of `other` in `self`, with relative slack.
    pub fn contains_ball(&self, other: &Ball, tol: f64) -> bool {
        (other.center - self.center).norm() + other.radius <= self.radius * (1.0 + tol)
    }

    pub fn touches(&self, other: &Ball) -> bool {
        (self.center - other.center).norm() <= (self.radius + other.radius) * (1.0 + TOUCH_TOL)
    }
}

/// Merge of two balls: containment keeps the container, otherwise the
/// radius-weighted centroid with radius `r_a + r_b`.
fn merge_pair(a: (Vec2, f64), b: (Vec2, f64)) -> (Vec2, f64) {
    let d = (a.0 - b.0).norm();
    if d + b.1 <= a.1 {
        return a;
    }
    if d + a.1 <= b.1 {
        return b;
    }
    let r = a.1 + b.1;
    ((a.0 * a.1 + b.0 * b.1) / r, r)
}

/// Iteratively merges overlapping closed balls, lowest index pair first.
/// Returns the merged geometry and, for every input, the output it went to.
fn merge_until_disjoint(balls: &[(Vec2, f64)]) -> (Vec<(Vec2, f64)>, Vec<usize>) {
    let mut geo: Vec<Option<(Vec2, f64)>> = balls.iter().map(|b| Some(*b)).collect();
    // owner[k] = current cluster slot of input k
    let mut owner: Vec<usize> = (0..balls.len()).collect();
    let touch = |a: &(Vec2, f64), b: &(Vec2, f64)| {
        (a.0 - b.0).norm() <= (a.1 + b.1) * (1.0 + TOUCH_TOL)
    };
    loop {
        let mut found = None;
        'scan: for i in 0..geo.len() {
            let Some(gi) = geo[i] else { continue };
            for j in i + 1..geo.len() {
                if let Some(gj) = geo[j] {
                    if touch(&gi, &gj) {
                        found = Some((i, j));
                        break 'scan;
                    }
                }
            }
        }
        let Some((i, j)) = found else { break };
        geo[i] = Some(merge_pair(geo[i].unwrap(), geo[j].unwrap()));
        geo[j] = None;
        for o in owner.iter_mut() {
            if *o == j {
                *o = i;
            }
        }
    }
    let mut slot = vec![usize::MAX; geo.len()];
    let mut out = Vec::new();
    for (k, g) in geo.iter().enumerate() {
        if let Some(g) = g {
            slot[k] = out.len();
            out.push(*g);
        }
    }
    (out, owner.into_iter().map(|o| slot[o]).collect())
}

/// Disjoint cover of the input balls; each output is a union of inputs with
/// diameter at most the sum of their diameters.
pub fn prepare_disjoint_cover(balls: &[Ball]) -> Result<Vec<Ball>> {
    Ok(prepare_with_assignment(balls)?.0)
}

/// As [`prepare_disjoint_cover`], also returning the output index that
/// absorbed each input.
pub fn prepare_with_assignment(balls: &[Ball]) -> Result<(Vec<Ball>, Vec<usize>)> {
    if balls.is_empty() {
        return Err(Error::pre("preparation needs at least one ball"));
    }
    if balls.iter().any(|b| !(b.radius > 0.0)) {
        return Err(Error::pre("ball radii must be positive"));
    }
    let geo: Vec<(Vec2, f64)> = balls.iter().map(|b| (b.center, b.radius)).collect();
    let (out, owner) = merge_until_disjoint(&geo);
    let balls = out.into_iter().enumerate().map(|(k, (c, r))| Ball::new(k, c, r)).collect();
    Ok((balls, owner))
}

/// Region whose boundary stops the construction on first contact.
#[derive(Clone, Debug)]
pub enum ContactRegion {
    Polygon(Domain),
    /// The disc `B_radius(center)`.
    Disc { center: Vec2, radius: f64 },
    /// Union of equal discs; the clearance used is the lower bound
    /// `max_k (radius - |p - x_k|)` of the true boundary distance.
    DiscUnion { centers: Vec<Vec2>, radius: f64 },
}

impl ContactRegion {
    /// Distance budget from `p` to the boundary, negative outside.
    pub fn clearance(&self, p: Vec2) -> f64 {
        match self {
            ContactRegion::Polygon(d) => {
                let dist = d.dist_to_boundary(p);
                if d.contains(p) {
                    dist
                } else {
                    -dist
                }
            }
            ContactRegion::Disc { center, radius } => radius - (p - center).norm(),
            ContactRegion::DiscUnion { centers, radius } => centers
                .iter()
                .map(|c| radius - (p - c).norm())
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Stopping rule; the construction stops at the first criterion that fires.
#[derive(Clone, Debug, Default)]
pub struct StopRule {
    pub max_time: Option<f64>,
    /// Stop once `sum_i R_i(t)` reaches this value.
    pub sum_radii: Option<f64>,
    /// Stop once some ball touches the region boundary.
    pub contact: Option<ContactRegion>,
    pub max_merges: Option<usize>,
}

impl StopRule {
    pub fn at_time(t: f64) -> Self {
        StopRule { max_time: Some(t), ..Default::default() }
    }

    pub fn at_sum_radii(s: f64) -> Self {
        StopRule { sum_radii: Some(s), ..Default::default() }
    }

    pub fn at_contact(region: ContactRegion) -> Self {
        StopRule { contact: Some(region), ..Default::default() }
    }

    pub fn or_time(mut self, t: f64) -> Self {
        self.max_time = Some(t);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxTime,
    SumRadii,
    BoundaryContact,
}

/// One node of the merge forest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub center: Vec2,
    /// Base radius: the radius at time `t` is `c^t rho`.
    pub rho: f64,
    pub birth: f64,
    /// Time at which the node was absorbed; infinite while alive at the stop.
    #[serde(with = "inf_serde")]
    pub death: f64,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Start,
    Merge,
    Sample,
}

/// A merge event: all new nodes created at one time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MergeEvent {
    pub time: f64,
    pub created: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallConstructionTrace {
    pub c: f64,
    pub nodes: Vec<Node>,
    pub n_start: usize,
    pub merges: Vec<MergeEvent>,
    pub stop_time: f64,
    pub stop_reason: StopReason,
}

#[derive(Clone, Copy, Debug)]
struct PairEvent {
    t: f64,
    i: usize,
    j: usize,
}

impl PartialEq for PairEvent {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for PairEvent {}
impl PartialOrd for PairEvent {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for PairEvent {
    // reversed so that BinaryHeap pops the earliest event
    fn cmp(&self, o: &Self) -> Ordering {
        o.t.total_cmp(&self.t).then(o.i.cmp(&self.i)).then(o.j.cmp(&self.j))
    }
}

fn tangency_time(ln_c: f64, a: &Node, b: &Node) -> f64 {
    let d = (a.center - b.center).norm();
    (d / (a.rho + b.rho)).ln() / ln_c
}

/// Runs the construction from pairwise disjoint starting balls.
pub fn run_construction(start: &[Ball], c: f64, stop: &StopRule) -> Result<BallConstructionTrace> {
    if !(c > 1.0) || !c.is_finite() {
        return Err(Error::pre("expansion factor must exceed 1"));
    }
    if start.is_empty() {
        return Err(Error::pre("construction needs at least one starting ball"));
    }
    if stop.max_time.is_none() && stop.sum_radii.is_none() && stop.contact.is_none() {
        return Err(Error::pre("stop rule has no criterion"));
    }
    for (k, b) in start.iter().enumerate() {
        if !(b.radius > 0.0) {
            return Err(Error::pre(format!("starting ball {k} has nonpositive radius")));
        }
    }
    for i in 0..start.len() {
        for j in i + 1..start.len() {
            let d = (start[i].center - start[j].center).norm();
            let s = start[i].radius + start[j].radius;
            if d < s * (1.0 - 1e-12) {
                return Err(Error::pre(format!("starting balls {i} and {j} overlap")));
            }
        }
    }
    let max_merges = stop.max_merges.unwrap_or(DEFAULT_MAX_MERGES);
    let ln_c = c.ln();
    let mut nodes: Vec<Node> = start
        .iter()
        .enumerate()
        .map(|(k, b)| Node {
            id: k,
            center: b.center,
            rho: b.radius,
            birth: 0.0,
            death: f64::INFINITY,
            children: Vec::new(),
            parent: None,
        })
        .collect();
    let mut alive: Vec<usize> = (0..nodes.len()).collect();
    let mut heap = BinaryHeap::new();
    for a in 0..nodes.len() {
        for b in a + 1..nodes.len() {
            heap.push(PairEvent { t: tangency_time(ln_c, &nodes[a], &nodes[b]).max(0.0), i: a, j: b });
        }
    }
    let mut merges = Vec::new();
    let mut now = 0.0f64;

    let stop_time_from = |nodes: &[Node], alive: &[usize], now: f64| -> (f64, StopReason) {
        let mut best = (f64::INFINITY, StopReason::MaxTime);
        if let Some(t) = stop.max_time {
            best = (t.max(now), StopReason::MaxTime);
        }
        if let Some(s) = stop.sum_radii {
            let sum_rho: f64 = alive.iter().map(|&k| nodes[k].rho).sum();
            let t = ((s / sum_rho).ln() / ln_c).max(now);
            if t < best.0 {
                best = (t, StopReason::SumRadii);
            }
        }
        if let Some(region) = &stop.contact {
            for &k in alive {
                let clear = region.clearance(nodes[k].center);
                let t = if clear <= 0.0 { now } else { ((clear / nodes[k].rho).ln() / ln_c).max(now) };
                if t < best.0 {
                    best = (t, StopReason::BoundaryContact);
                }
            }
        }
        best
    };

    let (stop_time, stop_reason) = loop {
        let (t_stop, reason) = stop_time_from(&nodes, &alive, now);
        // discard stale events
        while let Some(ev) = heap.peek() {
            if nodes[ev.i].death.is_finite() || nodes[ev.j].death.is_finite() {
                heap.pop();
            } else {
                break;
            }
        }
        let next = heap.peek().map(|e| e.t);
        match next {
            Some(t_ev) if t_ev <= t_stop => {
                now = t_ev.max(now);
                let tol = 1e-12 * now.abs().max(1.0);
                let mut seeds = Vec::new();
                while let Some(ev) = heap.peek() {
                    if ev.t > now + tol {
                        break;
                    }
                    let ev = heap.pop().unwrap();
                    if nodes[ev.i].death.is_infinite() && nodes[ev.j].death.is_infinite() {
                        seeds.push(ev.i);
                        seeds.push(ev.j);
                    }
                }
                if seeds.is_empty() {
                    continue;
                }
                let created = merge_event(&mut nodes, &mut alive, &seeds, now, c)?;
                if nodes.len() - start.len() > max_merges {
                    return Err(Error::Resource(format!("more than {max_merges} merges")));
                }
                for &n in &created {
                    for &o in &alive {
                        if o != n {
                            let (a, b) = if o < n { (o, n) } else { (n, o) };
                            let t = tangency_time(ln_c, &nodes[a], &nodes[b]).max(now);
                            heap.push(PairEvent { t, i: a, j: b });
                        }
                    }
                }
                if !created.is_empty() {
                    merges.push(MergeEvent { time: now, created });
                }
            }
            _ => {
                if !t_stop.is_finite() {
                    return Err(Error::pre("stop rule never fires"));
                }
                break (t_stop, reason);
            }
        }
    };

    Ok(BallConstructionTrace { c, nodes, n_start: start.len(), merges, stop_time, stop_reason })
}

/// Resolves all overlaps at time `now` that involve the seed balls, creating
/// one new node per merged cluster.
fn merge_event(
    nodes: &mut Vec<Node>,
    alive: &mut Vec<usize>,
    seeds: &[usize],
    now: f64,
    c: f64,
) -> Result<Vec<usize>> {
    let scale = c.powf(now);
    // working clusters: geometry at time `now` and member node ids
    struct Cluster {
        center: Vec2,
        radius: f64,
        members: Vec<usize>,
    }
    let mut clusters: Vec<Option<Cluster>> = alive
        .iter()
        .map(|&k| Some(Cluster { center: nodes[k].center, radius: nodes[k].rho * scale, members: vec![k] }))
        .collect();
    let slot_of: BTreeMap<usize, usize> = alive.iter().enumerate().map(|(s, &k)| (k, s)).collect();
    let mut dirty: std::collections::BTreeSet<usize> = seeds.iter().map(|k| slot_of[k]).collect();
    while let Some(s) = dirty.pop_first() {
        let Some(cs) = clusters[s].as_ref() else { continue };
        let (cc, cr) = (cs.center, cs.radius);
        let partner = clusters.iter().enumerate().position(|(o, other)| {
            o != s
                && other.as_ref().is_some_and(|x| {
                    (x.center - cc).norm() <= (x.radius + cr) * (1.0 + TOUCH_TOL)
                })
        });
        if let Some(o) = partner {
            let (lo, hi) = if s < o { (s, o) } else { (o, s) };
            let b = clusters[hi].take().unwrap();
            let a = clusters[lo].as_mut().unwrap();
            let (center, radius) = merge_pair((a.center, a.radius), (b.center, b.radius));
            a.center = center;
            a.radius = radius;
            a.members.extend(b.members);
            dirty.insert(lo);
        }
    }
    let mut created = Vec::new();
    let mut next_alive = Vec::with_capacity(alive.len());
    for cl in clusters.into_iter().flatten() {
        if cl.members.len() == 1 {
            next_alive.push(cl.members[0]);
            continue;
        }
        let id = nodes.len();
        let mut children = cl.members;
        children.sort_unstable();
        for &ch in &children {
            nodes[ch].death = now;
            nodes[ch].parent = Some(id);
        }
        nodes.push(Node {
            id,
            center: cl.center,
            rho: cl.radius / scale,
            birth: now,
            death: f64::INFINITY,
            children,
            parent: None,
        });
        next_alive.push(id);
        created.push(id);
    }
    if created.is_empty() {
        return Err(Error::Internal("merge event without overlapping balls".into()));
    }
    next_alive.sort_unstable();
    *alive = next_alive;
    Ok(created)
}

/// Labels used by the classifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BallClass {
    Few,
    Many,
    A1,
    A2,
    A3,
    Good,
    Bad,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassifiedBall {
    pub id: usize,
    pub class: BallClass,
    /// Number of time-zero parents.
    pub parents: usize,
    pub mass: Vec2,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub time: f64,
    pub balls: Vec<ClassifiedBall>,
    pub counts: BTreeMap<BallClass, usize>,
    /// Sum of `|mu(B)|` over the balls of each class.
    pub mass: BTreeMap<BallClass, f64>,
}

impl ClassificationReport {
    fn from_balls(time: f64, balls: Vec<ClassifiedBall>) -> Self {
        let mut counts = BTreeMap::new();
        let mut mass = BTreeMap::new();
        for b in &balls {
            *counts.entry(b.class).or_insert(0) += 1;
            *mass.entry(b.class).or_insert(0.0) += b.mass.norm();
        }
        ClassificationReport { time, balls, counts, mass }
    }

    pub fn count(&self, class: BallClass) -> usize {
        self.counts.get(&class).copied().unwrap_or(0)
    }

    pub fn ids(&self, class: BallClass) -> Vec<usize> {
        self.balls.iter().filter(|b| b.class == class).map(|b| b.id).collect()
    }

    pub fn class_of(&self, id: usize) -> Option<BallClass> {
        self.balls.iter().find(|b| b.id == id).map(|b| b.class)
    }
}

impl BallConstructionTrace {
    pub fn radius(&self, id: usize, t: f64) -> f64 {
        self.nodes[id].rho * self.c.powf(t)
    }

    pub fn ball(&self, id: usize, t: f64) -> Ball {
        Ball::new(id, self.nodes[id].center, self.radius(id, t))
    }

    pub fn is_alive(&self, id: usize, t: f64) -> bool {
        let n = &self.nodes[id];
        n.birth <= t && (t < n.death || (n.death.is_infinite() && t <= self.stop_time))
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t < 0.0 || t > self.stop_time * (1.0 + 1e-12) + 1e-12 || !t.is_finite() {
            return Err(Error::Query(format!("time {t} outside [0, {}]", self.stop_time)));
        }
        Ok(())
    }

    fn check_alive(&self, id: usize, t: f64) -> Result<()> {
        self.check_time(t)?;
        if id >= self.nodes.len() || !self.is_alive(id, t) {
            return Err(Error::Query(format!("ball {id} is not alive at time {t}")));
        }
        Ok(())
    }

    /// Ids of the family `I(t)`.
    pub fn alive_at(&self, t: f64) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&k| self.is_alive(k, t)).collect()
    }

    pub fn family(&self, t: f64) -> Vec<Ball> {
        self.alive_at(t).into_iter().map(|k| self.ball(k, t)).collect()
    }

    pub fn final_family(&self) -> Vec<Ball> {
        self.family(self.stop_time)
    }

    /// `P_i^t(s)`: the balls alive at time `s` contained in `B_i(t)`.
    pub fn parents(&self, id: usize, t: f64, s: f64) -> Result<Vec<usize>> {
        self.check_alive(id, t)?;
        self.check_time(s)?;
        if s > t {
            return Err(Error::Query(format!("parent time {s} exceeds {t}")));
        }
        Ok(self.parents_unchecked(id, s))
    }

    fn parents_unchecked(&self, id: usize, s: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(k) = stack.pop() {
            let n = &self.nodes[k];
            if n.birth <= s || n.is_leaf() {
                out.push(k);
            } else {
                stack.extend(n.children.iter().copied());
            }
        }
        out.sort_unstable();
        out
    }

    /// `F_i^t(s2)`: the unique ball alive at time `s2` containing `B_i(t)`.
    pub fn future(&self, id: usize, t: f64, s2: f64) -> Result<usize> {
        self.check_alive(id, t)?;
        self.check_time(s2)?;
        if s2 < t {
            return Err(Error::Query(format!("future time {s2} precedes {t}")));
        }
        let mut k = id;
        while let Some(p) = self.nodes[k].parent {
            if self.nodes[p].birth <= s2 {
                k = p;
            } else {
                break;
            }
        }
        Ok(k)
    }

    /// Starting balls below `id`.
    pub fn leaves(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(k) = stack.pop() {
            if self.nodes[k].is_leaf() {
                out.push(k);
            } else {
                stack.extend(self.nodes[k].children.iter().copied());
            }
        }
        out.sort_unstable();
        out
    }

    /// Birth times of merge nodes in the subtree of `id`.
    pub fn lineage_merge_times(&self, id: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(k) = stack.pop() {
            let n = &self.nodes[k];
            if !n.is_leaf() {
                out.push(n.birth);
                stack.extend(n.children.iter().copied());
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }

    /// Integers `0 <= n <= t - 1` such that no ball of `P_i^t(n)` merges in
    /// `(n, n + 1]`.
    pub fn quiet_steps(&self, id: usize, t: f64) -> Result<Vec<i64>> {
        self.check_alive(id, t)?;
        if t < 1.0 {
            return Err(Error::Query("quiet steps need t >= 1".into()));
        }
        Ok(self.quiet_steps_unchecked(id, t))
    }

    fn quiet_steps_unchecked(&self, id: usize, t: f64) -> Vec<i64> {
        let times = self.lineage_merge_times(id);
        let last = (t - 1.0).floor() as i64;
        (0..=last.max(-1))
            .filter(|&n| {
                let (a, b) = (n as f64, n as f64 + 1.0);
                !times.iter().any(|&m| m > a && m <= b)
            })
            .collect()
    }

    /// Assigns each atom to the starting ball containing it and returns the
    /// resulting masses per starting ball.
    pub fn leaf_masses(&self, mu: &DislocationMeasure) -> Vec<Vec2> {
        let mut mass = vec![Vec2::zeros(); self.n_start];
        for a in &mu.atoms {
            let mut best: Option<(usize, f64)> = None;
            for k in 0..self.n_start {
                let n = &self.nodes[k];
                let q = (a.x - n.center).norm() / n.rho;
                if q <= 1.0 + 1e-9 && best.is_none_or(|(_, bq)| q < bq) {
                    best = Some((k, q));
                }
            }
            if let Some((k, _)) = best {
                mass[k] += a.xi;
            }
        }
        mass
    }

    fn mass_below(&self, id: usize, leaf_mass: &[Vec2]) -> Vec2 {
        self.leaves(id).into_iter().fold(Vec2::zeros(), |s, k| s + leaf_mass[k])
    }

    /// Few/many split by the number of time-zero parents.
    pub fn classify_few_many(
        &self,
        mu: &DislocationMeasure,
        s: f64,
        threshold: f64,
    ) -> Result<ClassificationReport> {
        self.check_time(s)?;
        let lm = self.leaf_masses(mu);
        let balls = self
            .alive_at(s)
            .into_iter()
            .map(|id| {
                let parents = self.parents_unchecked(id, 0.0).len();
                let class = if parents as f64 <= threshold { BallClass::Few } else { BallClass::Many };
                ClassifiedBall { id, class, parents, mass: self.mass_below(id, &lm) }
            })
            .collect();
        Ok(ClassificationReport::from_balls(s, balls))
    }

    /// A1: some time-zero parent carries mass. A2/A3: all parents are null,
    /// with more than / at most `threshold` of them.
    pub fn classify_a123(
        &self,
        mu: &DislocationMeasure,
        s: f64,
        threshold: f64,
    ) -> Result<ClassificationReport> {
        self.check_time(s)?;
        let lm = self.leaf_masses(mu);
        let balls = self
            .alive_at(s)
            .into_iter()
            .map(|id| {
                let ps = self.parents_unchecked(id, 0.0);
                let charged = ps.iter().any(|&p| self.mass_below(p, &lm).norm() > 1e-9);
                let class = if charged {
                    BallClass::A1
                } else if ps.len() as f64 > threshold {
                    BallClass::A2
                } else {
                    BallClass::A3
                };
                ClassifiedBall { id, class, parents: ps.len(), mass: self.mass_below(id, &lm) }
            })
            .collect();
        Ok(ClassificationReport::from_balls(s, balls))
    }

    /// Good balls have more than `t_s - budget` quiet integer steps.
    pub fn classify_good_bad(
        &self,
        mu: &DislocationMeasure,
        t_s: f64,
        budget: f64,
    ) -> Result<ClassificationReport> {
        self.check_time(t_s)?;
        let lm = self.leaf_masses(mu);
        let balls = self
            .alive_at(t_s)
            .into_iter()
            .map(|id| {
                let quiet = if t_s >= 1.0 { self.quiet_steps_unchecked(id, t_s).len() } else { 0 };
                let class = if quiet as f64 > t_s - budget { BallClass::Good } else { BallClass::Bad };
                ClassifiedBall {
                    id,
                    class,
                    parents: self.parents_unchecked(id, 0.0).len(),
                    mass: self.mass_below(id, &lm),
                }
            })
            .collect();
        Ok(ClassificationReport::from_balls(t_s, balls))
    }

    /// Rows `(t, ball count, sum of radii, merge flag)` at the start, at every
    /// merge, at integer times and at the stop.
    pub fn timeline(&self) -> Vec<TimelineRow> {
        let mut times: Vec<(f64, EventKind)> = vec![(0.0, EventKind::Start)];
        times.extend(self.merges.iter().map(|m| (m.time, EventKind::Merge)));
        let mut n = 1.0;
        while n <= self.stop_time {
            times.push((n, EventKind::Sample));
            n += 1.0;
        }
        times.push((self.stop_time, EventKind::Sample));
        times.sort_by(|a, b| a.0.total_cmp(&b.0));
        times.dedup_by(|b, a| a.0 == b.0 && (a.1 == b.1 || b.1 == EventKind::Sample));
        times
            .into_iter()
            .map(|(t, kind)| {
                let fam = self.family(t);
                TimelineRow {
                    t,
                    count: fam.len(),
                    sum_radii: fam.iter().map(|b| b.radius).sum(),
                    kind,
                }
            })
            .collect()
    }

    /// Integer-time snapshots `0, 1, ..., floor(stop_time)`.
    pub fn integer_snapshots(&self) -> Vec<(f64, Vec<Ball>)> {
        let last = self.stop_time.floor() as usize;
        (0..=last).map(|n| (n as f64, self.family(n as f64))).collect()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TimelineRow {
    pub t: f64,
    pub count: usize,
    pub sum_radii: f64,
    pub kind: EventKind,
}

pub(crate) mod inf_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() { Some(*v) } else { None }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
