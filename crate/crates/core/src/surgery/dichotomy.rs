//! The dichotomy for balls carrying a measure-valued curl: either the net
//! curl is small, or the balls of a construction that rarely merge carry
//! almost all of it.
//!
//! Two readings are reported. The stated one allows `|log eps|^delta` merging
//! steps per ball and a defect of `delta |curl(A)|`. The one established by
//! the argument allows `|log eps|^(1 - delta)` steps and a defect below
//! `delta |curl|(A)`.

use serde::{Deserialize, Serialize};

use super::{Region, SurgeryResult};
use crate::ball::{run_construction, Ball, StopRule};
use crate::error::{Error, Result};
use crate::geom::Vec2;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DichotomyParams {
    pub alpha: f64,
    pub gamma: f64,
    pub delta: f64,
    pub k_bound: f64,
    /// Boundary clearance factor `l` in `dist(B_i, dA) >= l eps^gamma`.
    pub l: f64,
    pub c: f64,
    pub eps: f64,
}

impl DichotomyParams {
    pub fn validate(&self) -> Result<()> {
        if !(1.0 > self.alpha && self.alpha > self.gamma && self.gamma > 0.0) {
            return Err(Error::pre("exponents must satisfy 1 > alpha > gamma > 0"));
        }
        if !(self.delta > 0.0 && self.delta < 0.2) {
            return Err(Error::pre("delta must lie in (0, 1/5)"));
        }
        if !(self.k_bound > 0.0 && self.l > 0.0) {
            return Err(Error::pre("K and l must be positive"));
        }
        if !(self.c > 1.0) {
            return Err(Error::pre("expansion factor must exceed 1"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::pre("eps must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GoodBall {
    pub id: usize,
    pub ball: Ball,
    pub mass: Vec2,
    /// Integer steps `n <= t_s - 1` with a merge among the parents in
    /// `(n, n + 1]`.
    pub merging_steps: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub t_s: f64,
    /// `ceil(((alpha - gamma) / 2) |log eps| / log c)`, the asymptotic lower
    /// bound on `t_s`.
    pub t_s_bound: f64,
    pub curl_mass: Vec2,
    pub curl_variation: f64,
    pub option1: bool,
    /// Balls at `t_s` with their merging-step counts.
    pub balls: Vec<GoodBall>,
    pub stated_budget: f64,
    pub stated_subset: Vec<usize>,
    pub stated_defect: f64,
    pub option2: bool,
    pub proof_budget: f64,
    pub proof_subset: Vec<usize>,
    pub proof_defect: f64,
    pub option2_proof: bool,
    /// `option1 || option2`.
    pub holds: bool,
    /// `option1 || option2_proof`.
    pub holds_proof: bool,
}

/// Subset of `eligible` whose total mass is closest to `target`:
/// exhaustive for up to 16 candidates, greedy otherwise.
fn best_subset(eligible: &[(usize, Vec2)], target: Vec2) -> (Vec<usize>, f64) {
    let n = eligible.len();
    if n <= 16 {
        let mut best = (0u32, target.norm());
        for mask in 1u32..(1u32 << n) {
            let s = (0..n)
                .filter(|k| mask & (1 << k) != 0)
                .fold(Vec2::zeros(), |s, k| s + eligible[k].1);
            let d = (s - target).norm();
            if d < best.1 - 1e-15 {
                best = (mask, d);
            }
        }
        let ids = (0..n).filter(|k| best.0 & (1 << k) != 0).map(|k| eligible[k].0).collect();
        return (ids, best.1);
    }
    let mut inc = vec![true; n];
    let total = |inc: &[bool]| {
        (0..n).filter(|&k| inc[k]).fold(Vec2::zeros(), |s, k| s + eligible[k].1)
    };
    let mut cur = (total(&inc) - target).norm();
    loop {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..n {
            inc[k] = !inc[k];
            let d = (total(&inc) - target).norm();
            inc[k] = !inc[k];
            if d < cur - 1e-15 && best.is_none_or(|b| d < b.1) {
                best = Some((k, d));
            }
        }
        match best {
            Some((k, d)) => {
                inc[k] = !inc[k];
                cur = d;
            }
            None => break,
        }
    }
    ((0..n).filter(|&k| inc[k]).map(|k| eligible[k].0).collect(), cur)
}

/// Checks the dichotomy for disjoint `balls` carrying curl masses `masses`.
/// `energy`, when given, is the measured `int_A C beta : beta`.
pub fn run_dichotomy(
    balls: &[Ball],
    masses: &[Vec2],
    energy: Option<f64>,
    region: &Region,
    params: &DichotomyParams,
) -> Result<DichotomyReport> {
    params.validate()?;
    if balls.len() != masses.len() {
        return Err(Error::pre("one curl mass per ball is required"));
    }
    let le = params.eps.ln().abs();
    let curl_mass = masses.iter().fold(Vec2::zeros(), |s, m| s + m);
    let curl_variation: f64 = masses.iter().map(|m| m.norm()).sum();
    let option1 = curl_mass.norm() <= le.powf(1.0 - params.delta);
    let stated_budget = le.powf(params.delta);
    let proof_budget = le.powf(1.0 - params.delta);
    let t_s_bound = (0.5 * (params.alpha - params.gamma) * le / params.c.ln()).ceil();
    if balls.is_empty() {
        return Ok(DichotomyReport {
            t_s: 0.0,
            t_s_bound,
            curl_mass,
            curl_variation,
            option1,
            balls: Vec::new(),
            stated_budget,
            stated_subset: Vec::new(),
            stated_defect: 0.0,
            option2: true,
            proof_budget,
            proof_subset: Vec::new(),
            proof_defect: 0.0,
            option2_proof: true,
            holds: true,
            holds_proof: true,
        });
    }
    let ea = params.eps.powf(params.alpha);
    let reach = params.l * params.eps.powf(params.gamma);
    for (k, b) in balls.iter().enumerate() {
        if 2.0 * b.radius > ea * (1.0 + 1e-12) {
            return Err(Error::pre(format!("ball {k} has diameter above eps^alpha")));
        }
        if !region.contains(b.center) || region.dist_to_boundary(b.center) - b.radius < reach {
            return Err(Error::pre(format!("ball {k} is closer than l eps^gamma to the boundary")));
        }
    }
    if balls.len() as f64 > params.k_bound * le {
        return Err(Error::pre("more than K |log eps| balls"));
    }
    if let Some(e) = energy {
        if e + curl_variation * curl_variation > params.k_bound * le * le {
            return Err(Error::pre("energy plus squared curl mass exceeds K |log eps|^2"));
        }
    }
    let trace = run_construction(balls, params.c, &StopRule::at_contact(region.contact()))?;
    let t_s = trace.stop_time;
    let steps = if t_s >= 1.0 { (t_s - 1.0).floor() as usize + 1 } else { 0 };
    let mut out = Vec::new();
    for id in trace.alive_at(t_s) {
        let quiet = if t_s >= 1.0 { trace.quiet_steps(id, t_s)?.len() } else { 0 };
        let mass = trace.leaves(id).into_iter().fold(Vec2::zeros(), |s, k| s + masses[k]);
        out.push(GoodBall { id, ball: trace.ball(id, t_s), mass, merging_steps: steps - quiet });
    }
    let stated: Vec<(usize, Vec2)> = out
        .iter()
        .filter(|b| b.merging_steps as f64 <= stated_budget)
        .map(|b| (b.id, b.mass))
        .collect();
    let (stated_subset, stated_defect) = best_subset(&stated, curl_mass);
    let option2 = stated_defect <= params.delta * curl_mass.norm();
    // the good family of the argument: more than t_s - budget quiet steps
    let good: Vec<&GoodBall> = out
        .iter()
        .filter(|b| (steps - b.merging_steps) as f64 > t_s - proof_budget)
        .collect();
    let proof_subset: Vec<usize> = good.iter().map(|b| b.id).collect();
    let proof_defect =
        (good.iter().fold(Vec2::zeros(), |s, b| s + b.mass) - curl_mass).norm();
    let option2_proof = proof_defect < params.delta * curl_variation;
    Ok(DichotomyReport {
        t_s,
        t_s_bound,
        curl_mass,
        curl_variation,
        option1,
        balls: out,
        stated_budget,
        stated_subset,
        stated_defect,
        option2,
        proof_budget,
        proof_subset,
        proof_defect,
        option2_proof,
        holds: option1 || option2,
        holds_proof: option1 || option2_proof,
    })
}

/// Runs the dichotomy on the output balls of the three-step surgery.
pub fn dichotomy_from_surgery(
    res: &SurgeryResult,
    region: &Region,
    params: &DichotomyParams,
) -> Result<DichotomyReport> {
    let masses: Vec<Vec2> = res.curl.iter().map(|c| c.xi).collect();
    let energy = 2.0 * res.diagnostics.energy.modified;
    run_dichotomy(&res.balls, &masses, Some(energy), region, params)
}
