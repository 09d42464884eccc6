//! JSON inputs of the single-shot subcommands. Each mirrors a schema in
//! `docs/schemas/`.

use dislab::annulus::Discretization;
use dislab::ball::{Ball, StopRule};
use dislab::model::{BurgersLattice, DislocationMeasure, Domain, ElasticTensor};
use dislab::relax::QuadraticPsi;
use dislab::surgery::{DichotomyParams, Region, SurgeryParams};
use dislab::{Error, Result};
use serde::{Deserialize, Serialize};

fn default_tensor() -> ElasticTensor {
    ElasticTensor::isotropic(1.0, 1.0).expect("valid moduli")
}

fn default_c() -> f64 {
    1.1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiInput {
    pub xi: [f64; 2],
    /// Inner radius of `B_1 \ B_delta`; the renormalized limit when absent.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_tensor")]
    pub tensor: ElasticTensor,
    #[serde(default)]
    pub discretization: Discretization,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PsiOutput {
    pub xi: [f64; 2],
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta: Option<f64>,
    /// Fit error of the renormalized limit.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fit_error: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiInput {
    pub xi: [f64; 2],
    #[serde(default = "BurgersLattice::square")]
    pub lattice: BurgersLattice,
    #[serde(default = "default_tensor")]
    pub tensor: ElasticTensor,
    #[serde(default)]
    pub discretization: Discretization,
    #[serde(default)]
    pub generator_radius: Option<f64>,
    /// Explicit quadratic self-energy replacing the annulus solve.
    #[serde(default)]
    pub psi: Option<QuadraticPsi>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatInput {
    pub mu: DislocationMeasure,
    #[serde(default = "Domain::unit_square")]
    pub domain: Domain,
    pub h: f64,
    #[serde(default)]
    pub stencil: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopInput {
    #[serde(default)]
    pub time: Option<f64>,
    #[serde(default)]
    pub sum_radii: Option<f64>,
    #[serde(default)]
    pub contact: Option<Region>,
    #[serde(default)]
    pub max_merges: Option<usize>,
}

impl StopInput {
    pub fn rule(&self) -> StopRule {
        StopRule {
            max_time: self.time,
            sum_radii: self.sum_radii,
            contact: self.contact.as_ref().map(Region::contact),
            max_merges: self.max_merges,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallInput {
    /// Starting balls; overlapping ones are merged into a disjoint cover.
    #[serde(default)]
    pub balls: Option<Vec<Ball>>,
    /// Alternatively, cores of radius `eps` around the atoms of `mu`.
    #[serde(default)]
    pub mu: Option<DislocationMeasure>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default)]
    pub stop: StopInput,
    /// Frame of the SVG snapshot.
    #[serde(default = "Domain::unit_square")]
    pub domain: Domain,
}

impl BallInput {
    pub fn start(&self) -> Result<(Vec<Ball>, DislocationMeasure)> {
        match (&self.balls, &self.mu) {
            (Some(b), None) => Ok((b.clone(), DislocationMeasure::default())),
            (None, Some(mu)) => {
                let eps = self.eps.ok_or_else(|| Error::Schema {
                    key: "eps".into(),
                    msg: "required together with mu".into(),
                })?;
                let balls = mu.atoms.iter().enumerate().map(|(k, a)| Ball::new(k, a.x, eps)).collect();
                Ok((balls, mu.clone()))
            }
            _ => Err(Error::Schema { key: "balls".into(), msg: "give exactly one of balls and mu".into() }),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurgeryInput {
    pub mu: DislocationMeasure,
    pub params: SurgeryParams,
    pub region: Region,
    #[serde(default = "default_tensor")]
    pub tensor: ElasticTensor,
    #[serde(default)]
    pub dichotomy: Option<DichotomyParams>,
}
