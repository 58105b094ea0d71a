//! Model description documents: a JSON schema for every model family the
//! library ships, with canonicalization, content hashing, and builders onto
//! the core types.
//!
//! # Schema
//!
//! A model document is a JSON object whose `kind` field selects the family;
//! unknown fields are rejected. All rate and weight values must be finite
//! JSON numbers.
//!
//! ```json
//! { "kind": "explicit",
//!   "states": 2,                          // optional if "labels" is given
//!   "labels": ["left", "right"],          // optional
//!   "rates": [[0, 1, 2.0], [1, 0, 1.0]],  // (from, to, rate) triples
//!   "perturbation": { ... },              // optional, see below
//!   "truncation": 40 }                    // optional bookkeeping level
//!
//! { "kind": "torus",
//!   "dimension": 1, "side": 8,
//!   "rates": { "kind": "two-periodic", "even": [2.0, 1.0], "odd": [1.0, 3.0] },
//!   "perturbation": { ... } }             // optional
//!
//! { "kind": "birth-death",
//!   "truncation": 50,
//!   "birth": { "kind": "constant", "value": 1.0 },
//!   "death": { "kind": "affine", "intercept": 0.0, "slope": 2.0 },
//!   "perturbation": { ... } }             // optional
//!
//! { "kind": "confining",
//!   "dimension": 2, "radius": 10,
//!   "potential": { "kind": "monomial", "power": 2.0, "weights": [1.0, 1.0] },
//!   "perturbation": { ... } }             // optional
//! ```
//!
//! Torus rate tables come in three forms: `{"kind": "homogeneous", "up":
//! [..d..], "down": [..d..]}` (one rate pair per axis), `{"kind":
//! "two-periodic", "even": [up, down], "odd": [up, down]}` (1-D only, rates
//! alternating with site parity), and `{"kind": "conductance", "upper": 1.0,
//! "seed": 424242}` (symmetric edge conductances sampled i.i.d. uniformly on
//! `(0, upper]`).
//!
//! Birth-death rate laws: `{"kind": "constant", "value": c}` or `{"kind":
//! "affine", "intercept": a, "slope": b}` meaning `a + b k`.
//!
//! Confining potentials: `{"kind": "monomial", "power": p, "weights": [w_1,
//! .., w_d]}` meaning `V(x) = sum_j w_j |x_j|^p`.
//!
//! A perturbation document describes the exponent `g(t, x, y)` of a
//! multiplicative rate tilt `r e^{lambda g}`:
//!
//! ```json
//! { "kind": "decoupled",                  // g = tau(t) E(x, y)
//!   "profile": { "kind": "cosine", "amplitude": 1.0, "omega": 1.0 },
//!   "field": [[0, 1, 1.0]] }              // E as (from, to, value) triples
//!
//! { "kind": "general-table",              // per-edge profiles
//!   "entries": [[0, 1, { "kind": "constant", "value": 1.0 }]] }
//! ```
//!
//! Time profiles: `{"kind": "constant", "value": c}`, `{"kind": "cosine",
//! "amplitude": a, "omega": w}`, or `{"kind": "fourier", "period": T,
//! "coefficients": [[k, re, im], ...]}` (coefficients for `k >= 0`, extended
//! by conjugate symmetry; the `k = 0` coefficient must be real).
//!
//! Observable documents (used by the CLI to specify path functionals) are
//! `{"kind": "static", "values": [..n..]}` or `{"kind": "separable",
//! "profile": {...}, "values": [..n..]}`; functional documents wrap them as
//! `{"kind": "terminal", ...}`, `{"kind": "time-integral", ...}`, or
//! `{"kind": "jump-sum", <perturbation fields>}`.
//!
//! # Canonical form and hashing
//!
//! [`ModelDocument::canonicalize`] sorts all edge tables by `(from, to)`,
//! sorts Fourier coefficients by harmonic, and fills `states` in from
//! `labels` when absent; it is idempotent. [`ModelDocument::model_hash`] is
//! the SHA-256 of the compact JSON serialization of the canonical form, so
//! two documents hash equal iff they describe the same model byte-for-byte
//! in canonical coordinates.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::Arc;

use crate::error::Error;
use crate::kernel::RateMatrix;
use crate::mobility::TorusModel;
use crate::models::{bd_stationary, BirthDeathModel, ConfiningPotentialModel};
use crate::paths::{FunctionalSpec, Observable};
use crate::perturb::Perturbation;
use crate::profile::TimeProfile;
use crate::space::StateSpace;
use crate::stationary::StationaryChain;
use crate::{Result, C64};

/// A `(from, to, value)` edge entry, serialized as a three-element array.
pub type EdgeTriple = (usize, usize, f64);

/// Time profile `tau(t)` in document form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileDocument {
    Constant(ConstantProfileDoc),
    Cosine(CosineProfileDoc),
    Fourier(FourierProfileDoc),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantProfileDoc {
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineProfileDoc {
    pub amplitude: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierProfileDoc {
    pub period: f64,
    /// `(k, Re c_k, Im c_k)` for distinct harmonics `k >= 0`.
    pub coefficients: Vec<(u32, f64, f64)>,
}

impl ProfileDocument {
    fn canonicalize(&mut self) {
        if let Self::Fourier(doc) = self {
            doc.coefficients.sort_by_key(|&(k, _, _)| k);
        }
    }

    /// Materialize the profile, validating its parameters.
    pub fn build(&self) -> Result<TimeProfile> {
        match self {
            Self::Constant(doc) => {
                require_finite("profile.value", doc.value)?;
                Ok(TimeProfile::Constant(doc.value))
            }
            Self::Cosine(doc) => {
                require_finite("profile.amplitude", doc.amplitude)?;
                require_finite("profile.omega", doc.omega)?;
                Ok(TimeProfile::Cosine {
                    amplitude: doc.amplitude,
                    omega: doc.omega,
                })
            }
            Self::Fourier(doc) => {
                require_finite("profile.period", doc.period)?;
                let coefficients = doc
                    .coefficients
                    .iter()
                    .map(|&(k, re, im)| {
                        require_finite("profile coefficient (real part)", re)?;
                        require_finite("profile coefficient (imaginary part)", im)?;
                        Ok((k, C64::new(re, im)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                TimeProfile::fourier(doc.period, coefficients)
            }
        }
    }
}

/// Perturbation exponent `g(t, x, y)` in document form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PerturbationDocument {
    Decoupled(DecoupledPerturbationDoc),
    GeneralTable(GeneralTableDoc),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoupledPerturbationDoc {
    pub profile: ProfileDocument,
    /// Edge field `E(x, y)` as `(from, to, value)` triples.
    pub field: Vec<EdgeTriple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralTableDoc {
    /// Per-edge profiles as `(from, to, profile)` entries.
    pub entries: Vec<(usize, usize, ProfileDocument)>,
}

impl PerturbationDocument {
    fn canonicalize(&mut self) {
        match self {
            Self::Decoupled(doc) => {
                doc.profile.canonicalize();
                doc.field.sort_by_key(|&(x, y, _)| (x, y));
            }
            Self::GeneralTable(doc) => {
                for (_, _, p) in doc.entries.iter_mut() {
                    p.canonicalize();
                }
                doc.entries.sort_by_key(|e| (e.0, e.1));
            }
        }
    }

    /// Materialize over a state space of `n` states.
    pub fn build(&self, n: usize) -> Result<Perturbation> {
        match self {
            Self::Decoupled(doc) => {
                let profile = doc.profile.build()?;
                for &(_, _, v) in &doc.field {
                    require_finite("perturbation field value", v)?;
                }
                let field = crate::perturb::EdgeField::from_triples(n, &doc.field)?;
                Ok(Perturbation::Decoupled { profile, field })
            }
            Self::GeneralTable(doc) => {
                let items = doc
                    .entries
                    .iter()
                    .map(|(x, y, p)| Ok((*x, *y, p.build()?)))
                    .collect::<Result<Vec<_>>>()?;
                Perturbation::general_table(n, items)
            }
        }
    }
}

/// State observable `v(s, x)` in document form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObservableDocument {
    Static(StaticObservableDoc),
    Separable(SeparableObservableDoc),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticObservableDoc {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparableObservableDoc {
    pub profile: ProfileDocument,
    pub values: Vec<f64>,
}

impl ObservableDocument {
    /// Materialize over a state space of `n` states.
    pub fn build(&self, n: usize) -> Result<Observable> {
        let values = match self {
            Self::Static(doc) => &doc.values,
            Self::Separable(doc) => &doc.values,
        };
        if values.len() != n {
            return Err(Error::InvalidModel(format!(
                "observable tabulates {} states on a model with {n}",
                values.len()
            )));
        }
        for &v in values {
            require_finite("observable value", v)?;
        }
        match self {
            Self::Static(doc) => Ok(Observable::Static(doc.values.clone())),
            Self::Separable(doc) => Ok(Observable::Separable {
                profile: doc.profile.build()?,
                values: doc.values.clone(),
            }),
        }
    }
}

/// Path functional in document form, selecting among the three basic cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FunctionalDocument {
    /// `F = v(t, X_t)` at the horizon.
    Terminal(ObservableBody),
    /// `F = int_0^t v(s, X_s) ds`.
    TimeIntegral(ObservableBody),
    /// `F = sum_{jumps} alpha(s, X_{s-}, X_s)`; the weight reuses the
    /// perturbation schema.
    JumpSum(JumpSumBody),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableBody {
    pub observable: ObservableDocument,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSumBody {
    pub weight: PerturbationDocument,
}

impl FunctionalDocument {
    /// Materialize over a state space of `n` states.
    pub fn build(&self, n: usize) -> Result<FunctionalSpec> {
        match self {
            Self::Terminal(body) => Ok(FunctionalSpec::TerminalObservable(
                body.observable.build(n)?,
            )),
            Self::TimeIntegral(body) => {
                Ok(FunctionalSpec::TimeIntegral(body.observable.build(n)?))
            }
            Self::JumpSum(body) => Ok(FunctionalSpec::JumpSum(body.weight.build(n)?)),
        }
    }
}

/// Torus rate tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TorusRatesDocument {
    Homogeneous(HomogeneousRatesDoc),
    TwoPeriodic(TwoPeriodicRatesDoc),
    Conductance(ConductanceRatesDoc),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogeneousRatesDoc {
    /// Up-channel rate per axis.
    pub up: Vec<f64>,
    /// Down-channel rate per axis.
    pub down: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoPeriodicRatesDoc {
    /// `[up, down]` rates out of even sites.
    pub even: (f64, f64),
    /// `[up, down]` rates out of odd sites.
    pub odd: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConductanceRatesDoc {
    /// Conductances are sampled i.i.d. uniformly on `(0, upper]`.
    pub upper: f64,
    /// Sampling seed; part of the model identity.
    pub seed: u64,
}

/// Birth-death rate laws `k -> rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateLawDocument {
    Constant(ConstantProfileDoc),
    Affine(AffineRateDoc),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineRateDoc {
    pub intercept: f64,
    pub slope: f64,
}

impl RateLawDocument {
    /// The rate function, as a shareable closure.
    pub fn build(&self) -> Result<Arc<dyn Fn(usize) -> f64 + Send + Sync>> {
        match self {
            Self::Constant(doc) => {
                require_finite("rate law value", doc.value)?;
                let c = doc.value;
                Ok(Arc::new(move |_| c))
            }
            Self::Affine(doc) => {
                require_finite("rate law intercept", doc.intercept)?;
                require_finite("rate law slope", doc.slope)?;
                let (a, b) = (doc.intercept, doc.slope);
                Ok(Arc::new(move |k| a + b * k as f64))
            }
        }
    }
}

/// Confining potentials `V` on the integer lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialDocument {
    Monomial(MonomialPotentialDoc),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialPotentialDoc {
    /// `V(x) = sum_j weights[j] |x_j|^power`.
    pub power: f64,
    pub weights: Vec<f64>,
}

impl PotentialDocument {
    /// The potential function, as a shareable closure.
    pub fn build(&self, dimension: usize) -> Result<crate::models::PotentialFn> {
        match self {
            Self::Monomial(doc) => {
                require_finite("potential power", doc.power)?;
                if doc.power <= 0.0 {
                    return Err(Error::InvalidModel(
                        "potential power must be positive".into(),
                    ));
                }
                if doc.weights.len() != dimension {
                    return Err(Error::InvalidModel(format!(
                        "potential lists {} axis weights on a {dimension}-dimensional lattice",
                        doc.weights.len()
                    )));
                }
                for &w in &doc.weights {
                    require_finite("potential weight", w)?;
                    if w < 0.0 {
                        return Err(Error::InvalidModel(
                            "potential weights must be non-negative".into(),
                        ));
                    }
                }
                let power = doc.power;
                let weights = doc.weights.clone();
                Ok(Arc::new(move |x: &[i64]| {
                    x.iter()
                        .zip(&weights)
                        .map(|(&xi, &w)| w * (xi.abs() as f64).powf(power))
                        .sum()
                }))
            }
        }
    }
}

/// The top-level model description document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelDocument {
    Explicit(ExplicitDocument),
    Torus(TorusDocument),
    BirthDeath(BirthDeathDocument),
    Confining(ConfiningDocument),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitDocument {
    /// State count; filled in from `labels` at canonicalization if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<usize>,
    /// Optional display names, one per state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    /// Rate kernel as `(from, to, rate)` triples.
    pub rates: Vec<EdgeTriple>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationDocument>,
    /// Bookkeeping: the truncation level this finite model was cut at, if it
    /// stands in for a countable one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusDocument {
    pub dimension: usize,
    pub side: usize,
    pub rates: TorusRatesDocument,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BirthDeathDocument {
    /// Reflecting truncation level `K`; states are `{0, ..., K}`.
    pub truncation: usize,
    pub birth: RateLawDocument,
    pub death: RateLawDocument,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfiningDocument {
    pub dimension: usize,
    /// Reflecting box `{-R, ..., R}^d`.
    pub radius: usize,
    pub potential: PotentialDocument,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationDocument>,
}

impl ModelDocument {
    /// Parse a document from JSON, rejecting unknown fields.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidModel(format!("model document: {e}")))
    }

    /// Compact JSON of the canonical form (the hashing preimage).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.canonicalize()).expect("document serialization cannot fail")
    }

    /// Pretty-printed JSON of the canonical form.
    pub fn canonical_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.canonicalize())
            .expect("document serialization cannot fail")
    }

    /// The canonical form: edge tables sorted by `(from, to)`, Fourier
    /// coefficients sorted by harmonic, `states` filled in from `labels`.
    /// Idempotent.
    pub fn canonicalize(&self) -> Self {
        let mut doc = self.clone();
        match &mut doc {
            Self::Explicit(d) => {
                d.rates.sort_by_key(|&(x, y, _)| (x, y));
                if d.states.is_none() {
                    d.states = d.labels.as_ref().map(|l| l.len());
                }
                if let Some(p) = &mut d.perturbation {
                    p.canonicalize();
                }
            }
            Self::Torus(d) => {
                if let Some(p) = &mut d.perturbation {
                    p.canonicalize();
                }
            }
            Self::BirthDeath(d) => {
                if let Some(p) = &mut d.perturbation {
                    p.canonicalize();
                }
            }
            Self::Confining(d) => {
                if let Some(p) = &mut d.perturbation {
                    p.canonicalize();
                }
            }
        }
        doc
    }

    /// SHA-256 of the compact canonical JSON, as lowercase hex.
    pub fn model_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Number of states the built model will have, from the document fields
    /// alone (labels win over `states` for explicit documents).
    pub fn state_count(&self) -> Option<usize> {
        match self {
            Self::Explicit(d) => d.labels.as_ref().map(|l| l.len()).or(d.states),
            Self::Torus(d) => d.side.checked_pow(d.dimension as u32),
            Self::BirthDeath(d) => Some(d.truncation + 1),
            Self::Confining(d) => (2 * d.radius + 1).checked_pow(d.dimension as u32),
        }
    }

    /// The document's perturbation block, if any.
    pub fn perturbation(&self) -> Option<&PerturbationDocument> {
        match self {
            Self::Explicit(d) => d.perturbation.as_ref(),
            Self::Torus(d) => d.perturbation.as_ref(),
            Self::BirthDeath(d) => d.perturbation.as_ref(),
            Self::Confining(d) => d.perturbation.as_ref(),
        }
    }

    /// Materialize the model: validates all numeric fields, constructs the
    /// kernel, and solves (or derives in closed form) the stationary law.
    pub fn build(&self) -> Result<BuiltModel> {
        match self {
            Self::Explicit(d) => {
                let n = match (&d.labels, d.states) {
                    (Some(labels), Some(states)) => {
                        if labels.len() != states {
                            return Err(Error::InvalidModel(format!(
                                "states = {states} disagrees with {} labels",
                                labels.len()
                            )));
                        }
                        states
                    }
                    (Some(labels), None) => labels.len(),
                    (None, Some(states)) => states,
                    (None, None) => {
                        return Err(Error::InvalidModel(
                            "explicit model needs `states` or `labels`".into(),
                        ))
                    }
                };
                for &(_, _, r) in &d.rates {
                    require_finite("rate", r)?;
                }
                let mut triples = d.rates.clone();
                triples.sort_by_key(|&(x, y, _)| (x, y));
                let rates = RateMatrix::from_triples(StateSpace::of_size(n)?, &triples)?;
                let chain = StationaryChain::new(rates)?;
                Ok(BuiltModel::Explicit {
                    chain,
                    labels: d.labels.clone(),
                })
            }
            Self::Torus(d) => {
                let model = match &d.rates {
                    TorusRatesDocument::Homogeneous(r) => {
                        if r.up.len() != d.dimension || r.down.len() != d.dimension {
                            return Err(Error::InvalidModel(format!(
                                "homogeneous torus rates list {} up / {} down axes on a \
                                 {}-dimensional torus",
                                r.up.len(),
                                r.down.len(),
                                d.dimension
                            )));
                        }
                        for &v in r.up.iter().chain(&r.down) {
                            require_finite("torus rate", v)?;
                        }
                        TorusModel::homogeneous(d.dimension, d.side, &r.up, &r.down)?
                    }
                    TorusRatesDocument::TwoPeriodic(r) => {
                        if d.dimension != 1 {
                            return Err(Error::InvalidModel(
                                "two-periodic rates are defined on the 1-dimensional torus".into(),
                            ));
                        }
                        for v in [r.even.0, r.even.1, r.odd.0, r.odd.1] {
                            require_finite("torus rate", v)?;
                        }
                        TorusModel::two_periodic(d.side, r.even, r.odd)?
                    }
                    TorusRatesDocument::Conductance(r) => {
                        require_finite("conductance upper bound", r.upper)?;
                        TorusModel::conductances(d.dimension, d.side, r.upper, r.seed)?
                    }
                };
                Ok(BuiltModel::Torus(model))
            }
            Self::BirthDeath(d) => {
                let birth = d.birth.build()?;
                let death = d.death.build()?;
                let model = BirthDeathModel::new(
                    d.truncation,
                    move |k| birth(k),
                    move |k| death(k),
                )?;
                let rates = model.rate_matrix()?;
                // The stationary weights follow the birth/death ratio
                // recursion exactly (detailed balance), so inject them
                // instead of re-solving numerically.
                let pi = bd_stationary(&model).pi;
                let chain = StationaryChain::with_known_pi(rates, pi)?;
                Ok(BuiltModel::BirthDeath { model, chain })
            }
            Self::Confining(d) => {
                let v = d.potential.build(d.dimension)?;
                let model =
                    ConfiningPotentialModel::new(d.dimension, d.radius, move |x| v(x))?;
                Ok(BuiltModel::Confining(model))
            }
        }
    }
}

/// A materialized model document: the kernel, its stationary chain, and the
/// family-specific structure where one exists.
#[derive(Debug)]
pub enum BuiltModel {
    Explicit {
        chain: StationaryChain,
        labels: Option<Vec<String>>,
    },
    Torus(TorusModel),
    BirthDeath {
        model: BirthDeathModel,
        chain: StationaryChain,
    },
    Confining(ConfiningPotentialModel),
}

impl BuiltModel {
    /// The stationary chain (kernel + stationary law + time reversal).
    pub fn chain(&self) -> &StationaryChain {
        match self {
            Self::Explicit { chain, .. } => chain,
            Self::Torus(m) => m.chain(),
            Self::BirthDeath { chain, .. } => chain,
            Self::Confining(m) => m.chain(),
        }
    }

    /// The forward rate kernel.
    pub fn rates(&self) -> &RateMatrix {
        self.chain().rates()
    }

    /// Number of states.
    pub fn len(&self) -> usize {
        self.chain().len()
    }

    /// Whether the state space is empty (it never is for a built model).
    pub fn is_empty(&self) -> bool {
        self.chain().is_empty()
    }

    /// The torus structure, for mobility computations.
    pub fn torus(&self) -> Option<&TorusModel> {
        match self {
            Self::Torus(m) => Some(m),
            _ => None,
        }
    }

    /// The birth-death structure, for condition checks.
    pub fn birth_death(&self) -> Option<&BirthDeathModel> {
        match self {
            Self::BirthDeath { model, .. } => Some(model),
            _ => None,
        }
    }

    /// The confining-potential structure, for condition checks.
    pub fn confining(&self) -> Option<&ConfiningPotentialModel> {
        match self {
            Self::Confining(m) => Some(m),
            _ => None,
        }
    }

    /// Display name of a state: the declared label, lattice coordinates, or
    /// the plain index.
    pub fn label(&self, x: usize) -> String {
        match self {
            Self::Explicit { labels, .. } => labels
                .as_ref()
                .and_then(|l| l.get(x).cloned())
                .unwrap_or_else(|| x.to_string()),
            Self::Torus(m) => format_coords(&m.site_coords(x)),
            Self::BirthDeath { .. } => x.to_string(),
            Self::Confining(m) => {
                let c = m.site_coords(x);
                format_coords(&c)
            }
        }
    }
}

fn format_coords<T: std::fmt::Display>(coords: &[T]) -> String {
    let inner = coords
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    format!("({inner})")
}

fn require_finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{what} must be finite, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::{mobility, mobility_closed_form_two_periodic};
    use crate::models::bd_stationary;

    fn two_state_json() -> &'static str {
        r#"{
            "kind": "explicit",
            "labels": ["slow", "fast"],
            "rates": [[1, 0, 1.0], [0, 1, 2.0]],
            "perturbation": {
                "kind": "decoupled",
                "profile": { "kind": "constant", "value": 1.0 },
                "field": [[0, 1, 1.0]]
            }
        }"#
    }

    #[test]
    fn explicit_document_builds_the_declared_chain() {
        let doc = ModelDocument::from_json(two_state_json()).unwrap();
        let built = doc.build().unwrap();
        assert_eq!(built.len(), 2);
        assert_eq!(built.rates().rate(0, 1), 2.0);
        assert_eq!(built.rates().rate(1, 0), 1.0);
        let pi = built.chain().pi().as_slice();
        assert!((pi[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((pi[1] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(built.label(0), "slow");
        let g = doc.perturbation().unwrap().build(built.len()).unwrap();
        assert_eq!(g.eval(0.7, 0, 1), 1.0);
        assert_eq!(g.eval(0.7, 1, 0), 0.0);
    }

    #[test]
    fn canonicalization_sorts_fills_and_is_idempotent() {
        let doc = ModelDocument::from_json(two_state_json()).unwrap();
        let canonical = doc.canonicalize();
        match &canonical {
            ModelDocument::Explicit(d) => {
                assert_eq!(d.states, Some(2));
                assert_eq!(d.rates, vec![(0, 1, 2.0), (1, 0, 1.0)]);
            }
            _ => panic!("wrong kind"),
        }
        assert_eq!(canonical.canonicalize(), canonical);
        assert_eq!(
            canonical.canonical_json(),
            canonical.canonicalize().canonical_json()
        );
        let reparsed = ModelDocument::from_json(&canonical.canonical_json()).unwrap();
        assert_eq!(reparsed, canonical);
    }

    #[test]
    fn hash_ignores_formatting_but_sees_every_rate_change() {
        let doc = ModelDocument::from_json(two_state_json()).unwrap();
        let shuffled = ModelDocument::from_json(
            &two_state_json().replace("[[1, 0, 1.0], [0, 1, 2.0]]", "[[0,1,2.0],[1,0,1.0]]"),
        )
        .unwrap();
        assert_eq!(doc.model_hash(), shuffled.model_hash());
        let changed = ModelDocument::from_json(&two_state_json().replace("2.0", "2.5")).unwrap();
        assert_ne!(doc.model_hash(), changed.model_hash());
        assert_eq!(doc.model_hash().len(), 64);
        assert!(doc.model_hash().chars().all(|c| c.is_ascii_hexdigit()));
    }

    #[test]
    fn unknown_and_missing_fields_are_named_in_errors() {
        let err = ModelDocument::from_json(
            r#"{"kind": "explicit", "states": 2, "ratez": []}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("ratez"), "{err}");
        let err =
            ModelDocument::from_json(r#"{"kind": "explicit", "states": 2}"#).unwrap_err();
        assert!(err.to_string().contains("rates"), "{err}");
        let err = ModelDocument::from_json(r#"{"kind": "riddle"}"#).unwrap_err();
        assert!(err.to_string().contains("riddle"), "{err}");
    }

    #[test]
    fn torus_document_reproduces_the_two_periodic_benchmark() {
        let doc = ModelDocument::from_json(
            r#"{
                "kind": "torus",
                "dimension": 1,
                "side": 8,
                "rates": { "kind": "two-periodic", "even": [2.0, 1.0], "odd": [1.0, 3.0] }
            }"#,
        )
        .unwrap();
        let built = doc.build().unwrap();
        let model = built.torus().unwrap();
        let sigma = mobility(model, 1.0).unwrap().entries[0][0];
        let exact = mobility_closed_form_two_periodic((2.0, 1.0), (1.0, 3.0), 1.0);
        assert!((sigma - exact).norm() < 1e-10);
    }

    #[test]
    fn birth_death_document_uses_the_exact_stationary_weights() {
        let doc = ModelDocument::from_json(
            r#"{
                "kind": "birth-death",
                "truncation": 40,
                "birth": { "kind": "constant", "value": 1.0 },
                "death": { "kind": "affine", "intercept": 0.0, "slope": 2.0 }
            }"#,
        )
        .unwrap();
        let built = doc.build().unwrap();
        assert_eq!(built.len(), 41);
        let model = built.birth_death().unwrap();
        assert_eq!(model.death_rate(3), 6.0);
        let exact = bd_stationary(model);
        for (a, b) in built.chain().pi().as_slice().iter().zip(&exact.pi) {
            assert!((a - b).abs() <= 1e-15 * b.max(1e-300));
        }
    }

    #[test]
    fn confining_document_builds_the_gibbs_chain() {
        let doc = ModelDocument::from_json(
            r#"{
                "kind": "confining",
                "dimension": 2,
                "radius": 4,
                "potential": { "kind": "monomial", "power": 2.0, "weights": [1.0, 1.0] }
            }"#,
        )
        .unwrap();
        let built = doc.build().unwrap();
        let model = built.confining().unwrap();
        assert_eq!(built.len(), 81);
        assert_eq!(model.potential(&[1, -2]), 5.0);
        assert_eq!(built.label(model.site_index(&[0, 0]).unwrap()), "(0, 0)");
        // pi maximal at the origin, symmetric under sign flips.
        let pi = built.chain().pi().as_slice();
        let origin = model.site_index(&[0, 0]).unwrap();
        assert!(pi.iter().all(|&p| p <= pi[origin]));
        let a = pi[model.site_index(&[3, 1]).unwrap()];
        let b = pi[model.site_index(&[-3, -1]).unwrap()];
        assert!((a - b).abs() <= 1e-15 * a);
    }

    #[test]
    fn functional_documents_cover_the_three_cases() {
        let n = 2;
        let terminal = FunctionalDocument::Terminal(ObservableBody {
            observable: ObservableDocument::Static(StaticObservableDoc {
                values: vec![0.0, 1.0],
            }),
        });
        assert!(matches!(
            terminal.build(n).unwrap(),
            FunctionalSpec::TerminalObservable(_)
        ));
        let integral_json = r#"{
            "kind": "time-integral",
            "observable": {
                "kind": "separable",
                "profile": { "kind": "cosine", "amplitude": 1.0, "omega": 1.0 },
                "values": [0.0, 1.0]
            }
        }"#;
        let integral: FunctionalDocument = serde_json::from_str(integral_json).unwrap();
        assert!(matches!(
            integral.build(n).unwrap(),
            FunctionalSpec::TimeIntegral(_)
        ));
        let jump: FunctionalDocument = serde_json::from_str(
            r#"{
                "kind": "jump-sum",
                "weight": {
                    "kind": "general-table",
                    "entries": [[0, 1, { "kind": "constant", "value": 2.0 }]]
                }
            }"#,
        )
        .unwrap();
        match jump.build(n).unwrap() {
            FunctionalSpec::JumpSum(alpha) => assert_eq!(alpha.eval(0.3, 0, 1), 2.0),
            other => panic!("wrong functional: {other:?}"),
        }
        let wrong_len = FunctionalDocument::Terminal(ObservableBody {
            observable: ObservableDocument::Static(StaticObservableDoc {
                values: vec![0.0, 1.0, 2.0],
            }),
        });
        assert!(matches!(
            wrong_len.build(n),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn invalid_documents_are_rejected_with_reasons() {
        // Label/state disagreement.
        let doc = ModelDocument::from_json(
            r#"{"kind": "explicit", "states": 3, "labels": ["a", "b"], "rates": [[0,1,1.0],[1,0,1.0]]}"#,
        )
        .unwrap();
        assert!(matches!(doc.build(), Err(Error::InvalidModel(_))));
        // Neither labels nor states.
        let doc =
            ModelDocument::from_json(r#"{"kind": "explicit", "rates": [[0,1,1.0],[1,0,1.0]]}"#)
                .unwrap();
        assert!(matches!(doc.build(), Err(Error::InvalidModel(_))));
        // Two-periodic rates on a 2-D torus.
        let doc = ModelDocument::from_json(
            r#"{"kind": "torus", "dimension": 2, "side": 8,
                "rates": {"kind": "two-periodic", "even": [2.0, 1.0], "odd": [1.0, 3.0]}}"#,
        )
        .unwrap();
        assert!(matches!(doc.build(), Err(Error::InvalidModel(_))));
        // Axis-count mismatch.
        let doc = ModelDocument::from_json(
            r#"{"kind": "torus", "dimension": 2, "side": 8,
                "rates": {"kind": "homogeneous", "up": [2.0], "down": [1.0]}}"#,
        )
        .unwrap();
        assert!(matches!(doc.build(), Err(Error::InvalidModel(_))));
        // Potential weight count mismatch.
        let doc = ModelDocument::from_json(
            r#"{"kind": "confining", "dimension": 2, "radius": 3,
                "potential": {"kind": "monomial", "power": 2.0, "weights": [1.0]}}"#,
        )
        .unwrap();
        assert!(matches!(doc.build(), Err(Error::InvalidModel(_))));
        // Non-irreducible explicit kernel: 3 states, no way back to 0.
        let doc = ModelDocument::from_json(
            r#"{"kind": "explicit", "states": 3, "rates": [[0,1,1.0],[1,2,1.0],[2,1,1.0]]}"#,
        )
        .unwrap();
        assert!(matches!(doc.build(), Err(Error::NotIrreducible)));
    }

    #[test]
    fn state_counts_match_the_built_models() {
        let cases = [
            two_state_json().to_string(),
            r#"{"kind": "torus", "dimension": 2, "side": 4,
                "rates": {"kind": "conductance", "upper": 1.0, "seed": 7}}"#
                .to_string(),
            r#"{"kind": "birth-death", "truncation": 12,
                "birth": {"kind": "constant", "value": 1.0},
                "death": {"kind": "constant", "value": 2.0}}"#
                .to_string(),
            r#"{"kind": "confining", "dimension": 1, "radius": 5,
                "potential": {"kind": "monomial", "power": 2.0, "weights": [1.0]}}"#
                .to_string(),
        ];
        for json in &cases {
            let doc = ModelDocument::from_json(json).unwrap();
            let built = doc.build().unwrap();
            assert_eq!(doc.state_count(), Some(built.len()), "{json}");
        }
    }
}
