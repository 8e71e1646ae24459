//! Experiment configuration: a versioned TOML schema, validation with field
//! paths, and construction of the core objects.

use crate::CliError;
use ergolab_core::decomposition::DecompositionRule;
use ergolab_core::equilibrium::{rpf_solve, MarkovMeasure};
use ergolab_core::ldp::{ConstraintSet, LinearConstraint, Relation};
use ergolab_core::potentials::Potential;
use ergolab_core::suspension::{parse_rational, RoofFunction, SuspensionFlow, Q};
use ergolab_core::symbolic::{parse_word, word_string, DEFAULT_BUDGET};
use ergolab_core::{DyadicScale, ShiftSystem};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

pub const SCHEMA_VERSION: u32 = 1;

/// A dyadic scale written as `"2^-m"`, `"1/2^m"`, `"1/8"` or `"0.25"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scale(pub DyadicScale);

impl<'de> Deserialize<'de> for Scale {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            S(String),
            F(f64),
        }
        let s = match Raw::deserialize(d)? {
            Raw::S(s) => s,
            Raw::F(f) => f.to_string(),
        };
        DyadicScale::parse(&s).map(Scale).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Scale {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

/// A real number, or `"ln(x)"` / `"log(x)"` for a natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            F(f64),
            I(i64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::F(f) => Ok(Real(f)),
            Raw::I(i) => Ok(Real(i as f64)),
            Raw::S(s) => parse_real(&s).map(Real).map_err(serde::de::Error::custom),
        }
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

fn parse_real(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let inner = t.strip_prefix("ln(").or_else(|| t.strip_prefix("log(")).and_then(|r| r.strip_suffix(')'));
    let v = match inner {
        Some(arg) => parse_plain(arg)?.ln(),
        None => parse_plain(t)?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s:?} is not a finite number"))
    }
}

fn parse_plain(s: &str) -> Result<f64, String> {
    if let Ok(q) = parse_rational(s) {
        return Ok(*q.numer() as f64 / *q.denom() as f64);
    }
    s.trim().parse().map_err(|_| format!("cannot read {s:?} as a number"))
}

/// An exact rational written as `"3/2"`, `"2"` or an integer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rat(pub Q);

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            I(i64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::I(i) => Ok(Rat(Q::from_integer(i))),
            Raw::S(s) => parse_rational(&s).map(Rat).map_err(serde::de::Error::custom),
        }
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Pressure,
    Certify,
    Gibbs,
    Entropy,
    FlowPressure,
    Ldp,
    Glue,
    Decompose,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pressure => "pressure",
            Self::Certify => "certify",
            Self::Gibbs => "gibbs",
            Self::Entropy => "entropy",
            Self::FlowPressure => "flow-pressure",
            Self::Ldp => "ldp",
            Self::Glue => "glue",
            Self::Decompose => "decompose",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemSpec {
    Full {
        alphabet: usize,
    },
    Sft {
        matrix: Vec<Vec<u8>>,
    },
    /// `d*` is `expansion`, or `expansion` repeated up to `depth` when `periodic`.
    Beta {
        expansion: Vec<u8>,
        #[serde(default)]
        periodic: bool,
        depth: Option<usize>,
    },
    SGap {
        gaps: BTreeSet<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    Constant {
        value: Real,
    },
    Symbols {
        values: Vec<Real>,
    },
    /// Locally constant table; with both Hölder fields the modulus is validated.
    Table {
        depth: usize,
        entries: BTreeMap<String, Real>,
        holder_constant: Option<f64>,
        holder_exponent: Option<f64>,
    },
    Dyadic {
        depth: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DecompositionSpec {
    Trivial,
    BetaSuffix,
    Table {
        /// Word -> `[p, g, s]`.
        entries: BTreeMap<String, [usize; 3]>,
        #[serde(default)]
        prefix: BTreeSet<String>,
        #[serde(default)]
        good: BTreeSet<String>,
        #[serde(default)]
        suffix: BTreeSet<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureSpec {
    /// Equilibrium state of the configured potential.
    Rpf,
    Bernoulli { probabilities: Vec<Real> },
    Markov { matrix: Vec<Vec<Real>> },
}

/// `m_δ` and `m_ε` with `δ = 2^-m_δ`, `ε = 2^-m_ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladder {
    pub m_delta: u32,
    pub m_eps: u32,
}

/// Scales derived from a valid ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedScales {
    pub delta: DyadicScale,
    pub eps: DyadicScale,
    /// `ρ = 8δ`, the dyadic choice in `(5δ, ε/8]`.
    pub rho: DyadicScale,
    /// `ρ' = ρ - δ = 7δ`.
    pub rho_prime: f64,
    pub gamma: DyadicScale,
}

impl Ladder {
    pub fn derive(&self) -> Result<DerivedScales, CliError> {
        if self.m_delta < self.m_eps + 6 {
            return Err(CliError::config(
                "ladder",
                format!("ε > 40δ needs m_delta >= m_eps + 6, got m_delta = {}, m_eps = {}", self.m_delta, self.m_eps),
            ));
        }
        let delta = DyadicScale::new(self.m_delta);
        let rho = DyadicScale::new(self.m_delta - 3);
        Ok(DerivedScales {
            delta,
            eps: DyadicScale::new(self.m_eps),
            rho,
            rho_prime: rho.value() - delta.value(),
            gamma: rho,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Cap on enumerated words per call.
    #[serde(default = "default_words")]
    pub words: u64,
}

fn default_n_max() -> usize {
    12
}

fn default_words() -> u64 {
    DEFAULT_BUDGET
}

impl Default for Budget {
    fn default() -> Self {
        Self { n_max: default_n_max(), words: default_words() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureSpec {
    pub delta: Scale,
    pub eps: Option<Scale>,
    /// `all`, `prefix`, `good`, `suffix` or `prefix-or-suffix` (the last four need a decomposition).
    #[serde(default = "default_collection")]
    pub collection: String,
    /// When set, the estimate must match the transfer-matrix oracle within this tolerance.
    pub tolerance: Option<f64>,
}

fn default_collection() -> String {
    "all".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsSpec {
    pub rho: Scale,
    pub n_min: usize,
    pub n_max: usize,
    /// When set, both ratios must lie within this distance of 1.
    pub unit_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropySpec {
    pub eps: Scale,
    pub n_max: usize,
    /// Cylinder partition window `[lo, hi]`.
    #[serde(default)]
    pub partition: [i64; 2],
    /// Largest `n` for the Hamming and binomial checks (0 skips them).
    #[serde(default)]
    pub counting_n: usize,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
}

fn default_betas() -> Vec<f64> {
    vec![0.1, 0.25]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    /// Roof value on each base symbol.
    pub roof: Vec<Rat>,
    pub delta: Scale,
    pub times: Vec<Rat>,
    /// Ball-identity sampling.
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_ball_n")]
    pub ball_n: usize,
    pub ball_t: Rat,
    /// Measure for the Abramov check; defaults to uniform Bernoulli.
    pub abramov_probabilities: Option<Vec<Real>>,
    /// When set, the last ratio estimate must be within this distance of the root oracle.
    pub tolerance: Option<f64>,
}

fn default_pairs() -> usize {
    200
}

fn default_ball_n() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub coeffs: BTreeMap<String, Real>,
    pub relation: Relation,
    pub rhs: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpSpec {
    pub ns: Vec<usize>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Upper-energy check scale and range.
    pub gamma: Option<Scale>,
    #[serde(default = "default_uef_n")]
    pub uef_n_max: usize,
}

fn default_samples() -> usize {
    20000
}

fn default_uef_n() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlueSpec {
    pub delta: Scale,
    /// Largest tuple size.
    pub k_max: usize,
    /// Largest segment length.
    pub n_max: usize,
    pub connector_max: usize,
    /// Optional explicit segments glued in order.
    #[serde(default)]
    pub segments: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeSpec {
    #[serde(default)]
    pub words: Vec<String>,
    /// Count `P`/`G`/`S` lengths over all admissible words up to this length.
    pub n_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Free text; not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub budget: Budget,
    pub system: Option<SystemSpec>,
    pub potential: Option<PotentialSpec>,
    pub decomposition: Option<DecompositionSpec>,
    pub ladder: Option<Ladder>,
    pub measure: Option<MeasureSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraint: Vec<ConstraintSpec>,
    pub pressure: Option<PressureSpec>,
    pub gibbs: Option<GibbsSpec>,
    pub entropy: Option<EntropySpec>,
    pub flow: Option<FlowSpec>,
    pub ldp: Option<LdpSpec>,
    pub glue: Option<GlueSpec>,
    pub decompose: Option<DecomposeSpec>,
}

/// Read a TOML document into a table.
pub fn read_table(path: &Path) -> Result<toml::Table, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(&path.display().to_string(), e.to_string()))?;
    parse_table(&text, &path.display().to_string())
}

pub fn parse_table(text: &str, origin: &str) -> Result<toml::Table, CliError> {
    text.parse::<toml::Table>().map_err(|e| CliError::config(origin, e.to_string()))
}

/// Insert `section` into `base`, either the file's `[key]` table or the whole file.
pub fn merge_section(base: &mut toml::Table, key: &str, section: toml::Table) {
    let value = match section.get(key) {
        Some(v) if section.len() == 1 => v.clone(),
        _ => toml::Value::Table(section),
    };
    base.insert(key.to_string(), value);
}

impl ExperimentConfig {
    pub fn from_table(table: toml::Table) -> Result<Self, CliError> {
        let cfg: Self = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(if path == "." { "config" } else { &path }, e.into_inner().to_string())
        })?;
        if cfg.version != SCHEMA_VERSION {
            return Err(CliError::config("version", format!("unsupported schema version {}, expected {SCHEMA_VERSION}", cfg.version)));
        }
        Ok(cfg)
    }

    pub fn from_str(text: &str) -> Result<Self, CliError> {
        Self::from_table(parse_table(text, "config")?)
    }

    /// SHA-256 of the canonical JSON form; descriptions do not count.
    pub fn hash(&self) -> String {
        let canonical = Self { description: None, ..self.clone() };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Budget precedence: explicit override, then `ERGOLAB_BUDGET`, then the config.
    pub fn apply_budget_override(&mut self, flag: Option<u64>) -> Result<(), CliError> {
        if let Some(b) = flag {
            self.budget.words = b;
        } else if let Ok(v) = std::env::var("ERGOLAB_BUDGET") {
            self.budget.words =
                v.trim().parse().map_err(|_| CliError::config("ERGOLAB_BUDGET", format!("not an integer: {v:?}")))?;
        }
        Ok(())
    }

    pub fn system(&self) -> Result<ShiftSystem, CliError> {
        let spec = self.system.as_ref().ok_or_else(|| CliError::missing("system"))?;
        let sys = match spec {
            SystemSpec::Full { alphabet } => ShiftSystem::full(*alphabet),
            SystemSpec::Sft { matrix } => ShiftSystem::sft(matrix.clone()),
            SystemSpec::Beta { expansion, periodic, depth } => {
                if expansion.is_empty() {
                    return Err(CliError::config("system.expansion", "empty expansion"));
                }
                let digits = match (periodic, depth) {
                    (true, Some(d)) => expansion.iter().copied().cycle().take(*d).collect(),
                    (true, None) => return Err(CliError::config("system.depth", "a periodic expansion needs a depth")),
                    (false, Some(d)) if *d != expansion.len() => {
                        return Err(CliError::config("system.depth", "depth must equal the expansion length"))
                    }
                    _ => expansion.clone(),
                };
                ShiftSystem::beta(digits)
            }
            SystemSpec::SGap { gaps } => ShiftSystem::s_gap(gaps.iter().copied()),
        };
        sys.map(|s| s.with_budget(self.budget.words)).map_err(|e| CliError::config("system", e.to_string()))
    }

    pub fn potential(&self, sys: &ShiftSystem) -> Result<Potential, CliError> {
        let Some(spec) = &self.potential else {
            return Ok(Potential::zero(sys));
        };
        let bad = |e: ergolab_core::Error| CliError::config("potential", e.to_string());
        match spec {
            PotentialSpec::Zero => Ok(Potential::zero(sys)),
            PotentialSpec::Constant { value } => Ok(Potential::constant(sys, value.0)),
            PotentialSpec::Symbols { values } => {
                Potential::symbol_weights(sys, &values.iter().map(|v| v.0).collect::<Vec<_>>()).map_err(bad)
            }
            PotentialSpec::Table { depth, entries, holder_constant, holder_exponent } => {
                let mut table = HashMap::new();
                for (k, v) in entries {
                    let w = parse_word(k).map_err(|e| CliError::config(&format!("potential.entries.{k}"), e.to_string()))?;
                    table.insert(w, v.0);
                }
                match (holder_constant, holder_exponent) {
                    (Some(c), Some(a)) => {
                        let plain = Potential::from_table(sys, *depth, &table).map_err(bad)?;
                        Potential::holder(sys, *depth, |w| plain.value(w), *c, *a).map_err(bad)
                    }
                    (None, None) => Potential::from_table(sys, *depth, &table).map_err(bad),
                    _ => Err(CliError::config("potential", "give both holder_constant and holder_exponent, or neither")),
                }
            }
            PotentialSpec::Dyadic { depth } => Potential::dyadic_digits(sys, *depth).map_err(bad),
        }
    }

    pub fn decomposition(&self, sys: &ShiftSystem) -> Result<Arc<DecompositionRule>, CliError> {
        let spec = self.decomposition.as_ref().ok_or_else(|| CliError::missing("decomposition"))?;
        let bad = |e: ergolab_core::Error| CliError::config("decomposition", e.to_string());
        let rule = match spec {
            DecompositionSpec::Trivial => DecompositionRule::Trivial,
            DecompositionSpec::BetaSuffix => DecompositionRule::beta_suffix(sys).map_err(bad)?,
            DecompositionSpec::Table { entries, prefix, good, suffix } => {
                let words = |set: &BTreeSet<String>, field: &str| -> Result<HashSet<Vec<u8>>, CliError> {
                    set.iter()
                        .map(|s| parse_word(s).map_err(|e| CliError::config(&format!("decomposition.{field}"), e.to_string())))
                        .collect()
                };
                let mut table = HashMap::new();
                for (k, &[p, g, s]) in entries {
                    let w = parse_word(k)
                        .map_err(|e| CliError::config(&format!("decomposition.entries.{k}"), e.to_string()))?;
                    table.insert(w, (p, g, s));
                }
                DecompositionRule::user_table(table, words(prefix, "prefix")?, words(good, "good")?, words(suffix, "suffix")?)
                    .map_err(bad)?
            }
        };
        Ok(Arc::new(rule))
    }

    pub fn measure(&self, sys: &ShiftSystem, phi: &Potential) -> Result<MarkovMeasure, CliError> {
        let bad = |e: ergolab_core::Error| CliError::config("measure", e.to_string());
        match self.measure.as_ref().unwrap_or(&MeasureSpec::Rpf) {
            MeasureSpec::Rpf => rpf_solve(sys, phi).map(|s| s.measure).map_err(bad),
            MeasureSpec::Bernoulli { probabilities } => {
                MarkovMeasure::bernoulli(&probabilities.iter().map(|p| p.0).collect::<Vec<_>>()).map_err(bad)
            }
            MeasureSpec::Markov { matrix } => {
                let m: Vec<Vec<f64>> = matrix.iter().map(|r| r.iter().map(|p| p.0).collect()).collect();
                MarkovMeasure::from_matrix(&m).map_err(bad)
            }
        }
    }

    pub fn constraints(&self) -> Result<ConstraintSet, CliError> {
        if self.constraint.is_empty() {
            return Err(CliError::missing("constraint"));
        }
        let mut constraints = Vec::new();
        for (i, c) in self.constraint.iter().enumerate() {
            let mut coeffs = BTreeMap::new();
            for (k, v) in &c.coeffs {
                let w = parse_word(k).map_err(|e| CliError::config(&format!("constraint[{i}].coeffs.{k}"), e.to_string()))?;
                coeffs.insert(w, v.0);
            }
            if coeffs.is_empty() {
                return Err(CliError::config(&format!("constraint[{i}].coeffs"), "no coefficients"));
            }
            constraints.push(LinearConstraint { coeffs, relation: c.relation, rhs: c.rhs.0 });
        }
        Ok(ConstraintSet { constraints })
    }

    pub fn flow(&self, sys: &ShiftSystem) -> Result<SuspensionFlow, CliError> {
        let spec = self.flow.as_ref().ok_or_else(|| CliError::missing("flow"))?;
        let roof: Vec<Q> = spec.roof.iter().map(|r| r.0).collect();
        if roof.len() != sys.k() {
            return Err(CliError::config(
                "flow.roof",
                format!("need one roof value per symbol ({}), got {}", sys.k(), roof.len()),
            ));
        }
        let roof = RoofFunction::symbols(&roof).map_err(|e| CliError::config("flow.roof", e.to_string()))?;
        let horizon = spec.times.iter().map(|t| t.0).chain([spec.ball_t.0]).max().unwrap_or(Q::from_integer(1));
        SuspensionFlow::new(sys.clone(), roof)
            .map(|f| f.with_horizon(horizon + Q::from_integer(2)))
            .map_err(|e| CliError::config("flow", e.to_string()))
    }

    /// Segment words from strings, checked for admissibility.
    pub fn words(sys: &ShiftSystem, field: &str, words: &[String]) -> Result<Vec<Vec<u8>>, CliError> {
        words
            .iter()
            .map(|s| {
                let w = parse_word(s).map_err(|e| CliError::config(field, e.to_string()))?;
                if !sys.is_admissible(&w) {
                    return Err(CliError::config(field, format!("{} is not admissible", word_string(&w))));
                }
                Ok(w)
            })
            .collect()
    }
}
