//! Stochastic chemical reaction networks: definition, text format, state
//! enumeration under a conservation law, mass-action propensities and the
//! built-in chromatin circuits.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::generator::{assemble_generator, PerturbedGenerator};

pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// One product term `coefficient · Π factors` of a rate constant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTerm {
    pub coefficient: f64,
    pub factors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reaction {
    pub reactants: Vec<u32>,
    pub products: Vec<u32>,
    /// Rate constant as a sum of parameter products (sums only arise from merging).
    pub terms: Vec<RateTerm>,
    /// Rate carries one factor of ε.
    pub eps: bool,
    /// Evaluated rate constant κ.
    pub kappa: f64,
}

impl Reaction {
    pub fn vector(&self) -> Vec<i64> {
        self.products
            .iter()
            .zip(&self.reactants)
            .map(|(&p, &r)| p as i64 - r as i64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conservation {
    pub m: Vec<i64>,
    pub total: i64,
    /// Species dropped from state labels (its count follows from the law).
    pub eliminate: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReactionNetwork {
    pub name: String,
    pub species: Vec<String>,
    pub reactions: Vec<Reaction>,
    pub parameters: BTreeMap<String, f64>,
    pub conservation: Option<Conservation>,
}

struct RawReaction {
    line: usize,
    lhs: String,
    rhs: String,
    rate: String,
}

/// Incremental construction shared by the text parser and the built-in models.
#[derive(Default)]
pub struct NetworkBuilder {
    name: String,
    species: Vec<String>,
    raw: Vec<RawReaction>,
    parameters: BTreeMap<String, f64>,
    conservation: Option<(Vec<i64>, i64, Option<String>, usize)>,
}

impl NetworkBuilder {
    pub fn new(name: &str) -> Self {
        NetworkBuilder { name: name.to_string(), ..Default::default() }
    }

    pub fn species(mut self, names: &[&str]) -> Self {
        self.species.extend(names.iter().map(|s| s.to_string()));
        self
    }

    /// `equation` is `"A + B -> 2 B"`, `rate` is e.g. `"kEA * Dtot * eps"`.
    pub fn reaction(mut self, equation: &str, rate: &str) -> Self {
        let (lhs, rhs) = equation.split_once("->").unwrap_or((equation, ""));
        self.raw.push(RawReaction { line: 0, lhs: lhs.into(), rhs: rhs.into(), rate: rate.into() });
        self
    }

    pub fn param(mut self, name: &str, value: f64) -> Self {
        self.parameters.insert(name.to_string(), value);
        self
    }

    pub fn conservation(mut self, m: &[i64], total: i64, eliminate: Option<&str>) -> Self {
        self.conservation = Some((m.to_vec(), total, eliminate.map(String::from), 0));
        self
    }

    pub fn build(self) -> Result<ReactionNetwork> {
        let mut index = HashMap::new();
        for (i, s) in self.species.iter().enumerate() {
            if !is_ident(s) {
                return Err(Error::InvalidNetwork(format!("bad species name '{s}'")));
            }
            if index.insert(s.as_str(), i).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate species '{s}'")));
            }
        }
        let d = self.species.len();
        if d == 0 {
            return Err(Error::InvalidNetwork("no species".into()));
        }
        let err = |line: usize, msg: String| -> Error {
            if line > 0 { Error::Parse { line, msg } } else { Error::InvalidNetwork(msg) }
        };

        // (reactants, products, eps) -> position in `reactions`
        let mut keyed: HashMap<(Vec<u32>, Vec<u32>, bool), usize> = HashMap::new();
        let mut reactions: Vec<Reaction> = Vec::new();
        for raw in &self.raw {
            let reactants = parse_complex(&raw.lhs, &index, d).map_err(|m| err(raw.line, m))?;
            let products = parse_complex(&raw.rhs, &index, d).map_err(|m| err(raw.line, m))?;
            if reactants == products {
                return Err(err(raw.line, "reactant and product complexes are identical".into()));
            }
            let terms = parse_rate(&raw.rate).map_err(|m| err(raw.line, m))?;
            for eps in [false, true] {
                let part: Vec<RateTerm> =
                    terms.iter().filter(|(_, e)| *e == eps).map(|(t, _)| t.clone()).collect();
                if part.is_empty() {
                    continue;
                }
                let key = (reactants.clone(), products.clone(), eps);
                match keyed.get(&key) {
                    Some(&k) => reactions[k].terms.extend(part),
                    None => {
                        keyed.insert(key, reactions.len());
                        reactions.push(Reaction {
                            reactants: reactants.clone(),
                            products: products.clone(),
                            terms: part,
                            eps,
                            kappa: 0.0,
                        });
                    }
                }
            }
        }
        for (name, v) in &self.parameters {
            if !is_ident(name) || name == "eps" {
                return Err(Error::InvalidNetwork(format!("bad parameter name '{name}'")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidNetwork(format!("parameter {name} is not finite")));
            }
        }
        for r in &mut reactions {
            r.kappa = evaluate_terms(&r.terms, &self.parameters)?;
            if r.kappa < 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "negative rate constant {} for reaction {}",
                    r.kappa,
                    format_equation(&self.species, r)
                )));
            }
        }
        for (i, s) in self.species.iter().enumerate() {
            if !reactions.iter().any(|r| r.reactants[i] > 0 || r.products[i] > 0) {
                return Err(Error::InvalidNetwork(format!("species '{s}' appears in no reaction")));
            }
        }
        let conservation = match self.conservation {
            None => None,
            Some((m, total, elim, line)) => {
                if m.len() != d {
                    return Err(err(line, format!("conservation vector has {} entries, expected {d}", m.len())));
                }
                if total < 0 {
                    return Err(err(line, "conservation total must be nonnegative".into()));
                }
                let eliminate = match elim {
                    None => None,
                    Some(name) => Some(
                        *index
                            .get(name.as_str())
                            .ok_or_else(|| err(line, format!("unknown species '{name}'")))?,
                    ),
                };
                Some(Conservation { m, total, eliminate })
            }
        };
        Ok(ReactionNetwork {
            name: self.name,
            species: self.species,
            reactions,
            parameters: self.parameters,
            conservation,
        })
    }
}

fn is_ident(s: &str) -> bool {
    let mut ch = s.chars();
    matches!(ch.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && ch.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
}

fn parse_complex(text: &str, index: &HashMap<&str, usize>, d: usize) -> std::result::Result<Vec<u32>, String> {
    let mut v = vec![0u32; d];
    let t = text.trim();
    if t.is_empty() {
        return Err("empty complex (use 0 for the empty complex)".into());
    }
    if t == "0" || t == "∅" {
        return Ok(v);
    }
    for part in t.split('+') {
        let p = part.trim();
        let digits: String = p.chars().take_while(|c| c.is_ascii_digit()).collect();
        let name = p[digits.len()..].trim();
        let coef: u32 = if digits.is_empty() {
            1
        } else {
            digits.parse().map_err(|_| format!("bad stoichiometric coefficient in '{p}'"))?
        };
        let &i = index.get(name).ok_or_else(|| format!("unknown species '{name}'"))?;
        v[i] += coef;
    }
    Ok(v)
}

/// Rate expression: terms separated by `+`, factors by `*`; a factor is a
/// number, a parameter name, or `eps` (at most once per term).
fn parse_rate(text: &str) -> std::result::Result<Vec<(RateTerm, bool)>, String> {
    let mut out = Vec::new();
    if text.trim().is_empty() {
        return Err("missing rate expression".into());
    }
    for term in text.split('+') {
        let mut coefficient = 1.0;
        let mut factors = Vec::new();
        let mut eps = false;
        for f in term.split('*') {
            let f = f.trim();
            if f.is_empty() {
                return Err(format!("empty factor in '{}'", text.trim()));
            }
            if f == "eps" || f == "ε" {
                if eps {
                    return Err("only linear perturbations are supported (eps appears twice)".into());
                }
                eps = true;
            } else if let Ok(x) = f.parse::<f64>() {
                coefficient *= x;
            } else if is_ident(f) {
                factors.push(f.to_string());
            } else {
                return Err(format!("bad factor '{f}'"));
            }
        }
        out.push((RateTerm { coefficient, factors }, eps));
    }
    Ok(out)
}

fn evaluate_terms(terms: &[RateTerm], params: &BTreeMap<String, f64>) -> Result<f64> {
    let mut total = 0.0;
    for t in terms {
        let mut v = t.coefficient;
        for f in &t.factors {
            v *= params
                .get(f)
                .ok_or_else(|| Error::InvalidNetwork(format!("undefined parameter '{f}'")))?;
        }
        total += v;
    }
    Ok(total)
}

fn format_complex(species: &[String], v: &[u32]) -> String {
    let parts: Vec<String> = v
        .iter()
        .zip(species)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, s)| if c == 1 { s.clone() } else { format!("{c} {s}") })
        .collect();
    if parts.is_empty() { "0".into() } else { parts.join(" + ") }
}

fn format_equation(species: &[String], r: &Reaction) -> String {
    format!("{} -> {}", format_complex(species, &r.reactants), format_complex(species, &r.products))
}

fn format_rate(r: &Reaction) -> String {
    let terms: Vec<String> = r
        .terms
        .iter()
        .map(|t| {
            let mut fs: Vec<String> = Vec::new();
            if t.coefficient != 1.0 || t.factors.is_empty() {
                fs.push(format!("{:?}", t.coefficient));
            }
            fs.extend(t.factors.iter().cloned());
            if r.eps {
                fs.push("eps".into());
            }
            fs.join(" * ")
        })
        .collect();
    terms.join(" + ")
}

/// Parse the line-oriented model document.
///
/// ```text
/// model one_species
/// species S
/// S -> 0 : k
/// k = 2.0
/// conservation m = 1, total = 3
/// ```
pub fn parse_network(text: &str) -> Result<ReactionNetwork> {
    let mut b = NetworkBuilder::default();
    let mut seen_params = std::collections::HashSet::new();
    for (no, raw_line) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse { line: line_no, msg };
        if let Some(rest) = line.strip_prefix("model") {
            if rest.starts_with(char::is_whitespace) || rest.is_empty() {
                b.name = rest.trim().to_string();
                continue;
            }
        }
        if let Some(rest) = line.strip_prefix("species") {
            if rest.starts_with(char::is_whitespace) || rest.starts_with(':') {
                let rest = rest.trim_start_matches(':');
                b.species.extend(
                    rest.split(|c: char| c == ',' || c.is_whitespace())
                        .filter(|s| !s.is_empty())
                        .map(String::from),
                );
                continue;
            }
        }
        if let Some(rest) = line.strip_prefix("conservation") {
            let rest = rest.trim().trim_start_matches(':');
            let mut m = None;
            let mut total = None;
            let mut elim = None;
            for field in rest.split(',') {
                let (k, v) = field.split_once('=').ok_or_else(|| perr(format!("bad conservation field '{}'", field.trim())))?;
                match k.trim() {
                    "m" => {
                        let parsed: std::result::Result<Vec<i64>, _> =
                            v.split_whitespace().map(|s| s.parse::<i64>()).collect();
                        m = Some(parsed.map_err(|_| perr("conservation vector must be integers".into()))?);
                    }
                    "total" => {
                        total = Some(v.trim().parse::<i64>().map_err(|_| perr("conservation total must be an integer".into()))?)
                    }
                    "eliminate" => elim = Some(v.trim().to_string()),
                    other => return Err(perr(format!("unknown conservation field '{other}'"))),
                }
            }
            let m = m.ok_or_else(|| perr("conservation needs m".into()))?;
            let total = total.ok_or_else(|| perr("conservation needs total".into()))?;
            b.conservation = Some((m, total, elim, line_no));
            continue;
        }
        if line.contains("->") {
            let (eq, rate) = line.split_once(':').ok_or_else(|| perr("reaction needs ': rate'".into()))?;
            let (lhs, rhs) = eq.split_once("->").unwrap();
            b.raw.push(RawReaction { line: line_no, lhs: lhs.into(), rhs: rhs.into(), rate: rate.into() });
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            let name = k.trim().to_string();
            let value: f64 = v.trim().parse().map_err(|_| perr(format!("bad value for parameter '{name}'")))?;
            if !seen_params.insert(name.clone()) {
                return Err(perr(format!("parameter '{name}' defined twice")));
            }
            if !is_ident(&name) {
                return Err(perr(format!("bad parameter name '{name}'")));
            }
            b.parameters.insert(name, value);
            continue;
        }
        return Err(perr(format!("unrecognized line '{line}'")));
    }
    b.build()
}

/// Alias kept for the operation name used throughout the docs.
pub fn define_network(text: &str) -> Result<ReactionNetwork> {
    parse_network(text)
}

/// Inverse of [`parse_network`]; reactions come out merged.
pub fn export_network(net: &ReactionNetwork) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model {}", net.name);
    let _ = writeln!(s, "species {}", net.species.join(", "));
    for r in &net.reactions {
        let _ = writeln!(s, "{} : {}", format_equation(&net.species, r), format_rate(r));
    }
    for (k, v) in &net.parameters {
        let _ = writeln!(s, "{k} = {v:?}");
    }
    if let Some(c) = &net.conservation {
        let m: Vec<String> = c.m.iter().map(|x| x.to_string()).collect();
        let _ = write!(s, "conservation m = {}, total = {}", m.join(" "), c.total);
        if let Some(e) = c.eliminate {
            let _ = write!(s, ", eliminate = {}", net.species[e]);
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone)]
pub struct StateSpace {
    pub species: Vec<String>,
    pub states: Vec<Vec<u32>>,
    index_of: HashMap<Vec<u32>, usize>,
    pub conservation: Option<Conservation>,
}

impl StateSpace {
    /// Build from an explicit list; states are kept in the given order.
    pub fn from_states(species: Vec<String>, states: Vec<Vec<u32>>, conservation: Option<Conservation>) -> Result<Self> {
        let d = species.len();
        let mut index_of = HashMap::with_capacity(states.len());
        for (i, s) in states.iter().enumerate() {
            if s.len() != d {
                return Err(Error::Dimension(format!("state {i} has {} entries, expected {d}", s.len())));
            }
            if let Some(c) = &conservation {
                let dot: i64 = c.m.iter().zip(s).map(|(&m, &x)| m * x as i64).sum();
                if dot != c.total {
                    return Err(Error::InvalidArgument(format!("state {s:?} violates the conservation law")));
                }
            }
            if index_of.insert(s.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate state {s:?}")));
            }
        }
        Ok(StateSpace { species, states, index_of, conservation })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.species.len()
    }

    pub fn index_of(&self, x: &[u32]) -> Option<usize> {
        self.index_of.get(x).copied()
    }

    fn eliminated(&self) -> Option<usize> {
        self.conservation.as_ref().and_then(|c| c.eliminate)
    }

    /// Coordinates of state `i` with the eliminated species dropped.
    pub fn label(&self, i: usize) -> Vec<i64> {
        let e = self.eliminated();
        self.states[i]
            .iter()
            .enumerate()
            .filter(|(k, _)| Some(*k) != e)
            .map(|(_, &x)| x as i64)
            .collect()
    }

    pub fn labels(&self) -> Vec<Vec<i64>> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    pub fn label_names(&self) -> Vec<String> {
        let e = self.eliminated();
        self.species
            .iter()
            .enumerate()
            .filter(|(k, _)| Some(*k) != e)
            .map(|(_, s)| s.clone())
            .collect()
    }
}

pub fn enumerate_states(net: &ReactionNetwork, conservation: &Conservation) -> Result<StateSpace> {
    enumerate_states_capped(net, conservation, DEFAULT_STATE_CAP)
}

/// All nonnegative integer vectors x with mᵀx = total, ordered
/// lexicographically by label.
pub fn enumerate_states_capped(net: &ReactionNetwork, c: &Conservation, cap: usize) -> Result<StateSpace> {
    let d = net.species.len();
    if c.m.len() != d {
        return Err(Error::Dimension(format!("conservation vector has {} entries, expected {d}", c.m.len())));
    }
    if c.m.iter().any(|&m| m <= 0) {
        return Err(Error::InvalidArgument("conservation weights must all be positive for a finite state space".into()));
    }
    if c.total < 0 {
        return Err(Error::InvalidArgument("conservation total must be nonnegative".into()));
    }
    let mut states = Vec::new();
    let mut cur = vec![0u32; d];
    fn rec(k: usize, rem: i64, m: &[i64], cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>, cap: usize) -> Result<()> {
        if k + 1 == m.len() {
            if rem % m[k] == 0 {
                cur[k] = (rem / m[k]) as u32;
                if out.len() >= cap {
                    return Err(Error::StateCapExceeded { cap });
                }
                out.push(cur.clone());
            }
            return Ok(());
        }
        for x in 0..=(rem / m[k]) {
            cur[k] = x as u32;
            rec(k + 1, rem - x * m[k], m, cur, out, cap)?;
        }
        Ok(())
    }
    rec(0, c.total, &c.m, &mut cur, &mut states, cap)?;
    let e = c.eliminate;
    let key = |s: &Vec<u32>| -> Vec<u32> {
        s.iter().enumerate().filter(|(k, _)| Some(*k) != e).map(|(_, &x)| x).collect()
    };
    states.sort_by_key(key);
    StateSpace::from_states(net.species.clone(), states, Some(c.clone()))
}

fn falling(x: u32, k: u32) -> f64 {
    (0..k).map(|i| x as f64 - i as f64).product::<f64>().max(0.0)
}

/// κ·Π (x_i)_{r_i} without the ε factor.
pub(crate) fn mass_action(r: &Reaction, x: &[u32]) -> f64 {
    let mut v = r.kappa;
    for (&xi, &ri) in x.iter().zip(&r.reactants) {
        if ri > 0 {
            if xi < ri {
                return 0.0;
            }
            v *= falling(xi, ri);
        }
    }
    v
}

/// Target state of reaction `r` from `x`, if it stays nonnegative.
pub(crate) fn fire(r: &Reaction, x: &[u32]) -> Option<Vec<u32>> {
    x.iter()
        .zip(r.reactants.iter().zip(&r.products))
        .map(|(&xi, (&a, &b))| {
            let y = xi as i64 - a as i64 + b as i64;
            (y >= 0).then_some(y as u32)
        })
        .collect()
}

/// Mass-action propensity of reaction `j` at `x`, times ε when the reaction
/// is ε-scaled; zero when the jump leaves the state space.
pub fn propensity(net: &ReactionNetwork, space: &StateSpace, j: usize, x: &[u32], eps: f64) -> f64 {
    let r = &net.reactions[j];
    match fire(r, x) {
        Some(y) if space.index_of(&y).is_some() => {
            let v = mass_action(r, x);
            if r.eps { v * eps } else { v }
        }
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ModelKind {
    OneD,
    TwoD,
    ThreeD,
    FourD,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::OneD => "1d",
            ModelKind::TwoD => "2d",
            ModelKind::ThreeD => "3d",
            ModelKind::FourD => "4d",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1d" => Ok(ModelKind::OneD),
            "2d" => Ok(ModelKind::TwoD),
            "3d" => Ok(ModelKind::ThreeD),
            "4d" => Ok(ModelKind::FourD),
            _ => Err(Error::InvalidArgument(format!("unsupported model kind '{s}' (expected 1d, 2d, 3d or 4d)"))),
        }
    }
}

/// Parameters of the chromatin circuits. Rate constants carrying a volume
/// factor are stored already divided by V.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChromatinParams {
    pub kind: ModelKind,
    pub dtot: u32,
    pub mu: f64,
    pub mu_prime: f64,
    pub b: f64,
    pub beta: f64,
    /// k_E^A/V
    pub k_ea: f64,
    /// k_M^A/V
    pub k_ma: f64,
    pub k_w0a: f64,
    pub k_wa: f64,
    pub k_w0r: f64,
    pub k_wr: f64,
    /// k_M^R/V
    pub k_mr: f64,
    pub k_w01: f64,
    pub k_w1: f64,
    pub k_w02: f64,
    pub k_w2: f64,
    /// k'_M/V
    pub k_mp: f64,
    /// k̄_M/V
    pub k_mbar: f64,
    /// k_M/V
    pub k_m: f64,
    /// Replace (x3−1)/2 by x3 in f_R121 and (x4−1)/2 by x4 in f_R122 (4D only).
    pub approx_4d: bool,
}

impl ChromatinParams {
    /// All rate constants and asymmetry factors default to 1.
    pub fn new(kind: ModelKind, dtot: u32) -> Self {
        ChromatinParams {
            kind,
            dtot,
            mu: 1.0,
            mu_prime: 1.0,
            b: 1.0,
            beta: 1.0,
            k_ea: 1.0,
            k_ma: 1.0,
            k_w0a: 1.0,
            k_wa: 1.0,
            k_w0r: 1.0,
            k_wr: 1.0,
            k_mr: 1.0,
            k_w01: 1.0,
            k_w1: 1.0,
            k_w02: 1.0,
            k_w2: 1.0,
            k_mp: 1.0,
            k_mbar: 1.0,
            k_m: 1.0,
            approx_4d: false,
        }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_mu_prime(mut self, mu_prime: f64) -> Self {
        self.mu_prime = mu_prime;
        self
    }

    pub fn with_b(mut self, b: f64) -> Self {
        self.b = b;
        self
    }

    const NAMES: [&'static str; 18] = [
        "mu", "mup", "b", "beta", "kEA", "kMA", "kW0A", "kWA", "kW0R", "kWR", "kMR", "kW01", "kW1", "kW02", "kW2",
        "kMp", "kMbar", "kM",
    ];

    fn slot(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "mu" => &mut self.mu,
            "mup" | "mu_prime" => &mut self.mu_prime,
            "b" => &mut self.b,
            "beta" => &mut self.beta,
            "kEA" => &mut self.k_ea,
            "kMA" => &mut self.k_ma,
            "kW0A" => &mut self.k_w0a,
            "kWA" => &mut self.k_wa,
            "kW0R" => &mut self.k_w0r,
            "kWR" => &mut self.k_wr,
            "kMR" => &mut self.k_mr,
            "kW01" => &mut self.k_w01,
            "kW1" => &mut self.k_w1,
            "kW02" => &mut self.k_w02,
            "kW2" => &mut self.k_w2,
            "kMp" => &mut self.k_mp,
            "kMbar" => &mut self.k_mbar,
            "kM" => &mut self.k_m,
            _ => return None,
        })
    }

    /// Set a parameter by the name used in model documents.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let s = self
            .slot(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown chromatin parameter '{name}'")))?;
        *s = value;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.clone().slot(name).map(|v| *v)
    }

    fn used(&self) -> &'static [&'static str] {
        match self.kind {
            ModelKind::OneD => &["mu", "b", "kEA"],
            ModelKind::TwoD => &["mu", "b", "kEA", "kMA", "kW0A", "kWA", "kW0R", "kWR", "kMR"],
            ModelKind::ThreeD => &[
                "mu", "mup", "b", "beta", "kEA", "kMA", "kW0A", "kWA", "kW01", "kW1", "kW02", "kMp", "kMbar", "kM",
            ],
            ModelKind::FourD => &[
                "mu", "mup", "b", "beta", "kEA", "kMA", "kW0A", "kWA", "kW01", "kW1", "kW02", "kW2", "kMp", "kMbar",
                "kM",
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dtot < 2 {
            return Err(Error::InvalidArgument("Dtot must be at least 2".into()));
        }
        for name in self.used() {
            let v = self.get(name).unwrap();
            // k_W terms always appear next to a positive k_W0, so zero is allowed.
            let may_vanish = matches!(*name, "kWA" | "kWR" | "kW1" | "kW2");
            let ok = v.is_finite() && if may_vanish { v >= 0.0 } else { v > 0.0 };
            if !ok {
                return Err(Error::InvalidArgument(format!("parameter {name} = {v} is out of range")));
            }
        }
        if self.approx_4d && self.kind != ModelKind::FourD {
            return Err(Error::InvalidArgument("the rate approximation flag applies to the 4D model only".into()));
        }
        Ok(())
    }

    fn parameter_map(&self) -> BTreeMap<String, f64> {
        let mut m: BTreeMap<String, f64> =
            self.used().iter().map(|n| (n.to_string(), self.get(n).unwrap())).collect();
        m.insert("Dtot".into(), self.dtot as f64);
        m
    }

    pub fn all_names() -> &'static [&'static str] {
        &Self::NAMES
    }
}

/// A built-in circuit with its fully active (`a`) and fully repressed (`r`) states.
#[derive(Debug, Clone)]
pub struct ChromatinModel {
    pub params: ChromatinParams,
    pub network: ReactionNetwork,
    pub space: StateSpace,
    pub generator: PerturbedGenerator,
    pub a: usize,
    pub r: usize,
}

pub fn chromatin_network(p: &ChromatinParams) -> Result<ReactionNetwork> {
    p.validate()?;
    let d = p.dtot as i64;
    let mut b = match p.kind {
        ModelKind::OneD => NetworkBuilder::new("chromatin_1d")
            .species(&["DA", "DR"])
            .reaction("DA + DR -> 2 DR", "kEA")
            .reaction("DA -> DR", "kEA * Dtot * eps")
            .reaction("DR + DA -> 2 DA", "mu * kEA")
            .reaction("DR -> DA", "mu * b * kEA * Dtot * eps")
            .conservation(&[1, 1], d, Some("DA")),
        ModelKind::TwoD => NetworkBuilder::new("chromatin_2d")
            .species(&["D", "DR", "DA"])
            .reaction("D -> DA", "kW0A + kWA")
            .reaction("D + DA -> 2 DA", "kMA")
            .reaction("DA -> D", "kMA * Dtot * eps")
            .reaction("DA + DR -> D + DR", "kEA")
            .reaction("D -> DR", "kW0R + kWR")
            .reaction("D + DR -> 2 DR", "kMR")
            .reaction("DR -> D", "mu * b * kMA * Dtot * eps")
            .reaction("DR + DA -> D + DA", "mu * kEA")
            .conservation(&[1, 1, 1], d, Some("D")),
        ModelKind::ThreeD => NetworkBuilder::new("chromatin_3d")
            .species(&["D", "DR12", "DA", "DR1"])
            // f_A, g_A
            .reaction("D -> DA", "kW0A + kWA")
            .reaction("D + DA -> 2 DA", "kMA")
            .reaction("DA -> D", "kMA * Dtot * eps")
            .reaction("DA + DR1 -> D + DR1", "kEA")
            .reaction("DA + DR12 -> D + DR12", "2 * kEA")
            // f_R1, g_R1
            .reaction("D -> DR1", "kW01 + kW1")
            .reaction("D + DR12 -> DR1 + DR12", "kMp")
            .reaction("DR1 -> D", "mup * beta * kMA * Dtot * eps")
            .reaction("DR1 + DA -> D + DA", "mup * kEA")
            // f_R12, g_R12
            .reaction("DR1 -> DR12", "kW02")
            .reaction("DR1 + DR12 -> 2 DR12", "kM + kMbar")
            .reaction("2 DR1 -> DR12 + DR1", "0.5 * kMbar")
            .reaction("DR12 -> DR1", "mu * b * kMA * Dtot * eps")
            .reaction("DR12 + DA -> DR1 + DA", "mu * kEA")
            .conservation(&[1, 1, 1, 1], d, Some("D")),
        ModelKind::FourD => {
            let (r121_lin, r121_sq, r122_lin, r122_sq) = if p.approx_4d {
                ("kW02 + kMbar", "kMbar", "kW01 + kMp", "kMp")
            } else {
                ("kW02", "0.5 * kMbar", "kW01", "0.5 * kMp")
            };
            NetworkBuilder::new(if p.approx_4d { "chromatin_4d_approx" } else { "chromatin_4d" })
                .species(&["D", "DR12", "DA", "DR1", "DR2"])
                // f_A, g_A
                .reaction("D -> DA", "kW0A + kWA")
                .reaction("D + DA -> 2 DA", "kMA")
                .reaction("DA -> D", "kMA * Dtot * eps")
                .reaction("DA + DR1 -> D + DR1", "kEA")
                .reaction("DA + DR2 -> D + DR2", "kEA")
                .reaction("DA + DR12 -> D + DR12", "2 * kEA")
                // f_R1, g_R1
                .reaction("D -> DR1", "kW01 + kW1")
                .reaction("D + DR12 -> DR1 + DR12", "kMp")
                .reaction("D + DR2 -> DR1 + DR2", "kMp")
                .reaction("DR1 -> D", "mup * beta * kMA * Dtot * eps")
                .reaction("DR1 + DA -> D + DA", "mup * kEA")
                // f_R2, g_R2
                .reaction("D -> DR2", "kW02 + kW2")
                .reaction("D + DR12 -> DR2 + DR12", "kM + kMbar")
                .reaction("D + DR2 -> 2 DR2", "kM")
                .reaction("D + DR1 -> DR2 + DR1", "kMbar")
                .reaction("DR2 -> D", "mu * b * kMA * Dtot * eps")
                .reaction("DR2 + DA -> D + DA", "mu * kEA")
                // f_R121, g_R121
                .reaction("DR1 -> DR12", r121_lin)
                .reaction("DR1 + DR12 -> 2 DR12", "kM + kMbar")
                .reaction("DR1 + DR2 -> DR12 + DR2", "kM")
                .reaction("2 DR1 -> DR12 + DR1", r121_sq)
                .reaction("DR12 -> DR1", "mu * b * kMA * Dtot * eps")
                .reaction("DR12 + DA -> DR1 + DA", "mu * kEA")
                // f_R122, g_R122
                .reaction("DR2 -> DR12", r122_lin)
                .reaction("DR2 + DR12 -> 2 DR12", "kMp")
                .reaction("2 DR2 -> DR12 + DR2", r122_sq)
                .reaction("DR12 -> DR2", "mup * beta * kMA * Dtot * eps")
                .reaction("DR12 + DA -> DR2 + DA", "mup * kEA")
                .conservation(&[1, 1, 1, 1, 1], d, Some("D"))
        }
    };
    for (k, v) in p.parameter_map() {
        b = b.param(&k, v);
    }
    b.build()
}

pub fn build_chromatin_model(p: &ChromatinParams) -> Result<ChromatinModel> {
    let network = chromatin_network(p)?;
    let cons = network.conservation.clone().expect("built-in models carry a conservation law");
    let space = enumerate_states(&network, &cons)?;
    let generator = assemble_generator(&network, &space)?;
    let d = p.dtot as i64;
    let (a_label, r_label): (Vec<i64>, Vec<i64>) = match p.kind {
        ModelKind::OneD => (vec![0], vec![d]),
        ModelKind::TwoD => (vec![0, d], vec![d, 0]),
        ModelKind::ThreeD => (vec![0, d, 0], vec![d, 0, 0]),
        ModelKind::FourD => (vec![0, d, 0, 0], vec![d, 0, 0, 0]),
    };
    let find = |l: &Vec<i64>| generator.index_of_label(l).expect("extreme state present");
    let a = find(&a_label);
    let r = find(&r_label);
    Ok(ChromatinModel { params: p.clone(), network, space, generator, a, r })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_network() {
        let net = parse_network("model m\nspecies S\nS -> 0 : k\nk = 2.0\n").unwrap();
        assert_eq!(net.reactions.len(), 1);
        assert_eq!(net.reactions[0].vector(), vec![-1]);
        assert_eq!(net.reactions[0].kappa, 2.0);
    }

    #[test]
    fn rejects_identical_complexes_and_duplicates() {
        let e = parse_network("species S\nS -> S : k\nk = 1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        assert!(parse_network("species S, S\nS -> 0 : k\nk = 1\n").is_err());
        assert!(parse_network("species S\nS -> 0 : k\nk = -1\n").is_err());
        assert!(parse_network("species S\nS -> 0 : k * eps * eps\nk = 1\n").is_err());
        assert!(parse_network("species S, T\nS -> 0 : k\nk = 1\n").is_err());
        assert!(parse_network("species S\nS -> 0 : q\nk = 1\n").is_err());
    }

    #[test]
    fn merge_and_split_eps() {
        let net = parse_network("species A, B\nA -> B : k + k * eps\nA -> B : 2 * k\nB -> A : k\nk = 1.5\n").unwrap();
        assert_eq!(net.reactions.len(), 3);
        assert!(!net.reactions[0].eps);
        assert_eq!(net.reactions[0].kappa, 1.5 + 3.0);
        assert!(net.reactions[1].eps);
        assert_eq!(net.reactions[1].kappa, 1.5);
    }

    #[test]
    fn falling_factorial_propensity() {
        let net = parse_network("species S\n2 S -> 0 : k\nk = 1\n").unwrap();
        let space = StateSpace::from_states(vec!["S".into()], vec![vec![1], vec![3]], None).unwrap();
        assert_eq!(propensity(&net, &space, 0, &[3], 0.0), 6.0);
        assert_eq!(propensity(&net, &space, 0, &[1], 0.0), 0.0);
    }

    #[test]
    fn one_d_propensity_example() {
        let p = ChromatinParams::new(ModelKind::OneD, 3);
        let m = build_chromatin_model(&p).unwrap();
        assert_eq!(m.space.label(1), vec![1]);
        let up = m
            .network
            .reactions
            .iter()
            .enumerate()
            .filter(|(_, r)| r.vector()[1] == 1)
            .map(|(j, _)| propensity(&m.network, &m.space, j, &m.space.states[1], 0.1))
            .sum::<f64>();
        assert!((up - 2.6).abs() < 1e-12);
    }

    #[test]
    fn state_counts() {
        for (kind, d, n) in [
            (ModelKind::OneD, 3, 4),
            (ModelKind::TwoD, 2, 6),
            (ModelKind::ThreeD, 2, 10),
            (ModelKind::FourD, 2, 15),
        ] {
            let net = chromatin_network(&ChromatinParams::new(kind, d)).unwrap();
            let s = enumerate_states(&net, net.conservation.as_ref().unwrap()).unwrap();
            assert_eq!(s.len(), n, "{kind:?}");
        }
    }

    #[test]
    fn state_cap() {
        let net = chromatin_network(&ChromatinParams::new(ModelKind::FourD, 10)).unwrap();
        let e = enumerate_states_capped(&net, net.conservation.as_ref().unwrap(), 100).unwrap_err();
        assert!(matches!(e, Error::StateCapExceeded { cap: 100 }));
    }

    #[test]
    fn export_round_trip() {
        for kind in [ModelKind::OneD, ModelKind::TwoD, ModelKind::ThreeD, ModelKind::FourD] {
            let net = chromatin_network(&ChromatinParams::new(kind, 3).with_mu(0.3)).unwrap();
            let back = parse_network(&export_network(&net)).unwrap();
            assert_eq!(net, back);
        }
    }

    #[test]
    fn param_validation() {
        let mut p = ChromatinParams::new(ModelKind::TwoD, 1);
        assert!(p.validate().is_err());
        p.dtot = 2;
        p.set("kWA", 0.0).unwrap();
        assert!(p.validate().is_ok());
        p.set("kMA", 0.0).unwrap();
        assert!(p.validate().is_err());
        assert!(p.set("nope", 1.0).is_err());
        assert!("5d".parse::<ModelKind>().is_err());
    }
}
