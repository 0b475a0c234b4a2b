//! Instances, equilibrium candidates and their JSON encoding.
//!
//! Exact quantities are [`Rational`]s and are written to disk as `"num/den"`
//! strings (plain integers are written without a denominator). Float
//! candidates use JSON numbers. The two encodings never mix inside one file.

use std::fmt;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::polymatrix::PolymatrixLayout;
use crate::sat::SatLayout;

pub type Rational = BigRational;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("price vector sums to zero")]
    ZeroPriceSum,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cannot parse rational {0:?}")]
    BadRational(String),
    #[error("mixed exact and float values: {0}")]
    MixedArithmetic(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn parse_rational(text: &str) -> Result<Rational, ModelError> {
    let bad = || ModelError::BadRational(text.to_string());
    let t = text.trim();
    let (num, den) = match t.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (t, "1"),
    };
    let num: BigInt = num.parse().map_err(|_| bad())?;
    let den: BigInt = den.parse().map_err(|_| bad())?;
    if den.is_zero() {
        return Err(bad());
    }
    Ok(Rational::new(num, den))
}

pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Normalizes a nonnegative price vector so it sums to one.
pub fn normalize_prices(prices: &[Rational]) -> Result<Vec<Rational>, ModelError> {
    let total: Rational = prices.iter().sum();
    if total.is_zero() {
        return Err(ModelError::ZeroPriceSum);
    }
    Ok(prices.iter().map(|p| p / &total).collect())
}

pub fn normalize_prices_f64(prices: &[f64]) -> Result<Vec<f64>, ModelError> {
    let total: f64 = prices.iter().sum();
    if total == 0.0 {
        return Err(ModelError::ZeroPriceSum);
    }
    Ok(prices.iter().map(|p| p / total).collect())
}

/// How agents earn money.
#[derive(Debug, Clone, PartialEq)]
pub enum Market {
    /// Agents own shares of chores and earn the value of their endowment.
    Exchange { endowment: Vec<Vec<Rational>> },
    /// Agents earn a fixed amount; chores come in the given supply.
    FixedEarnings {
        earning: Vec<Rational>,
        supply: Vec<Rational>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GadgetMetadata {
    Sat(SatLayout),
    Polymatrix(PolymatrixLayout),
}

/// A chore-division market. `None` disutility marks a chore the agent
/// will never do.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub tau: Rational,
    pub disutility: Vec<Vec<Option<Rational>>>,
    pub market: Market,
    pub metadata: Option<GadgetMetadata>,
}

impl Instance {
    pub fn exchange(
        tau: Rational,
        disutility: Vec<Vec<Option<Rational>>>,
        endowment: Vec<Vec<Rational>>,
    ) -> Result<Self, ModelError> {
        let inst = Instance {
            tau,
            disutility,
            market: Market::Exchange { endowment },
            metadata: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Fixed-earnings market; `supply` defaults to one unit of every chore.
    pub fn fixed_earnings(
        tau: Rational,
        disutility: Vec<Vec<Option<Rational>>>,
        earning: Vec<Rational>,
        supply: Option<Vec<Rational>>,
    ) -> Result<Self, ModelError> {
        let m = disutility.first().map_or(0, Vec::len);
        let supply = supply.unwrap_or_else(|| vec![Rational::one(); m]);
        let inst = Instance {
            tau,
            disutility,
            market: Market::FixedEarnings { earning, supply },
            metadata: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_metadata(mut self, metadata: GadgetMetadata) -> Self {
        self.metadata = Some(metadata);
        self
    }

    pub fn agents(&self) -> usize {
        self.disutility.len()
    }

    pub fn chores(&self) -> usize {
        self.disutility.first().map_or(0, Vec::len)
    }

    pub fn is_exchange(&self) -> bool {
        matches!(self.market, Market::Exchange { .. })
    }

    pub fn finite(&self, agent: usize, chore: usize) -> bool {
        self.disutility[agent][chore].is_some()
    }

    pub fn finite_chores(&self, agent: usize) -> Vec<usize> {
        (0..self.chores()).filter(|&j| self.finite(agent, j)).collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidInstance(msg));
        let n = self.agents();
        let m = self.chores();
        if n == 0 || m == 0 {
            return bad("need at least one agent and one chore".into());
        }
        if !self.tau.is_positive() {
            return bad("tau must be positive".into());
        }
        for (i, row) in self.disutility.iter().enumerate() {
            if row.len() != m {
                return bad(format!("disutility row {i} has {} entries, expected {m}", row.len()));
            }
            for (j, d) in row.iter().enumerate() {
                if let Some(d) = d {
                    if !d.is_positive() || *d >= self.tau {
                        return bad(format!(
                            "disutility ({i},{j}) = {} must lie strictly between 0 and tau",
                            format_rational(d)
                        ));
                    }
                }
            }
        }
        match &self.market {
            Market::Exchange { endowment } => {
                if endowment.len() != n || endowment.iter().any(|r| r.len() != m) {
                    return bad("endowment must be agents x chores".into());
                }
                if endowment.iter().flatten().any(Signed::is_negative) {
                    return bad("endowments must be nonnegative".into());
                }
                for j in 0..m {
                    if endowment.iter().all(|r| r[j].is_zero()) {
                        return bad(format!("chore {j} has zero total endowment"));
                    }
                }
            }
            Market::FixedEarnings { earning, supply } => {
                if earning.len() != n {
                    return bad("one earning per agent expected".into());
                }
                if supply.len() != m {
                    return bad("one supply per chore expected".into());
                }
                if earning.iter().any(Signed::is_negative) {
                    return bad("earnings must be nonnegative".into());
                }
                if supply.iter().any(|s| !s.is_positive()) {
                    return bad("supplies must be positive".into());
                }
            }
        }
        Ok(())
    }

    /// Money agent `agent` must earn at `prices`.
    pub fn budget(&self, agent: usize, prices: &[Rational]) -> Rational {
        match &self.market {
            Market::Exchange { endowment } => endowment[agent]
                .iter()
                .zip(prices)
                .filter(|(w, _)| !w.is_zero())
                .map(|(w, p)| w * p)
                .sum(),
            Market::FixedEarnings { earning, .. } => earning[agent].clone(),
        }
    }

    pub fn budget_f64(&self, agent: usize, prices: &[f64]) -> f64 {
        match &self.market {
            Market::Exchange { endowment } => endowment[agent]
                .iter()
                .zip(prices)
                .map(|(w, p)| to_f64(w) * p)
                .sum(),
            Market::FixedEarnings { earning, .. } => to_f64(&earning[agent]),
        }
    }

    /// True when the agent earns something at every strictly positive price.
    pub fn has_income(&self, agent: usize) -> bool {
        match &self.market {
            Market::Exchange { endowment } => endowment[agent].iter().any(|w| w.is_positive()),
            Market::FixedEarnings { earning, .. } => earning[agent].is_positive(),
        }
    }

    pub fn supply(&self, chore: usize) -> Rational {
        match &self.market {
            Market::Exchange { endowment } => endowment.iter().map(|r| &r[chore]).sum(),
            Market::FixedEarnings { supply, .. } => supply[chore].clone(),
        }
    }

    pub fn supplies(&self) -> Vec<Rational> {
        (0..self.chores()).map(|j| self.supply(j)).collect()
    }

    /// Exchange market with the same equilibria up to price scaling: each
    /// agent owns a slice of every chore proportional to its earning.
    pub fn to_exchange(&self) -> Result<Instance, ModelError> {
        match &self.market {
            Market::Exchange { .. } => Ok(self.clone()),
            Market::FixedEarnings { earning, supply } => {
                let total: Rational = earning.iter().sum();
                if total.is_zero() {
                    return Err(ModelError::InvalidInstance(
                        "all earnings are zero; no exchange embedding".into(),
                    ));
                }
                let endowment = earning
                    .iter()
                    .map(|e| supply.iter().map(|s| e * s / &total).collect())
                    .collect();
                let mut inst = Instance::exchange(self.tau.clone(), self.disutility.clone(), endowment)?;
                inst.metadata = self.metadata.clone();
                Ok(inst)
            }
        }
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        let file = InstanceFile::from(self);
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Prices, an allocation `X` (amounts of chores done) and optionally the
/// money flow `f = X * p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<T> {
    pub prices: Vec<T>,
    pub allocation: Vec<Vec<T>>,
    pub flow: Option<Vec<Vec<T>>>,
}

pub type ExactCandidate = Candidate<Rational>;
pub type FloatCandidate = Candidate<f64>;

impl ExactCandidate {
    pub fn from_flow(prices: Vec<Rational>, flow: Vec<Vec<Rational>>) -> Self {
        let allocation = flow
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&prices)
                    .map(|(f, p)| if f.is_zero() { Rational::zero() } else { f / p })
                    .collect()
            })
            .collect();
        Candidate {
            prices,
            allocation,
            flow: Some(flow),
        }
    }

    pub fn flow_or_derived(&self) -> Vec<Vec<Rational>> {
        match &self.flow {
            Some(f) => f.clone(),
            None => self
                .allocation
                .iter()
                .map(|row| row.iter().zip(&self.prices).map(|(x, p)| x * p).collect())
                .collect(),
        }
    }

    pub fn to_float(&self) -> FloatCandidate {
        let conv = |v: &Vec<Rational>| v.iter().map(to_f64).collect::<Vec<_>>();
        Candidate {
            prices: conv(&self.prices),
            allocation: self.allocation.iter().map(conv).collect(),
            flow: self.flow.as_ref().map(|f| f.iter().map(conv).collect()),
        }
    }
}

impl<T> Candidate<T> {
    pub fn check_dims(&self, agents: usize, chores: usize) -> Result<(), ModelError> {
        let rows_ok = |rows: &Vec<Vec<T>>| rows.len() == agents && rows.iter().all(|r| r.len() == chores);
        if self.prices.len() != chores {
            return Err(ModelError::DimensionMismatch(format!(
                "{} prices for {chores} chores",
                self.prices.len()
            )));
        }
        if !rows_ok(&self.allocation) {
            return Err(ModelError::DimensionMismatch(format!(
                "allocation must be {agents} x {chores}"
            )));
        }
        if let Some(f) = &self.flow {
            if !rows_ok(f) {
                return Err(ModelError::DimensionMismatch(format!("flow must be {agents} x {chores}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyCandidate {
    Exact(ExactCandidate),
    Float(FloatCandidate),
}

impl AnyCandidate {
    pub fn to_json(&self) -> Result<String, ModelError> {
        let value = match self {
            AnyCandidate::Exact(c) => serde_json::to_value(CandidateFile {
                mode: "exact".into(),
                prices: c.prices.iter().map(|r| Num::Exact(r.clone())).collect(),
                allocation: wrap_rows(&c.allocation, |r| Num::Exact(r.clone())),
                flow: c.flow.as_ref().map(|f| wrap_rows(f, |r| Num::Exact(r.clone()))),
            })?,
            AnyCandidate::Float(c) => serde_json::to_value(CandidateFile {
                mode: "float".into(),
                prices: c.prices.iter().map(|&x| Num::Float(x)).collect(),
                allocation: wrap_rows(&c.allocation, |&x| Num::Float(x)),
                flow: c.flow.as_ref().map(|f| wrap_rows(f, |&x| Num::Float(x))),
            })?,
        };
        Ok(serde_json::to_string_pretty(&value)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: CandidateFile = serde_json::from_str(text)?;
        match file.mode.as_str() {
            "exact" => {
                let get = |n: &Num| match n {
                    Num::Exact(r) => Ok(r.clone()),
                    Num::Float(_) => Err(ModelError::MixedArithmetic("float value in exact candidate".into())),
                };
                Ok(AnyCandidate::Exact(Candidate {
                    prices: file.prices.iter().map(get).collect::<Result<_, _>>()?,
                    allocation: unwrap_rows(&file.allocation, get)?,
                    flow: file.flow.as_ref().map(|f| unwrap_rows(f, get)).transpose()?,
                }))
            }
            "float" => {
                let get = |n: &Num| match n {
                    Num::Float(x) => Ok(*x),
                    Num::Exact(_) => Err(ModelError::MixedArithmetic("rational string in float candidate".into())),
                };
                Ok(AnyCandidate::Float(Candidate {
                    prices: file.prices.iter().map(get).collect::<Result<_, _>>()?,
                    allocation: unwrap_rows(&file.allocation, get)?,
                    flow: file.flow.as_ref().map(|f| unwrap_rows(f, get)).transpose()?,
                }))
            }
            other => Err(ModelError::InvalidInstance(format!("unknown candidate mode {other:?}"))),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn prices_f64(&self) -> Vec<f64> {
        match self {
            AnyCandidate::Exact(c) => c.prices.iter().map(to_f64).collect(),
            AnyCandidate::Float(c) => c.prices.clone(),
        }
    }
}

fn wrap_rows<T>(rows: &[Vec<T>], f: impl Fn(&T) -> Num) -> Vec<Vec<Num>> {
    rows.iter().map(|r| r.iter().map(&f).collect()).collect()
}

fn unwrap_rows<T>(
    rows: &[Vec<Num>],
    f: impl Fn(&Num) -> Result<T, ModelError>,
) -> Result<Vec<Vec<T>>, ModelError> {
    rows.iter().map(|r| r.iter().map(&f).collect()).collect()
}

/// A rational on the wire: a `"num/den"` string or a JSON integer.
#[derive(Debug, Clone, PartialEq)]
pub struct RatStr(pub Rational);

impl Serialize for RatStr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(&self.0))
    }
}

impl<'de> Deserialize<'de> for RatStr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Num::deserialize(d)? {
            Num::Exact(r) => Ok(RatStr(r)),
            Num::Float(x) => Err(de::Error::custom(format!(
                "expected an exact rational, found float {x}"
            ))),
        }
    }
}

/// Either an exact rational (string or JSON integer) or a JSON float.
#[derive(Debug, Clone, PartialEq)]
enum Num {
    Exact(Rational),
    Float(f64),
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Num::Exact(r) => s.serialize_str(&format_rational(r)),
            Num::Float(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Num;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a rational string, an integer or a float")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Num, E> {
                parse_rational(v).map(Num::Exact).map_err(E::custom)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Num, E> {
                Ok(Num::Exact(int(v)))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Num, E> {
                Ok(Num::Exact(Rational::from_integer(BigInt::from(v))))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Num, E> {
                Ok(Num::Float(v))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Serialize, Deserialize)]
struct CandidateFile {
    mode: String,
    prices: Vec<Num>,
    allocation: Vec<Vec<Num>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flow: Option<Vec<Vec<Num>>>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    variant: String,
    tau: RatStr,
    disutility: Vec<Vec<Option<RatStr>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    endowment: Option<Vec<Vec<RatStr>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    earning: Option<Vec<RatStr>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    supply: Option<Vec<RatStr>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<GadgetMetadata>,
}

fn wrap_vec(v: &[Rational]) -> Vec<RatStr> {
    v.iter().cloned().map(RatStr).collect()
}

fn unwrap_vec(v: Vec<RatStr>) -> Vec<Rational> {
    v.into_iter().map(|r| r.0).collect()
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        let disutility = inst
            .disutility
            .iter()
            .map(|row| row.iter().map(|d| d.clone().map(RatStr)).collect())
            .collect();
        let (variant, endowment, earning, supply) = match &inst.market {
            Market::Exchange { endowment } => (
                "exchange",
                Some(endowment.iter().map(|r| wrap_vec(r)).collect()),
                None,
                None,
            ),
            Market::FixedEarnings { earning, supply } => {
                ("fixed_earnings", None, Some(wrap_vec(earning)), Some(wrap_vec(supply)))
            }
        };
        InstanceFile {
            variant: variant.into(),
            tau: RatStr(inst.tau.clone()),
            disutility,
            endowment,
            earning,
            supply,
            metadata: inst.metadata.clone(),
        }
    }
}

impl TryFrom<InstanceFile> for Instance {
    type Error = ModelError;

    fn try_from(file: InstanceFile) -> Result<Self, ModelError> {
        let disutility: Vec<Vec<Option<Rational>>> = file
            .disutility
            .into_iter()
            .map(|row| row.into_iter().map(|d| d.map(|r| r.0)).collect())
            .collect();
        let mut inst = match file.variant.as_str() {
            "exchange" => {
                let endowment = file
                    .endowment
                    .ok_or_else(|| ModelError::InvalidInstance("exchange instance needs an endowment".into()))?;
                Instance::exchange(
                    file.tau.0,
                    disutility,
                    endowment.into_iter().map(unwrap_vec).collect(),
                )?
            }
            "fixed_earnings" => {
                let earning = file
                    .earning
                    .ok_or_else(|| ModelError::InvalidInstance("fixed-earnings instance needs earnings".into()))?;
                Instance::fixed_earnings(file.tau.0, disutility, unwrap_vec(earning), file.supply.map(unwrap_vec))?
            }
            other => return Err(ModelError::InvalidInstance(format!("unknown variant {other:?}"))),
        };
        inst.metadata = file.metadata;
        Ok(inst)
    }
}
