//! Instance files and mechanism descriptors.
//!
//! An instance file is a JSON object with `buyer` and optional `seller`
//! entries (a missing seller is a point mass at zero). Each side is either
//! a distribution literal tagged by `family`, or a finite support given as
//! `{"values": [...], "probs": [...]}`. When both sides are finite the file
//! is a [`DiscreteInstance`]; otherwise finite sides must be single points
//! and the file is a continuous [`Instance`].

use std::path::Path;

use serde_json::Value;

use crate::dist::ValuationDist;
use crate::error::{Error, Result};
use crate::lp_mechanisms::{DiscreteDist, DiscreteInstance};
use crate::mechanisms::{Instance, Mechanism, MechanismOutcome, TradeModel};

#[derive(Debug, Clone, PartialEq)]
pub enum InstanceFile {
    Continuous(Instance),
    Discrete(DiscreteInstance),
}

enum Side {
    Continuous(ValuationDist),
    Discrete(DiscreteDist),
}

fn parse_side(v: &Value, who: &str) -> Result<Side> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::InvalidInstance(format!("{who} must be an object")))?;
    let invalid = |e: serde_json::Error| Error::InvalidInstance(format!("{who}: {e}"));
    if obj.contains_key("family") {
        Ok(Side::Continuous(
            serde_json::from_value(v.clone()).map_err(invalid)?,
        ))
    } else if obj.contains_key("values") {
        Ok(Side::Discrete(
            serde_json::from_value(v.clone()).map_err(invalid)?,
        ))
    } else {
        Err(Error::InvalidInstance(format!(
            "{who} needs either `family` or `values`"
        )))
    }
}

fn as_continuous(side: Side, who: &str) -> Result<ValuationDist> {
    match side {
        Side::Continuous(d) => Ok(d),
        Side::Discrete(d) if d.len() == 1 => Ok(ValuationDist::point_mass(d.values()[0])),
        Side::Discrete(_) => Err(Error::InvalidInstance(format!(
            "{who} has finite support with several points while the other side is continuous"
        ))),
    }
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInstance(format!("not valid JSON: {e}")))?;
        let obj = root
            .as_object()
            .ok_or_else(|| Error::InvalidInstance("instance must be a JSON object".into()))?;
        if let Some(k) = obj.keys().find(|k| *k != "buyer" && *k != "seller") {
            return Err(Error::InvalidInstance(format!("unknown field `{k}`")));
        }
        let buyer = parse_side(
            obj.get("buyer")
                .ok_or_else(|| Error::InvalidInstance("missing `buyer`".into()))?,
            "buyer",
        )?;
        let seller = match obj.get("seller") {
            Some(v) => parse_side(v, "seller")?,
            None => Side::Discrete(DiscreteDist::point(0.0)),
        };
        match (buyer, seller) {
            (Side::Discrete(b), Side::Discrete(s)) => {
                Ok(Self::Discrete(DiscreteInstance::new(b, s)))
            }
            (b, s) => Ok(Self::Continuous(Instance::new(
                as_continuous(b, "buyer")?,
                as_continuous(s, "seller")?,
            )?)),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn model(&self) -> &dyn TradeModel {
        match self {
            Self::Continuous(i) => i,
            Self::Discrete(i) => i,
        }
    }

    /// The file as a finite instance, when both sides are finite.
    pub fn discrete(&self) -> Result<&DiscreteInstance> {
        match self {
            Self::Discrete(i) => Ok(i),
            Self::Continuous(_) => Err(Error::Usage(
                "this command needs finite supports (`values`/`probs`) on both sides".into(),
            )),
        }
    }

    pub fn evaluate(&self, mech: Mechanism) -> MechanismOutcome {
        self.model().evaluate(mech)
    }
}

fn number(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Usage(format!("bad {what} `{s}`")))
}

/// Parses `fpm:<p>`, `lambda_rom:<λ>`, `rom`, `som`, `bom`, or the JSON forms
/// `{"mech":"fpm","p":0.2}`, `{"mech":"lambda_rom","lambda":0.5}`, `"som"`.
pub fn parse_mechanism(s: &str) -> Result<Mechanism> {
    let s = s.trim();
    if s.starts_with('{') {
        return serde_json::from_str(s)
            .map_err(|e| Error::Usage(format!("bad mechanism `{s}`: {e}")));
    }
    let s = s.trim_matches('"');
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (s, None),
    };
    let mech = match (name, arg) {
        ("fpm", Some(p)) => Mechanism::Fpm {
            p: number(p, "price")?,
        },
        ("lambda_rom", Some(l)) => Mechanism::LambdaRom {
            lambda: number(l, "lambda")?,
        },
        ("rom", None) => Mechanism::LambdaRom { lambda: 0.5 },
        ("som", None) => Mechanism::Som,
        ("bom", None) => Mechanism::Bom,
        _ => {
            return Err(Error::Usage(format!(
                "unknown mechanism `{s}`; expected fpm:<p>, lambda_rom:<λ>, rom, som or bom"
            )))
        }
    };
    match mech {
        Mechanism::Fpm { p } if p < 0.0 => {
            Err(Error::Usage(format!("price must be nonnegative, got {p}")))
        }
        Mechanism::LambdaRom { lambda } if !(0.0..=1.0).contains(&lambda) => Err(Error::Usage(
            format!("lambda must lie in [0, 1], got {lambda}"),
        )),
        m => Ok(m),
    }
}
