//! Speeds with an explicit unit tag.
//!
//! Configuration files never carry bare speed numbers: every speed is a
//! string such as `"35 km/h"` or `"9.5 m/s"`. The unit is preserved so a
//! value can be written back exactly as it was read.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpeedUnit {
    MetersPerSecond,
    KilometersPerHour,
}

impl SpeedUnit {
    pub fn suffix(self) -> &'static str {
        match self {
            SpeedUnit::MetersPerSecond => "m/s",
            SpeedUnit::KilometersPerHour => "km/h",
        }
    }

    /// Converts a value expressed in this unit to m/s.
    pub fn to_mps(self, value: f64) -> f64 {
        match self {
            SpeedUnit::MetersPerSecond => value,
            SpeedUnit::KilometersPerHour => value / 3.6,
        }
    }

    /// Converts a value in m/s to this unit.
    pub fn from_mps(self, mps: f64) -> f64 {
        match self {
            SpeedUnit::MetersPerSecond => mps,
            SpeedUnit::KilometersPerHour => mps * 3.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UnitError {
    #[error("speed `{0}` has no unit; write e.g. \"35 km/h\" or \"9.7 m/s\"")]
    MissingUnit(String),
    #[error("unknown speed unit `{0}` (expected m/s or km/h)")]
    UnknownUnit(String),
    #[error("invalid speed value `{0}`")]
    BadNumber(String),
}

/// A speed as written by the user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Speed {
    pub value: f64,
    pub unit: SpeedUnit,
}

impl Speed {
    pub fn mps(value: f64) -> Self {
        Speed { value, unit: SpeedUnit::MetersPerSecond }
    }

    pub fn kmh(value: f64) -> Self {
        Speed { value, unit: SpeedUnit::KilometersPerHour }
    }

    pub fn to_mps(self) -> f64 {
        self.unit.to_mps(self.value)
    }
}

impl fmt::Display for Speed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `{:?}` keeps a decimal point and round-trips exactly.
        write!(f, "{:?} {}", self.value, self.unit.suffix())
    }
}

impl FromStr for Speed {
    type Err = UnitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let split = s
            .find(|c: char| c.is_ascii_alphabetic())
            .ok_or_else(|| UnitError::MissingUnit(s.to_string()))?;
        let (num, unit) = s.split_at(split);
        let value: f64 = num
            .trim()
            .parse()
            .map_err(|_| UnitError::BadNumber(num.trim().to_string()))?;
        let unit = match unit.trim() {
            "m/s" | "mps" => SpeedUnit::MetersPerSecond,
            "km/h" | "kmh" | "kph" => SpeedUnit::KilometersPerHour,
            other => return Err(UnitError::UnknownUnit(other.to_string())),
        };
        Ok(Speed { value, unit })
    }
}

impl Serialize for Speed {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Speed {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = Speed;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a speed string with unit, e.g. \"35 km/h\"")
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<Speed, E> {
                v.parse().map_err(E::custom)
            }
            fn visit_f64<E: serde::de::Error>(self, v: f64) -> Result<Speed, E> {
                Err(E::custom(UnitError::MissingUnit(v.to_string())))
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<Speed, E> {
                Err(E::custom(UnitError::MissingUnit(v.to_string())))
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<Speed, E> {
                Err(E::custom(UnitError::MissingUnit(v.to_string())))
            }
        }
        deserializer.deserialize_any(Visitor)
    }
}
