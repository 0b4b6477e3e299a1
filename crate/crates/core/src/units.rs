//! Lengths as they appear in configuration files.
//!
//! Files store lengths in meters. A bare number is meters; a string may carry
//! an explicit unit suffix (`"5 um"`, `"5µm"`, `"0.1 mm"`, `"820nm"`).

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

pub const MICRON: f64 = 1e-6;

/// A length in meters.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Length(pub f64);

impl Length {
    pub const fn meters(v: f64) -> Self {
        Length(v)
    }

    pub fn microns(v: f64) -> Self {
        Length(v * MICRON)
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<Length> for f64 {
    fn from(l: Length) -> f64 {
        l.0
    }
}

impl FromStr for Length {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        // unit suffix is the trailing alphabetic run ("1e-6 m" keeps its exponent)
        let split = s
            .char_indices()
            .rev()
            .take_while(|(_, c)| c.is_alphabetic())
            .last()
            .map_or(s.len(), |(i, _)| i);
        let (num, unit) = s.split_at(split);
        let value: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad length `{s}`")))?;
        let scale = match unit.trim() {
            "" | "m" => 1.0,
            "mm" => 1e-3,
            "um" | "µm" | "μm" | "micron" | "microns" => 1e-6,
            "nm" => 1e-9,
            other => return Err(Error::Config(format!("unknown length unit `{other}`"))),
        };
        Ok(Length(value * scale))
    }
}

impl Serialize for Length {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Length {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct LengthVisitor;

        impl Visitor<'_> for LengthVisitor {
            type Value = Length;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a length in meters or a string with a unit suffix")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Length, E> {
                Ok(Length(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Length, E> {
                Ok(Length(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Length, E> {
                Ok(Length(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Length, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(LengthVisitor)
    }
}
