//! Census block and tract identifiers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed geocode {value:?}: expected {expected} digits")]
pub struct MalformedGeocode {
    pub value: String,
    pub expected: usize,
}

fn parse_digits<const N: usize>(s: &str) -> Result<[u8; N], MalformedGeocode> {
    let bytes = s.as_bytes();
    if bytes.len() != N || !bytes.iter().all(u8::is_ascii_digit) {
        return Err(MalformedGeocode {
            value: s.to_string(),
            expected: N,
        });
    }
    let mut out = [0u8; N];
    out.copy_from_slice(bytes);
    Ok(out)
}

/// 11-digit census tract GEOID (state 2 + county 3 + tract 6).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TractId([u8; 11]);

/// 15-digit census block GEOID; the first 11 digits name its tract.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId([u8; 15]);

impl TractId {
    pub fn as_str(&self) -> &str {
        // constructed only from ASCII digits
        std::str::from_utf8(&self.0).expect("ascii digits")
    }

    /// Two-digit state FIPS code.
    pub fn state(&self) -> &str {
        &self.as_str()[..2]
    }
}

impl BlockId {
    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("ascii digits")
    }

    pub fn tract(&self) -> TractId {
        let mut t = [0u8; 11];
        t.copy_from_slice(&self.0[..11]);
        TractId(t)
    }
}

/// Maps a 15-character block geocode to its 11-character tract GEOID.
pub fn block_to_tract(geocode: &str) -> Result<TractId, MalformedGeocode> {
    Ok(geocode.parse::<BlockId>()?.tract())
}

impl FromStr for TractId {
    type Err = MalformedGeocode;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_digits::<11>(s).map(TractId)
    }
}

impl FromStr for BlockId {
    type Err = MalformedGeocode;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_digits::<15>(s).map(BlockId)
    }
}

macro_rules! string_like {
    ($t:ty) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl fmt::Debug for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($t), self.as_str())
            }
        }

        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_like!(TractId);
string_like!(BlockId);
