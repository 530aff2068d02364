//! JSON building blocks shared by the scenario and report formats.

use std::fmt;
use std::marker::PhantomData;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::prob::{check_unit, format_real, parse_probability};

/// A real emitted with 17 significant digits. Non-finite values are written
/// as the strings `"inf"`, `"-inf"` and `"nan"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let x = self.0;
        if x.is_nan() {
            return serializer.serialize_str("nan");
        }
        if x.is_infinite() {
            return serializer.serialize_str(if x > 0.0 { "inf" } else { "-inf" });
        }
        RawValue::from_string(format_real(x))
            .map_err(serde::ser::Error::custom)?
            .serialize(serializer)
    }
}

/// A probability literal: a JSON number, or a string holding a decimal or
/// an `a/b` rational.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prob(pub f64);

impl Serialize for Prob {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        Real(self.0).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Prob {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ProbVisitor;

        impl Visitor<'_> for ProbVisitor {
            type Value = Prob;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a probability as a number or a \"a/b\" string")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Prob, E> {
                check_unit(v).map(Prob).map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Prob, E> {
                self.visit_f64(v as f64)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Prob, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Prob, E> {
                parse_probability(v).map(Prob).map_err(E::custom)
            }
        }

        deserializer.deserialize_any(ProbVisitor)
    }
}

/// A JSON object read in document order that rejects duplicate keys.
#[derive(Clone, Debug, PartialEq)]
pub struct StrictMap<V>(pub Vec<(String, V)>);

impl<V> Default for StrictMap<V> {
    fn default() -> Self {
        Self(Vec::new())
    }
}

impl<V> StrictMap<V> {
    pub fn iter(&self) -> impl Iterator<Item = (&str, &V)> + '_ {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }
}

impl<V> FromIterator<(String, V)> for StrictMap<V> {
    fn from_iter<I: IntoIterator<Item = (String, V)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl<V: Serialize> Serialize for StrictMap<V> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de, V: Deserialize<'de>> Deserialize<'de> for StrictMap<V> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct MapVisitor<V>(PhantomData<V>);

        impl<'de, V: Deserialize<'de>> Visitor<'de> for MapVisitor<V> {
            type Value = StrictMap<V>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object without duplicate keys")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut entries: Vec<(String, V)> = Vec::new();
                while let Some(key) = access.next_key::<String>()? {
                    if entries.iter().any(|(k, _)| *k == key) {
                        return Err(de::Error::custom(format!("duplicate key {key:?}")));
                    }
                    let value = access.next_value()?;
                    entries.push((key, value));
                }
                Ok(StrictMap(entries))
            }
        }

        deserializer.deserialize_map(MapVisitor(PhantomData))
    }
}
