//! Named parameter vectors with per-parameter estimation-scale transforms.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Map between the natural scale of a parameter and the unconstrained scale
/// the maximizers search over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    Identity,
    Log,
    Logit,
}

const LOGIT_EDGE: f64 = 1e-15;

impl Transform {
    pub fn to_estimation(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
            Transform::Logit => (x / (1.0 - x)).ln(),
        }
    }

    /// Inverse map. Results are clamped strictly inside the natural domain.
    pub fn from_estimation(self, z: f64) -> f64 {
        match self {
            Transform::Identity => z,
            Transform::Log => z.exp().max(f64::MIN_POSITIVE),
            Transform::Logit => (1.0 / (1.0 + (-z).exp())).clamp(LOGIT_EDGE, 1.0 - LOGIT_EDGE),
        }
    }

    pub fn admits(self, x: f64) -> bool {
        match self {
            Transform::Identity => x.is_finite(),
            Transform::Log => x.is_finite() && x > 0.0,
            Transform::Logit => x > 0.0 && x < 1.0,
        }
    }
}

#[derive(Debug)]
struct Schema {
    names: Vec<String>,
    transforms: Vec<Transform>,
    index: HashMap<String, usize>,
}

/// Ordered name -> value map.
///
/// The names and transforms are shared between clones so that perturbed
/// copies (one per particle in iterated filtering) only carry their values.
#[derive(Debug, Clone)]
pub struct ParameterSet {
    schema: Arc<Schema>,
    values: Vec<f64>,
}

/// One serialized entry.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub value: f64,
    #[serde(default)]
    pub transform: Transform,
}

impl ParameterSet {
    pub fn new<S: Into<String>>(
        entries: impl IntoIterator<Item = (S, f64, Transform)>,
    ) -> Result<Self> {
        let mut names = Vec::new();
        let mut transforms = Vec::new();
        let mut values = Vec::new();
        let mut index = HashMap::new();
        for (name, value, transform) in entries {
            let name = name.into();
            if index.insert(name.clone(), names.len()).is_some() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "duplicate name".into(),
                });
            }
            names.push(name);
            transforms.push(transform);
            values.push(value);
        }
        let set = Self {
            schema: Arc::new(Schema {
                names,
                transforms,
                index,
            }),
            values,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn from_entries(entries: &[ParamEntry]) -> Result<Self> {
        Self::new(
            entries
                .iter()
                .map(|e| (e.name.clone(), e.value, e.transform)),
        )
    }

    pub fn entries(&self) -> Vec<ParamEntry> {
        self.iter()
            .map(|(name, value, transform)| ParamEntry {
                name: name.to_string(),
                value,
                transform,
            })
            .collect()
    }

    /// Checks every value against its transform's domain.
    pub fn validate(&self) -> Result<()> {
        for (name, value, transform) in self.iter() {
            if !transform.admits(value) {
                let reason = match transform {
                    Transform::Identity => format!("{value} is not finite"),
                    Transform::Log => format!("{value} must be positive (log scale)"),
                    Transform::Logit => format!("{value} must lie in (0, 1) (logit scale)"),
                };
                return Err(Error::InvalidParameter {
                    name: name.to_string(),
                    reason,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.schema.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64, Transform)> + '_ {
        self.schema
            .names
            .iter()
            .zip(&self.values)
            .zip(&self.schema.transforms)
            .map(|((n, v), t)| (n.as_str(), *v, *t))
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.schema
            .index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(self.values[self.index_of(name)?])
    }

    pub fn get_or(&self, name: &str, default: f64) -> f64 {
        self.schema
            .index
            .get(name)
            .map_or(default, |&i| self.values[i])
    }

    pub fn transform(&self, name: &str) -> Result<Transform> {
        Ok(self.schema.transforms[self.index_of(name)?])
    }

    pub fn transform_at(&self, i: usize) -> Transform {
        self.schema.transforms[i]
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let i = self.index_of(name)?;
        self.values[i] = value;
        Ok(())
    }

    pub fn set_at(&mut self, i: usize, value: f64) {
        self.values[i] = value;
    }

    /// Copy with a changed transform for one parameter.
    pub fn with_transform(&self, name: &str, transform: Transform) -> Result<Self> {
        let i = self.index_of(name)?;
        let mut transforms = self.schema.transforms.clone();
        transforms[i] = transform;
        Self::new(
            self.schema
                .names
                .iter()
                .cloned()
                .zip(self.values.iter().copied())
                .zip(transforms)
                .map(|((n, v), t)| (n, v, t)),
        )
    }

    /// Values of `names` on the estimation scale.
    pub fn to_estimation(&self, names: &[String]) -> Result<Vec<f64>> {
        names
            .iter()
            .map(|n| {
                let i = self.index_of(n)?;
                Ok(self.schema.transforms[i].to_estimation(self.values[i]))
            })
            .collect()
    }

    /// Copy with `names` set from estimation-scale values.
    pub fn from_estimation(&self, names: &[String], z: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        for (n, &zi) in names.iter().zip(z) {
            let i = self.index_of(n)?;
            out.values[i] = self.schema.transforms[i].from_estimation(zi);
        }
        Ok(out)
    }
}

impl PartialEq for ParameterSet {
    fn eq(&self, other: &Self) -> bool {
        self.schema.names == other.schema.names
            && self.schema.transforms == other.schema.transforms
            && self.values == other.values
    }
}

impl Serialize for ParameterSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParameterSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<ParamEntry>::deserialize(d)?;
        ParameterSet::from_entries(&entries).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn demo() -> ParameterSet {
        ParameterSet::new([
            ("beta", 2.5, Transform::Log),
            ("rho", 0.07, Transform::Logit),
            ("phase", -0.3, Transform::Identity),
        ])
        .unwrap()
    }

    #[test]
    fn lookup_and_domain_errors() {
        let p = demo();
        assert_eq!(p.get("rho").unwrap(), 0.07);
        assert!(matches!(p.get("nope"), Err(Error::UnknownParameter(_))));
        let bad = ParameterSet::new([("rho", 1.2, Transform::Logit)]);
        assert!(matches!(bad, Err(Error::InvalidParameter { name, .. }) if name == "rho"));
        let bad = ParameterSet::new([("gamma", 0.0, Transform::Log)]);
        assert!(bad.is_err());
    }

    #[test]
    fn json_round_trip_keeps_order() {
        let p = demo();
        let s = serde_json::to_string(&p).unwrap();
        let q: ParameterSet = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
        assert_eq!(q.names(), &["beta", "rho", "phase"]);
    }

    proptest! {
        #[test]
        fn transforms_invert(x in 1e-6f64..1e6, p in 1e-6f64..0.999_999, y in -1e6f64..1e6) {
            let l = Transform::Log;
            prop_assert!((l.from_estimation(l.to_estimation(x)) - x).abs() <= 1e-12 * x.max(1.0));
            let g = Transform::Logit;
            prop_assert!((g.from_estimation(g.to_estimation(p)) - p).abs() <= 1e-12);
            let i = Transform::Identity;
            prop_assert_eq!(i.from_estimation(i.to_estimation(y)), y);
        }

        #[test]
        fn inverse_transforms_stay_in_domain(z in -1e4f64..1e4) {
            let x = Transform::Logit.from_estimation(z);
            prop_assert!(x > 0.0 && x < 1.0);
            prop_assert!(Transform::Log.from_estimation(z) > 0.0);
        }
    }
}
