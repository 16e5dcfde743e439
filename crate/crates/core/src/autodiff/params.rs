use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Version tag written at the head of serialized parameter maps.
pub const PARAM_FORMAT_VERSION: u32 = 1;

/// Handle to one named parameter tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of learnable tensors.
///
/// Forward passes read from an immutable store, so several tapes can share
/// one snapshot; only the optimizer takes it mutably.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamFile {
    version: u32,
    params: BTreeMap<String, ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::validation(format!("duplicate parameter name '{name}'")));
        }
        if !value.all_finite() {
            return Err(Error::numerical(format!("parameter '{name}' is not finite")));
        }
        self.names.push(name);
        self.values.push(value);
        Ok(ParamId(self.values.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Tensor::all_finite)
    }

    /// Overwrites every parameter from `other`, matching by name and shape.
    pub fn assign_from(&mut self, other: &ParamStore) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Format(format!(
                "parameter count mismatch: have {}, loading {}",
                self.len(),
                other.len()
            )));
        }
        for i in 0..self.values.len() {
            let name = &self.names[i];
            let src = other
                .id(name)
                .map(|id| other.get(id))
                .ok_or_else(|| Error::Format(format!("missing parameter '{name}'")))?;
            if src.shape() != self.values[i].shape() {
                return Err(Error::Format(format!(
                    "parameter '{name}' has shape {:?}, expected {:?}",
                    src.shape(),
                    self.values[i].shape()
                )));
            }
            self.values[i] = src.clone();
        }
        Ok(())
    }

    /// `{version, params: {name -> {shape, data}}}` with names sorted.
    pub fn to_json_value(&self) -> serde_json::Value {
        let params = self
            .iter()
            .map(|(_, n, v)| {
                (
                    n.to_string(),
                    ParamEntry {
                        shape: v.shape().to_vec(),
                        data: v.data().to_vec(),
                    },
                )
            })
            .collect();
        serde_json::to_value(ParamFile {
            version: PARAM_FORMAT_VERSION,
            params,
        })
        .expect("parameter map serializes")
    }

    /// Loads a map written by [`ParamStore::to_json_value`]. Entries come back
    /// in name order; use [`ParamStore::assign_from`] to restore a model.
    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let file: ParamFile = serde_json::from_value(value)?;
        if file.version != PARAM_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported parameter format version {} (expected {PARAM_FORMAT_VERSION})",
                file.version
            )));
        }
        let mut store = ParamStore::new();
        for (name, entry) in file.params {
            store.add(name, Tensor::new(entry.shape, entry.data)?)?;
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_exact() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::row(&[0.1, -1.0 / 3.0, 1e-300])).unwrap();
        s.add("b", Tensor::scalar(std::f64::consts::PI)).unwrap();
        let loaded = ParamStore::from_json_value(s.to_json_value()).unwrap();
        let mut restored = s.clone();
        for id in restored.ids().collect::<Vec<_>>() {
            restored.get_mut(id).data_mut().fill(0.0);
        }
        restored.assign_from(&loaded).unwrap();
        assert_eq!(restored, s);
    }

    #[test]
    fn rejects_other_versions() {
        let mut v = ParamStore::new().to_json_value();
        v["version"] = serde_json::json!(99);
        assert!(matches!(ParamStore::from_json_value(v), Err(Error::Format(_))));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(1.0)).unwrap();
        assert!(s.add("w", Tensor::scalar(2.0)).is_err());
    }
}
