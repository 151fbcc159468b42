use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

use super::{NetSpec, ParamVector, Segment};

pub const CHECKPOINT_FORMAT: &str = "stepwise-rl/params";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Parameter checkpoint: a layout manifest plus the flat value array, stored as JSON.
///
/// Values are written in shortest round-trip decimal form (at most 17 significant
/// digits) and parsed with correct rounding, so a save/load cycle is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub tags: BTreeMap<String, String>,
    pub net: NetSpec,
    pub layout: Vec<Segment>,
    pub values: Vec<f64>,
}

fn field<T: DeserializeOwned>(obj: &Map<String, Value>, name: &str) -> Result<T> {
    let v = obj.get(name).ok_or_else(|| Error::Checkpoint {
        field: name.to_string(),
        message: "missing".into(),
    })?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Checkpoint {
        field: name.to_string(),
        message: e.to_string(),
    })
}

impl Checkpoint {
    pub fn new(net: &NetSpec, params: &ParamVector) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            tags: BTreeMap::new(),
            net: net.clone(),
            layout: params.layout().to_vec(),
            values: params.values().to_vec(),
        }
    }

    pub fn with_tag(mut self, key: &str, value: impl Into<String>) -> Self {
        self.tags.insert(key.to_string(), value.into());
        self
    }

    pub fn tag(&self, key: &str) -> Option<&str> {
        self.tags.get(key).map(String::as_str)
    }

    /// Validated network spec and parameters.
    pub fn params(&self) -> Result<(NetSpec, ParamVector)> {
        self.net.validate().map_err(|e| Error::Checkpoint {
            field: "net".into(),
            message: e.to_string(),
        })?;
        if self.layout != self.net.layout() {
            return Err(Error::Checkpoint {
                field: "layout".into(),
                message: "does not match the network spec".into(),
            });
        }
        let params = ParamVector::new(self.values.clone(), self.layout.clone()).map_err(|e| {
            Error::Checkpoint {
                field: "values".into(),
                message: e.to_string(),
            }
        })?;
        Ok((self.net.clone(), params))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text).map_err(|e| Error::Checkpoint {
            field: "<document>".into(),
            message: e.to_string(),
        })?;
        let obj = root.as_object().ok_or_else(|| Error::Checkpoint {
            field: "<document>".into(),
            message: "expected a JSON object".into(),
        })?;
        let format: String = field(obj, "format")?;
        if format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint {
                field: "format".into(),
                message: format!("expected `{CHECKPOINT_FORMAT}`, found `{format}`"),
            });
        }
        let version: u32 = field(obj, "version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint {
                field: "version".into(),
                message: format!("unsupported version {version}"),
            });
        }
        let ckpt = Checkpoint {
            format,
            version,
            tags: field(obj, "tags")?,
            net: field(obj, "net")?,
            layout: field(obj, "layout")?,
            values: field(obj, "values")?,
        };
        ckpt.params()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn corrupt_documents_name_the_field() {
        let spec = NetSpec::new(2, vec![3], 2).unwrap();
        let ck = Checkpoint::new(&spec, &spec.init_params(1));
        let mut v: Value = serde_json::from_str(&ck.to_json()).unwrap();
        v.as_object_mut().unwrap().remove("values");
        match Checkpoint::from_json(&v.to_string()) {
            Err(Error::Checkpoint { field, .. }) => assert_eq!(field, "values"),
            other => panic!("{other:?}"),
        }
        let mut v: Value = serde_json::from_str(&ck.to_json()).unwrap();
        v["values"].as_array_mut().unwrap().pop();
        match Checkpoint::from_json(&v.to_string()) {
            Err(Error::Checkpoint { field, .. }) => assert_eq!(field, "values"),
            other => panic!("{other:?}"),
        }
        let mut v: Value = serde_json::from_str(&ck.to_json()).unwrap();
        v["net"]["output_dim"] = Value::from(5);
        match Checkpoint::from_json(&v.to_string()) {
            Err(Error::Checkpoint { field, .. }) => assert_eq!(field, "layout"),
            other => panic!("{other:?}"),
        }
        assert!(Checkpoint::from_json("{not json").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in proptest::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 9)) {
            let spec = NetSpec::new(2, vec![2], 1).unwrap();
            let params = ParamVector::new(values, spec.layout()).unwrap();
            let ck = Checkpoint::new(&spec, &params).with_tag("encoder", "v1");
            let back = Checkpoint::from_json(&ck.to_json()).unwrap();
            let (_, p2) = back.params().unwrap();
            for (a, b) in params.values().iter().zip(p2.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(back.tag("encoder"), Some("v1"));
        }
    }
}
