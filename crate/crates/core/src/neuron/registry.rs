use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{IzhikevichVanilla, Lif, NeuronFamily, NeuronModel, NeuronParams, Qif, Sit};
use crate::error::{Error, Result};

type Builder = Box<dyn Fn(NeuronParams) -> Result<Arc<dyn NeuronModel>> + Send + Sync>;

struct Entry {
    defaults: NeuronParams,
    build: Builder,
}

/// Neuron models registered by name.
///
/// `builtin()` holds `lif`, `qif`, `izhikevich`, `sit` and `sit-bursting`.
pub struct NeuronRegistry {
    entries: BTreeMap<String, Entry>,
}

impl NeuronRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut registry = Self::empty();
        registry.register("lif", NeuronParams::lif(super::DEFAULT_TAU), |p| {
            Ok(Arc::new(Lif::new(p)?))
        });
        registry.register("qif", NeuronParams::qif(), |p| Ok(Arc::new(Qif::new(p)?)));
        registry.register("izhikevich", NeuronParams::izhikevich_tonic(), |p| {
            Ok(Arc::new(IzhikevichVanilla::new(p)?))
        });
        registry.register("sit", NeuronParams::sit(), |p| {
            Ok(Arc::new(Sit::named("sit", p)?))
        });
        registry.register("sit-bursting", NeuronParams::sit_bursting(), |p| {
            Ok(Arc::new(Sit::named("sit-bursting", p)?))
        });
        registry
    }

    pub fn register<B>(&mut self, name: &str, defaults: NeuronParams, build: B)
    where
        B: Fn(NeuronParams) -> Result<Arc<dyn NeuronModel>> + Send + Sync + 'static,
    {
        self.entries.insert(
            name.to_string(),
            Entry {
                defaults,
                build: Box::new(build),
            },
        );
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn defaults(&self, name: &str) -> Result<&NeuronParams> {
        self.entry(name).map(|e| &e.defaults)
    }

    pub fn create(&self, name: &str) -> Result<Arc<dyn NeuronModel>> {
        self.create_with(name, &ParamOverrides::default())
    }

    pub fn create_with(&self, name: &str, overrides: &ParamOverrides) -> Result<Arc<dyn NeuronModel>> {
        let entry = self.entry(name)?;
        (entry.build)(overrides.apply(entry.defaults.clone()))
    }

    fn entry(&self, name: &str) -> Result<&Entry> {
        let key = name.to_ascii_lowercase();
        self.entries
            .get(&key)
            .ok_or_else(|| Error::UnknownModel(name.to_string()))
    }
}

impl Default for NeuronRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Builds the model for a fully specified parameter set, e.g. one read back
/// from a checkpoint.
pub fn model_for(name: &str, params: NeuronParams) -> Result<Arc<dyn NeuronModel>> {
    Ok(match params.family {
        NeuronFamily::Lif => Arc::new(Lif::new(params)?),
        NeuronFamily::Qif => Arc::new(Qif::new(params)?),
        NeuronFamily::IzhikevichVanilla => Arc::new(IzhikevichVanilla::new(params)?),
        NeuronFamily::Sit => Arc::new(Sit::named(name, params)?),
    })
}

/// Optional replacements for individual neuron constants.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub d: Option<f64>,
    pub k: Option<f64>,
    pub u_r: Option<f64>,
    pub u_c: Option<f64>,
    pub tau: Option<f64>,
    pub u_threshold: Option<f64>,
    pub u_reset: Option<f64>,
    pub corrected_form: Option<bool>,
}

impl ParamOverrides {
    pub fn apply(&self, mut params: NeuronParams) -> NeuronParams {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(value) = self.$field { params.$field = value; })*
            };
        }
        set!(a, b, c, d, k, u_r, u_c, tau, u_threshold, u_reset, corrected_form);
        params
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}
