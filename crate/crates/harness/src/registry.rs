use std::collections::BTreeMap;

use loadbench_core::baselines::{DecompositionForecaster, SarimaForecaster, SeasonalNaive};
use loadbench_core::forecast::{Forecaster, SampleMethod};
use thiserror::Error;

use crate::adapter::{AdapterError, AdapterForecaster};
use crate::config::SweepConfig;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("model {0} is not registered")]
    Unknown(String),
    #[error("adapter for {model}: {source}")]
    Adapter {
        model: String,
        #[source]
        source: AdapterError,
    },
}

pub enum ModelEntry {
    Native {
        forecaster: Box<dyn Forecaster<f64>>,
        /// Conversion used when the forecast carries quantiles but no samples.
        sample_method: SampleMethod,
    },
    Adapter(AdapterForecaster),
}

impl std::fmt::Debug for ModelEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelEntry::Native { forecaster, .. } => write!(f, "Native({})", forecaster.model_id()),
            ModelEntry::Adapter(a) => write!(f, "Adapter({})", a.info().model_id),
        }
    }
}

/// Model id to forecaster.
#[derive(Debug, Default)]
pub struct Registry {
    entries: BTreeMap<String, ModelEntry>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The three native baselines. Their quantiles are exact Gaussians, so
    /// samples come from the fitted Gaussian.
    pub fn with_natives() -> Self {
        let mut r = Self::new();
        r.register_native(SeasonalNaive, SampleMethod::FittedGaussian);
        r.register_native(SarimaForecaster::default(), SampleMethod::FittedGaussian);
        r.register_native(DecompositionForecaster::default(), SampleMethod::FittedGaussian);
        r
    }

    pub fn register_native(&mut self, forecaster: impl Forecaster<f64> + 'static, sample_method: SampleMethod) {
        self.entries.insert(
            forecaster.model_id().to_string(),
            ModelEntry::Native {
                forecaster: Box::new(forecaster),
                sample_method,
            },
        );
    }

    pub fn register_adapter(&mut self, model_id: &str, adapter: AdapterForecaster) {
        self.entries.insert(model_id.to_string(), ModelEntry::Adapter(adapter));
    }

    /// Natives plus one handshaken adapter per non-native model in the
    /// config. Fails before any task runs if a handshake fails.
    pub fn from_config(config: &SweepConfig) -> Result<Self, RegistryError> {
        let mut r = Self::with_natives();
        for model in &config.models {
            if r.entries.contains_key(model) {
                continue;
            }
            let adapter = AdapterForecaster::connect(model.clone(), config.adapter_for(model)).map_err(|source| {
                RegistryError::Adapter {
                    model: model.clone(),
                    source,
                }
            })?;
            r.register_adapter(model, adapter);
        }
        Ok(r)
    }

    pub fn get(&self, model_id: &str) -> Option<&ModelEntry> {
        self.entries.get(model_id)
    }

    pub fn ensure_resolvable<'a>(&self, models: impl IntoIterator<Item = &'a str>) -> Result<(), RegistryError> {
        for m in models {
            if !self.entries.contains_key(m) {
                return Err(RegistryError::Unknown(m.to_string()));
            }
        }
        Ok(())
    }

    pub fn model_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}
