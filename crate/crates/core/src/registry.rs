//! Name-keyed factories for interchangeable strategies.
//!
//! Every pluggable family in the crate (optimizers, text decoding, synthesis
//! stage clients, feature encoders) exposes a `Registry` pre-populated with the
//! built-in implementations. Callers select an entry by name from config or
//! the command line and may register their own.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

type Factory<C, T> = Box<dyn Fn(&C) -> Result<Box<T>> + Send + Sync>;

pub struct Registry<C, T: ?Sized> {
    kind: &'static str,
    factories: BTreeMap<String, Factory<C, T>>,
}

impl<C, T: ?Sized> Registry<C, T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            factories: BTreeMap::new(),
        }
    }

    /// Adds or replaces the factory registered under `name`.
    pub fn register<F>(&mut self, name: impl Into<String>, factory: F) -> &mut Self
    where
        F: Fn(&C) -> Result<Box<T>> + Send + Sync + 'static,
    {
        self.factories.insert(name.into(), Box::new(factory));
        self
    }

    pub fn build(&self, name: &str, config: &C) -> Result<Box<T>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownEntry {
                kind: self.kind,
                name: name.to_string(),
            })?;
        factory(config)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }
}

impl<C, T: ?Sized> std::fmt::Debug for Registry<C, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("names", &self.factories.keys().collect::<Vec<_>>())
            .finish()
    }
}
