use std::collections::BTreeMap;

use crate::tensor::{Real, Tape, Tensor, Var};
use crate::{Error, Result};

/// Ordered, named collection of parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T: Real = f32> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.entries.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self.entries.iter().map(|(n, t)| (n.clone(), t.cast())).collect(),
        }
    }

    /// Registers every tensor on `tape`: as named tracked leaves when
    /// `trainable`, otherwise as constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|(name, t)| {
                let v = if trainable {
                    tape.param(name.clone(), t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (name.clone(), v)
            })
            .collect();
        Bound { vars }
    }

    /// Checks names and shapes against an architecture listing.
    pub fn check_layout(&self, expected: &[(String, Vec<usize>)]) -> Result<()> {
        for (name, t) in &self.entries {
            match expected.iter().find(|(n, _)| n == name) {
                None => return Err(Error::UnknownParam(name.clone())),
                Some((_, shape)) if shape.as_slice() != t.shape() => {
                    return Err(Error::Shape(format!(
                        "parameter `{name}` has shape {:?}, architecture expects {shape:?}",
                        t.shape()
                    )))
                }
                Some(_) => {}
            }
        }
        if let Some((missing, _)) = expected.iter().find(|(n, _)| self.get(n).is_none()) {
            return Err(Error::MissingParam(missing.clone()));
        }
        Ok(())
    }
}

/// Parameter name → tape variable, as produced by [`ParamSet::bind`].
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    /// Replaces the variable bound to `name`.
    pub fn set(&mut self, name: &str, var: Var) {
        self.vars.insert(name.to_string(), var);
    }
}
