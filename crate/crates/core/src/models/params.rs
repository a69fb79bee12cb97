use std::fmt::Write as _;

use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: Tensor,
    pub is_batchnorm: bool,
    /// False for running statistics.
    pub trainable: bool,
}

/// Ordered named parameters: the unit exchanged between clients and server.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor, is_batchnorm: bool, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::Structure(format!("duplicate parameter `{name}`")));
        }
        self.entries.push(ParamEntry {
            name,
            tensor,
            is_batchnorm,
            trainable,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .map(|e| &e.tensor)
            .ok_or_else(|| Error::Structure(format!("no parameter `{name}`")))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|e| e.name == name)
            .map(|e| &mut e.tensor)
            .ok_or_else(|| Error::Structure(format!("no parameter `{name}`")))
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    pub fn has_batchnorm(&self) -> bool {
        self.entries.iter().any(|e| e.is_batchnorm)
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.tensor.is_finite())
    }

    /// Same names, order, shapes and tags.
    pub fn check_compatible(&self, other: &ParamSet) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Structure(format!(
                "{} parameters vs {}",
                self.len(),
                other.len()
            )));
        }
        for (a, b) in self.entries.iter().zip(&other.entries) {
            if a.name != b.name
                || a.tensor.shape() != b.tensor.shape()
                || a.is_batchnorm != b.is_batchnorm
                || a.trainable != b.trainable
            {
                return Err(Error::Structure(format!(
                    "parameter `{}` {:?} does not match `{}` {:?}",
                    a.name,
                    a.tensor.shape(),
                    b.name,
                    b.tensor.shape()
                )));
            }
        }
        Ok(())
    }

    /// Euclidean distance over the entries accepted by `keep`.
    pub fn distance(&self, other: &ParamSet, keep: impl Fn(&ParamEntry) -> bool) -> Result<f64> {
        self.check_compatible(other)?;
        let mut s = 0.0;
        for (a, b) in self.entries.iter().zip(&other.entries) {
            if keep(a) {
                s += a
                    .tensor
                    .data()
                    .iter()
                    .zip(b.tensor.data())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>();
            }
        }
        Ok(s.sqrt())
    }

    /// Copy every entry accepted by `take` from `src`.
    pub fn overwrite_from(&mut self, src: &ParamSet, take: impl Fn(&ParamEntry) -> bool) -> Result<()> {
        self.check_compatible(src)?;
        for (dst, s) in self.entries.iter_mut().zip(&src.entries) {
            if take(s) {
                dst.tensor = s.tensor.clone();
            }
        }
        Ok(())
    }

    /// Plain-text form: one tab-separated line per entry with name, bn flag,
    /// trainable flag, shape and values. Values use the shortest round-trip
    /// representation so the text is byte-stable.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let shape: Vec<String> = e.tensor.shape().iter().map(|d| d.to_string()).collect();
            let values: Vec<String> = e.tensor.data().iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                e.name,
                u8::from(e.is_batchnorm),
                u8::from(e.trainable),
                shape.join("x"),
                values.join(" ")
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<ParamSet> {
        let mut set = ParamSet::new();
        for (no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Parse(format!("parameter line {}: {what}", no + 1));
            let fields: Vec<&str> = line.split('\t').collect();
            let [name, bn, trainable, shape, values] = fields[..] else {
                return Err(bad("expected 5 tab-separated fields"));
            };
            let flag = |s: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad("flag must be 0 or 1")),
            };
            let shape: Vec<usize> = shape
                .split('x')
                .map(|d| d.parse().map_err(|_| bad("bad shape")))
                .collect::<Result<_>>()?;
            let data: Vec<f64> = values
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad("bad value")))
                .collect::<Result<_>>()?;
            set.push(name, Tensor::new(shape, data)?, flag(bn)?, flag(trainable)?)?;
        }
        Ok(set)
    }
}
