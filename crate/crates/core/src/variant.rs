//! Ablation variants: which feature parts a pipeline may weight.
//!
//! * `A` uses prototype distances only.
//! * `B` adds anchor-point distances.
//! * `C` adds anchor-point directions.
//! * `D` uses all three parts.
//!
//! All variants share the same fitted mappers for a given seed; they differ
//! only in the fusion weights they are allowed to use.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LdlError, Result};
use crate::lsf::FusionWeights;

/// How fusion weights are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSpec {
    Fixed(FusionWeights),
    /// Validation search over the simplex lattice with this spacing.
    Grid { step: f64 },
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Grid { step: 0.05 }
    }
}

impl std::str::FromStr for WeightSpec {
    type Err = LdlError;

    /// `grid`, `grid:STEP` or `l,m,e`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "grid" {
            return Ok(WeightSpec::default());
        }
        if let Some(step) = s.strip_prefix("grid:") {
            let step: f64 = step
                .parse()
                .map_err(|_| LdlError::InvalidArgument(format!("bad grid step `{step}`")))?;
            FusionWeights::lattice(step)?;
            return Ok(WeightSpec::Grid { step });
        }
        Ok(WeightSpec::Fixed(s.parse()?))
    }
}

/// An ablation variant.
pub trait Variant: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    /// Candidate weights under `spec`, in selection order. A single
    /// candidate means no search is needed.
    fn candidates(&self, spec: &WeightSpec) -> Result<Vec<FusionWeights>>;
}

/// Restricts weights to a face of the simplex. `active` flags which of
/// `(lambda, mu, epsilon)` may be non-zero.
struct Face {
    name: &'static str,
    description: &'static str,
    active: [bool; 3],
}

impl Face {
    fn admits(&self, w: &FusionWeights) -> bool {
        [w.lambda, w.mu, w.epsilon]
            .iter()
            .zip(self.active)
            .all(|(v, on)| on || *v == 0.0)
    }

    // zero the inactive weights and rescale the rest to sum to one
    fn project(&self, w: &FusionWeights) -> Result<FusionWeights> {
        let mut v = [w.lambda, w.mu, w.epsilon];
        for (x, on) in v.iter_mut().zip(self.active) {
            if !on {
                *x = 0.0;
            }
        }
        let total: f64 = v.iter().sum();
        if total <= 0.0 {
            let k = self.active.iter().filter(|a| **a).count() as f64;
            for (x, on) in v.iter_mut().zip(self.active) {
                *x = if on { 1.0 / k } else { 0.0 };
            }
        } else {
            v.iter_mut().for_each(|x| *x /= total);
        }
        FusionWeights::new(v[0], v[1], v[2])
    }
}

impl Variant for Face {
    fn name(&self) -> &'static str {
        self.name
    }

    fn description(&self) -> &'static str {
        self.description
    }

    fn candidates(&self, spec: &WeightSpec) -> Result<Vec<FusionWeights>> {
        match spec {
            WeightSpec::Fixed(w) => Ok(vec![self.project(w)?]),
            WeightSpec::Grid { step } => {
                let grid: Vec<FusionWeights> = FusionWeights::lattice(*step)?
                    .into_iter()
                    .filter(|w| self.admits(w))
                    .collect();
                Ok(grid)
            }
        }
    }
}

pub fn variant_a() -> Arc<dyn Variant> {
    Arc::new(Face {
        name: "A",
        description: "prototype distances only",
        active: [true, false, false],
    })
}

pub fn variant_b() -> Arc<dyn Variant> {
    Arc::new(Face {
        name: "B",
        description: "prototype and anchor-point distances",
        active: [true, true, false],
    })
}

pub fn variant_c() -> Arc<dyn Variant> {
    Arc::new(Face {
        name: "C",
        description: "prototype distances and anchor-point directions",
        active: [true, false, true],
    })
}

pub fn variant_d() -> Arc<dyn Variant> {
    Arc::new(Face {
        name: "D",
        description: "all feature parts",
        active: [true, true, true],
    })
}

/// Variants selectable by name.
#[derive(Clone)]
pub struct VariantRegistry {
    entries: Vec<Arc<dyn Variant>>,
}

impl Default for VariantRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

impl VariantRegistry {
    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn standard() -> Self {
        let mut r = Self::empty();
        for v in [variant_a(), variant_b(), variant_c(), variant_d()] {
            r.register(v);
        }
        r
    }

    pub fn register(&mut self, variant: Arc<dyn Variant>) {
        match self.entries.iter().position(|v| v.name() == variant.name()) {
            Some(i) => self.entries[i] = variant,
            None => self.entries.push(variant),
        }
    }

    /// Case-insensitive lookup.
    pub fn get(&self, name: &str) -> Result<Arc<dyn Variant>> {
        self.entries
            .iter()
            .find(|v| v.name().eq_ignore_ascii_case(name))
            .cloned()
            .ok_or_else(|| LdlError::UnknownStrategy {
                kind: "variant",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|v| v.name()).collect()
    }
}
