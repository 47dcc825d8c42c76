use std::fmt;
use std::sync::Arc;

use crate::autodiff::{jet_seed, Jet2};
use crate::error::Result;

/// A closed-form scalar function of the input coordinates.
///
/// Written once against [`Jet2`] arithmetic, so evaluating it on coordinate
/// jets yields exact first and second derivatives alongside the value.
#[derive(Clone)]
pub struct Field {
    label: &'static str,
    f: Arc<dyn Fn(&[Jet2]) -> Jet2 + Send + Sync>,
}

impl Field {
    pub fn new(label: &'static str, f: impl Fn(&[Jet2]) -> Jet2 + Send + Sync + 'static) -> Self {
        Field {
            label,
            f: Arc::new(f),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Field::new("zero", move |_| Jet2::zero(dim))
    }

    pub fn label(&self) -> &'static str {
        self.label
    }

    pub fn apply(&self, coords: &[Jet2]) -> Jet2 {
        (self.f)(coords)
    }

    pub fn jet(&self, point: &[f64]) -> Result<Jet2> {
        Ok(self.apply(&jet_seed(point)?))
    }

    pub fn value(&self, point: &[f64]) -> f64 {
        // Value-only evaluation still goes through jets; fields are cheap
        // and evaluated once per point at setup.
        self.jet(point).map(|j| j.value).unwrap_or(f64::NAN)
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Field({})", self.label)
    }
}
