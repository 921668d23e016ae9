use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralnet::Real;

/// Dense tensor: a shape and row-major data.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Tensor<T>> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor<T> {
        let n = shape.iter().product();
        Tensor { shape, data: vec![T::zero(); n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Name and shape of one parameter tensor inside a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Declaration-ordered registry of parameter tensors packed into one flat
/// vector. Layers keep offsets into that vector.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParamLayout {
    specs: Vec<ParamSpec>,
    total: usize,
}

impl ParamLayout {
    pub fn new() -> ParamLayout {
        ParamLayout::default()
    }

    /// Reserve a tensor and return its offset.
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let offset = self.total;
        let spec = ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            offset,
        };
        self.total += spec.len();
        self.specs.push(spec);
        offset
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    /// Total number of scalar parameters.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn get(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    /// Rebuild offsets from names and shapes, e.g. after deserialization.
    pub fn from_specs(specs: Vec<ParamSpec>) -> ParamLayout {
        let mut layout = ParamLayout::new();
        for s in specs {
            layout.add(s.name, &s.shape);
        }
        layout
    }

    /// Copy each tensor out of a flat vector.
    pub fn tensors<T: Real>(&self, flat: &[T]) -> Vec<(String, Tensor<T>)> {
        self.specs
            .iter()
            .map(|s| {
                (
                    s.name.clone(),
                    Tensor {
                        shape: s.shape.clone(),
                        data: flat[s.range()].to_vec(),
                    },
                )
            })
            .collect()
    }
}

/// Global L2 norm of a gradient vector.
pub fn l2_norm<T: Real>(g: &[T]) -> f64 {
    g.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt()
}

/// Rescale `g` so its L2 norm is at most `max_norm`. Returns the norm before
/// clipping.
pub fn clip_grad_norm<T: Real>(g: &mut [T], max_norm: f64) -> f64 {
    let norm = l2_norm(g);
    if norm > max_norm && norm > 0.0 {
        let s = T::lit(max_norm / norm);
        g.iter_mut().for_each(|v| *v *= s);
    }
    norm
}
