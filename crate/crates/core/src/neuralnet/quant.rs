use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralnet::Real;

/// Per-tensor symmetric int8 quantization.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedTensor {
    pub scale: f32,
    pub values: Vec<i8>,
}

impl QuantizedTensor {
    /// `scale = max|v| / 127`; an all-zero tensor gets scale 1.
    pub fn quantize<T: Real>(data: &[T]) -> Result<QuantizedTensor> {
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("value {i} cannot be quantized")));
        }
        let max = data.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
        let scale = if max == 0.0 { 1.0 } else { max / 127.0 };
        let values = data
            .iter()
            .map(|v| (v.as_f64() / scale).round().clamp(-127.0, 127.0) as i8)
            .collect();
        Ok(QuantizedTensor {
            scale: scale as f32,
            values,
        })
    }

    pub fn dequantize<T: Real>(&self) -> Vec<T> {
        let s = f64::from(self.scale);
        self.values.iter().map(|&q| T::lit(f64::from(q) * s)).collect()
    }
}

/// Sizes of a model before and after quantization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeReport {
    pub param_count: usize,
    pub float_bytes: usize,
    pub quantized_bytes: usize,
}
