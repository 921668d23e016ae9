use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::hiermodel::{HierModel, ModelConfig};
use crate::neuralnet::container::{Blob, Container, StorageKind};
use crate::neuralnet::quant::{QuantizedTensor, SizeReport};
use crate::neuralnet::{DType, ParamSpec, Real};

pub const FORMAT_NAME: &str = "hiercase-model";

/// Header stored in front of the parameter tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format: String,
    pub preset: String,
    pub config: ModelConfig,
    pub features: FeatureConfig,
    pub beam: usize,
    pub dtype: String,
    pub param_count: usize,
    pub seed: u64,
    pub tensors: Vec<ParamSpec>,
}

fn dtype_name(kind: StorageKind) -> &'static str {
    match kind {
        StorageKind::F32 => "f32",
        StorageKind::F64 => "f64",
        StorageKind::Int8 => "int8",
    }
}

impl<T: Real> HierModel<T> {
    pub fn manifest(&self, kind: StorageKind) -> ModelManifest {
        ModelManifest {
            format: FORMAT_NAME.into(),
            preset: self.config.preset.clone(),
            config: self.config.clone(),
            features: self.features.clone(),
            beam: self.config.beam,
            dtype: dtype_name(kind).into(),
            param_count: self.param_count(),
            seed: self.seed,
            tensors: self.layout.specs().to_vec(),
        }
    }

    fn container(&self, kind: StorageKind) -> Result<Container> {
        let manifest = serde_json::to_value(self.manifest(kind))?;
        let mut blobs = Vec::with_capacity(self.layout.specs().len());
        for spec in self.layout.specs() {
            let data = &self.params[spec.range()];
            blobs.push(match kind {
                StorageKind::F32 => Blob::F32(data.iter().map(|v| v.as_f64() as f32).collect()),
                StorageKind::F64 => Blob::F64(data.iter().map(|v| v.as_f64()).collect()),
                StorageKind::Int8 => Blob::Int8(QuantizedTensor::quantize(data)?),
            });
        }
        Ok(Container { kind, manifest, blobs })
    }

    /// Serialize in the model's own precision.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let kind = match T::DTYPE {
            DType::F32 => StorageKind::F32,
            DType::F64 => StorageKind::F64,
        };
        self.container(kind)?.to_bytes()
    }

    /// Serialize with per-tensor int8 quantization.
    pub fn to_quantized_bytes(&self) -> Result<Vec<u8>> {
        self.container(StorageKind::Int8)?.to_bytes()
    }

    pub fn size_report(&self) -> Result<SizeReport> {
        Ok(SizeReport {
            param_count: self.param_count(),
            float_bytes: self.cast::<f32>().to_bytes()?.len(),
            quantized_bytes: self.to_quantized_bytes()?.len(),
        })
    }

    /// Float model holding the dequantized int8 parameters.
    pub fn quantized(&self) -> Result<HierModel<T>> {
        HierModel::from_bytes(&self.to_quantized_bytes()?)
    }

    /// Load any stored precision; int8 parameters are dequantized.
    pub fn from_bytes(bytes: &[u8]) -> Result<HierModel<T>> {
        let c = Container::from_bytes(bytes)?;
        let manifest = read_manifest(&c)?;
        let mut model = HierModel::<T>::zeros(manifest.config.clone())?;
        let expected: Vec<(&str, &[usize])> =
            model.layout.specs().iter().map(|s| (s.name.as_str(), s.shape.as_slice())).collect();
        let found: Vec<(&str, &[usize])> =
            manifest.tensors.iter().map(|s| (s.name.as_str(), s.shape.as_slice())).collect();
        if expected != found || c.blobs.len() != expected.len() {
            return Err(Error::Config("tensor list does not match the model config".into()));
        }
        if manifest.features != manifest.config.features() {
            return Err(Error::Config("feature config does not match the model config".into()));
        }
        let mut params = Vec::with_capacity(model.param_count());
        for (blob, spec) in c.blobs.iter().zip(model.layout.specs()) {
            if blob.len() != spec.len() {
                return Err(Error::Config(format!(
                    "tensor {} holds {} values, expected {}",
                    spec.name,
                    blob.len(),
                    spec.len()
                )));
            }
            match blob {
                Blob::F32(v) => params.extend(v.iter().map(|&x| T::lit(f64::from(x)))),
                Blob::F64(v) => params.extend(v.iter().map(|&x| T::lit(x))),
                Blob::Int8(q) => params.extend(q.dequantize::<T>()),
            }
        }
        if let Some(i) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("stored parameter {i}")));
        }
        model.params = params;
        model.seed = manifest.seed;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<HierModel<T>> {
        HierModel::from_bytes(&std::fs::read(path)?)
    }
}

fn read_manifest(c: &Container) -> Result<ModelManifest> {
    let manifest: ModelManifest = serde_json::from_value(c.manifest.clone()).map_err(|e| Error::Format {
        offset: 13,
        reason: format!("manifest does not describe a model: {e}"),
    })?;
    if manifest.format != FORMAT_NAME {
        return Err(Error::Format {
            offset: 13,
            reason: format!("unexpected format {:?}", manifest.format),
        });
    }
    manifest.config.validate()?;
    Ok(manifest)
}

/// Read only the header of a model file.
pub fn read_model_manifest(bytes: &[u8]) -> Result<ModelManifest> {
    read_manifest(&Container::from_bytes(bytes)?)
}
