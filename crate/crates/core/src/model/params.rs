use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tracing::debug;

use super::ModelError;

/// Named trainable tensors, initialized from a seeded generator so that
/// model construction is reproducible.
#[derive(Debug)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    device: Device,
}

/// Deep copy of parameter values.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub tensors: HashMap<String, Tensor>,
}

impl ParamStore {
    pub fn new(dtype: DType, device: Device) -> Self {
        Self { vars: BTreeMap::new(), dtype, device }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn insert(&mut self, name: &str, tensor: Tensor) -> Result<Var, ModelError> {
        if self.vars.contains_key(name) {
            return Err(ModelError::Config(format!("parameter {name} defined twice")));
        }
        let var = Var::from_tensor(&tensor.to_dtype(self.dtype)?)?;
        self.vars.insert(name.to_string(), var.clone());
        Ok(var)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Result<Var, ModelError> {
        let dist = Normal::new(0.0, std).map_err(|e| ModelError::Config(e.to_string()))?;
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
        self.insert(name, Tensor::from_vec(data, shape, &self.device)?)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<Var, ModelError> {
        self.insert(name, Tensor::zeros(shape, DType::F64, &self.device)?)
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) -> Result<Var, ModelError> {
        self.insert(name, Tensor::ones(shape, DType::F64, &self.device)?)
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn snapshot(&self) -> Result<Snapshot, ModelError> {
        let tensors = self
            .vars
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.as_tensor().copy()?)))
            .collect::<Result<_, ModelError>>()?;
        Ok(Snapshot { tensors })
    }

    pub fn restore(&self, snapshot: &Snapshot) -> Result<(), ModelError> {
        for (name, var) in &self.vars {
            let t = snapshot.tensors.get(name).ok_or_else(|| ModelError::MissingWeight(name.clone()))?;
            var.set(t)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let map: HashMap<String, Tensor> = self.vars.iter().map(|(k, v)| (k.clone(), v.as_tensor().clone())).collect();
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }

    /// Loads every parameter from a file written by [`ParamStore::save`].
    pub fn load(&self, path: &Path) -> Result<(), ModelError> {
        let tensors = candle_core::safetensors::load(path, &self.device)?;
        for (name, var) in &self.vars {
            let t = tensors.get(name).ok_or_else(|| ModelError::MissingWeight(name.clone()))?;
            set_checked(name, var, t)?;
        }
        Ok(())
    }

    /// Loads a Hugging Face encoder checkpoint into the parameters under
    /// `prefix`. Checkpoint names may carry a `bert.`/`roberta.` prefix and
    /// legacy `gamma`/`beta` LayerNorm names. Returns the number of tensors
    /// loaded; parameters absent from the file keep their initialization.
    pub fn load_pretrained(&self, prefix: &str, path: &Path) -> Result<usize, ModelError> {
        let raw = candle_core::safetensors::load(path, &self.device)?;
        let mut by_name = HashMap::new();
        for (name, t) in raw {
            by_name.insert(normalize_hf_name(&name), t);
        }
        let mut loaded = 0;
        for (name, var) in self.vars.range(prefix.to_string()..) {
            let Some(local) = name.strip_prefix(prefix) else { break };
            if let Some(t) = by_name.get(local) {
                set_checked(name, var, t)?;
                loaded += 1;
            } else {
                debug!(param = %name, "not in pretrained checkpoint, keeping initialization");
            }
        }
        Ok(loaded)
    }

    /// True if the pretrained file has a tensor for `local` (a name relative
    /// to the encoder, e.g. `pooler.dense.weight`).
    pub fn checkpoint_has(path: &Path, local: &str) -> Result<bool, ModelError> {
        // the file opens with a little-endian u64 header length and a JSON header keyed by tensor name
        let io = |e: std::io::Error| ModelError::Io(path.display().to_string(), e);
        let mut file = std::fs::File::open(path).map_err(io)?;
        let mut len = [0u8; 8];
        file.read_exact(&mut len).map_err(io)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        file.read_exact(&mut header).map_err(io)?;
        let names: HashMap<String, serde_json::Value> = serde_json::from_slice(&header)
            .map_err(|e| ModelError::Config(format!("{}: bad safetensors header: {e}", path.display())))?;
        Ok(names.keys().any(|name| normalize_hf_name(name) == local))
    }
}

fn set_checked(name: &str, var: &Var, t: &Tensor) -> Result<(), ModelError> {
    if t.dims() != var.dims() {
        return Err(ModelError::ShapeMismatch(format!("{name}: checkpoint {:?}, model {:?}", t.dims(), var.dims())));
    }
    var.set(&t.to_dtype(var.dtype())?)?;
    Ok(())
}

fn normalize_hf_name(name: &str) -> String {
    let stripped = ["bert.", "roberta."].iter().find_map(|p| name.strip_prefix(p)).unwrap_or(name);
    if let Some(base) = stripped.strip_suffix(".gamma") {
        format!("{base}.weight")
    } else if let Some(base) = stripped.strip_suffix(".beta") {
        format!("{base}.bias")
    } else {
        stripped.to_string()
    }
}

/// Child generator seeded from `rng`, so one root seed drives every
/// randomized component in a fixed order.
pub fn child_rng(rng: &mut ChaCha8Rng) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(rng.random::<u64>())
}
