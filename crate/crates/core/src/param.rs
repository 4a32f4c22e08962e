//! Named parameters, the store that owns them, and the allocation plan.
//!
//! Models are described twice over the same data: a [`ParamPlan`] lists every
//! parameter (name, shape, trainable flag, initializer) without allocating,
//! and a [`ParamStore`] materializes the plan into tensors. Parameter
//! accounting runs on the plan, so counting a full-scale configuration never
//! allocates its weights.
//!
//! Initialization is keyed by `(seed, name)`, not by registration order:
//! two configurations that share a parameter name initialize it identically,
//! which is what makes gate-zero model comparisons exact.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle into a [`ParamStore`] / [`ParamPlan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// One named, possibly frozen, tensor of weights.
#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub name: String,
    pub trainable: bool,
    pub tensor: Tensor<T>,
}

/// How a parameter is filled at materialization time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Zero-mean Gaussian with the given standard deviation.
    Normal {
        std: f64,
    },
}

#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub init: Init,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Ordered list of parameter specs; the ordering defines [`ParamId`] values.
#[derive(Debug, Clone, Default)]
pub struct ParamPlan {
    specs: Vec<ParamSpec>,
    index: HashMap<String, usize>,
}

impl ParamPlan {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a parameter; names must be unique.
    pub fn add(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        trainable: bool,
        init: Init,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        let id = ParamId(self.specs.len());
        self.index.insert(name.clone(), id.0);
        self.specs.push(ParamSpec {
            name,
            shape,
            trainable,
            init,
        });
        Ok(id)
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn spec(&self, id: ParamId) -> &ParamSpec {
        &self.specs[id.0]
    }

    /// Total trainable element count.
    pub fn trainable_numel(&self) -> usize {
        self.specs
            .iter()
            .filter(|s| s.trainable)
            .map(|s| s.numel())
            .sum()
    }

    /// Trainable element count over parameters whose name passes the filter.
    pub fn trainable_numel_where(&self, pred: impl Fn(&str) -> bool) -> usize {
        self.specs
            .iter()
            .filter(|s| s.trainable && pred(&s.name))
            .map(|s| s.numel())
            .sum()
    }
}

/// Materialized parameters. `ParamId`s from the originating plan index it.
#[derive(Debug, Clone)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
}

impl<T: Scalar> ParamStore<T> {
    /// Allocate and initialize every parameter in the plan.
    pub fn materialize(plan: &ParamPlan, seed: u64) -> Self {
        let params = plan
            .specs
            .iter()
            .map(|spec| Parameter {
                name: spec.name.clone(),
                trainable: spec.trainable,
                tensor: init_tensor(&spec.shape, spec.init, seed, &spec.name),
            })
            .collect();
        ParamStore { params }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].tensor
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.params[id.0].trainable
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Add `delta` into the parameter's gradient buffer, creating it if absent.
    pub fn accumulate_grad(&mut self, id: ParamId, delta: &[T]) {
        let grad = self.params[id.0].tensor.ensure_grad();
        debug_assert_eq!(grad.len(), delta.len());
        for (g, d) in grad.iter_mut().zip(delta.iter()) {
            *g = *g + *d;
        }
    }

    /// Drop all gradient buffers.
    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.tensor.clear_grad();
        }
    }

    /// SHA-256 over all frozen parameters (sorted by name): name, shape,
    /// then raw little-endian element bits. Byte-equal digests before and
    /// after training are the freeze contract.
    pub fn frozen_digest(&self) -> [u8; 32] {
        let mut order: Vec<&Parameter<T>> = self.params.iter().filter(|p| !p.trainable).collect();
        order.sort_by(|a, b| a.name.cmp(&b.name));
        let mut hasher = Sha256::new();
        for p in order {
            hasher.update(p.name.as_bytes());
            hasher.update([0u8]);
            for extent in p.tensor.shape() {
                hasher.update((*extent as u32).to_le_bytes());
            }
            let mut bytes = Vec::with_capacity(p.tensor.numel() * 8);
            for v in p.tensor.data() {
                v.append_le_bytes(&mut bytes);
            }
            hasher.update(&bytes);
        }
        hasher.finalize().into()
    }
}

/// RNG keyed by `(seed, name)` so initialization does not depend on the
/// order parameters were registered in.
fn param_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

fn init_tensor<T: Scalar>(shape: &[usize], init: Init, seed: u64, name: &str) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = match init {
        Init::Zeros => vec![T::zero(); n],
        Init::Ones => vec![T::one(); n],
        Init::Normal { std } => {
            let mut rng = param_rng(seed, name);
            let dist = Normal::new(0.0, std).expect("std must be finite and positive");
            (0..n).map(|_| T::from_f64(dist.sample(&mut rng))).collect()
        }
    };
    Tensor::new(shape.to_vec(), data).expect("shape/data length consistent by construction")
}
