use std::collections::BTreeMap;

use rand::Rng;

use crate::autodiff::check::FD_FLOOR;
use crate::autodiff::{Tape, Tensor, Var};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named parameter tensors in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `tensor` under `name`. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.tensors.len());
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Mutable references to the tensors in `ids`, in that order.
    pub fn many_mut(&mut self, ids: &[ParamId]) -> Vec<&mut Tensor> {
        let mut wanted: Vec<Option<usize>> = vec![None; self.tensors.len()];
        for (k, id) in ids.iter().enumerate() {
            assert!(wanted[id.0].is_none(), "parameter listed twice");
            wanted[id.0] = Some(k);
        }
        let mut out: Vec<Option<&mut Tensor>> = (0..ids.len()).map(|_| None).collect();
        for (i, t) in self.tensors.iter_mut().enumerate() {
            if let Some(k) = wanted[i] {
                out[k] = Some(t);
            }
        }
        out.into_iter().map(|t| t.expect("every id resolved")).collect()
    }

    /// Records every parameter on `tape` as a trainable leaf.
    pub fn bind<'p>(&'p self, tape: &Tape<'p>) -> Bound {
        Bound {
            vars: self.tensors.iter().map(|t| tape.param(t)).collect(),
        }
    }
}

/// Tape handles for every parameter of a store.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradients for `ids`, zero where the loss did not reach a parameter.
    pub fn grads(&self, tape: &Tape<'_>, store: &ParamStore, ids: &[ParamId]) -> Vec<Tensor> {
        ids.iter()
            .map(|&id| {
                tape.grad(self.var(id)).unwrap_or_else(|| {
                    let t = store.get(id);
                    Tensor::zeros(t.rows, t.cols)
                })
            })
            .collect()
    }
}

/// Glorot-uniform matrix scaled by `gain`.
pub fn glorot<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    gain: f64,
) -> Tensor {
    let limit = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::new(rows, cols, data).expect("sized data")
}

/// Compares `analytic` gradients against central differences of `loss` on
/// up to `per_tensor` evenly spaced entries of each tensor in `ids`.
/// Returns the largest relative error seen.
///
/// Rounding noise in the differences grows with the loss value, so the
/// relative-error floor is [`FD_FLOOR`] times `max(1, |loss|)`.
pub fn sampled_gradient_check(
    store: &ParamStore,
    ids: &[ParamId],
    analytic: &[Tensor],
    per_tensor: usize,
    h: f64,
    mut loss: impl FnMut(&ParamStore) -> f64,
) -> f64 {
    let floor = FD_FLOOR * loss(store).abs().max(1.0);
    let mut work = store.clone();
    let mut worst = 0.0f64;
    for (id, grad) in ids.iter().zip(analytic) {
        let len = store.get(*id).len();
        let stride = (len / per_tensor.max(1)).max(1);
        for k in (0..len).step_by(stride).take(per_tensor) {
            let x = store.get(*id).data[k];
            work.get_mut(*id).data[k] = x + h;
            let plus = loss(&work);
            work.get_mut(*id).data[k] = x - h;
            let minus = loss(&work);
            work.get_mut(*id).data[k] = x;
            let numeric = (plus - minus) / (2.0 * h);
            let e = crate::autodiff::check::relative_error(grad.data[k], numeric, floor);
            worst = worst.max(e);
        }
    }
    worst
}
