use crate::error::{Result, TensorError};
use crate::graph::{Graph, NodeId};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use std::collections::BTreeMap;

/// Handle to a named parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor<f32>,
    /// Gradient harvested after the latest backward pass, if any.
    pub grad: Option<Tensor<f32>>,
    /// Adagrad squared-gradient accumulator; same shape as `value`.
    pub acc: Tensor<f32>,
}

/// Registry of trainable tensors. Parameters keep their insertion order,
/// so iteration (and therefore optimizer update order) is deterministic.
#[derive(Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a parameter. Names are unique; re-registering is a bug.
    pub fn add(&mut self, name: &str, value: Tensor<f32>) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(TensorError::Contract(format!("duplicate parameter {name:?}")));
        }
        let acc = Tensor::zeros(value.shape());
        self.params.push(Param { name: name.to_string(), value, grad: None, acc });
        let ix = self.params.len() - 1;
        self.by_name.insert(name.to_string(), ix);
        Ok(ParamId(ix))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor<f32> {
        &self.params[id.0].value
    }

    /// Iterate in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param)> {
        self.params.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of scalar parameters, over names accepted by `keep`.
    pub fn numel_where(&self, keep: impl Fn(&str) -> bool) -> usize {
        self.params.iter().filter(|p| keep(&p.name)).map(|p| p.value.numel()).sum()
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Mount every parameter onto a fresh graph as a leaf, in insertion
    /// order. Returns the node each ParamId was bound to.
    pub fn bind_all<T: Scalar>(&self, g: &mut Graph<T>) -> Vec<NodeId> {
        self.params.iter().map(|p| g.leaf(p.value.map_into::<T>())).collect()
    }

    /// Pull gradients off a graph after backward, converting to f32 and
    /// accumulating into each parameter's grad slot. Parameters the loss
    /// never touched keep `grad: None`.
    pub fn harvest_grads<T: Scalar>(&mut self, g: &Graph<T>, bound: &[NodeId]) -> Result<()> {
        if bound.len() != self.params.len() {
            return Err(TensorError::Contract(format!(
                "harvest_grads: {} bindings for {} params",
                bound.len(),
                self.params.len()
            )));
        }
        for (p, &node) in self.params.iter_mut().zip(bound) {
            if let Some(gr) = g.grad(node) {
                let gf: Vec<f32> = gr.iter().map(|x| x.to_f64() as f32).collect();
                let gt = Tensor::from_vec(p.value.shape(), gf)?;
                match &mut p.grad {
                    Some(existing) => {
                        for (dst, src) in existing.data_mut().iter_mut().zip(gt.data()) {
                            *dst += *src;
                        }
                    }
                    None => p.grad = Some(gt),
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::zeros(&[2, 2])).unwrap();
        assert!(store.add("w", Tensor::zeros(&[2, 2])).is_err());
    }

    #[test]
    fn numel_filter_counts_scalars() {
        let mut store = ParamStore::new();
        store.add("enc.w", Tensor::zeros(&[3, 4])).unwrap();
        store.add("aux.w", Tensor::zeros(&[5])).unwrap();
        assert_eq!(store.numel_where(|_| true), 17);
        assert_eq!(store.numel_where(|n| n.starts_with("enc.")), 12);
    }

    #[test]
    fn bind_and_harvest_round_trip() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap()).unwrap();
        let mut g = Graph::<f64>::new();
        let bound = store.bind_all(&mut g);
        let s = g.sum_all(bound[w.0]).unwrap();
        g.backward(s).unwrap();
        store.harvest_grads(&g, &bound).unwrap();
        assert_eq!(store.get(w).grad.as_ref().unwrap().data(), &[1.0, 1.0]);
    }
}
