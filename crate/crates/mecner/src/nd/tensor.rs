//! Dense row-major tensors and the named parameter store.

use std::collections::HashMap;

use rand::Rng;

/// Dense numeric array with a shape and an optional gradient buffer.
///
/// Values are 64-bit floats in row-major order. The gradient, when
/// present, always has the same number of elements as `values`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: &[usize], values: Vec<f64>) -> Self {
        let numel: usize = shape.iter().product();
        assert!(
            shape.iter().all(|&d| d > 0),
            "tensor extents must be positive, got {shape:?}"
        );
        assert_eq!(
            numel,
            values.len(),
            "shape {shape:?} needs {numel} values, got {}",
            values.len()
        );
        Tensor {
            shape: shape.to_vec(),
            values,
            grad: None,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Tensor::new(shape, vec![0.0; numel])
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(&[1], vec![v])
    }

    /// Uniform random values in `[lo, hi)`.
    pub fn uniform<R: Rng>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let numel: usize = shape.iter().product();
        let values = (0..numel).map(|_| rng.gen_range(lo..hi)).collect();
        Tensor::new(shape, values)
    }

    /// Glorot-style init for a `[fan_in, fan_out]` weight matrix:
    /// uniform in `[-limit, limit]` with `limit = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Tensor::uniform(&[fan_in, fan_out], -limit, limit, rng)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Allocates the gradient buffer (zeroed) if not yet present.
    pub fn enable_grad(&mut self) {
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.values.len()]);
        }
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        self.grad
            .as_deref_mut()
            .expect("tensor has no gradient buffer")
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Mutable values together with the gradient, for optimizer updates.
    pub fn values_and_grad(&mut self) -> (&mut [f64], &[f64]) {
        let grad = self
            .grad
            .as_deref()
            .expect("tensor has no gradient buffer");
        (&mut self.values, grad)
    }

    /// Appends rows to a rank-2 tensor, growing the leading extent.
    /// The gradient buffer, when present, grows with it.
    pub fn append_row(&mut self, row: &[f64]) {
        assert_eq!(self.shape.len(), 2, "append_row needs a rank-2 tensor");
        assert_eq!(row.len(), self.shape[1], "row width mismatch");
        self.values.extend_from_slice(row);
        self.shape[0] += 1;
        if let Some(g) = &mut self.grad {
            g.extend(std::iter::repeat_n(0.0, row.len()));
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        assert_eq!(self.shape.len(), 2, "row() needs a rank-2 tensor");
        let w = self.shape[1];
        &self.values[i * w..(i + 1) * w]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Handle to a tensor registered in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Ordered collection of named trainable tensors.
///
/// Registration order is the canonical order for serialization and for
/// optimizer state, so it must be deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, mut tensor: Tensor) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "parameter {name:?} registered twice"
        );
        tensor.enable_grad();
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.by_name.insert(name.to_string(), id);
        id
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

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.zero_grad();
        }
    }

    /// Total number of scalar parameters.
    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shape_and_values_must_agree() {
        let t = Tensor::new(&[2, 3], vec![0.0; 6]);
        assert_eq!(t.numel(), 6);
        assert_eq!(t.shape(), &[2, 3]);
    }

    #[test]
    #[should_panic(expected = "needs 6 values")]
    fn value_count_mismatch_panics() {
        Tensor::new(&[2, 3], vec![0.0; 5]);
    }

    #[test]
    fn grad_matches_shape_after_enable() {
        let mut t = Tensor::zeros(&[3, 2]);
        t.enable_grad();
        assert_eq!(t.grad().unwrap().len(), t.numel());
    }

    #[test]
    fn append_row_grows_matrix_and_grad() {
        let mut t = Tensor::zeros(&[2, 3]);
        t.enable_grad();
        t.append_row(&[1.0, 2.0, 3.0]);
        assert_eq!(t.shape(), &[3, 3]);
        assert_eq!(t.grad().unwrap().len(), 9);
        assert_eq!(t.row(2), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn store_registration_is_ordered_and_named() {
        let mut store = ParamStore::new();
        let a = store.register("a", Tensor::zeros(&[2]));
        let b = store.register("b", Tensor::zeros(&[3]));
        assert_eq!(a.index(), 0);
        assert_eq!(b.index(), 1);
        assert_eq!(store.name(b), "b");
        assert_eq!(store.by_name("a"), Some(a));
        assert_eq!(store.total_len(), 5);
    }

    #[test]
    #[should_panic(expected = "registered twice")]
    fn duplicate_name_panics() {
        let mut store = ParamStore::new();
        store.register("w", Tensor::zeros(&[1]));
        store.register("w", Tensor::zeros(&[1]));
    }

    #[test]
    fn glorot_limit_scales_with_fan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = Tensor::glorot(100, 200, &mut rng);
        let limit = (6.0f64 / 300.0).sqrt();
        assert!(t.values().iter().all(|v| v.abs() <= limit));
    }
}
