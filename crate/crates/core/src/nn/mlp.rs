use crate::error::{invalid, Error, Result};
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One affine layer `y = x·W + b`; `w` is `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { w: Array2::zeros((fan_in, fan_out)), b: Array1::zeros(fan_out) }
    }

    fn same_shape(&self, other: &Dense) -> bool {
        self.w.dim() == other.w.dim() && self.b.len() == other.b.len()
    }
}

/// Parameter gradients, laid out exactly like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self { layers: model.layers.iter().map(|l| Dense::zeros(l.w.nrows(), l.w.ncols())).collect() }
    }

    /// `self += alpha · other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &Gradients) -> Result<()> {
        if !shapes_match(&self.layers, &other.layers) {
            return Err(Error::Shape("gradient layouts differ".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.scaled_add(alpha, &b.w);
            a.b.scaled_add(alpha, &b.b);
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(l.b.iter()).all(|&v| v == 0.0))
    }
}

pub(crate) fn shapes_match(a: &[Dense], b: &[Dense]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same_shape(y))
}

/// ReLU on every hidden layer, identity on the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub(crate) layers: Vec<Dense>,
}

/// Layer inputs kept by [`MlpModel::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input of layer `l` (post-ReLU for `l > 0`).
    inputs: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
}

impl MlpModel {
    /// Fan-in scaled uniform init `U(−√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        check_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|d| {
                let bound = (6.0 / d[0] as f64).sqrt();
                let w = Array2::from_shape_simple_fn((d[0], d[1]), || rng.random_range(-bound..bound));
                Dense { w, b: Array1::zeros(d[1]) }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self { layers: dims.windows(2).map(|d| Dense::zeros(d[0], d[1])).collect() })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("model needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.b.len() != l.w.ncols() {
                return Err(Error::Shape(format!("layer {i}: bias {} vs {} outputs", l.b.len(), l.w.ncols())));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].w.ncols() != pair[1].w.nrows() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].w.ncols(),
                    i + 1,
                    pair[1].w.nrows()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].w.nrows()];
        d.extend(self.layers.iter().map(|l| l.w.ncols()));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].w.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!("input has {} features, model expects {}", x.ncols(), self.input_dim())));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = affine(&self.layers[0], x);
        for layer in &self.layers[1..] {
            relu(&mut h);
            h = affine(layer, h.view());
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_owned());
        let mut h = affine(&self.layers[0], x);
        for layer in &self.layers[1..] {
            relu(&mut h);
            let next = affine(layer, h.view());
            inputs.push(h);
            h = next;
        }
        Ok(ForwardCache { inputs, logits: h })
    }

    /// Chain-rule gradients of a scalar loss given `dL/dlogits`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: ArrayView2<f64>) -> Result<Gradients> {
        if dlogits.dim() != cache.logits.dim() {
            return Err(Error::Shape(format!("dL/dlogits {:?} vs logits {:?}", dlogits.dim(), cache.logits.dim())));
        }
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::Shape("cache was produced by a different model".into()));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = dlogits.to_owned();
        for l in (0..self.layers.len()).rev() {
            let a = &cache.inputs[l];
            let w = a.t().dot(&delta);
            let b = delta.sum_axis(Axis(0));
            grads.push(Dense { w, b });
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].w.t());
                Zip::from(&mut back).and(a).for_each(|d, &act| {
                    if act <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(invalid("need at least input and output dimensions"));
    }
    if dims.contains(&0) {
        return Err(invalid("layer dimensions must be positive"));
    }
    Ok(())
}

fn affine(layer: &Dense, x: ArrayView2<f64>) -> Array2<f64> {
    let mut y = x.dot(&layer.w);
    y += &layer.b;
    y
}

fn relu(h: &mut Array2<f64>) {
    h.mapv_inplace(|v| v.max(0.0));
}

/// Mean cross entropy over the batch and its gradient `(softmax − onehot)/B`.
pub fn cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (rows, classes) = logits.dim();
    if rows == 0 || rows != labels.len() {
        return Err(Error::Shape(format!("{rows} logit rows for {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(invalid(format!("label {bad} out of range for {classes} classes")));
    }
    let scale = 1.0 / rows as f64;
    let mut grad = Array2::<f64>::zeros((rows, classes));
    let mut loss = 0.0;
    for ((row, mut g), &y) in logits.rows().into_iter().zip(grad.rows_mut()).zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y];
        for (gi, &v) in g.iter_mut().zip(row) {
            *gi = (v - log_z).exp() * scale;
        }
        g[y] -= scale;
    }
    Ok((loss * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_model_gives_zero_logits() {
        let m = MlpModel::zeros(&[3, 4, 2]).unwrap();
        let z = m.forward(array![[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]].view()).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_hot_selects_weight_row() {
        let w = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let m = MlpModel::from_layers(vec![Dense { w: w.clone(), b: Array1::zeros(3) }]).unwrap();
        let z = m.forward(array![[0.0, 1.0]].view()).unwrap();
        assert_eq!(z.row(0), w.row(1));
    }

    #[test]
    fn init_is_deterministic() {
        let x = array![[0.1, 0.2, 0.3, 0.4]];
        let a = MlpModel::new(&[4, 8, 3], 7).unwrap().forward(x.view()).unwrap();
        let b = MlpModel::new(&[4, 8, 3], 7).unwrap().forward(x.view()).unwrap();
        assert_eq!(a, b);
        let c = MlpModel::new(&[4, 8, 3], 8).unwrap().forward(x.view()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn shape_errors() {
        let m = MlpModel::zeros(&[3, 2]).unwrap();
        assert!(m.forward(Array2::zeros((1, 4)).view()).is_err());
        let cache = m.forward_cached(Array2::zeros((2, 3)).view()).unwrap();
        assert!(m.backward(&cache, Array2::zeros((2, 3)).view()).is_err());
        assert!(MlpModel::zeros(&[3]).is_err());
        assert!(MlpModel::from_layers(vec![Dense::zeros(2, 3), Dense::zeros(4, 1)]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let m = MlpModel::new(&[3, 5, 2], 1).unwrap();
        let cache = m.forward_cached(array![[1.0, 2.0, 3.0]].view()).unwrap();
        let g = m.backward(&cache, Array2::zeros((1, 2)).view()).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let (loss, grad) = cross_entropy(Array2::zeros((2, 4)).view(), &[1, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);
        assert!((grad[[0, 1]] - (0.25 - 1.0) / 2.0).abs() < 1e-15);
        assert!((grad[[0, 0]] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_is_stable_for_large_logits() {
        let (loss, grad) = cross_entropy(array![[1000.0, 0.0]].view(), &[0]).unwrap();
        assert!(loss.abs() < 1e-12 && grad.iter().all(|v| v.is_finite()));
    }
}
