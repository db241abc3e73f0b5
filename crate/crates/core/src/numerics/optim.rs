use super::{DenseMatrix, Real};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: DenseMatrix<T>,
    pub grad: DenseMatrix<T>,
}

/// Named trainable tensors with gradient accumulators of the same shape.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParameterStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    /// Registers a tensor and returns its slot.
    pub fn add(&mut self, name: impl Into<String>, value: DenseMatrix<T>) -> usize {
        let grad = DenseMatrix::zeros(value.rows(), value.cols());
        self.params.push(Param {
            name: name.into(),
            value,
            grad,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, slot: usize) -> &Param<T> {
        &self.params[slot]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut Param<T> {
        &mut self.params[slot]
    }

    pub fn value(&self, slot: usize) -> &DenseMatrix<T> {
        &self.params[slot].value
    }

    pub fn grad(&self, slot: usize) -> &DenseMatrix<T> {
        &self.params[slot].grad
    }

    pub fn grad_mut(&mut self, slot: usize) -> &mut DenseMatrix<T> {
        &mut self.params[slot].grad
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(|p| p.grad.fill_zero());
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParameterStore<U> {
        ParameterStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                })
                .collect(),
        }
    }
}

/// RMSprop: `v ← ρv + (1−ρ)g²; θ ← θ − lr·g / (√v + ε)`, elementwise.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp<T> {
    pub lr: T,
    pub rho: T,
    pub eps: T,
    avg_sq: Vec<Vec<T>>,
}

impl<T: Real> RmsProp<T> {
    pub const DEFAULT_RHO: f64 = 0.9;
    pub const DEFAULT_EPS: f64 = 1e-8;

    pub fn new(store: &ParameterStore<T>, lr: f64, rho: f64, eps: f64) -> Self {
        Self {
            lr: T::of(lr),
            rho: T::of(rho),
            eps: T::of(eps),
            avg_sq: store.iter().map(|p| vec![T::zero(); p.value.len()]).collect(),
        }
    }

    pub fn with_defaults(store: &ParameterStore<T>, lr: f64) -> Self {
        Self::new(store, lr, Self::DEFAULT_RHO, Self::DEFAULT_EPS)
    }

    /// Running averages of squared gradients, one vector per parameter.
    pub fn averages(&self) -> &[Vec<T>] {
        &self.avg_sq
    }

    /// Applies one update. Fails without touching any parameter if a
    /// gradient is non-finite.
    pub fn step(&mut self, store: &mut ParameterStore<T>) -> Result<()> {
        if self.avg_sq.len() != store.len() {
            return Err(Error::DimensionMismatch {
                expected: self.avg_sq.len(),
                got: store.len(),
            });
        }
        if let Some(p) = store.iter().find(|p| !p.grad.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter `{}`", p.name)));
        }
        let one = T::one();
        for (p, avg) in store.params.iter_mut().zip(&mut self.avg_sq) {
            for ((theta, &g), v) in p.value.as_mut_slice().iter_mut().zip(p.grad.as_slice()).zip(avg.iter_mut()) {
                *v = self.rho * *v + (one - self.rho) * g * g;
                *theta -= self.lr * g / (v.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
