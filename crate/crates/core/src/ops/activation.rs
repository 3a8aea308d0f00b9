use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Elementwise `min(max(x, 0), 6)`.
pub fn relu6<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let six = T::from_f64_lossy(6.0);
    input.map(|v| v.max(T::zero()).min(six))
}

pub(crate) fn relu6_in_place<T: Scalar>(t: &mut Tensor<T>) {
    let six = T::from_f64_lossy(6.0);
    t.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()).min(six));
}

/// Passes the gradient where `0 < x < 6`; the subgradient at both kinks is 0.
pub fn relu6_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != grad_out.shape() {
        return Err(Error::shape(
            "relu6",
            format!("grad_output {:?} != input {:?}", grad_out.shape(), input.shape()),
        ));
    }
    let six = T::from_f64_lossy(6.0);
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() && x < six { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape(), data)
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)`. Returns the
/// output and the per-element multiplier, which is also the backward mask.
pub fn dropout<T: Scalar>(input: &Tensor<T>, rate: f32, rng: &mut crate::data::Rng) -> (Tensor<T>, Vec<T>) {
    if rate <= 0.0 {
        return (input.clone(), vec![T::one(); input.len()]);
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate as f64));
    let mask: Vec<T> = (0..input.len())
        .map(|_| if rng.next_f32() < rate { T::zero() } else { keep })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    (Tensor::new(input.shape(), data).expect("same shape"), mask)
}
