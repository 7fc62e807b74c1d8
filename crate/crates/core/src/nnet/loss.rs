use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {} and target {} differ",
            pred.shape(),
            target.shape()
        )));
    }
    let count = T::from_usize(pred.data().len()).unwrap();
    let two = T::from_f64_lossy(2.0);
    let mut sum = 0.0f64;
    let grad = pred.zip_map(target, |p, t| two * (p - t) / count);
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = (p - t).as_f64();
        sum += d * d;
    }
    Ok((T::from_f64_lossy(sum / pred.data().len() as f64), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::Shape;

    #[test]
    fn identical_is_zero() {
        let t = Tensor::<f64>::filled(Shape::new(1, 1, 3, 3), 0.3);
        let (loss, grad) = mse_loss(&t, &t).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn unit_residual() {
        let s = Shape::new(1, 1, 4, 4);
        let (loss, _) = mse_loss(&Tensor::<f32>::zeros(s), &Tensor::filled(s, 1.0)).unwrap();
        assert_eq!(loss, 1.0);
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor::<f32>::zeros(Shape::new(1, 1, 4, 4));
        let b = Tensor::<f32>::zeros(Shape::new(1, 1, 4, 2));
        assert!(matches!(mse_loss(&a, &b), Err(Error::Shape(_))));
    }
}
