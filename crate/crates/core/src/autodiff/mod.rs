//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] owns every value produced during a forward pass together with
//! the operation that produced it. [`Tape::backward`] walks the nodes in
//! reverse creation order (a valid reverse topological order, since inputs
//! always precede their consumers) and returns a [`Gradients`] map.
//!
//! The two Heaviside steps used by the LIF layer carry their own backward
//! rules: [`Tape::theta1`] passes the cotangent through unchanged and
//! [`Tape::theta2`] blocks it. Other non-smooth operations can be added with
//! [`Tape::custom`] and a [`BackwardRule`].
//!
//! ```
//! use spikegrad::autodiff::Tape;
//! use spikegrad::Tensor;
//!
//! let mut tape = Tape::new();
//! let w = tape.leaf(Tensor::scalar(3.0));
//! let x = tape.leaf(Tensor::scalar(2.0));
//! let loss = tape.mul(w, x).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(w).item(), Some(2.0));
//! assert_eq!(grads.wrt(x).item(), Some(3.0));
//! ```

mod backward;
mod ops;
mod tape;

pub use tape::{BackwardRule, Gradients, Tape, Var};

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::error::Result;
    use crate::tensor::{Scalar, Tensor};

    #[test]
    fn theta1_forward_is_strict_step() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![-0.5, 0.0, 0.3]));
        let y = tape.theta1(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn theta1_passes_cotangent_through() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![-3.0, 0.7]));
        let y = tape.theta1(x).unwrap();
        let weights = tape.constant(Tensor::vector(vec![2.0, -1.0]));
        let weighted = tape.mul(y, weights).unwrap();
        let loss = tape.sum(weighted).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).data(), &[2.0, -1.0]);
    }

    #[test]
    fn theta2_blocks_cotangent() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.2]));
        let y = tape.theta2(x).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0]);
        let loss = tape.scale(y, 7.0).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).data(), &[0.0]);

        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![-1e-12]));
        let y = tape.theta2(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0]);
    }

    #[test]
    fn product_rule_on_scalars() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::scalar(3.0));
        let x = tape.leaf(Tensor::scalar(2.0));
        let loss = tape.mul(w, x).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(w).data(), &[2.0]);
        assert_eq!(grads.wrt(x).data(), &[3.0]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn fan_out_accumulates_every_consumer() {
        // x feeds four consumers; dL/dx = 1 + 2 + 3 + 2x
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.5));
        let a = tape.scale(x, 2.0).unwrap();
        let b = tape.scale(x, 3.0).unwrap();
        let c = tape.mul(x, x).unwrap();
        let ab = tape.add(a, b).unwrap();
        let abc = tape.add(ab, c).unwrap();
        let loss = tape.add(abc, x).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).data(), &[1.0 + 2.0 + 3.0 + 3.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.exp(x).unwrap();
        assert!(matches!(tape.backward(y), Err(crate::Error::NotScalar(_))));
    }

    #[test]
    fn backward_is_repeatable() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.3, -0.2, 1.1]));
        let s = tape.softmax(x, 0).unwrap();
        let t = tape.tanh(s).unwrap();
        let loss = tape.sum(t).unwrap();
        assert_eq!(tape.backward(loss).unwrap(), tape.backward(loss).unwrap());
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![-1.0]));
        assert!(matches!(tape.log(x), Err(crate::Error::NonFinite { op: "log" })));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::scalar(4.0));
        let x = tape.leaf(Tensor::scalar(1.0));
        let loss = tape.mul(c, x).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.wrt(x).data(), &[4.0]);
    }

    struct StraightThroughRound;

    impl BackwardRule for StraightThroughRound {
        fn backward(
            &self,
            _inputs: &[&Tensor],
            _output: &Tensor,
            cotangent: &Tensor,
        ) -> Result<Vec<Tensor>> {
            Ok(vec![cotangent.clone()])
        }
    }

    #[test]
    fn custom_rule_is_applied() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.4, 1.6]));
        let rounded = tape.value(x).map(Scalar::round);
        let y = tape.custom(&[x], rounded, Arc::new(StraightThroughRound)).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 2.0]);
        let sq = tape.mul(y, y).unwrap();
        let loss = tape.sum(sq).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).data(), &[0.0, 4.0]);
    }

    #[test]
    fn leaves_off_the_loss_path_get_zeros() {
        let mut tape = Tape::new();
        let unused = tape.leaf(Tensor::zeros(&[2, 3]));
        let x = tape.leaf(Tensor::scalar(1.0));
        let loss = tape.scale(x, 2.0).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(unused), Tensor::zeros(&[2, 3]));
    }
}
