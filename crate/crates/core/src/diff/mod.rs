//! Minimal reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] is built fresh for every evaluation. Inputs are registered with
//! [`Tape::var`] (differentiable) or [`Tape::constant`], primitives append
//! nodes, and [`Tape::backward`] walks the nodes in reverse to produce
//! [`Gradients`].
//!
//! ```
//! use hvac_mpc::diff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.var(Tensor::row(&[1.0, -2.0]));
//! let y = tape.square(x);
//! let loss = tape.sum(y);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(x).data(), &[2.0, -4.0]);
//! ```

mod tape;
mod tensor;

pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;


use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: [usize; 2], len: usize },
    #[error("slice {start}..{end} out of range for shape {shape:?}")]
    Slice {
        shape: [usize; 2],
        start: usize,
        end: usize,
    },
    #[error("{0}: no inputs")]
    Empty(&'static str),
    #[error("backward needs a scalar root, got shape {0:?}")]
    NonScalarRoot([usize; 2]),
}

/// Compares reverse-mode gradients of a scalar function against central
/// finite differences.
///
/// Returns `max_i |g_ad - g_fd| / max(1, |g_ad|)`.
pub fn grad_check<F>(f: F, point: &Tensor, epsilon: f64) -> Result<f64, DiffError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, DiffError>,
{
    let mut tape = Tape::new();
    let x = tape.var(point.clone());
    let root = f(&mut tape, x)?;
    let ad = tape.backward(root)?.wrt(x);

    let eval = |p: &Tensor| -> Result<f64, DiffError> {
        let mut t = Tape::new();
        let x = t.constant(p.clone());
        let r = f(&mut t, x)?;
        Ok(t.value(r).item())
    };

    let mut worst = 0.0_f64;
    let mut probe = point.clone();
    for i in 0..point.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + epsilon;
        let up = eval(&probe)?;
        probe.data_mut()[i] = orig - epsilon;
        let down = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let fd = (up - down) / (2.0 * epsilon);
        let g = ad.data()[i];
        worst = worst.max((g - fd).abs() / g.abs().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Tensor {
        let data = (0..r * c).map(|_| rng.random_range(-scale..scale)).collect();
        Tensor::new(r, c, data).unwrap()
    }

    #[test]
    fn three_layer_tanh_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w1 = random(&mut rng, 4, 6, 0.8);
        let w2 = random(&mut rng, 6, 5, 0.8);
        let w3 = random(&mut rng, 5, 1, 0.8);
        let b1 = random(&mut rng, 1, 6, 0.3);
        let point = random(&mut rng, 3, 4, 1.0);
        let err = grad_check(
            |t, x| {
                let w1 = t.constant(w1.clone());
                let w2 = t.constant(w2.clone());
                let w3 = t.constant(w3.clone());
                let b1 = t.constant(b1.clone());
                let h = t.matmul(x, w1)?;
                let h = t.add(h, b1)?;
                let h = t.tanh(h);
                let h = t.matmul(h, w2)?;
                let h = t.tanh(h);
                let h = t.matmul(h, w3)?;
                let h = t.tanh(h);
                Ok(t.sum(h))
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn affine_function_is_nearly_exact() {
        let a = Tensor::new(3, 1, vec![1.5, -2.0, 0.25]).unwrap();
        let point = Tensor::row(&[0.1, 0.2, 0.3]);
        let err = grad_check(
            |t, x| {
                let a = t.constant(a.clone());
                let y = t.matmul(x, a)?;
                Ok(t.add_scalar(y, 4.0))
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn relu_away_from_kink() {
        let point = Tensor::row(&[-0.7, 0.4, 2.0, -1.3]);
        let err = grad_check(
            |t, x| {
                let r = t.relu(x);
                let s = t.square(r);
                Ok(t.sum(s))
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn backward_is_linear() {
        let point = Tensor::row(&[0.3, -0.2, 0.9]);
        let grad_of = |a: f64, b: f64| {
            let mut t = Tape::new();
            let x = t.var(point.clone());
            let f = t.tanh(x);
            let f = t.sum(f);
            let g = t.square(x);
            let g = t.sum(g);
            let fa = t.scalar_mul(f, a);
            let gb = t.scalar_mul(g, b);
            let r = t.add(fa, gb).unwrap();
            t.backward(r).unwrap().wrt(x)
        };
        let (a, b) = (1.7, -0.6);
        let combo = grad_of(a, b);
        let gf = grad_of(1.0, 0.0);
        let gg = grad_of(0.0, 1.0);
        for i in 0..3 {
            let lin = a * gf.data()[i] + b * gg.data()[i];
            assert!((combo.data()[i] - lin).abs() < 1e-10);
        }
    }
}
