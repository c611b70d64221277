use log::warn;
use rayon::prelude::*;

use super::clip_unit;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::Tensor;

/// Fast gradient sign step: `clip(x + eps * sign(grad_x loss), 0, 1)`, with
/// `sign(0) = 0`.
pub fn fgs(net: &Network, x: &Tensor, y: usize, epsilon: f64) -> Result<Tensor> {
    let grad = net.input_gradient(x, y)?;
    let stepped = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| {
            let s = if g > 0.0 {
                1.0
            } else if g < 0.0 {
                -1.0
            } else {
                0.0
            };
            v + epsilon * s
        })
        .collect();
    Ok(clip_unit(&Tensor::new(x.shape().to_vec(), stepped)?))
}

/// Fraction of `samples` misclassified after an FGS step of `epsilon`.
pub fn fool_rate(net: &Network, samples: &[Sample], epsilon: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let fooled: usize = samples
        .par_iter()
        .map(|s| {
            let adv = fgs(net, &s.image, s.label, epsilon)?;
            Ok((net.predict_class(&adv)? != s.label) as usize)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(fooled as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunedEpsilon {
    pub epsilon: f64,
    pub fool_rate: f64,
    /// False when no grid value reached the target; `epsilon` is then the
    /// largest grid value.
    pub reached: bool,
}

/// Smallest grid value whose FGS adversaries fool at least `target` of the
/// samples.
pub fn tune_epsilon(
    net: &Network,
    samples: &[Sample],
    target: f64,
    grid: &[f64],
) -> Result<TunedEpsilon> {
    if samples.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let mut last = None;
    for &eps in grid {
        let rate = fool_rate(net, samples, eps)?;
        if rate >= target {
            return Ok(TunedEpsilon {
                epsilon: eps,
                fool_rate: rate,
                reached: true,
            });
        }
        last = Some(TunedEpsilon {
            epsilon: eps,
            fool_rate: rate,
            reached: false,
        });
    }
    let last = last.ok_or_else(|| Error::config("empty epsilon grid"))?;
    warn!(
        "FGS target fool rate {target} unreachable; using eps {} (rate {:.4})",
        last.epsilon, last.fool_rate
    );
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, NetworkConfig};
    use proptest::prelude::*;

    fn linear(w: Vec<f64>, n_in: usize) -> Network {
        let k = w.len() / n_in;
        let cfg = NetworkConfig {
            input_shape: vec![n_in],
            layers: vec![LayerSpec::Dense { units: k }, LayerSpec::Softmax],
            classes: k,
            seed: 0,
        };
        Network::from_params(
            cfg,
            vec![
                vec![Tensor::new(vec![k, n_in], w).unwrap(), Tensor::zeros(&[k])],
                vec![],
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let net = linear(vec![1.0, -1.0, 0.5, 2.0], 2);
        let x = Tensor::vector(vec![0.3, 0.6]);
        assert_eq!(fgs(&net, &x, 0, 0.0).unwrap(), x);
    }

    #[test]
    fn positive_gradient_moves_every_pixel_up() {
        // grad wrt x for label 0 is (p0 - 1) w0 + p1 w1 = p1 (w1 - w0) which is positive
        // whenever w1 > w0 componentwise.
        let net = linear(vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0], 3);
        let x = Tensor::vector(vec![0.1, 0.5, 0.9]);
        let g = net.input_gradient(&x, 0).unwrap();
        assert!(g.data().iter().all(|&v| v > 0.0));
        let adv = fgs(&net, &x, 0, 0.25).unwrap();
        let expected = [0.35, 0.75, 1.0];
        for (a, e) in adv.data().iter().zip(expected) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_target_returns_smallest_grid_value() {
        let net = linear(vec![1.0, -1.0, -1.0, 1.0], 2);
        let samples = vec![Sample {
            image: Tensor::vector(vec![0.9, 0.1]),
            label: 0,
        }];
        let t = tune_epsilon(&net, &samples, 0.0, &[0.01, 0.02]).unwrap();
        assert_eq!(t.epsilon, 0.01);
        assert!(t.reached);
        assert!(tune_epsilon(&net, &[], 0.5, &[0.01]).is_err());
    }

    #[test]
    fn unreachable_target_is_flagged() {
        // zero weights: the gradient vanishes and nothing is ever fooled
        let net = linear(vec![0.0; 4], 2);
        let samples = vec![Sample {
            image: Tensor::vector(vec![0.5, 0.5]),
            label: 0,
        }];
        let t = tune_epsilon(&net, &samples, 1.0, &[0.1, 0.2]).unwrap();
        assert!(!t.reached);
        assert_eq!(t.epsilon, 0.2);
    }

    #[test]
    fn tuned_epsilon_reaches_target() {
        let net = linear(vec![1.0, -1.0, -1.0, 1.0], 2);
        let samples: Vec<Sample> = [0.6, 0.7, 0.8]
            .iter()
            .map(|&a| Sample {
                image: Tensor::vector(vec![a, 1.0 - a]),
                label: 0,
            })
            .collect();
        let grid: Vec<f64> = (0..9).map(|j| 0.005 * 2f64.powi(j)).collect();
        let t = tune_epsilon(&net, &samples, 1.0, &grid).unwrap();
        assert!(t.reached);
        assert!(fool_rate(&net, &samples, t.epsilon).unwrap() >= 1.0);
        // the previous grid point was not enough
        let i = grid.iter().position(|&g| g == t.epsilon).unwrap();
        assert!(i == 0 || fool_rate(&net, &samples, grid[i - 1]).unwrap() < 1.0);
    }

    proptest! {
        #[test]
        fn step_is_bounded_and_boxed(
            x in proptest::collection::vec(0.0f64..=1.0, 4),
            w in proptest::collection::vec(-3.0f64..3.0, 8),
            eps in 0.0f64..0.5,
            y in 0usize..2,
        ) {
            let net = linear(w, 4);
            let xt = Tensor::vector(x);
            let adv = fgs(&net, &xt, y, eps).unwrap();
            for (a, b) in adv.data().iter().zip(xt.data()) {
                prop_assert!((a - b).abs() <= eps + 1e-15);
                prop_assert!((0.0..=1.0).contains(a));
            }
        }
    }
}
