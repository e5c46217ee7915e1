//! Convolutional encoder stack: 3×3 kernels, SAME padding, ReLU.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::uniform_init;
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tape::{Tape, TensorId};

pub const KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnnConfig {
    /// (channels, stride) per layer; strides are 1 or 2.
    pub layers: Vec<(usize, usize)>,
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("cnn_config", "at least one layer required".to_string()));
        }
        for &(ch, st) in &self.layers {
            if ch == 0 || !(st == 1 || st == 2) {
                return Err(Error::invalid(
                    "cnn_config",
                    format!("invalid layer ({ch}:{st}); channels > 0 and stride in {{1, 2}}"),
                ));
            }
        }
        Ok(())
    }

    /// Spatial output size under SAME padding: ceil division per stride.
    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let (mut h, mut w) = (h, w);
        for &(_, s) in &self.layers {
            h = h.div_ceil(s);
            w = w.div_ceil(s);
        }
        (h, w)
    }

    pub fn output_channels(&self) -> usize {
        self.layers.last().map(|&(c, _)| c).unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
struct ConvLayer {
    w: String,
    b: String,
    stride: usize,
}

#[derive(Debug, Clone)]
pub struct CnnEncoder {
    layers: Vec<ConvLayer>,
}

impl CnnEncoder {
    pub fn init<S: Scalar, R: Rng>(
        ps: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        in_channels: usize,
        cfg: &CnnConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut layers = Vec::with_capacity(cfg.layers.len());
        let mut cin = in_channels;
        for (i, &(cout, stride)) in cfg.layers.iter().enumerate() {
            let fan_in = KERNEL * KERNEL * cin;
            let bound = (6.0 / (fan_in + cout) as f64).sqrt();
            let w = format!("{name}.c{i}.w");
            let b = format!("{name}.c{i}.b");
            ps.insert(
                &w,
                vec![KERNEL, KERNEL, cin, cout],
                uniform_init(rng, -bound, bound, KERNEL * KERNEL * cin * cout),
            )?;
            ps.insert(&b, vec![cout], vec![S::zero(); cout])?;
            layers.push(ConvLayer { w, b, stride });
            cin = cout;
        }
        Ok(CnnEncoder { layers })
    }

    /// `[B, H, W, Cin] -> [B, H', W', Cout]` feature map.
    pub fn forward<S: Scalar>(&self, t: &mut Tape<S>, ps: &ParamStore<S>, x: TensorId) -> Result<TensorId> {
        let mut h = x;
        for layer in &self.layers {
            let w = t.leaf(&layer.w, ps.get(&layer.w)?);
            let b = t.leaf(&layer.b, ps.get(&layer.b)?);
            h = t.conv2d(h, w, layer.stride)?;
            h = t.add(h, b)?;
            h = t.relu(h);
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Independent shape walk: SAME conv output is ceil(in / stride).
    fn oracle_hw(plan: &[(usize, usize)], mut h: usize, mut w: usize) -> (usize, usize) {
        for &(_, s) in plan {
            h = (h + s - 1) / s;
            w = (w + s - 1) / s;
        }
        (h, w)
    }

    #[test]
    fn stride_plans_hit_expected_spatial_sizes() {
        let a = CnnConfig { layers: vec![(8, 2), (8, 2), (8, 1), (8, 1)] };
        assert_eq!(a.output_hw(28, 28), oracle_hw(&a.layers, 28, 28));
        assert_eq!(a.output_hw(28, 28), (7, 7));

        let b = CnnConfig { layers: vec![(8, 1), (8, 1), (8, 2), (8, 2)] };
        assert_eq!(b.output_hw(32, 32), oracle_hw(&b.layers, 32, 32));
        assert_eq!(b.output_hw(32, 32), (8, 8));
    }

    #[test]
    fn zero_image_zero_bias_gives_zero_features() {
        let mut ps: ParamStore<f64> = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = CnnConfig { layers: vec![(4, 2), (4, 1)] };
        let enc = CnnEncoder::init(&mut ps, &mut rng, "enc", 1, &cfg).unwrap();
        let mut t: Tape<f64> = Tape::new();
        let x = t.constant(&[1, 8, 8, 1], vec![0.0; 64]).unwrap();
        let y = enc.forward(&mut t, &ps, x).unwrap();
        assert_eq!(t.shape(y), &[1, 4, 4, 4]);
        assert!(t.value(y).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_shape_actually_matches_config_arithmetic() {
        let mut ps: ParamStore<f64> = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = CnnConfig { layers: vec![(3, 2), (5, 2), (2, 1)] };
        let enc = CnnEncoder::init(&mut ps, &mut rng, "enc", 2, &cfg).unwrap();
        let mut t: Tape<f64> = Tape::new();
        let x = t.constant(&[2, 7, 9, 2], vec![0.5; 2 * 7 * 9 * 2]).unwrap();
        let y = enc.forward(&mut t, &ps, x).unwrap();
        let (oh, ow) = cfg.output_hw(7, 9);
        assert_eq!(t.shape(y), &[2, oh, ow, 2]);
    }
}
