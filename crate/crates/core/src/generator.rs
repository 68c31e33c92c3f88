//! Hourglass convolutional generator with a fixed random input.
//!
//! Level `i` of the encoder halves the resolution with a stride-2
//! convolution followed by a same-size convolution. The matching decoder
//! level upsamples (nearest neighbour), concatenates the level's skip
//! branch and applies a `k x k` and a `1 x 1` convolution. Every
//! convolution is followed by instance normalization with a per-channel
//! affine and a leaky ReLU; a final `1 x 1` convolution with bias and a
//! sigmoid maps to the output image.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::tensor::Tensor;

const LEAKY_SLOPE: f64 = 0.2;
const NORM_EPS: f64 = 1e-5;
const CHECKPOINT_MAGIC: &str = "spectralprior-checkpoint v1";

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub depth: usize,
    pub channels: Vec<usize>,
    /// Width of the skip branch at each level; 0 disables that skip.
    pub skip_channels: Vec<usize>,
    pub kernel_size: usize,
    pub input_channels: usize,
    pub input_noise_std: f64,
    pub output_channels: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            depth: 5,
            channels: vec![16, 32, 64, 128, 128],
            skip_channels: vec![4; 5],
            kernel_size: 3,
            input_channels: 32,
            input_noise_std: 0.1,
            output_channels: 1,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("generator: {m}")));
        if self.depth == 0 {
            return fail("depth must be at least 1".into());
        }
        if self.channels.len() != self.depth {
            return fail(format!(
                "{} channel widths given for depth {}",
                self.channels.len(),
                self.depth
            ));
        }
        if self.skip_channels.len() != self.depth {
            return fail(format!(
                "{} skip widths given for depth {}",
                self.skip_channels.len(),
                self.depth
            ));
        }
        if self.channels.contains(&0) {
            return fail("channel widths must be positive".into());
        }
        if self.kernel_size % 2 == 0 {
            return fail(format!("kernel_size {} must be odd", self.kernel_size));
        }
        if self.input_channels == 0 || self.output_channels == 0 {
            return fail("input and output channel counts must be positive".into());
        }
        if !(self.input_noise_std > 0.0) || !self.input_noise_std.is_finite() {
            return fail(format!("input_noise_std {} must be positive", self.input_noise_std));
        }
        Ok(())
    }

    /// Closed-form number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        let k2 = self.kernel_size * self.kernel_size;
        let mut total = 0;
        let mut prev = self.input_channels;
        for i in 0..self.depth {
            let (c, s) = (self.channels[i], self.skip_channels[i]);
            if s > 0 {
                total += prev * s + 2 * s;
            }
            total += prev * c * k2 + 2 * c + c * c * k2 + 2 * c;
            let below = if i + 1 < self.depth { self.channels[i + 1] } else { c };
            total += (below + s) * c * k2 + 2 * c + c * c + 2 * c;
            prev = c;
        }
        total + self.channels[0] * self.output_channels + self.output_channels
    }
}

/// Trainable parameters plus the fixed input of one generator.
#[derive(Clone, Debug)]
pub struct GeneratorState {
    params: Vec<(String, Tensor)>,
    z: Tensor,
    config: GeneratorConfig,
    seed: u64,
}

struct ParamBuilder {
    rng: Rng,
    params: Vec<(String, Tensor)>,
}

impl ParamBuilder {
    /// He-uniform: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
    fn conv(&mut self, name: String, c_out: usize, c_in: usize, k: usize) {
        let fan_in = (c_in * k * k) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let data = self.rng.uniform_vec(c_out * c_in * k * k, -bound, bound);
        self.params
            .push((name, Tensor::from_parts(vec![c_out, c_in, k, k], data).with_grad()));
    }

    fn norm(&mut self, prefix: &str, c: usize) {
        self.params.push((
            format!("{prefix}.gamma"),
            Tensor::full(&[c], 1.0).with_grad(),
        ));
        self.params
            .push((format!("{prefix}.beta"), Tensor::zeros(&[c]).with_grad()));
    }
}

impl GeneratorState {
    /// Deterministic initialization for an `out_h x out_w` output.
    pub fn init(config: GeneratorConfig, seed: u64, out_h: usize, out_w: usize) -> Result<Self> {
        config.validate()?;
        let min = 1usize << config.depth.min(usize::BITS as usize - 1);
        for (name, s) in [("height", out_h), ("width", out_w)] {
            if !s.is_power_of_two() || s < min {
                return Err(Error::Config(format!(
                    "output {name} {s} must be a power of two of at least 2^depth = {min}"
                )));
            }
        }
        let k = config.kernel_size;
        let mut b = ParamBuilder {
            rng: Rng::derived(seed, stream::PARAMS),
            params: Vec::new(),
        };
        let mut prev = config.input_channels;
        for i in 0..config.depth {
            let (c, s) = (config.channels[i], config.skip_channels[i]);
            if s > 0 {
                b.conv(format!("skip{i}.weight"), s, prev, 1);
                b.norm(&format!("skip{i}.norm"), s);
            }
            b.conv(format!("enc{i}.down.weight"), c, prev, k);
            b.norm(&format!("enc{i}.down.norm"), c);
            b.conv(format!("enc{i}.conv.weight"), c, c, k);
            b.norm(&format!("enc{i}.conv.norm"), c);
            prev = c;
        }
        for i in (0..config.depth).rev() {
            let (c, s) = (config.channels[i], config.skip_channels[i]);
            let below = if i + 1 < config.depth { config.channels[i + 1] } else { c };
            b.conv(format!("dec{i}.conv.weight"), c, below + s, k);
            b.norm(&format!("dec{i}.conv.norm"), c);
            b.conv(format!("dec{i}.mix.weight"), c, c, 1);
            b.norm(&format!("dec{i}.mix.norm"), c);
        }
        b.conv("out.weight".into(), config.output_channels, config.channels[0], 1);
        b.params.push((
            "out.bias".into(),
            Tensor::zeros(&[config.output_channels]).with_grad(),
        ));

        let mut zr = Rng::derived(seed, stream::INPUT);
        let n = config.input_channels * out_h * out_w;
        let z = Tensor::from_parts(
            vec![config.input_channels, out_h, out_w],
            zr.uniform_vec(n, 0.0, config.input_noise_std),
        );
        Ok(Self {
            params: b.params,
            z,
            config,
            seed,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The fixed network input. There is no mutable accessor.
    pub fn z(&self) -> &Tensor {
        &self.z
    }

    pub fn output_shape(&self) -> [usize; 3] {
        let (_, h, w) = self.z.dims3().expect("z is rank 3");
        [self.config.output_channels, h, w]
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Parameters in registration order, for in-place optimizer updates.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.params.iter_mut().map(|(_, t)| t)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.len()).sum()
    }

    /// All parameters concatenated in registration order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params.iter().flat_map(|(_, t)| t.data().iter().copied()).collect()
    }

    /// Records `f_theta(z)` on `tape`. Returns the output node and one node
    /// per parameter, aligned with [`GeneratorState::params`].
    pub fn forward(&self, tape: &mut Tape) -> Result<(Var, Vec<Var>)> {
        let vars: Vec<Var> = self.params.iter().map(|(_, t)| tape.param(t)).collect();
        let mut next = 0usize;
        let mut take = || {
            let v = vars[next];
            next += 1;
            v
        };
        let cfg = &self.config;
        let pad = cfg.kernel_size / 2;

        let block = |tape: &mut Tape, x: Var, w: Var, g: Var, b: Var, stride: usize, pad: usize| {
            let y = tape.conv2d(x, w, stride, pad)?;
            let y = tape.instance_norm(y, NORM_EPS)?;
            let y = tape.channel_affine(y, g, b)?;
            Ok::<Var, Error>(tape.leaky_relu(y, LEAKY_SLOPE))
        };

        let mut h = tape.constant(self.z.clone());
        let mut skips = Vec::with_capacity(cfg.depth);
        for i in 0..cfg.depth {
            if cfg.skip_channels[i] > 0 {
                let (w, g, b) = (take(), take(), take());
                skips.push(Some(block(tape, h, w, g, b, 1, 0)?));
            } else {
                skips.push(None);
            }
            let (w, g, b) = (take(), take(), take());
            h = block(tape, h, w, g, b, 2, pad)?;
            let (w, g, b) = (take(), take(), take());
            h = block(tape, h, w, g, b, 1, pad)?;
        }
        for i in (0..cfg.depth).rev() {
            h = tape.upsample_nearest(h, 2)?;
            if let Some(s) = skips[i] {
                h = tape.concat_channels(h, s)?;
            }
            let (w, g, b) = (take(), take(), take());
            h = block(tape, h, w, g, b, 1, pad)?;
            let (w, g, b) = (take(), take(), take());
            h = block(tape, h, w, g, b, 1, 0)?;
        }
        let (w, b) = (take(), take());
        let y = tape.conv2d(h, w, 1, 0)?;
        let y = tape.add_channel_bias(y, b)?;
        let out = tape.sigmoid(y);
        debug_assert_eq!(next, vars.len());
        Ok((out, vars))
    }

    /// Evaluates the network without keeping the tape.
    pub fn output(&self) -> Result<Tensor> {
        let mut tape = Tape::new();
        let (out, _) = self.forward(&mut tape)?;
        Ok(tape.value(out).clone())
    }

    /// Writes the checkpoint: a text header of `name d0xd1x...` lines, a
    /// `data` line, then every tensor (parameters, then `z`) as
    /// little-endian f64.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| crate::io::with_path(e, path))?);
        writeln!(f, "{CHECKPOINT_MAGIC}")?;
        writeln!(f, "seed {}", self.seed)?;
        writeln!(f, "entries {}", self.params.len() + 1)?;
        let entries = self.params.iter().map(|(n, t)| (n.as_str(), t)).chain([("z", &self.z)]);
        for (name, t) in entries.clone() {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            writeln!(f, "{name} {}", dims.join("x"))?;
        }
        writeln!(f, "data")?;
        for (_, t) in entries {
            for v in t.data() {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        f.flush()?;
        Ok(())
    }

    /// Restores parameters and `z` saved by [`GeneratorState::save_checkpoint`]
    /// for a generator built with `config`.
    pub fn load_checkpoint(config: GeneratorConfig, path: &Path) -> Result<Self> {
        let bad = |offset: usize, detail: String| Error::Format {
            path: path.to_path_buf(),
            offset,
            detail,
        };
        let mut r = BufReader::new(std::fs::File::open(path).map_err(|e| crate::io::with_path(e, path))?);
        let mut offset = 0usize;
        let mut line = String::new();
        let mut next_line = |r: &mut BufReader<std::fs::File>, offset: &mut usize| -> Result<String> {
            line.clear();
            let n = r.read_line(&mut line)?;
            if n == 0 {
                return Err(bad(*offset, "unexpected end of header".into()));
            }
            *offset += n;
            Ok(line.trim_end_matches('\n').to_string())
        };
        if next_line(&mut r, &mut offset)? != CHECKPOINT_MAGIC {
            return Err(bad(0, "not a checkpoint".into()));
        }
        let field = |l: String, key: &str, at: usize| -> Result<u64> {
            l.strip_prefix(key)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| bad(at, format!("expected '{key} <n>'")))
        };
        let at = offset;
        let seed = field(next_line(&mut r, &mut offset)?, "seed", at)?;
        let at = offset;
        let count = field(next_line(&mut r, &mut offset)?, "entries", at)? as usize;
        let mut header = Vec::with_capacity(count);
        for _ in 0..count {
            let at = offset;
            let l = next_line(&mut r, &mut offset)?;
            let (name, dims) = l
                .split_once(' ')
                .ok_or_else(|| bad(at, format!("bad entry line '{l}'")))?;
            let shape = dims
                .split('x')
                .map(|d| d.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad(at, format!("bad shape '{dims}'")))?;
            header.push((name.to_string(), shape));
        }
        if next_line(&mut r, &mut offset)? != "data" {
            return Err(bad(offset, "missing data marker".into()));
        }
        let (_, zshape) = header
            .last()
            .filter(|(n, _)| n == "z")
            .ok_or_else(|| bad(0, "last entry must be z".into()))?;
        let [_, h, w] = zshape[..] else {
            return Err(bad(0, "z must be rank 3".into()));
        };
        let mut state = Self::init(config, seed, h, w)?;
        if header.len() != state.params.len() + 1 {
            return Err(bad(0, format!("{} entries, generator has {}", header.len(), state.params.len() + 1)));
        }
        let mut buf = [0u8; 8];
        let mut read_into = |t: &mut Tensor, offset: &mut usize| -> Result<()> {
            for v in t.data_mut() {
                r.read_exact(&mut buf).map_err(|_| bad(*offset, "truncated data".into()))?;
                *v = f64::from_le_bytes(buf);
                *offset += 8;
            }
            Ok(())
        };
        for ((name, t), (hn, hs)) in state.params.iter_mut().zip(&header) {
            if name != hn || t.shape() != &hs[..] {
                return Err(bad(0, format!("entry {hn} {hs:?} does not match {name} {:?}", t.shape())));
            }
            read_into(t, &mut offset)?;
        }
        if state.z.shape() != &zshape[..] {
            return Err(bad(0, "z shape mismatch".into()));
        }
        read_into(&mut state.z, &mut offset)?;
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorConfig {
        GeneratorConfig {
            depth: 2,
            channels: vec![4, 6],
            skip_channels: vec![2, 0],
            kernel_size: 3,
            input_channels: 3,
            input_noise_std: 0.1,
            output_channels: 1,
        }
    }

    #[test]
    fn deterministic_init() {
        let a = GeneratorState::init(small(), 5, 8, 8).unwrap();
        let b = GeneratorState::init(small(), 5, 8, 8).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
        assert_eq!(a.z(), b.z());
        let c = GeneratorState::init(small(), 6, 8, 8).unwrap();
        assert_ne!(a.flat_params(), c.flat_params());
    }

    #[test]
    fn depth_one_parameter_count_formula() {
        let cfg = GeneratorConfig {
            depth: 1,
            channels: vec![8],
            skip_channels: vec![4],
            kernel_size: 3,
            input_channels: 32,
            input_noise_std: 0.1,
            output_channels: 1,
        };
        // skip 1x1: 32*4 + 8; enc: 32*8*9 + 16 + 8*8*9 + 16;
        // dec: (8+4)*8*9 + 16 + 8*8 + 16; out: 8 + 1
        let hand = (32 * 4 + 8) + (32 * 8 * 9 + 16 + 8 * 8 * 9 + 16) + (12 * 8 * 9 + 16 + 64 + 16) + 9;
        let g = GeneratorState::init(cfg.clone(), 0, 4, 4).unwrap();
        assert_eq!(g.parameter_count(), hand);
        assert_eq!(cfg.parameter_count(), hand);
    }

    #[test]
    fn too_small_output_rejected() {
        let e = GeneratorState::init(GeneratorConfig::default(), 0, 16, 16).unwrap_err();
        assert!(e.to_string().contains("2^depth"), "{e}");
        assert!(GeneratorState::init(small(), 0, 12, 8).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = small();
        c.kernel_size = 4;
        assert!(c.validate().is_err());
        let mut c = small();
        c.channels = vec![4];
        assert!(c.validate().is_err());
        let mut c = small();
        c.depth = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn output_shape_and_range() {
        let mut cfg = small();
        cfg.output_channels = 3;
        let g = GeneratorState::init(cfg, 1, 16, 8).unwrap();
        let y = g.output().unwrap();
        assert_eq!(y.shape(), &[3, 16, 8]);
        assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn zero_parameters_give_half() {
        let mut g = GeneratorState::init(small(), 1, 8, 8).unwrap();
        for t in g.params_mut() {
            t.data_mut().fill(0.0);
        }
        let y = g.output().unwrap();
        assert!(y.data().iter().all(|v| *v == 0.5));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.ckpt");
        let mut g = GeneratorState::init(small(), 3, 8, 8).unwrap();
        for t in g.params_mut() {
            for v in t.data_mut() {
                *v += 0.125;
            }
        }
        g.save_checkpoint(&p).unwrap();
        let back = GeneratorState::load_checkpoint(small(), &p).unwrap();
        assert_eq!(back.flat_params(), g.flat_params());
        assert_eq!(back.z(), g.z());
        assert_eq!(back.seed(), 3);
        let mut other = small();
        other.channels = vec![4, 7];
        assert!(GeneratorState::load_checkpoint(other, &p).is_err());
    }
}
