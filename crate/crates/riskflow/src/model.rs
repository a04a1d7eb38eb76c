//! The parametric velocity field: an MLP over `[x, sin/cos time embedding]`.
//!
//! Hidden layers use tanh; the final layer is linear and zero-initialized so
//! the untrained field is exactly zero. The taped forward pass (for training)
//! and the plain forward pass (for sampling) share the same kernels and
//! therefore agree bitwise.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg;

/// Geometric ladder of time-embedding frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct SinusoidalEmbedding {
    frequencies: Vec<f64>,
}

impl SinusoidalEmbedding {
    /// Ladder ω_k = 2^k·π for k = 0..num_frequencies.
    pub fn new(num_frequencies: usize) -> Self {
        assert!(num_frequencies >= 1);
        let frequencies = (0..num_frequencies)
            .map(|k| std::f64::consts::PI * (1u64 << k) as f64)
            .collect();
        SinusoidalEmbedding { frequencies }
    }

    /// Explicit frequencies; must be strictly increasing and positive.
    pub fn from_frequencies(frequencies: Vec<f64>) -> Self {
        assert!(!frequencies.is_empty());
        assert!(
            frequencies.windows(2).all(|w| w[0] < w[1]) && frequencies[0] > 0.0,
            "frequencies must be strictly increasing and positive"
        );
        SinusoidalEmbedding { frequencies }
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Output dimension: one (sin, cos) pair per frequency.
    pub fn dim(&self) -> usize {
        2 * self.frequencies.len()
    }

    /// `[sin(ω_1 t), cos(ω_1 t), ..., sin(ω_K t), cos(ω_K t)]`.
    /// Times outside [0,1] are permitted (ODE overshoot robustness).
    pub fn embed_time(&self, t: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for &w in &self.frequencies {
            let (s, c) = (w * t).sin_cos();
            out.push(s);
            out.push(c);
        }
        out
    }
}

/// One named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// MLP sizing: hidden widths only. Input is `2 + embedding dim`, output is 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub num_frequencies: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture { hidden: vec![128, 128, 128], num_frequencies: 8 }
    }
}

/// Velocity-field parameters: alternating weight/bias tensors per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityFieldParams {
    pub embedding: SinusoidalEmbedding,
    /// w0, b0, w1, b1, ... with weight shapes [in, out].
    pub params: Vec<ParamTensor>,
}

/// Taped forward pass: handles to the registered parameter leaves (aligned
/// with `VelocityFieldParams::params`) and the [B, 2] output.
pub struct TapedForward {
    pub param_vars: Vec<Var>,
    pub output: Var,
}

impl VelocityFieldParams {
    /// Hidden weights ~ U(-√(6/fan_in), +√(6/fan_in)), hidden biases zero,
    /// final layer fully zero so the initial field is identically zero.
    pub fn init<R: Rng>(arch: &Architecture, rng: &mut R) -> Self {
        let embedding = SinusoidalEmbedding::new(arch.num_frequencies);
        let mut widths = vec![2 + embedding.dim()];
        widths.extend_from_slice(&arch.hidden);
        widths.push(2);

        let num_layers = widths.len() - 1;
        let mut params = Vec::with_capacity(2 * num_layers);
        for l in 0..num_layers {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let w = if l + 1 == num_layers {
                vec![0.0; fan_in * fan_out]
            } else {
                let limit = (6.0 / fan_in as f64).sqrt();
                (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect()
            };
            params.push(ParamTensor {
                name: format!("w{l}"),
                shape: vec![fan_in, fan_out],
                data: w,
            });
            params.push(ParamTensor {
                name: format!("b{l}"),
                shape: vec![fan_out],
                data: vec![0.0; fan_out],
            });
        }
        VelocityFieldParams { embedding, params }
    }

    pub fn num_layers(&self) -> usize {
        self.params.len() / 2
    }

    /// Input dimension of the first layer.
    pub fn input_dim(&self) -> usize {
        self.params[0].shape[0]
    }

    /// Concatenates each state row with its time embedding: [B, 2 + emb dim].
    pub fn build_inputs(&self, x: &[f64], t: &[f64]) -> Vec<f64> {
        let b = t.len();
        assert_eq!(x.len(), 2 * b, "x and t batch sizes differ");
        let dim = self.input_dim();
        let mut inputs = Vec::with_capacity(b * dim);
        for i in 0..b {
            inputs.push(x[2 * i]);
            inputs.push(x[2 * i + 1]);
            inputs.extend(self.embedding.embed_time(t[i]));
        }
        inputs
    }

    /// Evaluation-only forward pass on plain arrays; returns [B, 2] flat.
    pub fn forward_plain(&self, x: &[f64], t: &[f64]) -> Vec<f64> {
        let b = t.len();
        let mut h = self.build_inputs(x, t);
        let mut cols = self.input_dim();
        let num_layers = self.num_layers();
        for l in 0..num_layers {
            let w = &self.params[2 * l];
            let bias = &self.params[2 * l + 1];
            let out_cols = w.shape[1];
            let mut next = vec![0.0; b * out_cols];
            linalg::matmul(&h, &w.data, &mut next, b, cols, out_cols);
            linalg::add_bias_rows(&mut next, &bias.data, b, out_cols);
            if l + 1 < num_layers {
                for v in &mut next {
                    *v = v.tanh();
                }
            }
            h = next;
            cols = out_cols;
        }
        h
    }

    /// Differentiable forward pass recorded on `tape`.
    pub fn forward_on_tape(&self, tape: &mut Tape, x: &[f64], t: &[f64]) -> Result<TapedForward> {
        let b = t.len();
        if x.len() != 2 * b {
            return Err(Error::ShapeMismatch { op: "forward", lhs: vec![x.len()], rhs: vec![b, 2] });
        }
        let inputs = self.build_inputs(x, t);
        let dim = self.input_dim();
        let mut h = tape.leaf(inputs, &[b, dim])?;

        let mut param_vars = Vec::with_capacity(self.params.len());
        let num_layers = self.num_layers();
        for l in 0..num_layers {
            let w = &self.params[2 * l];
            let bias = &self.params[2 * l + 1];
            let w_var = tape.leaf(w.data.clone(), &w.shape)?;
            let b_var = tape.leaf(bias.data.clone(), &bias.shape)?;
            param_vars.push(w_var);
            param_vars.push(b_var);

            let z = tape.matmul(h, w_var)?;
            let z = tape.add(z, b_var)?;
            h = if l + 1 < num_layers { tape.tanh(z)? } else { z };
        }
        Ok(TapedForward { param_vars, output: h })
    }

    // ── Checkpoint I/O ───────────────────────────────────────────────
    //
    // Plain-text named arrays:
    //   riskflow-checkpoint v1
    //   frequencies <w_1> ... <w_K>
    //   tensor <name> <dim_1> ... <dim_r>
    //   <numel values, space-separated>
    // Values print via Rust's shortest round-trip formatting, so save/load
    // is lossless.

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut text = String::from("riskflow-checkpoint v1\n");
        text.push_str("frequencies");
        for w in self.embedding.frequencies() {
            let _ = write!(text, " {w}");
        }
        text.push('\n');
        for p in &self.params {
            let _ = write!(text, "tensor {}", p.name);
            for d in &p.shape {
                let _ = write!(text, " {d}");
            }
            text.push('\n');
            let mut first = true;
            for v in &p.data {
                if !first {
                    text.push(' ');
                }
                let _ = write!(text, "{v}");
                first = false;
            }
            text.push('\n');
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(text.as_bytes())?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::InvalidCheckpoint(format!("{}: {reason}", path.display()));
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut lines = reader.lines();

        let header = lines.next().ok_or_else(|| bad("empty file"))??;
        if header.trim() != "riskflow-checkpoint v1" {
            return Err(bad("unrecognized header"));
        }
        let freq_line = lines.next().ok_or_else(|| bad("missing frequencies"))??;
        let mut parts = freq_line.split_whitespace();
        if parts.next() != Some("frequencies") {
            return Err(bad("expected `frequencies` line"));
        }
        let frequencies: Vec<f64> = parts
            .map(|s| s.parse::<f64>().map_err(|_| bad("bad frequency value")))
            .collect::<std::result::Result<_, _>>()?;
        if frequencies.is_empty() {
            return Err(bad("no frequencies"));
        }

        let mut params = Vec::new();
        while let Some(line) = lines.next() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            if parts.next() != Some("tensor") {
                return Err(bad("expected `tensor` line"));
            }
            let name = parts.next().ok_or_else(|| bad("tensor missing name"))?.to_string();
            let shape: Vec<usize> = parts
                .map(|s| s.parse::<usize>().map_err(|_| bad("bad dimension")))
                .collect::<std::result::Result<_, _>>()?;
            let numel: usize = shape.iter().product();
            let data_line = lines.next().ok_or_else(|| bad("tensor missing data"))??;
            let data: Vec<f64> = data_line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| bad("bad value")))
                .collect::<std::result::Result<_, _>>()?;
            if data.len() != numel {
                return Err(bad(&format!(
                    "tensor {name}: {} values for shape {shape:?}",
                    data.len()
                )));
            }
            if data.iter().any(|v| !v.is_finite()) {
                return Err(bad(&format!("tensor {name}: non-finite value")));
            }
            params.push(ParamTensor { name, shape, data });
        }

        if params.len() < 2 || params.len() % 2 != 0 {
            return Err(bad("expected alternating weight/bias tensors"));
        }
        for l in 0..params.len() / 2 {
            let (w, b) = (&params[2 * l], &params[2 * l + 1]);
            if w.shape.len() != 2 || b.shape.len() != 1 || w.shape[1] != b.shape[0] {
                return Err(bad(&format!("layer {l}: weight/bias shapes do not conform")));
            }
            if l > 0 && params[2 * (l - 1)].shape[1] != w.shape[0] {
                return Err(bad(&format!("layer {l}: input width mismatch")));
            }
        }
        let embedding = SinusoidalEmbedding::from_frequencies(frequencies);
        if params[0].shape[0] != 2 + embedding.dim() {
            return Err(bad("first layer width does not match 2 + embedding dim"));
        }
        Ok(VelocityFieldParams { embedding, params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn small_arch() -> Architecture {
        Architecture { hidden: vec![6, 5, 7], num_frequencies: 2 }
    }

    #[test]
    fn embed_time_at_zero() {
        let emb = SinusoidalEmbedding::new(4);
        let e = emb.embed_time(0.0);
        for pair in e.chunks_exact(2) {
            assert_eq!(pair, &[0.0, 1.0]);
        }
    }

    #[test]
    fn embed_time_pairs_are_unit() {
        let emb = SinusoidalEmbedding::new(8);
        for &t in &[0.13, 0.5, 0.999, -0.2, 1.7] {
            for pair in emb.embed_time(t).chunks_exact(2) {
                assert!((pair[0] * pair[0] + pair[1] * pair[1] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn embed_time_unit_frequency_quarter_period() {
        let emb = SinusoidalEmbedding::from_frequencies(vec![1.0, 2.0]);
        let e = emb.embed_time(FRAC_PI_2);
        assert!((e[0] - 1.0).abs() < 1e-12);
        assert!(e[1].abs() < 1e-12);
    }

    #[test]
    fn default_ladder_is_geometric() {
        let emb = SinusoidalEmbedding::new(8);
        let f = emb.frequencies();
        assert_eq!(f.len(), 8);
        assert_eq!(f[0], PI);
        for w in f.windows(2) {
            assert_eq!(w[1], 2.0 * w[0]);
        }
        assert_eq!(emb.dim(), 16);
    }

    #[test]
    fn zero_initialized_final_layer_outputs_zero() {
        let mut rng = stream_rng(3, Stream::Init);
        let params = VelocityFieldParams::init(&Architecture::default(), &mut rng);
        let x = [0.7, -0.3, 1.5, 0.0];
        let t = [0.25, 0.9];
        assert_eq!(params.forward_plain(&x, &t), vec![0.0; 4]);
    }

    #[test]
    fn forward_is_deterministic_given_seed() {
        let mut a = stream_rng(99, Stream::Init);
        let mut b = stream_rng(99, Stream::Init);
        let pa = VelocityFieldParams::init(&small_arch(), &mut a);
        let pb = VelocityFieldParams::init(&small_arch(), &mut b);
        assert_eq!(pa, pb);
        let x = [0.1, 0.2];
        let t = [0.3];
        assert_eq!(pa.forward_plain(&x, &t), pb.forward_plain(&x, &t));
    }

    fn randomize_final_layer(params: &mut VelocityFieldParams, seed: u64) {
        use rand::Rng;
        let mut rng = stream_rng(seed, Stream::Init);
        let last = params.params.len() - 2;
        for v in &mut params.params[last].data {
            *v = rng.gen_range(-0.5..0.5);
        }
        for v in &mut params.params[last + 1].data {
            *v = rng.gen_range(-0.5..0.5);
        }
    }

    #[test]
    fn single_row_batch_matches_batched_row() {
        let mut rng = stream_rng(5, Stream::Init);
        let mut params = VelocityFieldParams::init(&small_arch(), &mut rng);
        randomize_final_layer(&mut params, 6);
        let x = [0.4, -0.1, 0.0, 0.9, -0.7, 0.2];
        let t = [0.15, 0.85, 0.5];
        let batched = params.forward_plain(&x, &t);
        for i in 0..3 {
            let single = params.forward_plain(&x[2 * i..2 * i + 2], &t[i..i + 1]);
            assert_eq!(single, batched[2 * i..2 * i + 2].to_vec());
        }
    }

    #[test]
    fn taped_forward_matches_plain_bitwise() {
        let mut rng = stream_rng(8, Stream::Init);
        let mut params = VelocityFieldParams::init(&small_arch(), &mut rng);
        randomize_final_layer(&mut params, 9);
        let x = [0.3, 0.1, -0.4, 0.8];
        let t = [0.2, 0.6];
        let plain = params.forward_plain(&x, &t);
        let mut tape = Tape::new();
        let fwd = params.forward_on_tape(&mut tape, &x, &t).unwrap();
        assert_eq!(tape.data(fwd.output), plain.as_slice());
    }

    #[test]
    fn forward_rejects_mismatched_batch() {
        let mut rng = stream_rng(8, Stream::Init);
        let params = VelocityFieldParams::init(&small_arch(), &mut rng);
        let mut tape = Tape::new();
        assert!(matches!(
            params.forward_on_tape(&mut tape, &[0.0; 4], &[0.1; 3]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn gradient_of_mean_squared_output_matches_finite_differences() {
        let mut rng = stream_rng(17, Stream::Init);
        let mut params = VelocityFieldParams::init(&small_arch(), &mut rng);
        randomize_final_layer(&mut params, 18);
        let x = [0.2, -0.6, 0.9, 0.4];
        let t = [0.3, 0.7];

        let mut tape = Tape::new();
        let fwd = params.forward_on_tape(&mut tape, &x, &t).unwrap();
        let sq = tape.mul(fwd.output, fwd.output).unwrap();
        let loss = tape.mean(sq).unwrap();
        tape.backward(loss).unwrap();

        let eval = |p: &VelocityFieldParams| -> f64 {
            let out = p.forward_plain(&x, &t);
            out.iter().map(|v| v * v).sum::<f64>() / out.len() as f64
        };

        let h = 1e-5;
        for (pi, var) in fwd.param_vars.iter().enumerate() {
            let grad = tape.grad_or_zeros(*var);
            for ci in 0..params.params[pi].data.len() {
                let saved = params.params[pi].data[ci];
                params.params[pi].data[ci] = saved + h;
                let up = eval(&params);
                params.params[pi].data[ci] = saved - h;
                let down = eval(&params);
                params.params[pi].data[ci] = saved;
                let fd = (up - down) / (2.0 * h);
                let scale = grad[ci].abs().max(fd.abs()).max(1e-6);
                assert!(
                    (grad[ci] - fd).abs() / scale < 1e-4,
                    "param {pi} coord {ci}: ad = {}, fd = {fd}",
                    grad[ci]
                );
            }
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_lossless() {
        let dir = std::env::temp_dir().join(format!("riskflow-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("params.txt");

        let mut rng = stream_rng(23, Stream::Init);
        let mut params = VelocityFieldParams::init(&small_arch(), &mut rng);
        randomize_final_layer(&mut params, 24);
        params.save_checkpoint(&path).unwrap();
        let loaded = VelocityFieldParams::load_checkpoint(&path).unwrap();
        assert_eq!(params, loaded);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn checkpoint_rejects_malformed_shapes() {
        let dir = std::env::temp_dir().join(format!("riskflow-ckpt-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.txt");
        std::fs::write(
            &path,
            "riskflow-checkpoint v1\nfrequencies 3.14159\ntensor w0 4 2\n1 2 3\n",
        )
        .unwrap();
        assert!(matches!(
            VelocityFieldParams::load_checkpoint(&path),
            Err(Error::InvalidCheckpoint(_))
        ));
        std::fs::remove_dir_all(&dir).ok();
    }
}
