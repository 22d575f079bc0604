//! Numeric primitives for the screenshot classifier: tensors, convolution,
//! pooling, activations, focal loss, and the Adam update. Everything is
//! double precision.

use serde::{Deserialize, Serialize};

use super::CnnError;

/// Row-major dense tensor. Feature maps use (height, width, channels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_data(shape: &[usize], data: Vec<f64>) -> Result<Tensor, CnnError> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(CnnError::ShapeMismatch(format!(
                "shape {shape:?} does not describe {} values",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Cross-correlation of an (h, w, cin) input with (k, k, cin, cout)
/// kernels, zero padding, arbitrary stride.
pub fn conv2d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: Option<&[f64]>,
    stride: usize,
    padding: usize,
) -> Result<Tensor, CnnError> {
    let [h, w, cin]: [usize; 3] = input
        .shape
        .clone()
        .try_into()
        .map_err(|_| CnnError::ShapeMismatch(format!("input must be 3-d, got {:?}", input.shape)))?;
    let [kh, kw, kcin, cout]: [usize; 4] = kernels.shape.clone().try_into().map_err(|_| {
        CnnError::ShapeMismatch(format!("kernels must be 4-d, got {:?}", kernels.shape))
    })?;
    if kcin != cin || kh != kw || stride == 0 {
        return Err(CnnError::ShapeMismatch(format!(
            "kernels {:?} incompatible with input {:?} at stride {stride}",
            kernels.shape, input.shape
        )));
    }
    if let Some(b) = bias {
        if b.len() != cout {
            return Err(CnnError::ShapeMismatch(format!(
                "bias length {} != {cout} output channels",
                b.len()
            )));
        }
    }
    if h + 2 * padding < kh || w + 2 * padding < kw {
        return Err(CnnError::ShapeMismatch(format!(
            "kernel {kh}x{kw} larger than padded input {h}x{w}+{padding}"
        )));
    }
    let oh = (h + 2 * padding - kh) / stride + 1;
    let ow = (w + 2 * padding - kw) / stride + 1;
    let mut out = Tensor::zeros(&[oh, ow, cout]);

    for oy in 0..oh {
        for ox in 0..ow {
            for co in 0..cout {
                let mut acc = bias.map(|b| b[co]).unwrap_or(0.0);
                for dy in 0..kh {
                    let iy = (oy * stride + dy) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for dx in 0..kw {
                        let ix = (ox * stride + dx) as isize - padding as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let in_base = (iy as usize * w + ix as usize) * cin;
                        let k_base = ((dy * kw + dx) * cin) * cout;
                        for ci in 0..cin {
                            acc += input.data[in_base + ci] * kernels.data[k_base + ci * cout + co];
                        }
                    }
                }
                out.data[(oy * ow + ox) * cout + co] = acc;
            }
        }
    }
    Ok(out)
}

/// Gradients of a stride-1 convolution: returns (d_input, d_kernels, d_bias).
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    d_out: &Tensor,
    padding: usize,
) -> Result<(Tensor, Tensor, Vec<f64>), CnnError> {
    let [h, w, cin]: [usize; 3] = input.shape.clone().try_into().unwrap();
    let [kh, kw, _, cout]: [usize; 4] = kernels.shape.clone().try_into().unwrap();
    let [oh, ow, docout]: [usize; 3] = d_out
        .shape
        .clone()
        .try_into()
        .map_err(|_| CnnError::ShapeMismatch(format!("d_out must be 3-d, got {:?}", d_out.shape)))?;
    if docout != cout || oh != h + 2 * padding - kh + 1 || ow != w + 2 * padding - kw + 1 {
        return Err(CnnError::ShapeMismatch(format!(
            "d_out shape {:?} incompatible with input {:?} kernels {:?}",
            d_out.shape, input.shape, kernels.shape
        )));
    }

    let mut d_input = Tensor::zeros(&input.shape);
    let mut d_kernels = Tensor::zeros(&kernels.shape);
    let mut d_bias = vec![0.0; cout];

    for oy in 0..oh {
        for ox in 0..ow {
            let o_base = (oy * ow + ox) * cout;
            for dy in 0..kh {
                let iy = (oy + dy) as isize - padding as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for dx in 0..kw {
                    let ix = (ox + dx) as isize - padding as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let in_base = (iy as usize * w + ix as usize) * cin;
                    let k_base = ((dy * kw + dx) * cin) * cout;
                    for ci in 0..cin {
                        let x = input.data[in_base + ci];
                        for co in 0..cout {
                            let g = d_out.data[o_base + co];
                            d_kernels.data[k_base + ci * cout + co] += x * g;
                            d_input.data[in_base + ci] +=
                                kernels.data[k_base + ci * cout + co] * g;
                        }
                    }
                }
            }
            for co in 0..cout {
                d_bias[co] += d_out.data[o_base + co];
            }
        }
    }
    Ok((d_input, d_kernels, d_bias))
}

/// 2x2 max pooling with stride 2. The mask records the flat input index of
/// each window's maximum for the backward pass.
pub fn maxpool_forward(input: &Tensor) -> Result<(Tensor, Vec<usize>), CnnError> {
    let [h, w, c]: [usize; 3] = input
        .shape
        .clone()
        .try_into()
        .map_err(|_| CnnError::ShapeMismatch(format!("input must be 3-d, got {:?}", input.shape)))?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(CnnError::ShapeMismatch(format!(
            "maxpool needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[oh, ow, c]);
    let mut mask = vec![0usize; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = ((oy * 2 + dy) * w + ox * 2 + dx) * c + ch;
                        if input.data[idx] > best {
                            best = input.data[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (oy * ow + ox) * c + ch;
                out.data[o] = best;
                mask[o] = best_idx;
            }
        }
    }
    Ok((out, mask))
}

/// Route output gradients back to the recorded argmax positions.
pub fn maxpool_backward(mask: &[usize], d_out: &Tensor, input_shape: &[usize]) -> Tensor {
    let mut d_input = Tensor::zeros(input_shape);
    for (o, &src) in mask.iter().enumerate() {
        d_input.data[src] += d_out.data[o];
    }
    d_input
}

pub fn relu(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// d_pre[i] = d_post[i] if pre[i] > 0 else 0.
pub fn relu_backward(pre: &[f64], d_post: &mut [f64]) {
    for (p, d) in pre.iter().zip(d_post) {
        if *p <= 0.0 {
            *d = 0.0;
        }
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Focusing and weighting parameters for the focal loss.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FocalLossParams {
    pub gamma_f: f64,
    pub alpha: f64,
}

impl Default for FocalLossParams {
    fn default() -> Self {
        FocalLossParams {
            gamma_f: 2.0,
            alpha: 1.0,
        }
    }
}

const P_FLOOR: f64 = 1e-12;

/// -alpha * (1 - p_t)^gamma_f * ln(p_t), with p_t clamped to [1e-12, 1].
pub fn focal_loss(probs: &[f64], true_class: usize, params: &FocalLossParams) -> f64 {
    let p = probs[true_class].clamp(P_FLOOR, 1.0);
    -params.alpha * (1.0 - p).powf(params.gamma_f) * p.ln()
}

/// Analytic gradient of the focal loss with respect to the logits that
/// produced `probs` through softmax.
pub fn focal_loss_grad(probs: &[f64], true_class: usize, params: &FocalLossParams) -> Vec<f64> {
    let p = probs[true_class].clamp(P_FLOOR, 1.0);
    let one_m = 1.0 - p;
    // dL/dp_t
    let dl_dp = -params.alpha
        * (-params.gamma_f * one_m.powf(params.gamma_f - 1.0) * p.ln()
            + one_m.powf(params.gamma_f) / p);
    probs
        .iter()
        .enumerate()
        .map(|(j, &pj)| {
            let dp_dz = if j == true_class {
                p * (1.0 - pj)
            } else {
                -p * pj
            };
            dl_dp * dp_dz
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter tensor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> AdamState {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// Standard bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<(), CnnError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(CnnError::ShapeMismatch(format!(
            "adam: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    for i in 0..params.len() {
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grads[i];
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_kernel_preserves_input() {
        let input = Tensor::from_data(&[3, 3, 1], (1..=9).map(|v| v as f64).collect()).unwrap();
        let kernels = Tensor::from_data(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let out = conv2d_forward(&input, &kernels, None, 1, 0).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn ones_kernel_on_constant_image() {
        let c = 2.5;
        let input = Tensor::from_data(&[5, 5, 1], vec![c; 25]).unwrap();
        let kernels = Tensor::from_data(&[3, 3, 1, 1], vec![1.0; 9]).unwrap();
        let out = conv2d_forward(&input, &kernels, None, 1, 1).unwrap();
        // interior entries see the full 3x3 window
        for y in 1..4 {
            for x in 1..4 {
                assert!((out.data[y * 5 + x] - 9.0 * c).abs() < 1e-12);
            }
        }
        // corner sees 4 entries
        assert!((out.data[0] - 4.0 * c).abs() < 1e-12);
    }

    // brute-force direct convolution, quadruple loop
    fn conv_naive(input: &Tensor, kernels: &Tensor, padding: usize) -> Tensor {
        let (h, w, cin) = (input.shape[0], input.shape[1], input.shape[2]);
        let (k, cout) = (kernels.shape[0], kernels.shape[3]);
        let oh = h + 2 * padding - k + 1;
        let ow = w + 2 * padding - k + 1;
        let mut out = Tensor::zeros(&[oh, ow, cout]);
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = 0.0;
                    for dy in 0..k {
                        for dx in 0..k {
                            for ci in 0..cin {
                                let iy = oy as isize + dy as isize - padding as isize;
                                let ix = ox as isize + dx as isize - padding as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += input.data[(iy as usize * w + ix as usize) * cin + ci]
                                        * kernels.data[((dy * k + dx) * cin + ci) * cout + co];
                                }
                            }
                        }
                    }
                    out.data[(oy * ow + ox) * cout + co] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let input = Tensor::from_data(
            &[5, 5, 2],
            (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let kernels = Tensor::from_data(
            &[3, 3, 2, 3],
            (0..54).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        for padding in [0, 1] {
            let fast = conv2d_forward(&input, &kernels, None, 1, padding).unwrap();
            let slow = conv_naive(&input, &kernels, padding);
            assert_eq!(fast.shape, slow.shape);
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_shape_mismatch_rejected() {
        let input = Tensor::zeros(&[4, 4, 2]);
        let kernels = Tensor::zeros(&[3, 3, 5, 1]);
        assert!(matches!(
            conv2d_forward(&input, &kernels, None, 1, 1),
            Err(CnnError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn maxpool_examples() {
        let constant = Tensor::from_data(&[4, 4, 1], vec![7.0; 16]).unwrap();
        let (out, _) = maxpool_forward(&constant).unwrap();
        assert!(out.data.iter().all(|&v| v == 7.0));

        let small = Tensor::from_data(&[2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, mask) = maxpool_forward(&small).unwrap();
        assert_eq!(out.data, vec![4.0]);
        assert_eq!(mask, vec![3]);
    }

    #[test]
    fn maxpool_matches_window_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = Tensor::from_data(
            &[6, 8, 3],
            (0..144).map(|_| rng.gen_range(-5.0..5.0)).collect(),
        )
        .unwrap();
        let (out, _) = maxpool_forward(&input).unwrap();
        for oy in 0..3 {
            for ox in 0..4 {
                for c in 0..3 {
                    let mut best = f64::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            best = best.max(input.data[((oy * 2 + dy) * 8 + ox * 2 + dx) * 3 + c]);
                        }
                    }
                    assert_eq!(out.data[(oy * 4 + ox) * 3 + c], best);
                }
            }
        }
    }

    #[test]
    fn odd_dims_rejected_by_maxpool() {
        assert!(matches!(
            maxpool_forward(&Tensor::zeros(&[3, 4, 1])),
            Err(CnnError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn softmax_properties() {
        let p = softmax(&[1.0; 5]);
        for v in &p {
            assert!((v - 0.2).abs() < 1e-12);
        }
        let a = softmax(&[0.3, -1.2, 2.0, 0.0, 1.0]);
        let b = softmax(&[100.3, 98.8, 102.0, 100.0, 101.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let peaked = softmax(&[50.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(peaked[0] > 0.999999);
    }

    #[test]
    fn focal_reduces_to_cross_entropy_at_gamma_zero() {
        let probs = softmax(&[0.4, -0.3, 1.7, 0.0, -2.0]);
        let params = FocalLossParams {
            gamma_f: 0.0,
            alpha: 1.0,
        };
        for t in 0..5 {
            let fl = focal_loss(&probs, t, &params);
            assert!((fl - (-probs[t].ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn focal_closed_forms() {
        let params = FocalLossParams::default();
        assert_eq!(focal_loss(&[0.0, 1.0], 1, &params), 0.0);
        let l = focal_loss(&[0.5, 0.5], 0, &params);
        assert!((l - 0.25 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((l - 0.173287).abs() < 1e-6);
    }

    #[test]
    fn focal_grad_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = FocalLossParams::default();
        for _ in 0..20 {
            let logits: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let t = rng.gen_range(0..5);
            let grad = focal_loss_grad(&softmax(&logits), t, &params);
            for j in 0..5 {
                let eps = 1e-6;
                let mut up = logits.clone();
                up[j] += eps;
                let mut dn = logits.clone();
                dn[j] -= eps;
                let num =
                    (focal_loss(&softmax(&up), t, &params) - focal_loss(&softmax(&dn), t, &params))
                        / (2.0 * eps);
                assert!((grad[j] - num).abs() < 1e-7, "j={j}: {} vs {num}", grad[j]);
            }
        }
    }

    #[test]
    fn adam_zero_grad_is_identity() {
        let mut params = vec![1.0, -2.0, 3.0];
        let mut state = AdamState::new(3);
        adam_step(&mut params, &[0.0; 3], &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(params, vec![1.0, -2.0, 3.0]);
        assert!(state.m.iter().all(|&v| v == 0.0));
        assert!(state.v.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        let cfg = AdamConfig::default();
        for g in [0.5, -3.0, 100.0] {
            let mut params = vec![0.0];
            let mut state = AdamState::new(1);
            adam_step(&mut params, &[g], &mut state, &cfg).unwrap();
            assert!((params[0].abs() - cfg.lr).abs() < 1e-6, "g={g}: {}", params[0]);
            assert_eq!(params[0].signum(), -g.signum());
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let cfg = AdamConfig::default();
        let mut w = vec![0.0];
        let mut state = AdamState::new(1);
        for _ in 0..10_000 {
            let grad = vec![2.0 * (w[0] - 3.0)];
            adam_step(&mut w, &grad, &mut state, &cfg).unwrap();
        }
        assert!((w[0] - 3.0).abs() < 0.01, "w={}", w[0]);
    }

    #[test]
    fn adam_shape_mismatch_rejected() {
        let mut params = vec![0.0; 2];
        let mut state = AdamState::new(2);
        assert!(matches!(
            adam_step(&mut params, &[1.0], &mut state, &AdamConfig::default()),
            Err(CnnError::ShapeMismatch(_))
        ));
    }
}
