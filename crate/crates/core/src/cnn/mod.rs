//! From-scratch screenshot classifier: three conv+ReLU+maxpool stages,
//! dropout, two dense layers, softmax output; trained with Adam on the
//! focal loss.

pub mod ops;

use crate::grade::UsabilityGrade;
use crate::probe::{self, ImageTensor};
use ops::{
    adam_step, conv2d_backward, conv2d_forward, focal_loss, focal_loss_grad, maxpool_backward,
    maxpool_forward, relu, relu_backward, softmax, AdamConfig, AdamState, FocalLossParams, Tensor,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const CNN_MODEL_VERSION: &str = "webaudit-cnn-1";

#[derive(Debug, Error)]
pub enum CnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dataset is empty: {0}")]
    EmptyDataset(String),
    #[error("dataset layout problem: {0}")]
    Data(String),
    #[error("model file error: {0}")]
    ModelFile(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Structural hyperparameters. The defaults are 224-pixel
/// inputs, 16/32/64 filters, 3x3 kernels, a 128-wide hidden dense layer
/// and dropout 0.5 after the conv stack.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CnnArch {
    pub input_side: usize,
    pub filters: [usize; 3],
    pub kernel: usize,
    pub dense_width: usize,
    pub dropout_rate: f64,
}

impl Default for CnnArch {
    fn default() -> Self {
        CnnArch {
            input_side: 224,
            filters: [16, 32, 64],
            kernel: 3,
            dense_width: 128,
            dropout_rate: 0.5,
        }
    }
}

impl CnnArch {
    /// Flattened size after three 2x pools.
    fn flat_len(&self) -> usize {
        let side = self.input_side / 8;
        side * side * self.filters[2]
    }

    fn validate(&self) -> Result<(), CnnError> {
        if self.input_side == 0 || self.input_side % 8 != 0 {
            return Err(CnnError::ShapeMismatch(format!(
                "input side {} must be a positive multiple of 8",
                self.input_side
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(CnnError::ShapeMismatch(format!(
                "dropout rate {} must lie in [0,1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvParams {
    pub kernels: Tensor,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseParams {
    /// (input, output) row-major.
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl DenseParams {
    fn forward(&self, input: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.weights.shape[0], self.weights.shape[1]);
        debug_assert_eq!(input.len(), n_in);
        let mut out = self.bias.clone();
        for (i, &x) in input.iter().enumerate() {
            let row = &self.weights.data[i * n_out..(i + 1) * n_out];
            for (o, &w) in row.iter().enumerate() {
                out[o] += x * w;
            }
        }
        out
    }

    fn backward(&self, input: &[f64], d_out: &[f64]) -> (Tensor, Vec<f64>, Vec<f64>) {
        let (n_in, n_out) = (self.weights.shape[0], self.weights.shape[1]);
        let mut d_w = Tensor::zeros(&self.weights.shape);
        let mut d_in = vec![0.0; n_in];
        for i in 0..n_in {
            let row = &self.weights.data[i * n_out..(i + 1) * n_out];
            let d_row = &mut d_w.data[i * n_out..(i + 1) * n_out];
            let x = input[i];
            let mut acc = 0.0;
            for o in 0..n_out {
                d_row[o] = x * d_out[o];
                acc += row[o] * d_out[o];
            }
            d_in[i] = acc;
        }
        (d_w, d_out.to_vec(), d_in)
    }
}

pub const NUM_CLASSES: usize = 5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CnnModel {
    pub version: String,
    pub arch: CnnArch,
    pub conv: Vec<ConvParams>,
    pub dense1: DenseParams,
    pub dense2: DenseParams,
}

fn init_uniform(rng: &mut impl Rng, len: usize, fan_in: usize) -> Vec<f64> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..len).map(|_| rng.gen_range(-limit..limit)).collect()
}

impl CnnModel {
    pub fn new(arch: CnnArch, seed: u64) -> Result<CnnModel, CnnError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = arch.kernel;
        let mut conv = Vec::new();
        let mut cin = 3usize;
        for &cout in &arch.filters {
            let fan_in = k * k * cin;
            let kernels =
                Tensor::from_data(&[k, k, cin, cout], init_uniform(&mut rng, fan_in * cout, fan_in))
                    .unwrap();
            conv.push(ConvParams {
                kernels,
                bias: vec![0.01; cout],
            });
            cin = cout;
        }
        let flat = arch.flat_len();
        let dense1 = DenseParams {
            weights: Tensor::from_data(
                &[flat, arch.dense_width],
                init_uniform(&mut rng, flat * arch.dense_width, flat),
            )
            .unwrap(),
            bias: vec![0.01; arch.dense_width],
        };
        let dense2 = DenseParams {
            weights: Tensor::from_data(
                &[arch.dense_width, NUM_CLASSES],
                init_uniform(&mut rng, arch.dense_width * NUM_CLASSES, arch.dense_width),
            )
            .unwrap(),
            bias: vec![0.0; NUM_CLASSES],
        };
        Ok(CnnModel {
            version: CNN_MODEL_VERSION.to_owned(),
            arch,
            conv,
            dense1,
            dense2,
        })
    }

    /// Ordered parameter groups: conv kernels/biases, then dense layers.
    pub fn num_param_groups(&self) -> usize {
        self.conv.len() * 2 + 4
    }

    pub fn param_group(&self, idx: usize) -> &[f64] {
        let nc = self.conv.len();
        match idx {
            i if i < nc * 2 && i % 2 == 0 => &self.conv[i / 2].kernels.data,
            i if i < nc * 2 => &self.conv[i / 2].bias,
            i if i == nc * 2 => &self.dense1.weights.data,
            i if i == nc * 2 + 1 => &self.dense1.bias,
            i if i == nc * 2 + 2 => &self.dense2.weights.data,
            _ => &self.dense2.bias,
        }
    }

    pub fn param_group_mut(&mut self, idx: usize) -> &mut Vec<f64> {
        let nc = self.conv.len();
        match idx {
            i if i < nc * 2 && i % 2 == 0 => &mut self.conv[i / 2].kernels.data,
            i if i < nc * 2 => &mut self.conv[i / 2].bias,
            i if i == nc * 2 => &mut self.dense1.weights.data,
            i if i == nc * 2 + 1 => &mut self.dense1.bias,
            i if i == nc * 2 + 2 => &mut self.dense2.weights.data,
            _ => &mut self.dense2.bias,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CnnError> {
        let json =
            serde_json::to_string(self).map_err(|e| CnnError::ModelFile(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<CnnModel, CnnError> {
        let text = std::fs::read_to_string(path)?;
        let model: CnnModel =
            serde_json::from_str(&text).map_err(|e| CnnError::ModelFile(e.to_string()))?;
        if model.version != CNN_MODEL_VERSION {
            return Err(CnnError::ModelFile(format!(
                "unsupported model version {:?}, expected {:?}",
                model.version, CNN_MODEL_VERSION
            )));
        }
        model.arch.validate()?;
        Ok(model)
    }
}

struct ForwardCache {
    conv_inputs: Vec<Tensor>,
    conv_pre: Vec<Tensor>,
    pool_in_shapes: Vec<Vec<usize>>,
    pool_masks: Vec<Vec<usize>>,
    /// Per-unit scale applied after the conv stack: 0 or 1/keep in
    /// training, absent at inference.
    dropout_scale: Option<Vec<f64>>,
    flat: Vec<f64>,
    dense1_pre: Vec<f64>,
    dense1_post: Vec<f64>,
    probs: Vec<f64>,
}

fn forward(
    model: &CnnModel,
    image: &[f64],
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardCache, CnnError> {
    let side = model.arch.input_side;
    if image.len() != side * side * 3 {
        return Err(CnnError::ShapeMismatch(format!(
            "image has {} values, model expects {}x{}x3",
            image.len(),
            side,
            side
        )));
    }
    let mut x = Tensor::from_data(&[side, side, 3], image.to_vec()).unwrap();
    let mut conv_inputs = Vec::new();
    let mut conv_pre = Vec::new();
    let mut pool_in_shapes = Vec::new();
    let mut pool_masks = Vec::new();
    let padding = model.arch.kernel / 2;

    for layer in &model.conv {
        conv_inputs.push(x.clone());
        let mut pre = conv2d_forward(&x, &layer.kernels, Some(&layer.bias), 1, padding)?;
        conv_pre.push(pre.clone());
        relu(&mut pre.data);
        pool_in_shapes.push(pre.shape.clone());
        let (pooled, mask) = maxpool_forward(&pre)?;
        pool_masks.push(mask);
        x = pooled;
    }

    let mut flat = x.data;
    let dropout_scale = match dropout_rng {
        Some(rng) => {
            let keep = 1.0 - model.arch.dropout_rate;
            let scale: Vec<f64> = flat
                .iter()
                .map(|_| {
                    if rng.gen_range(0.0..1.0) < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect();
            for (v, s) in flat.iter_mut().zip(&scale) {
                *v *= s;
            }
            Some(scale)
        }
        None => None,
    };

    let dense1_pre = model.dense1.forward(&flat);
    let mut dense1_post = dense1_pre.clone();
    relu(&mut dense1_post);
    let probs = softmax(&model.dense2.forward(&dense1_post));

    Ok(ForwardCache {
        conv_inputs,
        conv_pre,
        pool_in_shapes,
        pool_masks,
        dropout_scale,
        flat,
        dense1_pre,
        dense1_post,
        probs,
    })
}

/// Parameter gradients, same group order as `CnnModel::param_group`.
type Grads = Vec<Vec<f64>>;

fn backward(
    model: &CnnModel,
    cache: &ForwardCache,
    true_class: usize,
    loss_params: &FocalLossParams,
) -> Grads {
    let d_logits = focal_loss_grad(&cache.probs, true_class, loss_params);

    let (d_w2, d_b2, mut d_dense1_post) = model.dense2.backward(&cache.dense1_post, &d_logits);
    relu_backward(&cache.dense1_pre, &mut d_dense1_post);
    let (d_w1, d_b1, mut d_flat) = model.dense1.backward(&cache.flat, &d_dense1_post);

    if let Some(scale) = &cache.dropout_scale {
        for (d, s) in d_flat.iter_mut().zip(scale) {
            *d *= s;
        }
    }

    let last_pool_shape: Vec<usize> = {
        let s = &cache.pool_in_shapes[model.conv.len() - 1];
        vec![s[0] / 2, s[1] / 2, s[2]]
    };
    let mut d_x = Tensor::from_data(&last_pool_shape, d_flat).unwrap();

    let padding = model.arch.kernel / 2;
    let mut conv_grads: Vec<(Tensor, Vec<f64>)> = Vec::new();
    for li in (0..model.conv.len()).rev() {
        let mut d_pre = maxpool_backward(&cache.pool_masks[li], &d_x, &cache.pool_in_shapes[li]);
        relu_backward(&cache.conv_pre[li].data, &mut d_pre.data);
        let (d_in, d_k, d_b) = conv2d_backward(
            &cache.conv_inputs[li],
            &model.conv[li].kernels,
            &d_pre,
            padding,
        )
        .expect("shapes fixed by forward pass");
        conv_grads.push((d_k, d_b));
        d_x = d_in;
    }
    conv_grads.reverse();

    let mut grads: Grads = Vec::new();
    for (d_k, d_b) in conv_grads {
        grads.push(d_k.data);
        grads.push(d_b);
    }
    grads.push(d_w1.data);
    grads.push(d_b1);
    grads.push(d_w2.data);
    grads.push(d_b2);
    grads
}

/// Training-run settings; the defaults follow the published setup
/// (batch 32, 10 epochs, Adam at 1e-3, focal loss).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub focal: FocalLossParams,
    pub seed: u64,
    pub arch: CnnArch,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 10,
            adam: AdamConfig::default(),
            focal: FocalLossParams::default(),
            seed: 0,
            arch: CnnArch::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

/// Images labeled by the `<root>/<split>/<grade>/*.png|jpg` layout.
/// Undecodable files are skipped and counted.
pub struct LabeledImages {
    pub images: Vec<(ImageTensor, UsabilityGrade)>,
    pub skipped: usize,
}

pub fn load_labeled_dir(dir: impl AsRef<Path>, side: usize) -> Result<LabeledImages, CnnError> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(CnnError::Data(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let mut images = Vec::new();
    let mut skipped = 0usize;
    let mut class_dirs: Vec<std::path::PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    for class_dir in class_dirs {
        let name = class_dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_owned();
        let grade: UsabilityGrade = name
            .parse()
            .map_err(|_| CnnError::Data(format!("unexpected class directory {name:?}")))?;
        let mut files: Vec<std::path::PathBuf> = std::fs::read_dir(&class_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("png") | Some("jpg") | Some("jpeg")
                )
            })
            .collect();
        files.sort();
        for file in files {
            match probe::ingest_screenshot(&file, side) {
                Ok(t) => images.push((t, grade)),
                Err(probe::ProbeError::UndecodableImage { path, .. }) => {
                    eprintln!("warning: skipping undecodable image {path}");
                    skipped += 1;
                }
                Err(e) => return Err(CnnError::Data(e.to_string())),
            }
        }
    }
    Ok(LabeledImages { images, skipped })
}

fn class_index(grade: UsabilityGrade) -> usize {
    UsabilityGrade::ALL.iter().position(|&g| g == grade).unwrap()
}

/// Train on `<dataset_dir>/train`. Seeded shuffling every epoch, dropout
/// active during training only, per-epoch loss/accuracy log returned
/// alongside the model.
pub fn train(
    dataset_dir: impl AsRef<Path>,
    config: &TrainConfig,
) -> Result<(CnnModel, Vec<EpochStats>), CnnError> {
    let train_dir = dataset_dir.as_ref().join("train");
    let data = load_labeled_dir(&train_dir, config.arch.input_side)?;
    if data.images.is_empty() {
        return Err(CnnError::EmptyDataset(train_dir.display().to_string()));
    }
    train_on_images(&data.images, config)
}

/// Training loop over preloaded images; exposed for small in-memory runs.
pub fn train_on_images(
    images: &[(ImageTensor, UsabilityGrade)],
    config: &TrainConfig,
) -> Result<(CnnModel, Vec<EpochStats>), CnnError> {
    if images.is_empty() {
        return Err(CnnError::EmptyDataset("no training images".into()));
    }
    let mut model = CnnModel::new(config.arch, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut states: Vec<AdamState> = (0..model.num_param_groups())
        .map(|g| AdamState::new(model.param_group(g).len()))
        .collect();

    let mut log = Vec::new();
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..images.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);

        for batch in order.chunks(config.batch_size.max(1)) {
            let mut batch_grads: Option<Grads> = None;
            for &i in batch {
                let (image, grade) = &images[i];
                let cache = forward(&model, &image.data, Some(&mut rng))?;
                let grads = backward(&model, &cache, class_index(*grade), &config.focal);
                match &mut batch_grads {
                    None => batch_grads = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            for (x, y) in a.iter_mut().zip(g) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            let mut grads = batch_grads.unwrap();
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                for v in g.iter_mut() {
                    *v *= scale;
                }
            }
            for (gi, g) in grads.iter().enumerate() {
                let params = model.param_group_mut(gi);
                adam_step(params, g, &mut states[gi], &config.adam)?;
            }
        }

        // epoch stats in inference mode so the log is dropout-free
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (image, grade) in images {
            let cache = forward(&model, &image.data, None)?;
            loss_sum += focal_loss(&cache.probs, class_index(*grade), &config.focal);
            let pred = argmax(&cache.probs);
            if pred == class_index(*grade) {
                correct += 1;
            }
        }
        log.push(EpochStats {
            epoch: epoch + 1,
            mean_loss: loss_sum / images.len() as f64,
            train_accuracy: correct as f64 / images.len() as f64,
        });
    }
    Ok((model, log))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Classify a preprocessed screenshot. Dropout is disabled; returns the
/// winning grade and the full probability vector.
pub fn predict_cnn(
    model: &CnnModel,
    image: &ImageTensor,
) -> Result<(UsabilityGrade, Vec<f64>), CnnError> {
    let cache = forward(model, &image.data, None)?;
    let idx = argmax(&cache.probs);
    Ok((UsabilityGrade::ALL[idx], cache.probs))
}

// ---------------------------------------------------------------------------
// Gradient verification harness
// ---------------------------------------------------------------------------

fn small_arch() -> CnnArch {
    CnnArch {
        input_side: 16,
        filters: [2, 2, 2],
        kernel: 3,
        dense_width: 8,
        dropout_rate: 0.5,
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / f64::max(1e-6, a.abs() + n.abs())
}

/// Smallest margin between any ReLU pre-activation and zero, and between
/// the top two entries of any pooling window. Inputs this close to a kink
/// would corrupt a finite-difference probe.
fn kink_margin(cache: &ForwardCache) -> f64 {
    let mut margin = f64::INFINITY;
    for pre in &cache.conv_pre {
        for &v in &pre.data {
            margin = margin.min(v.abs());
        }
    }
    for &v in &cache.dense1_pre {
        margin = margin.min(v.abs());
    }
    for (li, mask) in cache.pool_masks.iter().enumerate() {
        let mut post = cache.conv_pre[li].clone();
        relu(&mut post.data);
        let (w, c) = (post.shape[1], post.shape[2]);
        for (o, &best_idx) in mask.iter().enumerate() {
            let c_ch = o % c;
            let cell = o / c;
            let ow = w / 2;
            let (oy, ox) = (cell / ow, cell % ow);
            let best = post.data[best_idx];
            // a window whose max is 0 is entirely in the flat ReLU region;
            // perturbations cannot move its output
            if best <= 0.0 {
                continue;
            }
            for dy in 0..2 {
                for dx in 0..2 {
                    let idx = ((oy * 2 + dy) * w + ox * 2 + dx) * c + c_ch;
                    if idx != best_idx {
                        margin = margin.min(best - post.data[idx]);
                    }
                }
            }
        }
    }
    margin
}

/// Central finite differences against the analytic gradient for every
/// parameter of a small random network, dropout off. Returns the maximum
/// relative error.
pub fn gradient_check_full(seed: u64, epsilon: f64) -> f64 {
    let arch = small_arch();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loss_params = FocalLossParams::default();

    // resample until the forward pass is safely away from ReLU kinks and
    // pooling ties
    let (mut model, image) = loop {
        let model = CnnModel::new(arch, rng.gen()).unwrap();
        let image: Vec<f64> = (0..arch.input_side * arch.input_side * 3)
            .map(|_| rng.gen_range(0.05..0.95))
            .collect();
        let cache = forward(&model, &image, None).unwrap();
        if kink_margin(&cache) > 50.0 * epsilon {
            break (model, image);
        }
    };
    let true_class = rng.gen_range(0..NUM_CLASSES);

    let cache = forward(&model, &image, None).unwrap();
    let analytic = backward(&model, &cache, true_class, &loss_params);

    let mut max_err: f64 = 0.0;
    for g in 0..model.num_param_groups() {
        for i in 0..model.param_group(g).len() {
            let orig = model.param_group(g)[i];
            model.param_group_mut(g)[i] = orig + epsilon;
            let up = {
                let c = forward(&model, &image, None).unwrap();
                focal_loss(&c.probs, true_class, &loss_params)
            };
            model.param_group_mut(g)[i] = orig - epsilon;
            let dn = {
                let c = forward(&model, &image, None).unwrap();
                focal_loss(&c.probs, true_class, &loss_params)
            };
            model.param_group_mut(g)[i] = orig;
            let numeric = (up - dn) / (2.0 * epsilon);
            max_err = max_err.max(rel_err(analytic[g][i], numeric));
        }
    }
    max_err
}

/// Finite-difference check of one convolution layer under the quadratic
/// loss sum(out^2). Returns the maximum relative error over kernel and
/// bias entries.
pub fn gradient_check_conv(seed: u64, epsilon: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w, cin, cout, k) = (6, 6, 2, 3, 3);
    let input = Tensor::from_data(
        &[h, w, cin],
        (0..h * w * cin).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let mut kernels = Tensor::from_data(
        &[k, k, cin, cout],
        (0..k * k * cin * cout)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    let mut bias: Vec<f64> = (0..cout).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let padding = 1;

    let loss = |kernels: &Tensor, bias: &[f64]| -> f64 {
        let out = conv2d_forward(&input, kernels, Some(bias), 1, padding).unwrap();
        out.data.iter().map(|v| v * v).sum()
    };

    let out = conv2d_forward(&input, &kernels, Some(&bias), 1, padding).unwrap();
    let d_out = Tensor::from_data(&out.shape, out.data.iter().map(|v| 2.0 * v).collect()).unwrap();
    let (_, d_k, d_b) = conv2d_backward(&input, &kernels, &d_out, padding).unwrap();

    let mut max_err: f64 = 0.0;
    for i in 0..kernels.data.len() {
        let orig = kernels.data[i];
        kernels.data[i] = orig + epsilon;
        let up = loss(&kernels, &bias);
        kernels.data[i] = orig - epsilon;
        let dn = loss(&kernels, &bias);
        kernels.data[i] = orig;
        max_err = max_err.max(rel_err(d_k.data[i], (up - dn) / (2.0 * epsilon)));
    }
    for i in 0..bias.len() {
        let orig = bias[i];
        bias[i] = orig + epsilon;
        let up = loss(&kernels, &bias);
        bias[i] = orig - epsilon;
        let dn = loss(&kernels, &bias);
        bias[i] = orig;
        max_err = max_err.max(rel_err(d_b[i], (up - dn) / (2.0 * epsilon)));
    }
    max_err
}

/// Finite-difference check of a single dense layer with no activation and
/// the linear loss sum(out): exact up to floating-point rounding.
pub fn gradient_check_dense_linear(seed: u64, epsilon: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_in, n_out) = (6, 4);
    let mut layer = DenseParams {
        weights: Tensor::from_data(
            &[n_in, n_out],
            (0..n_in * n_out).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap(),
        bias: (0..n_out).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    };
    let input: Vec<f64> = (0..n_in).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let d_out = vec![1.0; n_out];
    let (d_w, d_b, _) = layer.backward(&input, &d_out);
    let loss = |l: &DenseParams| -> f64 { l.forward(&input).iter().sum() };

    let mut max_err: f64 = 0.0;
    for i in 0..layer.weights.data.len() {
        let orig = layer.weights.data[i];
        layer.weights.data[i] = orig + epsilon;
        let up = loss(&layer);
        layer.weights.data[i] = orig - epsilon;
        let dn = loss(&layer);
        layer.weights.data[i] = orig;
        max_err = max_err.max(rel_err(d_w.data[i], (up - dn) / (2.0 * epsilon)));
    }
    for i in 0..layer.bias.len() {
        let orig = layer.bias[i];
        layer.bias[i] = orig + epsilon;
        let up = loss(&layer);
        layer.bias[i] = orig - epsilon;
        let dn = loss(&layer);
        layer.bias[i] = orig;
        max_err = max_err.max(rel_err(d_b[i], (up - dn) / (2.0 * epsilon)));
    }
    max_err
}
