//! Pose-based emotion classifier.
//!
//! Trained on full head/tail windows and applied frozen to generated
//! transitions. Shorter windows are placed on the same positional range by
//! stretching their positions onto the training window length.

use candle_core::{Module, Tensor, D};
use candle_nn::Linear;
use emogest_core::{EmotionTransitionSample, RunConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, ModelError, Result};
use crate::nn::{linear, positional_encoding, scalar, stretched_positions, to_tensor, AttentionBlock, Mlp};
use crate::optim::{batches, Adam};
use crate::params::{derive_seed, ParamBuilder, ParamStore};

#[derive(Debug, Clone)]
pub struct EmotionClassifier {
    input: Linear,
    blocks: Vec<AttentionBlock>,
    head: Mlp,
    window: usize,
    transition: usize,
    frame_len: usize,
    classes: usize,
    dim: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub epochs: usize,
    pub windows: usize,
    pub train_accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub loss_history: Vec<f64>,
}

impl EmotionClassifier {
    pub fn new(cfg: &RunConfig, pb: &ParamBuilder) -> Result<Self> {
        let c = &cfg.classifier;
        let f = cfg.skeleton.joint_count() * 3;
        let e = cfg.emotions.len();
        Ok(Self {
            input: linear(f, c.dim, &pb.pp("input"))?,
            blocks: (0..c.blocks)
                .map(|i| AttentionBlock::new(c.dim, c.heads, 2 * c.dim, &pb.pp(format!("block{i}"))))
                .collect::<Result<_>>()?,
            head: Mlp::new(&[c.dim, c.dim, e], &pb.pp("head"))?,
            window: cfg.layout.head_frames,
            transition: cfg.layout.transition_frames,
            frame_len: f,
            classes: e,
            dim: c.dim,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// `(B, T, J·3)` with `T` the training window or the transition length,
    /// to logits `(B, E)`.
    pub fn forward(&self, poses: &Tensor) -> Result<Tensor> {
        let (_, t, f) = poses.dims3()?;
        if f != self.frame_len || (t != self.window && t != self.transition) {
            return shape_err(format!(
                "classifier takes {} or {} frames of width {}, got {:?}",
                self.window,
                self.transition,
                self.frame_len,
                poses.dims()
            ));
        }
        let pe = positional_encoding(&stretched_positions(t, self.window), self.dim)?;
        let mut h = self.input.forward(poses)?.broadcast_add(&pe)?;
        for block in &self.blocks {
            h = block.forward(&h, None)?;
        }
        self.head.forward(&h.mean(1)?)
    }

    pub fn probabilities(&self, poses: &Tensor) -> Result<Tensor> {
        Ok(candle_nn::ops::softmax(&self.forward(poses)?, D::Minus1)?)
    }

    pub fn predict(&self, poses: &Tensor) -> Result<Vec<usize>> {
        let p = self.forward(&poses.detach())?.argmax(D::Minus1)?;
        Ok(p.to_vec1::<u32>()?.into_iter().map(|x| x as usize).collect())
    }
}

/// Hard-labelled windows: each head as neutral, each tail (first `window`
/// frames) as its tail emotion.
pub fn classifier_windows(samples: &[EmotionTransitionSample], window: usize) -> Result<Vec<(Vec<f64>, usize)>> {
    let mut out = Vec::with_capacity(samples.len() * 2);
    for s in samples {
        for (seg, label) in [(&s.head_pose_gt, s.head_emotion.id), (&s.tail_pose_gt, s.tail_emotion.id)] {
            if seg.frames() < window {
                return Err(ModelError::Data(format!(
                    "sample {} has a {}-frame segment, classifier window is {window}",
                    s.sample_id,
                    seg.frames()
                )));
            }
            out.push((seg.as_slice()[..window * seg.frame_len()].to_vec(), label));
        }
    }
    Ok(out)
}

fn stack(windows: &[(Vec<f64>, usize)], idx: &[usize], t: usize, f: usize) -> Result<(Tensor, Vec<usize>)> {
    let mut data = Vec::with_capacity(idx.len() * t * f);
    let mut labels = Vec::with_capacity(idx.len());
    for &i in idx {
        data.extend_from_slice(&windows[i].0);
        labels.push(windows[i].1);
    }
    Ok((to_tensor(data, &[idx.len(), t, f])?, labels))
}

fn hard_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let targets = Tensor::from_vec(
        labels.iter().map(|&l| l as u32).collect::<Vec<_>>(),
        labels.len(),
        logits.device(),
    )?;
    Ok(candle_nn::loss::cross_entropy(logits, &targets)?)
}

/// Accuracy and per-class accuracy of `clf` over labelled windows.
pub fn evaluate_windows(
    clf: &EmotionClassifier,
    windows: &[(Vec<f64>, usize)],
    batch_size: usize,
) -> Result<(f64, Vec<f64>)> {
    let f = clf.frame_len;
    let t = clf.window;
    let mut hits = vec![0usize; clf.classes];
    let mut totals = vec![0usize; clf.classes];
    let idx: Vec<usize> = (0..windows.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, labels) = stack(windows, chunk, t, f)?;
        for (p, l) in clf.predict(&x)?.into_iter().zip(labels) {
            totals[l] += 1;
            hits[l] += usize::from(p == l);
        }
    }
    let total: usize = totals.iter().sum();
    let acc = hits.iter().sum::<usize>() as f64 / total.max(1) as f64;
    let per_class = hits
        .iter()
        .zip(&totals)
        .map(|(&h, &n)| if n == 0 { f64::NAN } else { h as f64 / n as f64 })
        .collect();
    Ok((acc, per_class))
}

/// Cross-entropy training on hard-labelled windows. Every class of the
/// vocabulary must be present.
pub fn pretrain_classifier(
    cfg: &RunConfig,
    store: &ParamStore,
    windows: &[(Vec<f64>, usize)],
) -> Result<(EmotionClassifier, ClassifierReport)> {
    let clf = EmotionClassifier::new(cfg, &store.builder().pp("classifier"))?;
    let e = cfg.emotions.len();
    let mut counts = vec![0usize; e];
    for (w, l) in windows {
        if *l >= e {
            return Err(ModelError::Data(format!("label {l} outside {e} classes")));
        }
        if w.len() != clf.window * clf.frame_len {
            return shape_err(format!("window of {} values, expected {}", w.len(), clf.window * clf.frame_len));
        }
        counts[*l] += 1;
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(ModelError::Data(format!(
            "emotion {:?} has no training windows",
            cfg.emotions.names()[missing]
        )));
    }
    let c = &cfg.classifier;
    let mut opt = Adam::new(store.vars_with_prefix("classifier."), c.learning_rate, Some(cfg.train.grad_clip))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "classifier"));
    let mut report = ClassifierReport {
        epochs: c.epochs,
        windows: windows.len(),
        ..Default::default()
    };
    for epoch in 0..c.epochs {
        let (mut sum, mut steps) = (0.0, 0usize);
        for idx in batches(windows.len(), c.batch_size, &mut rng) {
            let (x, labels) = stack(windows, &idx, clf.window, clf.frame_len)?;
            let loss = hard_cross_entropy(&clf.forward(&x)?, &labels)?;
            let v = scalar(&loss)?;
            if !v.is_finite() {
                return Err(ModelError::NonFinite {
                    part: "classifier",
                    epoch,
                    step: steps,
                });
            }
            opt.backward_step(&loss)?;
            sum += v;
            steps += 1;
        }
        log::debug!("classifier epoch {epoch}: loss {:.4}", sum / steps as f64);
        report.loss_history.push(sum / steps as f64);
    }
    let (acc, per_class) = evaluate_windows(&clf, windows, c.batch_size)?;
    report.train_accuracy = acc;
    report.per_class_accuracy = per_class;
    Ok((clf, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::values;
    use emogest_core::SegmentLayout;

    fn small_config() -> RunConfig {
        let mut cfg = RunConfig::toy();
        cfg.layout = SegmentLayout::new(8, 4, 8).unwrap();
        cfg.emotions = emogest_core::EmotionVocab::beat_prefix(1).unwrap();
        cfg.classifier.dim = 8;
        cfg.classifier.blocks = 1;
        cfg.classifier.epochs = 40;
        cfg.classifier.batch_size = 20;
        cfg.classifier.learning_rate = 3e-3;
        cfg
    }

    fn separable_windows(cfg: &RunConfig, per_class: usize) -> Vec<(Vec<f64>, usize)> {
        let f = 24;
        let t = cfg.layout.head_frames;
        let mut out = Vec::new();
        for class in 0..2 {
            for k in 0..per_class {
                let amp = if class == 0 { 0.2 } else { 1.0 };
                let w = (0..t * f)
                    .map(|i| amp * ((i / f) as f64 * 0.8 + (i % f) as f64 + k as f64 * 0.1).sin())
                    .collect();
                out.push((w, class));
            }
        }
        out
    }

    #[test]
    fn separable_classes_are_learned() {
        let cfg = small_config();
        let store = ParamStore::new(5);
        let windows = separable_windows(&cfg, 50);
        let (clf, report) = pretrain_classifier(&cfg, &store, &windows).unwrap();
        assert_eq!(report.train_accuracy, 1.0, "{report:?}");
        let x = to_tensor(windows[0].0.clone(), &[1, 8, 24]).unwrap();
        let p = values(&clf.probabilities(&x).unwrap()).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let short = x.narrow(1, 0, 4).unwrap();
        assert_eq!(clf.forward(&short).unwrap().dims(), &[1, 2]);
        assert!(clf.forward(&x.narrow(1, 0, 5).unwrap()).is_err());
    }

    #[test]
    fn missing_class_is_refused() {
        let cfg = small_config();
        let store = ParamStore::new(5);
        let windows: Vec<_> = separable_windows(&cfg, 3).into_iter().filter(|w| w.1 == 0).collect();
        assert!(matches!(
            pretrain_classifier(&cfg, &store, &windows),
            Err(ModelError::Data(_))
        ));
    }
}
