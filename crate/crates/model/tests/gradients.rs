//! Analytic gradients against central finite differences.

use candle_core::{Tensor, Var};
use emogest_core::RunConfig;
use emogest_model::classifier::EmotionClassifier;
use emogest_model::nn::{scalar, to_tensor};
use emogest_model::training::{adversarial_losses, generator_objective, Batch, GanModules};
use emogest_model::ParamStore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
/// Absolute floor for gradients that are zero up to rounding.
const ABS_FLOOR: f64 = 1e-9;
const PARAMS_PER_PATH: usize = 12;

fn random(shape: &[usize], scale: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    to_tensor((0..n).map(|_| rng.gen_range(-scale..scale)).collect(), shape).unwrap()
}

fn batch(cfg: &RunConfig, b: usize, rng: &mut impl Rng) -> Batch {
    let f = cfg.skeleton.joint_count() * 3;
    let l = &cfg.layout;
    let e = cfg.emotions.len();
    Batch {
        mel: random(&[b, 24, cfg.audio.mel_bins], 1.0, rng),
        head: random(&[b, l.head_frames, f], 0.5, rng),
        tail: random(&[b, l.tail_frames, f], 0.5, rng),
        seed: random(&[b, cfg.model.seed_frames, f], 0.5, rng),
        reference: random(&[b, l.total(), f], 0.5, rng),
        pairs: (0..b).map(|i| (0, 1 + i % (e - 1))).collect(),
    }
}

fn set_entry(var: &Var, idx: usize, value: f64) {
    let mut v = var.as_tensor().flatten_all().unwrap().to_vec1::<f64>().unwrap();
    v[idx] = value;
    var.set(&Tensor::from_vec(v, var.dims(), var.device()).unwrap()).unwrap();
}

fn entry(var: &Var, idx: usize) -> f64 {
    var.as_tensor().flatten_all().unwrap().to_vec1::<f64>().unwrap()[idx]
}

/// Picks `count` (name, var, flat index) triples spread over the parameters
/// under `prefix`, checks each and returns how many were checked.
fn check_prefix(store: &ParamStore, prefix: &str, loss: &dyn Fn() -> Tensor, seed: u64) -> usize {
    let vars = store.named_vars_with_prefix(prefix);
    assert!(!vars.is_empty(), "no parameters under {prefix}");
    let grads = loss().backward().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    for k in 0..PARAMS_PER_PATH {
        let (name, var) = &vars[k % vars.len()];
        let idx = rng.gen_range(0..var.elem_count());
        let analytic = grads
            .get(var.as_tensor())
            .map(|g| g.flatten_all().unwrap().to_vec1::<f64>().unwrap()[idx])
            .unwrap_or(0.0);
        let x = entry(var, idx);
        set_entry(var, idx, x + STEP);
        let up = scalar(&loss()).unwrap();
        set_entry(var, idx, x - STEP);
        let down = scalar(&loss()).unwrap();
        set_entry(var, idx, x);
        let numeric = (up - down) / (2.0 * STEP);
        let err = (analytic - numeric).abs();
        assert!(
            err <= REL_TOL * analytic.abs().max(numeric.abs()) + ABS_FLOOR,
            "{name}[{idx}]: analytic {analytic:e}, numeric {numeric:e}"
        );
        checked += 1;
    }
    checked
}

struct Fixture {
    cfg: RunConfig,
    store: ParamStore,
    modules: GanModules,
    classifier: EmotionClassifier,
    batch: Batch,
}

fn fixture() -> Fixture {
    let cfg = RunConfig::toy();
    let store = ParamStore::new(17);
    let modules = GanModules::new(&cfg, &store).unwrap();
    let clf_store = ParamStore::new(5);
    let classifier = EmotionClassifier::new(&cfg, &clf_store.frozen_builder().pp("classifier")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let batch = batch(&cfg, 2, &mut rng);
    Fixture {
        cfg,
        store,
        modules,
        classifier,
        batch,
    }
}

fn generator_total(fx: &Fixture) -> Tensor {
    generator_objective(&fx.cfg, &fx.modules, &fx.classifier, &fx.batch)
        .unwrap()
        .0
        .total
}

#[test]
fn motion_infusion_gradients_match() {
    let fx = fixture();
    let n = check_prefix(&fx.store, "gen.mtim.", &|| generator_total(&fx), 1);
    assert!(n >= 10);
}

#[test]
fn emotion_mixture_gradients_match() {
    let fx = fixture();
    let emotion = || {
        generator_objective(&fx.cfg, &fx.modules, &fx.classifier, &fx.batch)
            .unwrap()
            .0
            .emotion
    };
    let n = check_prefix(&fx.store, "gen.mix.", &emotion, 2);
    assert!(n >= 10);
}

#[test]
fn decoder_gradients_match() {
    let fx = fixture();
    let mut n = check_prefix(&fx.store, "gen.dec", &|| generator_total(&fx), 3);
    n += check_prefix(&fx.store, "gen.pose.", &|| generator_total(&fx), 4);
    assert!(n >= 10);
}

#[test]
fn discriminator_gradients_match() {
    let fx = fixture();
    let fake = fx.modules.generator.forward(&fx.batch.input()).unwrap().poses.detach();
    let loss = || {
        adversarial_losses(&fx.modules.discriminator, &[&fx.batch.head, &fx.batch.tail], &fake, 1.0)
            .unwrap()
            .discriminator
    };
    let n = check_prefix(&fx.store, "disc.", &loss, 5);
    assert!(n >= 10);
}
