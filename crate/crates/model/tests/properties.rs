use candle_core::Tensor;
use emogest_core::{RunConfig, SegmentLayout};
use emogest_model::classifier::EmotionClassifier;
use emogest_model::generator::{adain, correlation};
use emogest_model::mixture::{deformation, soft_label, MixtureHead};
use emogest_model::nn::{scalar, to_tensor, values};
use emogest_model::optim::Adam;
use emogest_model::training::{generator_objective, reconstruction_loss, Batch, GanModules};
use emogest_model::ParamStore;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn randv(n: usize, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn rows_stochastic(t: &Tensor) -> bool {
    let cols = *t.dims().last().unwrap();
    values(t)
        .unwrap()
        .chunks(cols)
        .all(|r| r.iter().all(|&p| p >= 0.0) && (r.iter().sum::<f64>() - 1.0).abs() < 1e-9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn correlation_and_deformation_are_row_stochastic(seed in any::<u64>(), l in 2usize..8, h in 2usize..8, d in 1usize..12, scale in 0.1f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = to_tensor(randv(l * d, scale, &mut rng), &[1, l, d]).unwrap();
        let b = to_tensor(randv(l * d, scale, &mut rng), &[1, l, d]).unwrap();
        let c = to_tensor(randv(h * d, scale, &mut rng), &[1, h, d]).unwrap();
        prop_assert!(rows_stochastic(&correlation(&a, &b).unwrap()));
        let s = deformation(&c, &a).unwrap();
        prop_assert_eq!(s.dims(), &[1, h, l]);
        prop_assert!(rows_stochastic(&s));
    }

    #[test]
    fn sigma_and_soft_label_lie_on_the_simplex(seed in any::<u64>(), h in 2usize..6, t in 2usize..6, d in 2usize..8, scale in 0.1f64..30.0, classes in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = ParamStore::new(seed);
        let head = MixtureHead::new(d, h, t, &store.builder()).unwrap();
        let fh = to_tensor(randv(h * d, scale, &mut rng), &[1, h, d]).unwrap();
        let ft = to_tensor(randv(t * d, scale, &mut rng), &[1, t, d]).unwrap();
        let sigma = scalar(&head.forward(&fh, &ft).unwrap().sigma).unwrap();
        prop_assert!(sigma > 0.0 && sigma < 1.0);
        let hid = rng.gen_range(0..classes);
        let tid = (hid + rng.gen_range(1..classes)) % classes;
        let y = soft_label(sigma, hid, tid, classes).unwrap();
        prop_assert!(y.iter().all(|&p| p >= 0.0));
        prop_assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adain_output_has_style_statistics(seed in any::<u64>(), l in 3usize..10, d in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = randv(l * d, 5.0, &mut rng);
        let gamma = randv(d, 3.0, &mut rng);
        let beta = randv(d, 3.0, &mut rng);
        let out = values(&adain(
            &to_tensor(x.clone(), &[1, l, d]).unwrap(),
            &to_tensor(gamma.clone(), &[1, d]).unwrap(),
            &to_tensor(beta.clone(), &[1, d]).unwrap(),
        ).unwrap()).unwrap();
        for c in 0..d {
            let col: Vec<f64> = (0..l).map(|t| x[t * d + c]).collect();
            let mu = col.iter().sum::<f64>() / l as f64;
            let in_sd = (col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / l as f64).sqrt();
            prop_assume!(in_sd > 1e-3);
            let o: Vec<f64> = (0..l).map(|t| out[t * d + c]).collect();
            let m = o.iter().sum::<f64>() / l as f64;
            let sd = (o.iter().map(|v| (v - m).powi(2)).sum::<f64>() / l as f64).sqrt();
            prop_assert!((m - beta[c]).abs() < 1e-9);
            prop_assert!((sd - gamma[c].abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn reconstruction_ignores_the_transition(seed in any::<u64>(), l in 1usize..5, extra_h in 0usize..4, extra_t in 0usize..4) {
        let (h, t) = (l + extra_h, l + extra_t);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = SegmentLayout::new(h, l, t).unwrap();
        let f = 6;
        let n = layout.total();
        let pred = randv(n * f, 2.0, &mut rng);
        let head = to_tensor(randv(h * f, 2.0, &mut rng), &[1, h, f]).unwrap();
        let tail = to_tensor(randv(t * f, 2.0, &mut rng), &[1, t, f]).unwrap();
        let mut moved = pred.clone();
        for v in &mut moved[h * f..(h + l) * f] {
            *v += rng.gen_range(-50.0..50.0);
        }
        let loss = |p: Vec<f64>| scalar(&reconstruction_loss(&to_tensor(p, &[1, n, f]).unwrap(), &head, &tail, &layout).unwrap()).unwrap();
        prop_assert_eq!(loss(pred.clone()), loss(moved));
        let mut bumped = pred.clone();
        bumped[0] += 1.0;
        prop_assert!(loss(bumped) != loss(pred));
    }
}

fn batch(cfg: &RunConfig, rng: &mut impl Rng) -> Batch {
    let f = cfg.skeleton.joint_count() * 3;
    let l = &cfg.layout;
    let t = |frames: usize, rng: &mut ChaCha8Rng| to_tensor(randv(frames * f, 0.5, rng), &[1, frames, f]).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(rng.gen());
    Batch {
        mel: to_tensor(randv(16 * cfg.audio.mel_bins, 1.0, &mut r), &[1, 16, cfg.audio.mel_bins]).unwrap(),
        head: t(l.head_frames, &mut r),
        tail: t(l.tail_frames, &mut r),
        seed: t(cfg.model.seed_frames, &mut r),
        reference: t(l.total(), &mut r),
        pairs: vec![(0, 1 + r.gen_range(0..cfg.emotions.len() - 1))],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn generator_steps_leave_the_classifier_untouched(seed in any::<u64>()) {
        let cfg = RunConfig::toy();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clf_store = ParamStore::new(seed ^ 1);
        let classifier = EmotionClassifier::new(&cfg, &clf_store.frozen_builder().pp("classifier")).unwrap();
        let before = clf_store.checksum();
        let store = ParamStore::new(seed);
        let modules = GanModules::new(&cfg, &store).unwrap();
        let gen_before = store.checksum_prefix("gen.");
        let mut opt = Adam::new(store.vars(), 1e-2, Some(1.0)).unwrap();
        let b = batch(&cfg, &mut rng);
        let (losses, _) = generator_objective(&cfg, &modules, &classifier, &b).unwrap();
        opt.backward_step(&losses.total).unwrap();
        prop_assert_eq!(clf_store.checksum(), before);
        prop_assert_ne!(store.checksum_prefix("gen."), gen_before);
    }
}
