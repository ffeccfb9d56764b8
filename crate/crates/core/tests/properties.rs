//! Property tests of the library's invariants.

mod common;

use mfdml::data::{
    class_disjoint_split, load_dataset, sample_batch, save_dataset, DataFormat, Dataset,
    SamplerSpec,
};
use mfdml::losses::{MfContParams, MfCwmsParams};
use mfdml::meanfield::init_bank;
use mfdml::metrics::evaluate;
use mfdml::model::{Model, ModelInput, ModelKind};
use mfdml::numerics::{distance, distance_grad, log1p_sum_exp_scaled};
use mfdml::optim::{GroupId, GroupUpdate, Optimizer, OptimizerKind, ParamGroup};
use mfdml::{Batch, DistanceKind, InitScheme, LossSpec, Matrix, MeanFieldBank};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn kind_strategy() -> impl Strategy<Value = DistanceKind> {
    prop_oneof![Just(DistanceKind::Cosine), Just(DistanceKind::SqEuclidean)]
}

fn loss_strategy() -> impl Strategy<Value = &'static str> {
    prop_oneof![
        Just("contrastive"),
        Just("cwms"),
        Just("mfcont"),
        Just("mfcwms")
    ]
}

fn vec_pair(max_dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_dim).prop_flat_map(|d| {
        (
            prop::collection::vec(-10.0..10.0f64, d),
            prop::collection::vec(-10.0..10.0f64, d),
        )
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ------------------------------------------------------------ numerics

proptest! {
    #[test]
    fn distance_is_symmetric((a, b) in vec_pair(8), kind in kind_strategy()) {
        prop_assume!(norm(&a) > 1e-6 && norm(&b) > 1e-6);
        prop_assert_eq!(distance(&a, &b, kind).unwrap(), distance(&b, &a, kind).unwrap());
    }

    #[test]
    fn cosine_distance_in_range((a, b) in vec_pair(8)) {
        prop_assume!(norm(&a) > 1e-6 && norm(&b) > 1e-6);
        let d = distance(&a, &b, DistanceKind::Cosine).unwrap();
        prop_assert!((0.0..=2.0).contains(&d), "{}", d);
    }

    #[test]
    fn cosine_is_scale_invariant((a, b) in vec_pair(8), l in 0.01..100.0f64, m in 0.01..100.0f64) {
        prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
        let la: Vec<f64> = a.iter().map(|x| l * x).collect();
        let mb: Vec<f64> = b.iter().map(|x| m * x).collect();
        let d0 = distance(&a, &b, DistanceKind::Cosine).unwrap();
        let d1 = distance(&la, &mb, DistanceKind::Cosine).unwrap();
        prop_assert!((d0 - d1).abs() <= 1e-12, "{} vs {}", d0, d1);
    }

    #[test]
    fn distance_grad_matches_finite_differences((a, b) in vec_pair(8), kind in kind_strategy()) {
        prop_assume!(norm(&a) > 0.5 && norm(&b) > 0.5);
        let (ga, gb) = distance_grad(&a, &b, kind).unwrap();
        let scale = ga.iter().chain(&gb).fold(REL_FLOOR, |m, g| m.max(g.abs()));
        let h = 1e-5;
        for (which, g) in [(0, &ga), (1, &gb)] {
            for j in 0..a.len() {
                let at = |s: f64| {
                    let (mut a2, mut b2) = (a.clone(), b.clone());
                    if which == 0 { a2[j] += s } else { b2[j] += s }
                    distance(&a2, &b2, kind).unwrap()
                };
                let fd = (at(h) - at(-h)) / (2.0 * h);
                let rel = (fd - g[j]).abs() / scale;
                prop_assert!(rel <= 1e-6, "rel {} (fd {}, analytic {})", rel, fd, g[j]);
            }
        }
    }

    #[test]
    fn log1p_sum_exp_matches_naive(t in prop::collection::vec(-20.0..20.0f64, 1..12), l in -5.0..5.0f64) {
        let naive = (t.iter().map(|x| x.exp()).sum::<f64>() / l.exp()).ln_1p();
        let v = log1p_sum_exp_scaled(&t, l);
        prop_assert!((v - naive).abs() <= 1e-10 * naive.abs().max(f64::MIN_POSITIVE), "{} vs {}", v, naive);
    }
}

// ------------------------------------------------------------ losses

/// Random instance whose parameters are the library defaults half the time.
fn instance(loss: &str, kind: DistanceKind, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inst = random_instance(loss, kind, &mut rng);
    if rng.random::<bool>() {
        inst.spec = LossSpec::by_name(loss).unwrap();
    }
    inst
}

proptest! {
    #[test]
    fn losses_are_finite_and_nonnegative(loss in loss_strategy(), kind in kind_strategy(), seed in any::<u64>()) {
        let inst = instance(loss, kind, seed);
        let r = inst.evaluate(kind);
        prop_assert!(r.value.is_finite() && r.value >= 0.0, "{}", r.value);
        prop_assert!(r.grad_embeddings.is_finite());
        prop_assert!(r.grad_meanfields.as_ref().is_none_or(Matrix::is_finite));
    }

    #[test]
    fn losses_are_permutation_invariant(loss in loss_strategy(), kind in kind_strategy(), seed in any::<u64>()) {
        let inst = instance(loss, kind, seed);
        let base = inst.evaluate(kind);
        let mut order: Vec<usize> = (0..inst.x.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
        let shuffled = Instance {
            spec: inst.spec,
            x: order.iter().map(|&i| inst.x[i].clone()).collect(),
            labels: order.iter().map(|&i| inst.labels[i]).collect(),
            bank: inst.bank.clone(),
        };
        let r = shuffled.evaluate(kind);
        prop_assert!((r.value - base.value).abs() <= 1e-12, "{} vs {}", r.value, base.value);
        for (new_row, &old_row) in order.iter().enumerate() {
            for (a, b) in r.grad_embeddings.row(new_row).iter().zip(base.grad_embeddings.row(old_row)) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn mfcont_zero_fluctuation_identity(k in 2usize..6, extra in 0usize..4, b in 1usize..12, kind in kind_strategy(), seed in any::<u64>(), lambda_mf in 0.0..2.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = k + extra;
        // scaled coordinate axes: cosine distance 1, squared distance ≥ 2·0.5²
        let bank_rows: Rows = (0..k).map(|c| (0..d).map(|j| if j == c { rng.random_range(0.5..3.0) } else { 0.0 }).collect()).collect();
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
        let x: Rows = labels.iter().map(|&c| bank_rows[c].clone()).collect();
        let bank = MeanFieldBank::from_matrix(to_matrix(&bank_rows)).unwrap();
        let batch = Batch::new(to_matrix(&x), labels).unwrap();
        let spec = LossSpec::Mfcont(MfContParams { lambda_mf, ..Default::default() });
        prop_assert_eq!(spec.evaluate(&batch, Some(&bank), kind).unwrap().value, 0.0);
    }

    #[test]
    fn mfcont_decomposes_over_samples(p in 1usize..5, k in 1usize..5, kind in kind_strategy(), seed in any::<u64>(), lambda_mf in 0.0..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = p + rng.random_range(0..3);
        let d = rng.random_range(2..6);
        let bank = MeanFieldBank::from_matrix(to_matrix(&well_scaled_rows(classes, d, 1.0, 0.3, &mut rng))).unwrap();
        let mut labels: Vec<usize> = (0..classes).collect();
        labels.shuffle(&mut rng);
        let labels: Vec<usize> = labels[..p].iter().flat_map(|&c| std::iter::repeat_n(c, k)).collect();
        let x = well_scaled_rows(p * k, d, 1.0, 0.3, &mut rng);
        let params = MfContParams { m_p: 0.05, m_n: 0.8, lambda_mf };
        let spec = LossSpec::Mfcont(params);
        let whole = spec.evaluate(&Batch::new(to_matrix(&x), labels.clone()).unwrap(), Some(&bank), kind).unwrap().value;
        let parts: f64 = (0..p * k)
            .map(|i| spec.evaluate(&Batch::new(to_matrix(&vec![x[i].clone()]), vec![labels[i]]).unwrap(), Some(&bank), kind).unwrap().value)
            .sum::<f64>() / (p * k) as f64;
        prop_assert!((whole - parts).abs() <= 1e-12, "{} vs {}", whole, parts);
    }
}

// ------------------------------------------------------------ gradients through the model

/// `ReLU` pre-activations of an `mlp1` model, computed independently.
fn pre_activations(model: &Model, x: &Matrix) -> Vec<f64> {
    let (w, b) = (&model.tensors()[0], &model.tensors()[1]);
    let mut out = Vec::new();
    for r in x.iter_rows() {
        for h in 0..w.cols() {
            out.push(b.get(0, h) + (0..w.rows()).map(|i| r[i] * w.get(i, h)).sum::<f64>());
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn model_gradients_match_finite_differences(loss in loss_strategy(), kind in kind_strategy(), mlp in any::<bool>(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(loss, kind, &mut rng);
        let (b, classes) = (inst.x.len(), inst.bank.len());
        let (f, dim) = (rng.random_range(2..6), inst.bank[0].len());
        let model_kind = if mlp { ModelKind::Mlp1 } else { ModelKind::Linear };
        let mut model = Model::init(model_kind, f, 5, dim, &mut rng).unwrap();
        for t in model.tensors_mut() {
            for v in t.as_mut_slice() {
                *v += rng.random_range(-0.2..0.2);
            }
        }
        let x = to_matrix(&gaussian_rows(b, f, 1.0, &mut rng));
        let embed = |m: &Model| to_rows(&m.forward(ModelInput::Features(&x)).unwrap().0);
        prop_assume!(embed(&model).iter().all(|r| norm(r) > 0.3));
        let (emb, cache) = model.forward(ModelInput::Features(&x)).unwrap();
        let batch = Batch::new(emb, inst.labels.clone()).unwrap();
        let bank = inst.bank();
        let r = inst.spec.evaluate(&batch, inst.spec.is_mean_field().then_some(&bank), kind).unwrap();
        let grads = model.backward(&cache, &r.grad_embeddings).unwrap();
        prop_assert_eq!(classes, bank.len());
        let h = FD_STEP;
        for (t, grad) in grads.iter().enumerate() {
            for e in 0..grad.as_slice().len() {
                let bumped = |s: f64| {
                    let mut m = model.clone();
                    m.tensors_mut()[t].as_mut_slice()[e] += s;
                    let pre = if mlp { pre_activations(&m, &x) } else { Vec::new() };
                    (reference(&inst.spec, &embed(&m), &inst.labels, &inst.bank, kind), pre)
                };
                let ((p, pre_p), (q, pre_q)) = (bumped(h), bumped(-h));
                let kink = p.hinge_args.iter().zip(&q.hinge_args).any(|(a, b)| a != b && a.abs().min(b.abs()) < KINK_EPS)
                    || pre_p.iter().zip(&pre_q).any(|(a, b)| a != b && a.abs().min(b.abs()) < KINK_EPS);
                if kink {
                    continue;
                }
                let fd = (p.value - q.value) / (2.0 * h);
                let a = grad.as_slice()[e];
                let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(REL_FLOOR);
                prop_assert!(rel <= FD_REL_TOL, "{} {:?} tensor {} entry {}: analytic {} fd {}", loss, kind, t, e, a, fd);
            }
        }
    }
}

// ------------------------------------------------------------ meanfield and model purity

proptest! {
    #[test]
    fn init_bank_is_reproducible(k in 1usize..20, d in 1usize..16, seed in any::<u64>(), gaussian in any::<bool>()) {
        let scheme = if gaussian { InitScheme::Gaussian } else { InitScheme::UnitRandom };
        let a = init_bank(k, d, scheme, seed).unwrap();
        prop_assert_eq!(&a, &init_bank(k, d, scheme, seed).unwrap());
        if !gaussian {
            for r in a.vectors().iter_rows() {
                prop_assert!((norm(r) - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn forward_is_pure(seed in any::<u64>(), n in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Model::init(ModelKind::Mlp1, 4, 6, 3, &mut rng).unwrap();
        let x = to_matrix(&gaussian_rows(n, 4, 1.0, &mut rng));
        let a = model.forward(ModelInput::Features(&x)).unwrap().0;
        let b = model.forward(ModelInput::Features(&x)).unwrap().0;
        prop_assert_eq!(a, b);
    }
}

// ------------------------------------------------------------ data

fn random_dataset(seed: u64, max_classes: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = rng.random_range(2..=max_classes);
    let n = rng.random_range(classes..=classes * 6);
    let mut labels: Vec<usize> = (0..n)
        .map(|i| {
            if i < classes {
                i
            } else {
                rng.random_range(0..classes)
            }
        })
        .collect();
    labels.shuffle(&mut rng);
    let f = rng.random_range(1..5);
    let features = to_matrix(&gaussian_rows(n, f, 3.0, &mut rng));
    Dataset::new("random", features, labels).unwrap()
}

proptest! {
    #[test]
    fn splits_are_class_disjoint(seed in any::<u64>()) {
        let ds = random_dataset(seed, 12);
        let (train, test) = class_disjoint_split(&ds).unwrap();
        prop_assert_eq!(train.len() + test.len(), ds.len());
        prop_assert_eq!(train.num_classes(), ds.num_classes().div_ceil(2));
        // features identify samples: no row lands on both sides
        for r in train.features().iter_rows() {
            prop_assert!(!test.features().iter_rows().any(|s| s == r));
        }
        // each train class keeps every sample of one original class
        for c in 0..train.num_classes() {
            let row = train.features().row(train.class_members(c)[0]);
            let orig = (0..ds.len()).find(|&i| ds.features().row(i) == row).unwrap();
            prop_assert_eq!(train.class_members(c).len(), ds.class_members(ds.labels()[orig]).len());
        }
    }

    #[test]
    fn sampler_yields_p_classes_of_k(seed in any::<u64>(), p_frac in 0.0..1.0f64, k in 1usize..6) {
        let ds = random_dataset(seed, 10);
        let p = 1 + ((ds.num_classes() - 1) as f64 * p_frac) as usize;
        let idx = sample_batch(&ds, &SamplerSpec { p, k }, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let labels: Vec<usize> = idx.iter().map(|&i| ds.labels()[i]).collect();
        let g = groups(&labels);
        prop_assert_eq!(g.len(), p);
        prop_assert!(g.iter().all(|(_, m)| m.len() == k));
    }

    #[test]
    fn csv_and_bin_loaders_agree(seed in any::<u64>()) {
        let ds = random_dataset(seed, 6);
        let dir = tempfile::tempdir().unwrap();
        let (csv, bin) = (dir.path().join("d.csv"), dir.path().join("d.bin"));
        save_dataset(&ds, &csv, DataFormat::Csv).unwrap();
        save_dataset(&ds, &bin, DataFormat::Bin).unwrap();
        let from_csv = load_dataset(&csv, DataFormat::Csv).unwrap();
        let from_bin = load_dataset(&bin, DataFormat::Bin).unwrap();
        prop_assert_eq!(from_bin.features(), &ds.features().quantized_f32());
        prop_assert_eq!(from_csv.labels(), from_bin.labels());
        for (a, b) in from_csv.features().as_slice().iter().zip(from_bin.features().as_slice()) {
            prop_assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-30), "{} vs {}", a, b);
        }
    }
}

// ------------------------------------------------------------ metrics

/// Product of two Householder reflections: a rotation.
fn rotate(x: &Rows, u: &[f64], v: &[f64]) -> Rows {
    let reflect = |r: &[f64], w: &[f64]| {
        let ww: f64 = w.iter().map(|a| a * a).sum();
        let rw: f64 = r.iter().zip(w).map(|(a, b)| a * b).sum();
        r.iter()
            .zip(w)
            .map(|(a, b)| a - 2.0 * rw / ww * b)
            .collect::<Vec<f64>>()
    };
    x.iter().map(|r| reflect(&reflect(r, u), v)).collect()
}

fn labelled_points(seed: u64) -> (Rows, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = rng.random_range(2..6);
    let n = rng.random_range(2 * classes..=40);
    let labels: Vec<usize> = (0..n)
        .map(|i| {
            if i < 2 * classes {
                i / 2
            } else {
                rng.random_range(0..classes)
            }
        })
        .collect();
    let d = rng.random_range(2..6);
    (well_scaled_rows(n, d, 1.0, 0.2, &mut rng), labels)
}

proptest! {
    #[test]
    fn map_at_r_dominated_by_r_precision(seed in any::<u64>(), kind in kind_strategy()) {
        let (x, labels) = labelled_points(seed);
        let r = evaluate(&to_matrix(&x), &labels, kind).unwrap();
        for q in &r.per_query {
            prop_assert!(q.map_at_r <= q.r_precision && q.r_precision <= 1.0);
        }
    }

    #[test]
    fn metrics_invariant_under_rotation_and_scaling(seed in any::<u64>()) {
        let (x, labels) = labelled_points(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(!seed);
        let d = x[0].len();
        let (u, v) = (gaussian_rows(1, d, 1.0, &mut rng).pop().unwrap(), gaussian_rows(1, d, 1.0, &mut rng).pop().unwrap());
        let sq = DistanceKind::SqEuclidean;
        prop_assert_eq!(
            evaluate(&to_matrix(&x), &labels, sq).unwrap(),
            evaluate(&to_matrix(&rotate(&x, &u, &v)), &labels, sq).unwrap()
        );
        let scaled: Rows = x.iter().map(|r| {
            let s: f64 = rng.random_range(0.1..10.0);
            r.iter().map(|a| a * s).collect()
        }).collect();
        let cos = DistanceKind::Cosine;
        prop_assert_eq!(evaluate(&to_matrix(&x), &labels, cos).unwrap(), evaluate(&to_matrix(&scaled), &labels, cos).unwrap());
    }
}

// ------------------------------------------------------------ optim

fn kinds() -> [OptimizerKind; 3] {
    [
        OptimizerKind::sgd(0.0),
        OptimizerKind::rmsprop(),
        OptimizerKind::adamw(),
    ]
}

fn one_group(kind: OptimizerKind, lr: f64, shape: (usize, usize)) -> Optimizer {
    Optimizer::new(
        kind,
        vec![(
            ParamGroup {
                id: GroupId::Model,
                lr,
                weight_decay: 0.0,
            },
            vec![shape],
        )],
    )
    .unwrap()
}

fn step(opt: &mut Optimizer, p: &mut Matrix, g: &Matrix) {
    opt.step(&mut [GroupUpdate {
        id: GroupId::Model,
        params: std::slice::from_mut(p),
        grads: std::slice::from_ref(g),
    }])
    .unwrap();
}

proptest! {
    #[test]
    fn optimizer_steps_are_deterministic(seed in any::<u64>(), k in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p0 = to_matrix(&gaussian_rows(3, 2, 1.0, &mut rng));
        let grads: Vec<Matrix> = (0..5).map(|_| to_matrix(&gaussian_rows(3, 2, 1.0, &mut rng))).collect();
        let run = || {
            let mut opt = one_group(kinds()[k], 0.01, (3, 2));
            let mut p = p0.clone();
            for g in &grads {
                step(&mut opt, &mut p, g);
            }
            (p, opt)
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn groups_are_isolated(seed in any::<u64>(), k in 0usize..3, lr_a in 1e-4..0.5f64, lr_b in 1e-4..0.5f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pm = to_matrix(&gaussian_rows(2, 3, 1.0, &mut rng));
        let pf = to_matrix(&gaussian_rows(4, 3, 1.0, &mut rng));
        let gm = to_matrix(&gaussian_rows(2, 3, 1.0, &mut rng));
        let gf = to_matrix(&gaussian_rows(4, 3, 1.0, &mut rng));
        let run = |field_lr: f64| {
            let mut opt = Optimizer::new(kinds()[k], vec![
                (ParamGroup { id: GroupId::Model, lr: 0.05, weight_decay: 0.01 }, vec![(2, 3)]),
                (ParamGroup { id: GroupId::Meanfields, lr: field_lr, weight_decay: 0.0 }, vec![(4, 3)]),
            ]).unwrap();
            let (mut a, mut b) = (pm.clone(), pf.clone());
            for _ in 0..3 {
                opt.step(&mut [
                    GroupUpdate { id: GroupId::Model, params: std::slice::from_mut(&mut a), grads: std::slice::from_ref(&gm) },
                    GroupUpdate { id: GroupId::Meanfields, params: std::slice::from_mut(&mut b), grads: std::slice::from_ref(&gf) },
                ]).unwrap();
            }
            a
        };
        prop_assert_eq!(run(lr_a), run(lr_b));
    }

    #[test]
    fn zero_gradient_entries_do_not_move(seed in any::<u64>(), k in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p0 = to_matrix(&gaussian_rows(4, 3, 1.0, &mut rng));
        let mut g = to_matrix(&gaussian_rows(4, 3, 1.0, &mut rng));
        for v in g.as_mut_slice() {
            if rng.random::<bool>() {
                *v = 0.0;
            }
        }
        let mut opt = one_group(kinds()[k], 0.1, (4, 3));
        let mut p = p0.clone();
        step(&mut opt, &mut p, &g);
        for ((a, b), gv) in p.as_slice().iter().zip(p0.as_slice()).zip(g.as_slice()) {
            prop_assert_eq!(*gv == 0.0, a == b);
        }
    }

    /// Adaptive methods move each coordinate by roughly `lr` (RMSprop up to
    /// `lr/√(1−ρ)` early on) whatever the gradient size, so starts are kept
    /// beyond the distance 100 steps can travel; plain SGD has no such limit.
    #[test]
    fn quadratic_decreases_monotonically(seed in any::<u64>(), k in 0usize..3, lr in 1e-3..=0.1f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reach = if k == 0 { 1.0 } else { 1000.0 * lr };
        let p0: Vec<f64> = (0..5).map(|_| {
            let m = reach * rng.random_range(1.0..2.0);
            if rng.random::<bool>() { m } else { -m }
        }).collect();
        let mut p = Matrix::from_vec(1, 5, p0).unwrap();
        let f = |p: &Matrix| 0.5 * p.as_slice().iter().map(|v| v * v).sum::<f64>();
        let mut opt = one_group(kinds()[k], lr, (1, 5));
        let mut last = f(&p);
        for t in 0..100 {
            let g = p.clone();
            step(&mut opt, &mut p, &g);
            let now = f(&p);
            prop_assert!(now <= last, "step {}: {} > {}", t, now, last);
            last = now;
        }
    }
}

#[test]
fn mfcwms_defaults_are_finite_on_far_apart_points() {
    // β = 80 with squared distances in the hundreds: the log-sum-exp must not overflow
    let x = Matrix::from_rows(&[[30.0, 0.0], [-30.0, 0.0], [0.0, 30.0]]).unwrap();
    let bank = MeanFieldBank::from_matrix(Matrix::from_rows(&[[0.0, -30.0], [1.0, 1.0]]).unwrap())
        .unwrap();
    let b = Batch::new(x, vec![0, 1, 0]).unwrap();
    for kind in [DistanceKind::Cosine, DistanceKind::SqEuclidean] {
        let r = LossSpec::Mfcwms(MfCwmsParams::default())
            .evaluate(&b, Some(&bank), kind)
            .unwrap();
        assert!(r.value.is_finite() && r.grad_embeddings.is_finite());
    }
}
