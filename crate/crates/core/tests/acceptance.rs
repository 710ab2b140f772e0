//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are printed even when everything passes.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hdrfuse::autograd::{NormMode, Tape};
use hdrfuse::data::{load_manifest, patch_offsets, crop_patches, Dataset, SampleBatch, UnpairedSampler};
use hdrfuse::eval::{eval_command, GeneratorFuser};
use hdrfuse::image::Image;
use hdrfuse::losses::{
    content_loss, content_loss_mse, content_weight, discriminator_objective, generator_adversarial_objective,
};
use hdrfuse::metrics::{psnr, ssim, ssim_taps};
use hdrfuse::networks::{Discriminator, DiscriminatorConfig, FeatureExtractor, Generator, GeneratorConfig};
use hdrfuse::nn::{Layers, Padding};
use hdrfuse::params::ParamStore;
use hdrfuse::radiometry::{gamma_map, mu_law_tonemap, HdrImage, LdrImage};
use hdrfuse::synthetic::{make_toy_dataset, ToyDataset, ToySpec};
use hdrfuse::training::{train, Phase, Position, TrainConfig, TrainOptions, Trainer};
use hdrfuse::Tensor;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn random_image(h: usize, w: usize, c: usize, rng: &mut impl Rng) -> Image<f64> {
    Image::from_fn(h, w, c, |_, _, _| rng.random::<f64>())
}

fn closed_form_math() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let v: f64 = rng.random_range(1e-3..1.0);
        let t: f64 = rng.random_range(0.01..10.0);
        let g: f64 = rng.random_range(1.5..3.0);
        let got = gamma_map(&LdrImage::new(Image::filled(1, 1, 1, v), t).unwrap(), g).unwrap().0.get(0, 0, 0);
        worst = worst.max(rel_err(got, (g * v.ln()).exp() / t));
    }
    ensure(worst <= 1e-9, format!("gamma_map rel err {worst:e}"))?;
    let gamma_worst = worst;

    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let h: f64 = rng.random_range(1e-3..1.0);
        let mu: f64 = rng.random_range(10.0..10000.0);
        let got = mu_law_tonemap(&HdrImage(Image::filled(1, 1, 1, h)), mu).unwrap().0.get(0, 0, 0);
        worst = worst.max(rel_err(got, (1.0 + mu * h).ln() / (1.0 + mu).ln()));
    }
    ensure(worst <= 1e-9, format!("mu_law rel err {worst:e}"))?;
    let mu_worst = worst;

    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let e: u64 = rng.random_range(0..400);
        let w0: f64 = rng.random_range(0.1..5.0);
        let mut want = w0;
        for _ in 0..e / 10 {
            want *= 0.96;
        }
        worst = worst.max(rel_err(content_weight(e, w0), want));
    }
    ensure(worst <= 1e-9, format!("content_weight rel err {worst:e}"))?;
    let cw_worst = worst;

    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a = random_image(4, 5, 3, &mut rng);
        let b = random_image(4, 5, 3, &mut rng);
        let mut s = 0.0;
        for c in 0..3 {
            for y in 0..4 {
                for x in 0..5 {
                    let d = a.get(c, y, x) - b.get(c, y, x);
                    s += d * d;
                }
            }
        }
        let want = -10.0 * (s / 60.0).log10();
        worst = worst.max(rel_err(psnr(&a, &b).unwrap(), want));
    }
    ensure(worst <= 1e-9, format!("psnr rel err {worst:e}"))?;
    Ok(format!(
        "max rel err gamma {gamma_worst:.1e}, mu-law {mu_worst:.1e}, w_con {cw_worst:.1e}, psnr {worst:.1e}"
    ))
}

/// SSIM evaluated window by window with the 2-D Gaussian weights.
fn ssim_reference(a: &Image<f64>, b: &Image<f64>) -> f64 {
    let k = ssim_taps::<f64>();
    let n = k.len();
    let (h, w, c) = a.dims();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    for ch in 0..c {
        let mut sum = 0.0;
        let mut count = 0;
        for y in 0..=h - n {
            for x in 0..=w - n {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let wt = k[i] * k[j];
                        let (p, q) = (a.get(ch, y + i, x + j), b.get(ch, y + i, x + j));
                        ma += wt * p;
                        mb += wt * q;
                        saa += wt * p * p;
                        sbb += wt * q * q;
                        sab += wt * p * q;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total += sum / count as f64;
    }
    total / c as f64
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..100 {
        let window = [2, 4, 8, 16][case % 4];
        let map = Tensor::from_fn(&[1, 1, 64, 64], |_| rng.random_range(-3.0..3.0));
        let tape = Tape::<f64>::new();
        let pooled = tape.constant(map.clone()).min_pool(window).unwrap().value();
        let side = 64 / window;
        for oy in 0..side {
            for ox in 0..side {
                let mut m = f64::INFINITY;
                for dy in 0..window {
                    for dx in 0..window {
                        m = m.min(map.data()[(oy * window + dy) * 64 + ox * window + dx]);
                    }
                }
                ensure(pooled.data()[oy * side + ox] == m, format!("min_pool case {case} cell ({oy},{ox})"))?;
            }
        }
    }
    for case in 0..50 {
        let h = rng.random_range(1..200);
        let w = rng.random_range(1..200);
        let patch = rng.random_range(1..64);
        let stride = rng.random_range(1..48);
        let img = Image::<f32>::zeros(h, w, 1);
        let got: Vec<(usize, usize)> = crop_patches(&img, 0, patch, stride)
            .unwrap()
            .iter()
            .map(|p| (p.top, p.left))
            .collect();
        let mut want = Vec::new();
        for top in 0..h {
            for left in 0..w {
                if top % stride == 0 && left % stride == 0 && top + patch <= h && left + patch <= w {
                    want.push((top, left));
                }
            }
        }
        ensure(got == want, format!("crop case {case}: {h}x{w} p{patch} s{stride}"))?;
        ensure(patch_offsets(h, w, patch, stride).unwrap() == want, format!("offsets case {case}"))?;
    }
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let a = random_image(64, 64, 3, &mut rng);
        let b = Image::from_fn(64, 64, 3, |c, y, x| (a.get(c, y, x) + 0.2 * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0));
        let b = if rng.random_bool(0.5) { b } else { random_image(64, 64, 3, &mut rng) };
        worst = worst.max((ssim(&a, &b).unwrap() - ssim_reference(&a, &b)).abs());
    }
    ensure(worst <= 1e-6, format!("ssim abs err {worst:e}"))?;
    Ok(format!("100 min-pool maps, 50 crop grids exact; ssim max abs err {worst:.1e}"))
}

fn shape_contract() -> Outcome {
    let gen = Generator::new(GeneratorConfig::default());
    let disc = Discriminator::new(DiscriminatorConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let gp: ParamStore<f32> = gen.init(&mut rng);
    let dp: ParamStore<f32> = disc.init(&mut rng);
    let table = [
        ("G.E1.conv.weight", vec![64, 6, 7, 7]),
        ("G.E2.down.weight", vec![128, 64, 3, 3]),
        ("G.E2.conv.weight", vec![128, 128, 3, 3]),
        ("G.E3.down.weight", vec![256, 128, 3, 3]),
        ("G.E3.conv.weight", vec![256, 256, 3, 3]),
        ("G.res0.conv1.weight", vec![256, 256, 3, 3]),
        ("G.res0.conv2.weight", vec![256, 256, 3, 3]),
        ("G.D1.up.weight", vec![128, 256, 3, 3]),
        ("G.D1.conv.weight", vec![128, 128, 3, 3]),
        ("G.D2.up.weight", vec![64, 128, 3, 3]),
        ("G.D2.conv.weight", vec![64, 64, 3, 3]),
        ("G.D3.weight", vec![3, 64, 7, 7]),
        ("D.C1.weight", vec![32, 3, 3, 3]),
        ("D.C2.down.weight", vec![64, 32, 3, 3]),
        ("D.C2.conv.weight", vec![64, 64, 3, 3]),
        ("D.C3.down.weight", vec![128, 64, 3, 3]),
        ("D.C3.conv.weight", vec![128, 128, 3, 3]),
        ("D.C4.weight", vec![256, 128, 3, 3]),
        ("D.C5.weight", vec![1, 256, 3, 3]),
    ];
    for (name, shape) in &table {
        let t = gp.param(name).or_else(|| dp.param(name)).ok_or(format!("missing {name}"))?;
        ensure(t.shape() == shape.as_slice(), format!("{name}: {:?} vs {shape:?}", t.shape()))?;
    }
    for p in [64usize, 128, 256] {
        let tape = Tape::<f32>::no_grad();
        let l = Layers::new(gp.bind(&tape, false), NormMode::Eval, Padding::Reflect);
        let branches: Vec<_> = (0..3).map(|_| tape.constant(Tensor::full(&[1, 6, p, p], 0.4))).collect();
        let out = gen.forward(&l, &branches).map_err(|e| e.to_string())?;
        ensure(out.shape() == [1, 3, p, p], format!("G output {:?} at P={p}", out.shape()))?;
        let ld = Layers::new(dp.bind(&tape, false), NormMode::Eval, Padding::Reflect);
        let scores = disc.forward(&ld, out).map_err(|e| e.to_string())?;
        ensure(scores.shape() == [1, 1, p / 4, p / 4], format!("D output {:?} at P={p}", scores.shape()))?;
    }
    Ok("layer kernels/channels and G/D shapes for P in {64,128,256}".into())
}

/// Worst relative error between analytic and central-difference gradients.
fn fd_check(analytic: &[f64], x: &mut [f64], f: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
    // large enough to beat roundoff, small enough not to cross LeakyReLU kinks
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(x);
        x[i] = orig - h;
        let down = f(x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

fn tiny_disc() -> (Discriminator, ParamStore<f64>) {
    let d = Discriminator::new(DiscriminatorConfig {
        width: 2,
        ..DiscriminatorConfig::default()
    });
    let p = d.init(&mut ChaCha8Rng::seed_from_u64(21));
    (d, p)
}

fn rand_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(0.05..0.95))
}

fn d_objective_value(d: &Discriminator, dp: &ParamStore<f64>, y: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let tape = Tape::new();
    let l = Layers::new(dp.bind(&tape, false), NormMode::Train, Padding::Reflect);
    let v = discriminator_objective(d, &l, tape.constant(y.clone()), tape.constant(g.clone()), Some(tape.constant(b.clone())))
        .unwrap();
    v.value().item()
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let shape = [2, 3, 8, 8];
    let (y, g, b) = (rand_tensor(&shape, &mut rng), rand_tensor(&shape, &mut rng), rand_tensor(&shape, &mut rng));
    let (disc, dp) = tiny_disc();
    let mut report = Vec::new();

    // discriminator objective: w.r.t. D parameters and the generated input
    let tape = Tape::new();
    let l = Layers::new(dp.bind(&tape, true), NormMode::Train, Padding::Reflect);
    let gv = tape.leaf(g.clone());
    let loss = discriminator_objective(&disc, &l, tape.constant(y.clone()), gv, Some(tape.constant(b.clone()))).unwrap();
    let mut grads = tape.backward(loss);
    let g_grad = grads.get(gv).unwrap().data().to_vec();
    let p_grads = l.params.collect_grads(&mut grads);
    drop(l);
    let mut gx = g.data().to_vec();
    let mut worst = fd_check(&g_grad, &mut gx, &mut |x| {
        d_objective_value(&disc, &dp, &y, &Tensor::from_vec(&shape, x.to_vec()).unwrap(), &b)
    });
    for (name, an) in &p_grads {
        let mut store = dp.clone();
        let mut px = store.param(name).unwrap().data().to_vec();
        let pshape = store.param(name).unwrap().shape().to_vec();
        let e = fd_check(an.data(), &mut px, &mut |x| {
            *store.param_mut(name).unwrap() = Tensor::from_vec(&pshape, x.to_vec()).unwrap();
            d_objective_value(&disc, &store, &y, &g, &b)
        });
        worst = worst.max(e);
    }
    report.push(format!("D {worst:.1e}"));
    ensure(worst < 1e-4, format!("discriminator_objective rel err {worst:e}"))?;

    // generator adversarial loss with 2x2 min-pool against a frozen D
    let g_adv = |x: &Tensor<f64>, grad: bool| -> (f64, Option<Vec<f64>>) {
        let tape = Tape::new();
        let l = Layers::new(dp.bind(&tape, false), NormMode::Train, Padding::Reflect);
        let v = tape.leaf(x.clone());
        let loss = generator_adversarial_objective(&disc, &l, v, Some(2)).unwrap();
        let val = loss.value().item();
        (val, grad.then(|| tape.backward(loss).get(v).unwrap().data().to_vec()))
    };
    let an = g_adv(&g, true).1.unwrap();
    let mut gx = g.data().to_vec();
    let worst = fd_check(&an, &mut gx, &mut |x| g_adv(&Tensor::from_vec(&shape, x.to_vec()).unwrap(), false).0);
    report.push(format!("G_adv {worst:.1e}"));
    ensure(worst < 1e-4, format!("generator_adversarial_objective rel err {worst:e}"))?;

    // perceptual and MSE content losses
    let fx = FeatureExtractor::<f64>::random(4, 3);
    let x_ref = rand_tensor(&shape, &mut rng);
    for perceptual in [true, false] {
        let eval = |x: &Tensor<f64>, grad: bool| -> (f64, Option<Vec<f64>>) {
            let tape = Tape::new();
            let v = tape.leaf(x.clone());
            let r = tape.constant(x_ref.clone());
            let loss = if perceptual {
                content_loss(&fx, v, r).unwrap()
            } else {
                content_loss_mse(v, r).unwrap()
            };
            let val = loss.value().item();
            (val, grad.then(|| tape.backward(loss).get(v).unwrap().data().to_vec()))
        };
        let an = eval(&g, true).1.unwrap();
        let mut gx = g.data().to_vec();
        let worst = fd_check(&an, &mut gx, &mut |x| eval(&Tensor::from_vec(&shape, x.to_vec()).unwrap(), false).0);
        let name = if perceptual { "content" } else { "mse" };
        report.push(format!("{name} {worst:.1e}"));
        ensure(worst < 1e-4, format!("{name} content loss rel err {worst:e}"))?;
    }
    Ok(format!("max rel err: {}", report.join(", ")))
}

fn min_pool_sparsity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut checked = 0;
    for case in 0..20 {
        // score maps with deliberate ties in every other case
        let map = Tensor::from_fn(&[2, 1, 8, 8], |_| {
            if case % 2 == 0 {
                rng.random_range(-2.0..2.0)
            } else {
                f64::from(rng.random_range(-2i32..2))
            }
        });
        for window in [2, 4] {
            let tape = Tape::new();
            let f = tape.leaf(map.clone());
            let loss = hdrfuse::losses::generator_adversarial_from_scores(f, Some(window)).unwrap();
            let grads = tape.backward(loss);
            let g = grads.get(f).unwrap();
            for plane in 0..2 {
                for oy in 0..8 / window {
                    for ox in 0..8 / window {
                        let cells: Vec<usize> = (0..window * window)
                            .map(|k| plane * 64 + (oy * window + k / window) * 8 + ox * window + k % window)
                            .collect();
                        let nonzero: Vec<usize> = cells.iter().copied().filter(|&i| g.data()[i] != 0.0).collect();
                        ensure(nonzero.len() == 1, format!("case {case}: {} nonzero cells in a window", nonzero.len()))?;
                        let min = cells.iter().map(|&i| map.data()[i]).fold(f64::INFINITY, f64::min);
                        let first_min = *cells.iter().find(|&&i| map.data()[i] == min).unwrap();
                        ensure(nonzero[0] == first_min, format!("case {case}: gradient not at first argmin"))?;
                        checked += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{checked} windows, exactly one nonzero gradient at the first argmin"))
}

fn toy_dataset(dir: &Path) -> ToyDataset {
    make_toy_dataset(dir, &ToySpec::default()).expect("toy dataset")
}

/// Content loss of the current generator on `batch` against exposure `k`,
/// with batch statistics and no parameter update.
fn content_probe(tr: &Trainer<f32>, batch: &SampleBatch<f32>, k: usize) -> f64 {
    let tape = Tape::new();
    let l = Layers::new(tr.g_params.bind(&tape, false), NormMode::Train, tr.config.generator.padding);
    let vars: Vec<_> = batch.branches.iter().map(|b| tape.constant(b.clone())).collect();
    let out = tr.generator.forward(&l, &vars).unwrap().mu_law(tr.config.mu as f32);
    let loss = content_loss(&tr.extractor, out, tape.constant(batch.ldr(k))).unwrap();
    loss.value().item() as f64
}

fn init_efficacy() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let toy = toy_dataset(dir.path());
    let m = load_manifest(&toy.train_manifest).map_err(|e| e.to_string())?;
    let cfg = TrainConfig::toy();
    let data = Dataset::<f32>::load(&m, cfg.data_options()).map_err(|e| e.to_string())?;
    ensure(data.scenes.len() == 2 && cfg.patch == 96, "expected the 2-scene 96x96 toy set")?;
    let mut tr = Trainer::<f32>::new(cfg.clone()).map_err(|e| e.to_string())?;
    let sampler = UnpairedSampler::new(cfg.seed, cfg.batch);
    let probe = UnpairedSampler::new(cfg.seed + 1, 8).sample(&data, 9, 0, 0).map_err(|e| e.to_string())?;
    let start = content_probe(&tr, &probe, 1);
    for s in 0..200u64 {
        tr.position = Position {
            phase: Phase::Init,
            epoch: s / 20,
            step: s % 20,
        };
        let batch = sampler.sample(&data, 0, s / 20, s % 20).map_err(|e| e.to_string())?;
        tr.init_step(&batch).map_err(|e| e.to_string())?;
    }
    let end = content_probe(&tr, &probe, 1);
    let others = [content_probe(&tr, &probe, 0), content_probe(&tr, &probe, 2)];
    ensure(end <= 0.5 * start, format!("content loss {start:.4} -> {end:.4}"))?;
    ensure(
        others.iter().all(|&o| end < o),
        format!("vs x2 {end:.4}, vs x1 {:.4}, vs x3 {:.4}", others[0], others[1]),
    )?;
    Ok(format!(
        "content loss {start:.4} -> {end:.4} ({:.0}% drop); vs x1 {:.4}, x3 {:.4}",
        100.0 * (1.0 - end / start),
        others[0],
        others[1]
    ))
}

fn adversarial_smoke() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let toy = toy_dataset(dir.path());
    let m = load_manifest(&toy.train_manifest).map_err(|e| e.to_string())?;
    let cfg = TrainConfig::toy();
    let data = Dataset::<f32>::load(&m, cfg.data_options()).map_err(|e| e.to_string())?;
    let mut tr = Trainer::<f32>::new(cfg.clone()).map_err(|e| e.to_string())?;
    let sampler = UnpairedSampler::new(cfg.seed, cfg.batch);
    let mut last = None;
    for s in 0..500u64 {
        tr.position = Position {
            phase: Phase::Adversarial,
            epoch: s / 20,
            step: s % 20,
        };
        let batch = sampler.sample(&data, 1, s / 20, s % 20).map_err(|e| e.to_string())?;
        let r = tr.train_step(&batch).map_err(|e| format!("step {s}: {e}"))?;
        for v in [r.d_loss, r.g_adv, r.g_content, r.w_con, r.g_total] {
            ensure(v.is_finite(), format!("step {s}: non-finite loss in {r:?}"))?;
        }
        last = Some(r);
    }

    // ablation equivalence on identical inputs, in float64
    let mut cfg64 = cfg.clone();
    cfg64.blur_set = false;
    let data64 = Dataset::<f64>::load(&m, cfg.data_options()).map_err(|e| e.to_string())?;
    let batch = UnpairedSampler::new(3, 2).sample(&data64, 1, 0, 0).map_err(|e| e.to_string())?;
    ensure(batch.blur_targets.is_some(), "blur targets should exist in the batch")?;
    let mut tr64 = Trainer::<f64>::new(cfg64).map_err(|e| e.to_string())?;
    let g_tm = tr64.generate(&batch.branches).map_err(|e| e.to_string())?.map(|v| (5000.0 * v).ln_1p() / 5001f64.ln());
    let two_term = {
        let tape = Tape::new();
        let l = Layers::new(tr64.d_params.bind(&tape, false), NormMode::Train, Padding::Reflect);
        let real = tr64.discriminator.forward(&l, tape.constant(batch.hdr_targets.clone())).unwrap().value();
        let fake = tr64.discriminator.forward(&l, tape.constant(g_tm.clone())).unwrap().value();
        let sp = |v: f64| (1.0 + v.exp()).ln();
        real.data().iter().map(|&v| sp(-v)).sum::<f64>() / real.len() as f64
            + fake.data().iter().map(|&v| sp(v)).sum::<f64>() / fake.len() as f64
    };
    let d_loss = tr64.discriminator_step(&g_tm, &batch).map_err(|e| e.to_string())?;
    let diff = (d_loss - two_term).abs();
    ensure(diff <= 1e-6, format!("blur-off d_loss {d_loss} vs two-term {two_term}"))?;
    let r = last.unwrap();
    Ok(format!(
        "500 steps finite (last d {:.3}, g_adv {:.3}, content {:.3}); blur-off d_loss diff {diff:.1e}",
        r.d_loss, r.g_adv, r.g_content
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let toy = toy_dataset(dir.path());
    let m = load_manifest(&toy.train_manifest).map_err(|e| e.to_string())?;
    let cfg = TrainConfig::toy();
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let s = train::<f32>(&cfg, &m, &out, &TrainOptions::default()).map_err(|e| e.to_string())?;
        let log = std::fs::read(out.join("log.jsonl")).map_err(|e| e.to_string())?;
        let ck = std::fs::read(&s.final_checkpoint).map_err(|e| e.to_string())?;
        runs.push((log, ck, s.global_step));
    }
    ensure(runs[0].0 == runs[1].0, "loss logs differ")?;
    ensure(runs[0].1 == runs[1].1, "final checkpoints differ")?;
    Ok(format!(
        "{} steps twice: identical logs ({} B), bitwise-identical checkpoints ({} B)",
        runs[0].2,
        runs[0].0.len(),
        runs[0].1.len()
    ))
}

fn toy_run_gate() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let toy = toy_dataset(dir.path());
    let m = load_manifest(&toy.train_manifest).map_err(|e| e.to_string())?;
    let test = load_manifest(&toy.test_manifest).map_err(|e| e.to_string())?;
    let mut cfg = TrainConfig::toy();
    cfg.init_epochs = 10;
    cfg.epochs = 90;
    cfg.checkpoint_every = 50;
    let steps = (cfg.init_epochs + cfg.epochs) * cfg.steps_per_epoch.unwrap();
    ensure(steps == 2000, format!("{steps} steps configured"))?;
    let fresh = Trainer::<f32>::new(cfg.clone()).map_err(|e| e.to_string())?;
    let fuser = GeneratorFuser {
        generator: &fresh.generator,
        params: &fresh.g_params,
        gamma: cfg.gamma,
    };
    let before = eval_command(&fuser, &test, cfg.mu).map_err(|e| e.to_string())?.mean().ok_or("empty table")?;
    let s = train::<f32>(&cfg, &m, &dir.path().join("run"), &TrainOptions::default()).map_err(|e| e.to_string())?;
    let model = hdrfuse::eval::Model::<f32>::from_checkpoint(&s.final_checkpoint).map_err(|e| e.to_string())?;
    let after = eval_command(&model.fuser(), &test, cfg.mu).map_err(|e| e.to_string())?.mean().ok_or("empty table")?;
    let gain = after.psnr_tm - before.psnr_tm;
    let detail = format!(
        "PSNR {:.2} -> {:.2} dB (+{gain:.2}), SSIM {:.3} -> {:.3}",
        before.psnr_tm, after.psnr_tm, before.ssim_tm, after.ssim_tm
    );
    ensure(gain >= 3.0, detail.clone())?;
    Ok(detail)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("closed-form math", closed_form_math),
        ("oracle equivalence", oracle_equivalence),
        ("shape contract", shape_contract),
        ("gradient checks", gradient_checks),
        ("min-pool gradient sparsity", min_pool_sparsity),
        ("initialization efficacy", init_efficacy),
        ("adversarial smoke", adversarial_smoke),
        ("determinism", determinism),
        ("2000-step toy run gate", toy_run_gate),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
