use std::cell::RefCell;
use std::collections::VecDeque;

use hdrfuse::data::{load_manifest, DatasetManifest, Split};
use hdrfuse::eval::{eval_command, infer, write_inference, EvalRecord, EvalTable, Fuser, GeneratorFuser};
use hdrfuse::image::Image;
use hdrfuse::io::{read_hdr, read_ldr};
use hdrfuse::metrics::{psnr, ssim};
use hdrfuse::networks::{Generator, GeneratorConfig};
use hdrfuse::radiometry::{normalize_hdr, LdrImage};
use hdrfuse::synthetic::{make_toy_dataset, ToySpec};
use hdrfuse::Result;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Returns the normalized ground truth of each scene in turn.
struct Passthrough(RefCell<VecDeque<Image<f64>>>);

impl Fuser<f64> for Passthrough {
    fn fuse(&self, _: &[Image<f64>; 3], _: &[f64; 3]) -> Result<Image<f64>> {
        Ok(self.0.borrow_mut().pop_front().expect("one image per scene"))
    }
}

fn test_manifest(dir: &std::path::Path, scenes: usize) -> DatasetManifest {
    let spec = ToySpec {
        test_scenes: scenes,
        ..ToySpec::default()
    };
    load_manifest(&make_toy_dataset(dir, &spec).unwrap().test_manifest).unwrap()
}

#[test]
fn ground_truth_passthrough_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let m = test_manifest(dir.path(), 3);
    let gts = m
        .ldr_scenes
        .iter()
        .map(|s| normalize_hdr(&read_hdr::<f64>(s.ground_truth.as_ref().unwrap()).unwrap()).unwrap().image.0)
        .collect();
    let table = eval_command(&Passthrough(RefCell::new(gts)), &m, 5000.0).unwrap();
    assert_eq!(table.records.len(), 3);
    for r in &table.records {
        assert_eq!(r.psnr_tm, 99.0);
        assert!((r.ssim_tm - 1.0).abs() < 1e-12);
    }
    let names: Vec<_> = table.records.iter().map(|r| r.scene.clone()).collect();
    assert_eq!(names, ["test0", "test1", "test2"]);
}

#[test]
fn empty_manifest_gives_an_empty_table() {
    let m = DatasetManifest {
        ldr_scenes: Vec::new(),
        hdr_targets: Vec::new(),
        split: Split::Test,
    };
    let table = eval_command(&Passthrough(RefCell::default()), &m, 5000.0).unwrap();
    assert!(table.records.is_empty());
    assert!(table.mean().is_none());
    assert_eq!(table.to_csv(), "scene,psnr_tm,ssim_tm,hdrvdp,tmqi,runtime_ms\n");
}

#[test]
fn scenes_without_ground_truth_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = test_manifest(dir.path(), 2);
    let gt = m.ldr_scenes[1].ground_truth.clone().unwrap();
    m.ldr_scenes[0].ground_truth = None;
    let img = normalize_hdr(&read_hdr::<f64>(&gt).unwrap()).unwrap().image.0;
    let table = eval_command(&Passthrough(RefCell::new(vec![img].into())), &m, 5000.0).unwrap();
    assert_eq!(table.records.len(), 1);
    assert_eq!(table.records[0].scene, "test1");
}

#[test]
fn mean_row_and_outputs() {
    let rec = |s: &str, p, q, t| EvalRecord {
        scene: s.into(),
        psnr_tm: p,
        ssim_tm: q,
        runtime_ms: t,
    };
    let table = EvalTable {
        records: vec![rec("a", 30.0, 0.9, 10.0), rec("b", 20.0, 0.7, 30.0)],
    };
    let m = table.mean().unwrap();
    assert_eq!((m.scene.as_str(), m.psnr_tm, m.runtime_ms), ("mean", 25.0, 20.0));
    assert!((m.ssim_tm - 0.8).abs() < 1e-15);
    let csv = table.to_csv();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[3], "mean,25.000000,0.800000,,,20.000");
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("results.csv");
    table.write(&p).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), csv);
    assert!(std::fs::read_to_string(dir.path().join("results.md")).unwrap().contains("| mean | 25.000"));
}

fn tiny_generator() -> (Generator, hdrfuse::params::ParamStore<f64>) {
    let g = Generator::new(GeneratorConfig {
        width: 2,
        res_blocks: 1,
        ..GeneratorConfig::default()
    });
    let p = g.init(&mut ChaCha8Rng::seed_from_u64(7));
    (g, p)
}

fn stack(h: usize, w: usize) -> [LdrImage<f64>; 3] {
    [0.25, 1.0, 4.0].map(|t| {
        let img = Image::from_fn(h, w, 3, |c, y, x| (((y * 3 + x * 7 + c) as f64) * t).sin() * 0.5 + 0.5);
        LdrImage::new(img, t).unwrap()
    })
}

#[test]
fn inference_keeps_the_input_size_and_is_repeatable() {
    let (g, p) = tiny_generator();
    let fuser = GeneratorFuser {
        generator: &g,
        params: &p,
        gamma: 2.2,
    };
    for n in [250, 256] {
        let s = stack(n, n + 2);
        let a = infer(&fuser, &s, 5000.0).unwrap();
        assert_eq!(a.hdr.0.dims(), (n, n + 2, 3));
        assert_eq!(a.tonemapped.0.dims(), (n, n + 2, 3));
        assert!(a.hdr.0.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let b = infer(&fuser, &s, 5000.0).unwrap();
        assert_eq!(a.hdr.0, b.hdr.0);
    }
}

#[test]
fn written_inference_reads_back() {
    let (g, p) = tiny_generator();
    let fuser = GeneratorFuser {
        generator: &g,
        params: &p,
        gamma: 2.2,
    };
    let out = infer(&fuser, &stack(20, 24), 5000.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_inference(dir.path(), &out, "scene").unwrap();
    let hdr = read_hdr::<f64>(&dir.path().join("scene.pfm")).unwrap();
    for (a, b) in hdr.data().iter().zip(out.hdr.0.data()) {
        assert!((a - b).abs() < 1e-6);
    }
    let tm = read_ldr::<f64>(&dir.path().join("scene_tm.png")).unwrap();
    for (a, b) in tm.data().iter().zip(out.tonemapped.0.data()) {
        assert!((a - b).abs() <= 0.5 / 255.0 + 1e-9);
    }
}

fn noisy(base: &Image<f64>, amp: f64, seed: usize) -> Image<f64> {
    Image::from_fn(base.height(), base.width(), 3, |c, y, x| {
        let n = (((c * 7919 + y * 104_729 + x * 1_299_709 + seed) % 1000) as f64 / 999.0 - 0.5) * 2.0;
        (base.get(c, y, x) + amp * n).clamp(0.0, 1.0)
    })
}

#[test]
fn psnr_falls_as_noise_grows() {
    let base = Image::from_fn(32, 32, 3, |c, y, x| 0.3 + 0.4 * (((c + y + x) % 5) as f64 / 4.0));
    let p: Vec<f64> = [0.01, 0.05, 0.2].iter().map(|&a| psnr(&noisy(&base, a, 1), &base).unwrap()).collect();
    assert!(p[0] > p[1] && p[1] > p[2], "{p:?}");
    let s: Vec<f64> = [0.01, 0.05, 0.2].iter().map(|&a| ssim(&noisy(&base, a, 1), &base).unwrap()).collect();
    assert!(s[0] > s[1] && s[1] > s[2], "{s:?}");
}

proptest! {
    #[test]
    fn metrics_are_symmetric_and_bounded(seed in 0usize..10_000, amp in 0.0f64..0.5) {
        let base = Image::from_fn(16, 16, 3, |c, y, x| ((c * 31 + y * 17 + x * 5 + seed) % 97) as f64 / 96.0);
        let other = noisy(&base, amp, seed);
        let (p1, p2) = (psnr(&base, &other).unwrap(), psnr(&other, &base).unwrap());
        prop_assert_eq!(p1, p2);
        prop_assert!(p1 > 0.0 && p1 <= 99.0);
        let (s1, s2) = (ssim(&base, &other).unwrap(), ssim(&other, &base).unwrap());
        prop_assert!((s1 - s2).abs() < 1e-12);
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&s1));
        prop_assert!((ssim(&base, &base).unwrap() - 1.0).abs() < 1e-12);
    }
}
