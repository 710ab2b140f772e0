use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::dataset::{branch_input, Dataset};
use super::patches::{apply_dihedral, DIHEDRAL_COUNT};

const STREAM_LDR: u64 = 1;
const STREAM_HDR: u64 = 2;

/// Folds a tuple of integers into one seed (splitmix64 steps).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243f_6a88_85a3_08d3;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

#[derive(Clone, Debug)]
pub struct SampleBatch<T> {
    /// Three `[B, 6, P, P]` generator inputs, short to long exposure.
    pub branches: [Tensor<T>; 3],
    /// `[B, 3, P, P]` tonemapped HDR patches.
    pub hdr_targets: Tensor<T>,
    /// `[B, 3, P, P]` tonemapped blurred HDR patches, when the blur set is on.
    pub blur_targets: Option<Tensor<T>>,
    pub ldr_indices: Vec<usize>,
    pub hdr_indices: Vec<usize>,
}

impl<T: Scalar> SampleBatch<T> {
    /// `[B, 3, P, P]` LDR exposure `k` (the first three channels of branch `k`).
    pub fn ldr(&self, k: usize) -> Tensor<T> {
        let b = &self.branches[k];
        let (n, _, h, w) = b.dims4().expect("NCHW batch");
        let hw = h * w;
        let mut data = Vec::with_capacity(n * 3 * hw);
        for i in 0..n {
            data.extend_from_slice(&b.data()[i * 6 * hw..i * 6 * hw + 3 * hw]);
        }
        Tensor::from_vec(&[n, 3, h, w], data).expect("ldr slice")
    }
}

/// Deterministic unpaired sampler. Every draw is a function of
/// `(seed, phase, epoch, step)` only, so batches may be assembled in any order.
///
/// LDR scenes and HDR targets come from two independent streams of per-cycle
/// permutations, which keeps each index's frequency within one of every other's
/// over an epoch. Crop offset and dihedral transform are drawn per sample.
#[derive(Clone, Debug)]
pub struct UnpairedSampler {
    pub seed: u64,
    pub batch: usize,
}

impl UnpairedSampler {
    pub fn new(seed: u64, batch: usize) -> Self {
        UnpairedSampler { seed, batch }
    }

    /// Element `k` of the epoch's concatenated permutations of `0..n`.
    pub fn stream_index(&self, stream: u64, phase: u64, epoch: u64, n: usize, k: usize) -> usize {
        let cycle = (k / n) as u64;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[self.seed, phase, epoch, stream, cycle]));
        perm.shuffle(&mut rng);
        perm[k % n]
    }

    fn draw_rng(&self, stream: u64, phase: u64, epoch: u64, step: u64, b: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(&[self.seed, phase, epoch, step, b as u64, stream + 16]))
    }

    pub fn sample<T: Scalar>(&self, data: &Dataset<T>, phase: u64, epoch: u64, step: u64) -> Result<SampleBatch<T>> {
        if self.batch == 0 {
            return invalid("batch size must be positive");
        }
        let (nx, ny) = (data.scenes.len(), data.targets.len());
        if nx == 0 || ny == 0 {
            return Err(Error::Config("cannot sample from an empty domain".into()));
        }
        let p = data.options.patch;
        let gamma = T::lit(data.options.gamma);
        let mut branches: [Vec<Tensor<T>>; 3] = Default::default();
        let mut targets = Vec::with_capacity(self.batch);
        let mut blurs = Vec::with_capacity(self.batch);
        let mut ldr_indices = Vec::with_capacity(self.batch);
        let mut hdr_indices = Vec::with_capacity(self.batch);
        for b in 0..self.batch {
            let k = step as usize * self.batch + b;

            let si = self.stream_index(STREAM_LDR, phase, epoch, nx, k);
            let scene = &data.scenes[si];
            let mut rng = self.draw_rng(STREAM_LDR, phase, epoch, step, b);
            let (top, left) = scene.offsets[rng.random_range(0..scene.offsets.len())];
            let aug = rng.random_range(0..DIHEDRAL_COUNT);
            for (e, out) in branches.iter_mut().enumerate() {
                let crop = apply_dihedral(&scene.exposures[e].crop(top, left, p, p)?, aug)?;
                out.push(branch_input(&crop, scene.times[e], gamma)?.to_tensor());
            }
            ldr_indices.push(si);

            let ti = self.stream_index(STREAM_HDR, phase, epoch, ny, k);
            let target = &data.targets[ti];
            let mut rng = self.draw_rng(STREAM_HDR, phase, epoch, step, b);
            let (top, left) = target.offsets[rng.random_range(0..target.offsets.len())];
            let aug = rng.random_range(0..DIHEDRAL_COUNT);
            let cut = |img: &Image<T>| -> Result<Tensor<T>> { Ok(apply_dihedral(&img.crop(top, left, p, p)?, aug)?.to_tensor()) };
            targets.push(cut(&target.tonemapped)?);
            if let Some(bl) = &target.blur_tonemapped {
                blurs.push(cut(bl)?);
            }
            hdr_indices.push(ti);
        }
        let [b0, b1, b2] = branches;
        Ok(SampleBatch {
            branches: [Tensor::stack(&b0)?, Tensor::stack(&b1)?, Tensor::stack(&b2)?],
            hdr_targets: Tensor::stack(&targets)?,
            blur_targets: if blurs.is_empty() { None } else { Some(Tensor::stack(&blurs)?) },
            ldr_indices,
            hdr_indices,
        })
    }
}

/// A single batch at phase 0, epoch 0, step 0.
pub fn sample_unpaired_batch<T: Scalar>(data: &Dataset<T>, seed: u64, batch: usize) -> Result<SampleBatch<T>> {
    UnpairedSampler::new(seed, batch).sample(data, 0, 0, 0)
}
