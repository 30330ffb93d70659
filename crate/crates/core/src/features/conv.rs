//! Small conv → ReLU → 2×2 average-pool stack with forward and backward passes.
//!
//! Activations are channel-major (C×H×W) internally so the inner loops run
//! along contiguous rows; the public pyramid type is H×W×C.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, Tensor3};

const K: usize = 3;

/// Channel-major activation volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Planes<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Planes<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Planes {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn from_matrix(m: &Matrix<T>) -> Self {
        Planes {
            channels: 1,
            height: m.rows(),
            width: m.cols(),
            data: m.as_slice().to_vec(),
        }
    }

    #[inline]
    fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn to_hwc(&self) -> Tensor3<T> {
        let (c, h, w) = (self.channels, self.height, self.width);
        let mut out = Tensor3::zeros(h, w, c);
        for ch in 0..c {
            let p = self.plane(ch);
            for y in 0..h {
                for x in 0..w {
                    out.vector_mut(y, x)[ch] = p[y * w + x];
                }
            }
        }
        out
    }

    pub fn from_hwc(t: &Tensor3<T>) -> Self {
        let (h, w, c) = t.shape();
        let mut out = Planes::zeros(c, h, w);
        for y in 0..h {
            for x in 0..w {
                for (ch, &v) in t.vector(y, x).iter().enumerate() {
                    out.data[ch * h * w + y * w + x] = v;
                }
            }
        }
        out
    }
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if i < 0 {
        (-i) as usize
    } else if i as usize >= n {
        2 * n - 2 - i as usize
    } else {
        i as usize
    }
}

fn reflect_pad<T: Scalar>(x: &Planes<T>) -> Planes<T> {
    let (h, w) = (x.height, x.width);
    let (ph, pw) = (h + 2, w + 2);
    let mut out = Planes::zeros(x.channels, ph, pw);
    for c in 0..x.channels {
        let src = x.plane(c);
        let dst = out.plane_mut(c);
        for py in 0..ph {
            let sy = reflect(py as isize - 1, h);
            for px in 0..pw {
                let sx = reflect(px as isize - 1, w);
                dst[py * pw + px] = src[sy * w + sx];
            }
        }
    }
    out
}

/// Adjoint of `reflect_pad`: folds a padded gradient back onto the input grid.
fn reflect_unpad<T: Scalar>(g: &Planes<T>, h: usize, w: usize) -> Planes<T> {
    let pw = w + 2;
    let mut out = Planes::zeros(g.channels, h, w);
    for c in 0..g.channels {
        let src = g.plane(c);
        let dst = out.plane_mut(c);
        for py in 0..h + 2 {
            let sy = reflect(py as isize - 1, h);
            for px in 0..pw {
                let sx = reflect(px as isize - 1, w);
                dst[sy * w + sx] += src[py * pw + px];
            }
        }
    }
    out
}

/// One 3×3 convolution (stride 1, reflect padding) + ReLU + 2×2 average pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out][in][ky][kx]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvBlock<T> {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        ConvBlock {
            in_channels,
            out_channels,
            weight: vec![T::zero(); out_channels * in_channels * K * K],
            bias: vec![T::zero(); out_channels],
        }
    }

    #[inline]
    fn w(&self, oc: usize, ic: usize) -> &[T] {
        let start = (oc * self.in_channels + ic) * K * K;
        &self.weight[start..start + K * K]
    }

    fn conv(&self, padded: &Planes<T>) -> Planes<T> {
        let (h, w) = (padded.height - 2, padded.width - 2);
        let pw = padded.width;
        let mut out = Planes::zeros(self.out_channels, h, w);
        for oc in 0..self.out_channels {
            let b = self.bias[oc];
            let dst = out.plane_mut(oc);
            dst.iter_mut().for_each(|v| *v = b);
            for ic in 0..self.in_channels {
                let src = padded.plane(ic);
                let kern = self.w(oc, ic);
                for ky in 0..K {
                    for kx in 0..K {
                        let wt = kern[ky * K + kx];
                        for y in 0..h {
                            let s = &src[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                            let d = &mut dst[y * w..(y + 1) * w];
                            for (dv, &sv) in d.iter_mut().zip(s) {
                                *dv += wt * sv;
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

fn relu_pool<T: Scalar>(pre: &Planes<T>) -> Planes<T> {
    let (h, w) = (pre.height / 2, pre.width / 2);
    let quarter = T::of(0.25);
    let mut out = Planes::zeros(pre.channels, h, w);
    for c in 0..pre.channels {
        let src = pre.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let r0 = 2 * y * pre.width + 2 * x;
                let r1 = r0 + pre.width;
                let s = src[r0].max(T::zero())
                    + src[r0 + 1].max(T::zero())
                    + src[r1].max(T::zero())
                    + src[r1 + 1].max(T::zero());
                dst[y * w + x] = s * quarter;
            }
        }
    }
    out
}

/// Intermediate values one block needs for its backward pass.
#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    padded: Planes<T>,
    pre: Planes<T>,
}

/// Parameter gradients, laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub blocks: Vec<ConvBlock<T>>,
}

impl<T: Scalar> ConvGrads<T> {
    pub fn norm(&self) -> T {
        self.blocks
            .iter()
            .flat_map(|b| b.weight.iter().chain(b.bias.iter()))
            .map(|&v| v * v)
            .sum::<T>()
            .sqrt()
    }

    pub fn add_assign(&mut self, other: &ConvGrads<T>) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.weight.iter_mut().zip(&b.weight).for_each(|(x, y)| *x += *y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += *y);
        }
    }

    pub fn scale(&mut self, s: T) {
        for b in &mut self.blocks {
            b.weight.iter_mut().chain(b.bias.iter_mut()).for_each(|v| *v *= s);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet<T> {
    pub blocks: Vec<ConvBlock<T>>,
}

impl<T: Scalar> ConvNet<T> {
    /// He-normal weights (std = sqrt(2 / fan_in)), zero biases, drawn in
    /// block/out/in/ky/kx order from a ChaCha stream seeded by `seed`.
    pub fn seeded(channels_per_block: &[usize], seed: u64) -> Result<Self> {
        if channels_per_block.is_empty() || channels_per_block.contains(&0) {
            return Err(Error::Parameter(format!(
                "channels_per_block must be non-empty and positive, got {channels_per_block:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_c = 1;
        let mut blocks = Vec::with_capacity(channels_per_block.len());
        for &out_c in channels_per_block {
            let std = (2.0 / (in_c * K * K) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("std is positive");
            let mut block = ConvBlock::zeros(in_c, out_c);
            for v in &mut block.weight {
                *v = T::of(normal.sample(&mut rng));
            }
            blocks.push(block);
            in_c = out_c;
        }
        Ok(ConvNet { blocks })
    }

    pub fn zeros_like(&self) -> ConvGrads<T> {
        ConvGrads {
            blocks: self
                .blocks
                .iter()
                .map(|b| ConvBlock::zeros(b.in_channels, b.out_channels))
                .collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    /// Smallest side length the stack accepts: every block input must be at least 2 wide.
    pub fn min_input_side(&self) -> usize {
        8usize.max(1 << self.blocks.len())
    }

    pub fn check_input(&self, rows: usize, cols: usize) -> Result<()> {
        let min = self.min_input_side();
        if rows < min || cols < min {
            return Err(Error::Size(format!(
                "input {rows}x{cols} is smaller than the {min}x{min} minimum"
            )));
        }
        Ok(())
    }

    /// Pooled outputs of the first `depth` blocks.
    pub fn forward(&self, input: &Planes<T>, depth: usize) -> Vec<Planes<T>> {
        let mut outs = Vec::with_capacity(depth);
        let mut x = input.clone();
        for block in &self.blocks[..depth] {
            let pre = block.conv(&reflect_pad(&x));
            x = relu_pool(&pre);
            outs.push(x.clone());
        }
        outs
    }

    pub fn forward_cached(&self, input: &Planes<T>, depth: usize) -> (Vec<Planes<T>>, Vec<BlockCache<T>>) {
        let mut outs = Vec::with_capacity(depth);
        let mut caches = Vec::with_capacity(depth);
        let mut x = input.clone();
        for block in &self.blocks[..depth] {
            let padded = reflect_pad(&x);
            let pre = block.conv(&padded);
            x = relu_pool(&pre);
            outs.push(x.clone());
            caches.push(BlockCache { padded, pre });
        }
        (outs, caches)
    }

    /// Backpropagates loss gradients given w.r.t. each block's pooled output
    /// (`None` where the loss does not touch that block).
    pub fn backward(&self, caches: &[BlockCache<T>], output_grads: &[Option<Planes<T>>]) -> ConvGrads<T> {
        let mut grads = self.zeros_like();
        let depth = caches.len();
        let mut upstream: Option<Planes<T>> = None;
        for b in (0..depth).rev() {
            let cache = &caches[b];
            let block = &self.blocks[b];
            let pooled_h = cache.pre.height / 2;
            let pooled_w = cache.pre.width / 2;
            let g_out = match (upstream.take(), output_grads.get(b).and_then(|g| g.as_ref())) {
                (Some(u), Some(d)) => {
                    let mut u = u;
                    u.data.iter_mut().zip(&d.data).for_each(|(a, b)| *a += *b);
                    u
                }
                (Some(u), None) => u,
                (None, Some(d)) => d.clone(),
                (None, None) => Planes::zeros(block.out_channels, pooled_h, pooled_w),
            };
            assert_eq!(
                (g_out.channels, g_out.height, g_out.width),
                (block.out_channels, pooled_h, pooled_w),
                "output gradient shape must match block {b} output"
            );

            // through pool and ReLU
            let (h, w) = (cache.pre.height, cache.pre.width);
            let quarter = T::of(0.25);
            let mut g_pre = Planes::zeros(block.out_channels, h, w);
            for c in 0..block.out_channels {
                let pre = cache.pre.plane(c);
                let go = g_out.plane(c);
                let gp = g_pre.plane_mut(c);
                for y in 0..pooled_h {
                    for x in 0..pooled_w {
                        let g = go[y * pooled_w + x] * quarter;
                        for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            let i = (2 * y + dy) * w + 2 * x + dx;
                            if pre[i] > T::zero() {
                                gp[i] = g;
                            }
                        }
                    }
                }
            }

            let gb = &mut grads.blocks[b];
            let padded = &cache.padded;
            let pw = padded.width;
            let need_input = b > 0;
            let mut g_padded = if need_input {
                Some(Planes::zeros(block.in_channels, h + 2, w + 2))
            } else {
                None
            };
            for oc in 0..block.out_channels {
                let gp = g_pre.plane(oc);
                gb.bias[oc] = gp.iter().copied().sum();
                for ic in 0..block.in_channels {
                    let src = padded.plane(ic);
                    let base = (oc * block.in_channels + ic) * K * K;
                    for ky in 0..K {
                        for kx in 0..K {
                            let mut acc = T::zero();
                            for y in 0..h {
                                let s = &src[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                                let g = &gp[y * w..(y + 1) * w];
                                for (&sv, &gv) in s.iter().zip(g) {
                                    acc += sv * gv;
                                }
                            }
                            gb.weight[base + ky * K + kx] = acc;
                        }
                    }
                    if let Some(gpad) = g_padded.as_mut() {
                        let kern = block.w(oc, ic);
                        let dst = gpad.plane_mut(ic);
                        for ky in 0..K {
                            for kx in 0..K {
                                let wt = kern[ky * K + kx];
                                for y in 0..h {
                                    let d = &mut dst[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                                    let g = &gp[y * w..(y + 1) * w];
                                    for (dv, &gv) in d.iter_mut().zip(g) {
                                        *dv += wt * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            upstream = g_padded.map(|gpad| reflect_unpad(&gpad, h, w));
        }
        grads
    }
}
