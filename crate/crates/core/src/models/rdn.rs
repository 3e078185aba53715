use crate::nn::{pixel_shuffle, pixel_unshuffle, relu_backward, Conv2d, ParamBuilder, Tensor};

use super::RdnConfig;

#[derive(Debug, Clone)]
struct DenseBlock {
    convs: Vec<Conv2d>,
    fuse: Conv2d,
}

/// Shallow extraction, residual dense blocks, global feature fusion with a
/// long skip, and a sub-pixel upsampler.
#[derive(Debug, Clone)]
pub struct Rdn {
    features: usize,
    growth: usize,
    scale: usize,
    sfe1: Conv2d,
    sfe2: Conv2d,
    blocks: Vec<DenseBlock>,
    gff1: Conv2d,
    gff2: Conv2d,
    up: Conv2d,
    out: Conv2d,
}

#[derive(Debug, Clone)]
pub struct RdnTape {
    x: Tensor,
    f1: Tensor,
    /// Per block: the block input followed by every dense layer's output.
    cats: Vec<Tensor>,
    /// Block outputs stacked along channels.
    stacked: Tensor,
    h1: Tensor,
    fused: Tensor,
    shuffled: Tensor,
}

impl Rdn {
    pub fn new(pb: &mut ParamBuilder, cfg: &RdnConfig, in_ch: usize, out_ch: usize, scale: usize) -> Self {
        let (g0, g) = (cfg.features, cfg.growth);
        let sfe1 = Conv2d::new(pb, in_ch, g0, 3);
        let sfe2 = Conv2d::new(pb, g0, g0, 3);
        let blocks = (0..cfg.blocks)
            .map(|_| DenseBlock {
                convs: (0..cfg.layers_per_block).map(|i| Conv2d::new(pb, g0 + i * g, g, 3)).collect(),
                fuse: Conv2d::new(pb, g0 + cfg.layers_per_block * g, g0, 1),
            })
            .collect();
        let gff1 = Conv2d::new(pb, cfg.blocks * g0, g0, 1);
        let gff2 = Conv2d::new(pb, g0, g0, 3);
        let up = Conv2d::new(pb, g0, g0 * scale * scale, 3);
        let out = Conv2d::new(pb, g0, out_ch, 3);
        Self { features: g0, growth: g, scale, sfe1, sfe2, blocks, gff1, gff2, up, out }
    }

    pub fn forward(&self, p: &[f32], x: &Tensor) -> (Tensor, RdnTape) {
        let (h, w) = (x.height, x.width);
        let hw = h * w;
        let g0 = self.features;
        let f1 = self.sfe1.forward(p, x);
        let f2 = self.sfe2.forward(p, &f1);
        let mut stacked = Tensor::zeros(self.blocks.len() * g0, h, w);
        let mut cats = Vec::with_capacity(self.blocks.len());
        let mut input = f2;
        for (b, block) in self.blocks.iter().enumerate() {
            let mut cat = input.clone();
            cat.data.reserve(block.convs.len() * self.growth * hw);
            for conv in &block.convs {
                let mut z = conv.forward_raw(p, &cat.data, h, w);
                z.data.iter_mut().for_each(|v| *v = v.max(0.0));
                cat.data.extend_from_slice(&z.data);
                cat.channels += self.growth;
            }
            let mut out = block.fuse.forward(p, &cat);
            out.add_assign(&input);
            stacked.data[b * g0 * hw..(b + 1) * g0 * hw].copy_from_slice(&out.data);
            cats.push(cat);
            input = out;
        }
        let h1 = self.gff1.forward(p, &stacked);
        let mut fused = self.gff2.forward(p, &h1);
        fused.add_assign(&f1);
        let shuffled = pixel_shuffle(&self.up.forward(p, &fused), self.scale);
        let y = self.out.forward(p, &shuffled);
        (y, RdnTape { x: x.clone(), f1, cats, stacked, h1, fused, shuffled })
    }

    pub fn backward(&self, p: &[f32], t: &RdnTape, dy: &Tensor, g: &mut [f32]) {
        let zeros_like = |t: &Tensor| Tensor::zeros(t.channels, t.height, t.width);
        let (h, w) = (t.x.height, t.x.width);
        let hw = h * w;
        let g0 = self.features;

        let mut ds = zeros_like(&t.shuffled);
        self.out.backward(p, &t.shuffled, dy, g, Some(&mut ds));
        let du = pixel_unshuffle(&ds, self.scale);
        let mut dfused = zeros_like(&t.fused);
        self.up.backward(p, &t.fused, &du, g, Some(&mut dfused));
        let mut df1 = dfused.clone();
        let mut dh1 = zeros_like(&t.h1);
        self.gff2.backward(p, &t.h1, &dfused, g, Some(&mut dh1));
        let mut dstacked = zeros_like(&t.stacked);
        self.gff1.backward(p, &t.stacked, &dh1, g, Some(&mut dstacked));

        // gradient reaching each block's output from the next block's input
        let mut carry = vec![0.0f32; g0 * hw];
        for (b, block) in self.blocks.iter().enumerate().rev() {
            let cat = &t.cats[b];
            let mut dout = Tensor::from_vec(g0, h, w, dstacked.data[b * g0 * hw..(b + 1) * g0 * hw].to_vec());
            dout.data.iter_mut().zip(&carry).for_each(|(a, c)| *a += c);
            let mut dcat = zeros_like(cat);
            block.fuse.backward(p, cat, &dout, g, Some(&mut dcat));
            for (i, conv) in block.convs.iter().enumerate().rev() {
                let lo = (g0 + i * self.growth) * hw;
                let hi = lo + self.growth * hw;
                let mut dz = dcat.data[lo..hi].to_vec();
                relu_backward(&cat.data[lo..hi], &mut dz);
                conv.backward_raw(p, &cat.data, h, w, &dz, g, Some(&mut dcat.data[..lo]));
            }
            carry = dout.data;
            carry.iter_mut().zip(&dcat.data[..g0 * hw]).for_each(|(a, d)| *a += d);
        }
        let df2 = Tensor::from_vec(g0, h, w, carry);
        self.sfe2.backward(p, &t.f1, &df2, g, Some(&mut df1));
        self.sfe1.backward(p, &t.x, &df1, g, None);
    }
}
