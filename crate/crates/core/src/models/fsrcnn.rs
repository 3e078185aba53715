use crate::nn::{Conv2d, ConvTranspose2d, PRelu, ParamBuilder, Tensor};

use super::FsrcnnConfig;

/// Feature extraction, shrinking, mapping and expansion stages, each a
/// convolution followed by PReLU, then a transposed-convolution upsampler.
#[derive(Debug, Clone)]
pub struct Fsrcnn {
    stages: Vec<(Conv2d, PRelu)>,
    up: ConvTranspose2d,
}

#[derive(Debug, Clone)]
pub struct FsrcnnTape {
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
    last: Tensor,
}

impl Fsrcnn {
    pub fn new(pb: &mut ParamBuilder, cfg: &FsrcnnConfig, in_ch: usize, out_ch: usize, scale: usize) -> Self {
        let mut stage = |cin, cout, k| (Conv2d::new(pb, cin, cout, k), PRelu::new(pb, cout));
        let mut stages = vec![stage(in_ch, cfg.d, 5), stage(cfg.d, cfg.s, 1)];
        for _ in 0..cfg.layers {
            stages.push(stage(cfg.s, cfg.s, 3));
        }
        stages.push(stage(cfg.s, cfg.d, 1));
        let up = ConvTranspose2d::new(pb, cfg.d, out_ch, 9, scale, 4, scale - 1);
        Self { stages, up }
    }

    pub fn forward(&self, p: &[f32], x: &Tensor) -> (Tensor, FsrcnnTape) {
        let mut inputs = Vec::with_capacity(self.stages.len());
        let mut pre = Vec::with_capacity(self.stages.len());
        let mut a = x.clone();
        for (conv, act) in &self.stages {
            let z = conv.forward(p, &a);
            inputs.push(std::mem::replace(&mut a, act.forward(p, &z)));
            pre.push(z);
        }
        let y = self.up.forward(p, &a);
        (y, FsrcnnTape { inputs, pre, last: a })
    }

    pub fn backward(&self, p: &[f32], tape: &FsrcnnTape, dy: &Tensor, g: &mut [f32]) {
        let last = &tape.last;
        let mut da = Tensor::zeros(last.channels, last.height, last.width);
        self.up.backward(p, last, dy, g, Some(&mut da));
        for (i, (conv, act)) in self.stages.iter().enumerate().rev() {
            let dz = act.backward(p, &tape.pre[i], &da, g);
            let x = &tape.inputs[i];
            if i == 0 {
                conv.backward(p, x, &dz, g, None);
            } else {
                let mut dx = Tensor::zeros(x.channels, x.height, x.width);
                conv.backward(p, x, &dz, g, Some(&mut dx));
                da = dx;
            }
        }
    }
}
