use rand::Rng;

use super::conv::Conv2d;
use super::dense::ChannelAffine;
use super::layer::Layer;
use super::ops::{relu, relu_backward};
use super::tensor::{Param, Tensor};
use crate::error::Result;

/// `relu(skip(x) + affine(conv2(relu(conv1(x)))))`, where `skip` is the
/// identity or a 1x1 projection when the channel count changes.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualUnit {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub affine: ChannelAffine,
    pub projection: Option<Conv2d>,
}

pub struct ResidualCache {
    input: Tensor,
    hidden: Tensor,
    pre_affine: Tensor,
    output: Tensor,
}

impl ResidualUnit {
    pub fn new(c_in: usize, c_out: usize) -> Self {
        Self {
            conv1: Conv2d::same(3, c_in, c_out),
            conv2: Conv2d::same(3, c_out, c_out),
            affine: ChannelAffine::new(c_out),
            projection: (c_in != c_out).then(|| Conv2d::pointwise(c_in, c_out)),
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        self.conv1.init(rng);
        self.conv2.init(rng);
        if let Some(p) = &mut self.projection {
            p.init(rng);
        }
    }
}

impl Layer for ResidualUnit {
    type Cache = ResidualCache;

    fn forward(&self, input: &Tensor) -> Result<(Tensor, ResidualCache)> {
        let hidden = relu(&self.conv1.infer(input)?);
        let pre_affine = self.conv2.infer(&hidden)?;
        let mut sum = self.affine.infer(&pre_affine)?;
        match &self.projection {
            Some(p) => sum.add_assign(&p.infer(input)?)?,
            None => sum.add_assign(input)?,
        }
        let output = relu(&sum);
        Ok((
            output.clone(),
            ResidualCache {
                input: input.clone(),
                hidden,
                pre_affine,
                output,
            },
        ))
    }

    fn backward(
        &self,
        cache: &ResidualCache,
        grad_output: &Tensor,
        grads: &mut Self,
    ) -> Result<Tensor> {
        let d_sum = relu_backward(&cache.output, grad_output);
        let d_pre = self
            .affine
            .backward(&cache.pre_affine, &d_sum, &mut grads.affine)?;
        let d_hidden = self.conv2.backward(&cache.hidden, &d_pre, &mut grads.conv2)?;
        let d_hidden = relu_backward(&cache.hidden, &d_hidden);
        let mut dx = self.conv1.backward(&cache.input, &d_hidden, &mut grads.conv1)?;
        match (&self.projection, &mut grads.projection) {
            (Some(p), Some(gp)) => dx.add_assign(&p.backward(&cache.input, &d_sum, gp)?)?,
            _ => dx.add_assign(&d_sum)?,
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        let mut ps = self.conv1.params();
        ps.extend(self.conv2.params());
        ps.extend(self.affine.params());
        if let Some(p) = &self.projection {
            ps.extend(p.params());
        }
        ps
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut ps = self.conv1.params_mut();
        ps.extend(self.conv2.params_mut());
        ps.extend(self.affine.params_mut());
        if let Some(p) = &mut self.projection {
            ps.extend(p.params_mut());
        }
        ps
    }
}
