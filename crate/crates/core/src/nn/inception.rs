use rand::Rng;

use super::conv::Conv2d;
use super::layer::Layer;
use super::ops::{avg_pool3, avg_pool3_backward, concat_channels, relu, relu_backward, split_channels};
use super::tensor::{Param, Tensor};
use crate::error::{Error, Result};

/// Four parallel branches over the same input, concatenated on channels:
///
/// 1. 1x1
/// 2. 1x1 -> 3x3
/// 3. 1x1 -> 3x3 -> 3x3 (5x5 receptive field)
/// 4. 3x3 average pool -> 1x1
///
/// Every convolution is followed by ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct InceptionBlock {
    pub branch1: Conv2d,
    pub branch2: [Conv2d; 2],
    pub branch3: [Conv2d; 3],
    pub branch4: Conv2d,
}

pub struct InceptionCache {
    input: Tensor,
    pooled: Tensor,
    /// Post-ReLU activations per branch, in application order.
    acts: [Vec<Tensor>; 4],
}

impl InceptionBlock {
    pub fn new(c_in: usize, widths: [usize; 4]) -> Result<Self> {
        if c_in == 0 || widths.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "inception block needs positive widths, got input {c_in} and branches {widths:?}"
            )));
        }
        let [w1, w2, w3, w4] = widths;
        Ok(Self {
            branch1: Conv2d::pointwise(c_in, w1),
            branch2: [Conv2d::pointwise(c_in, w2), Conv2d::same(3, w2, w2)],
            branch3: [
                Conv2d::pointwise(c_in, w3),
                Conv2d::same(3, w3, w3),
                Conv2d::same(3, w3, w3),
            ],
            branch4: Conv2d::pointwise(c_in, w4),
        })
    }

    pub fn widths(&self) -> [usize; 4] {
        [
            self.branch1.out_channels(),
            self.branch2[1].out_channels(),
            self.branch3[2].out_channels(),
            self.branch4.out_channels(),
        ]
    }

    pub fn out_channels(&self) -> usize {
        self.widths().iter().sum()
    }

    fn convs(&self) -> [&Conv2d; 7] {
        [
            &self.branch1,
            &self.branch2[0],
            &self.branch2[1],
            &self.branch3[0],
            &self.branch3[1],
            &self.branch3[2],
            &self.branch4,
        ]
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        self.branch1.init(rng);
        self.branch2.iter_mut().for_each(|c| c.init(rng));
        self.branch3.iter_mut().for_each(|c| c.init(rng));
        self.branch4.init(rng);
    }
}

fn run_chain(convs: &[Conv2d], input: &Tensor) -> Result<Vec<Tensor>> {
    let mut acts: Vec<Tensor> = Vec::with_capacity(convs.len());
    for conv in convs {
        let x = acts.last().unwrap_or(input);
        let y = relu(&conv.infer(x)?);
        acts.push(y);
    }
    Ok(acts)
}

/// Backpropagates through a conv+ReLU chain; returns the input gradient.
fn chain_backward(
    convs: &[Conv2d],
    grads: &mut [Conv2d],
    input: &Tensor,
    acts: &[Tensor],
    grad_output: &Tensor,
) -> Result<Tensor> {
    let mut g = grad_output.clone();
    for i in (0..convs.len()).rev() {
        let g_pre = relu_backward(&acts[i], &g);
        let x = if i == 0 { input } else { &acts[i - 1] };
        g = convs[i].backward(x, &g_pre, &mut grads[i])?;
    }
    Ok(g)
}

impl Layer for InceptionBlock {
    type Cache = InceptionCache;

    fn forward(&self, input: &Tensor) -> Result<(Tensor, InceptionCache)> {
        let pooled = avg_pool3(input);
        let acts = [
            run_chain(std::slice::from_ref(&self.branch1), input)?,
            run_chain(&self.branch2, input)?,
            run_chain(&self.branch3, input)?,
            run_chain(std::slice::from_ref(&self.branch4), &pooled)?,
        ];
        let outs: Vec<&Tensor> = acts.iter().map(|a| a.last().expect("nonempty")).collect();
        let out = concat_channels(&outs)?;
        Ok((
            out,
            InceptionCache {
                input: input.clone(),
                pooled,
                acts,
            },
        ))
    }

    fn backward(&self, cache: &InceptionCache, grad_output: &Tensor, grads: &mut Self) -> Result<Tensor> {
        let parts = split_channels(grad_output, &self.widths())?;
        let x = &cache.input;
        let mut dx = chain_backward(
            std::slice::from_ref(&self.branch1),
            std::slice::from_mut(&mut grads.branch1),
            x,
            &cache.acts[0],
            &parts[0],
        )?;
        dx.add_assign(&chain_backward(&self.branch2, &mut grads.branch2, x, &cache.acts[1], &parts[1])?)?;
        dx.add_assign(&chain_backward(&self.branch3, &mut grads.branch3, x, &cache.acts[2], &parts[2])?)?;
        let d_pooled = chain_backward(
            std::slice::from_ref(&self.branch4),
            std::slice::from_mut(&mut grads.branch4),
            &cache.pooled,
            &cache.acts[3],
            &parts[3],
        )?;
        dx.add_assign(&avg_pool3_backward(&d_pooled))?;
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        self.convs().into_iter().flat_map(|c| c.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let Self {
            branch1,
            branch2,
            branch3,
            branch4,
        } = self;
        std::iter::once(branch1)
            .chain(branch2.iter_mut())
            .chain(branch3.iter_mut())
            .chain(std::iter::once(branch4))
            .flat_map(|c| c.params_mut())
            .collect()
    }
}
