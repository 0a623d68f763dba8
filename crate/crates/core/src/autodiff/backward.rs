use super::tape::{Op, Tape, Var};
use crate::error::Result;
use crate::tensor::{split_axis, Scalar, Tensor};

impl Tape {
    /// Cotangents flowing from node `idx` into each of its inputs.
    pub(crate) fn input_cotangents(&self, idx: usize, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let node = &self.nodes[idx];
        let y = &node.value;
        let val = |v: &Var| &self.nodes[v.0].value;
        let wants = |v: &Var| self.nodes[v.0].requires_grad;

        let out = match &node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::Mul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if wants(a) {
                    out.push((*a, g.zip_map(val(b), "mul backward", |g, b| g * b)?));
                }
                if wants(b) {
                    out.push((*b, g.zip_map(val(a), "mul backward", |g, a| g * a)?));
                }
                out
            }
            Op::Affine { input, scale } => {
                let s = *scale;
                vec![(*input, g.map(|v| v * s))]
            }
            Op::MatMul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if wants(a) {
                    out.push((*a, g.matmul_nt(val(b))?));
                }
                if wants(b) {
                    out.push((*b, val(a).matmul_tn(g)?));
                }
                out
            }
            Op::Transpose(a) => vec![(*a, g.transpose()?)],
            Op::Reshape(a) => vec![(*a, g.reshape(val(a).shape())?)],
            Op::Concat { inputs, axis } => {
                let mut start = 0;
                let mut out = Vec::with_capacity(inputs.len());
                for v in inputs {
                    let len = val(v).shape()[*axis];
                    if wants(v) {
                        out.push((*v, g.slice(*axis, start, len)?));
                    }
                    start += len;
                }
                out
            }
            Op::Slice { input, axis, start } => {
                let x = val(input);
                let (outer, dim, inner) = split_axis(x.shape(), *axis);
                let len = g.shape()[*axis];
                let mut full = Tensor::zeros(x.shape());
                let dst = full.data_mut();
                for o in 0..outer {
                    let d = o * dim * inner + start * inner;
                    let s = o * len * inner;
                    dst[d..d + len * inner].copy_from_slice(&g.data()[s..s + len * inner]);
                }
                vec![(*input, full)]
            }
            Op::Exp(a) => vec![(*a, g.zip_map(y, "exp backward", |g, y| g * y)?)],
            Op::Log(a) => vec![(*a, g.zip_map(val(a), "log backward", |g, x| g / x)?)],
            Op::Sigmoid(a) => vec![(
                *a,
                g.zip_map(y, "sigmoid backward", |g, y| g * y * (1.0 - y))?,
            )],
            Op::Tanh(a) => vec![(
                *a,
                g.zip_map(y, "tanh backward", |g, y| g * (1.0 - y * y))?,
            )],
            Op::SumAxis { input, axis } => {
                let x = val(input);
                let (outer, dim, inner) = split_axis(x.shape(), *axis);
                let mut full = Tensor::zeros(x.shape());
                let dst = full.data_mut();
                for o in 0..outer {
                    let src = &g.data()[o * inner..(o + 1) * inner];
                    for a in 0..dim {
                        let base = (o * dim + a) * inner;
                        dst[base..base + inner].copy_from_slice(src);
                    }
                }
                vec![(*input, full)]
            }
            Op::SumAll(a) => {
                let gv = g.data()[0];
                vec![(*a, Tensor::full(val(a).shape(), gv))]
            }
            Op::Softmax { input, axis } => {
                // dx = y ⊙ (g − Σ_axis g ⊙ y)
                let (outer, dim, inner) = split_axis(y.shape(), *axis);
                let mut dx = Tensor::zeros(y.shape());
                let (yd, gd) = (y.data(), g.data());
                let dst = dx.data_mut();
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |a: usize| (o * dim + a) * inner + i;
                        let dot: Scalar = (0..dim).map(|a| gd[idx(a)] * yd[idx(a)]).sum();
                        for a in 0..dim {
                            let k = idx(a);
                            dst[k] = yd[k] * (gd[k] - dot);
                        }
                    }
                }
                vec![(*input, dx)]
            }
            Op::ClampMin { input, min } => {
                let m = *min;
                vec![(
                    *input,
                    g.zip_map(val(input), "clamp_min backward", |g, x| {
                        if x >= m {
                            g
                        } else {
                            0.0
                        }
                    })?,
                )]
            }
            Op::Step { input, slope } => {
                let s = *slope;
                vec![(*input, g.map(|v| v * s))]
            }
            Op::Custom { inputs, rule } => {
                let xs: Vec<&Tensor> = inputs.iter().map(val).collect();
                let cots = rule.backward(&xs, y, g)?;
                if cots.len() != inputs.len() {
                    return Err(crate::Error::InvalidShape {
                        op: "custom backward",
                        msg: format!(
                            "rule returned {} cotangents for {} inputs",
                            cots.len(),
                            inputs.len()
                        ),
                    });
                }
                for (c, x) in cots.iter().zip(&xs) {
                    if c.shape() != x.shape() {
                        return Err(crate::Error::ShapeMismatch {
                            op: "custom backward",
                            lhs: c.shape().to_vec(),
                            rhs: x.shape().to_vec(),
                        });
                    }
                }
                inputs.iter().copied().zip(cots).collect()
            }
        };
        Ok(out)
    }
}
