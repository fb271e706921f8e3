//! The linear operator `K` of the saddle-point reformulation, its adjoint,
//! and a power-method estimate of its norm.
//!
//! Primal variables are stacked as `x = [u | v_0 | ... | v_{F-1}]` (each of
//! length `n`). The dual stacks one measure block of length `n-1` per
//! cascade stage, then (for fractional orders) the fractional-difference
//! block over node pairs and the scalar mean block:
//! `y = [phi_0 | ... | phi_{J-1} | psi | tau]`.
//!
//! The pair block is stored folded: one entry per unordered pair `i < j`,
//! grouped by index distance, with the kernel weight `(2 w_d)^{1/p}`. Since
//! `1/p + 1/q = 1`, folding the antisymmetric ordered-pair block into this
//! form changes neither the primal p-norm nor the dual q-ball constraint.

use crate::fracnorm::DistanceProfile;
use crate::fracnorm::GagliardoParams;
use crate::signal::{Grid, SplitMix64};

use super::{FracOrder, Weights};

/// Which stacked field a measure block differentiates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum BlockSrc {
    U,
    V(usize),
}

/// One cascade stage `d(src) - coupling * h * v_tgt`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MeasureBlock {
    pub src: BlockSrc,
    pub tgt: Option<usize>,
    pub coupling: f64,
    /// Dual l-infinity radius; equals the weight multiplying this block's
    /// l1 norm in the energy.
    pub radius: f64,
}

/// Fractional tail: the pair block and the mean block acting on the last
/// v-field.
#[derive(Debug, Clone)]
pub(crate) struct FracTail {
    pub field: usize,
    pub p: f64,
    pub q: f64,
    pub psi_radius: f64,
    pub tau_radius: f64,
    /// `(2 w_d)^{1/p}` by index distance.
    pub root2: Vec<f64>,
    pub pairs: usize,
}

/// The assembled operator.
#[derive(Debug, Clone)]
pub struct TgvOperator {
    n: usize,
    h: f64,
    fields: usize,
    /// Uniform factor on every kernel entry; 1 except in homogeneity tests.
    scale: f64,
    pub(crate) blocks: Vec<MeasureBlock>,
    pub(crate) frac: Option<FracTail>,
}

/// Builds `K` for the given order and weights on a grid. The weights fix the
/// dual radii carried alongside the block structure.
pub fn build_k(order: &FracOrder, weights: &Weights, grid: &Grid) -> TgvOperator {
    let n = grid.len();
    let h = grid.spacing();
    let a = weights.values();
    let k = order.k();
    let s = order.s();

    let mut blocks = Vec::new();
    let frac;
    let fields;

    if order.is_integer() {
        // Classical TGV^m chain: m weights, m-1 auxiliary fields.
        let m = k;
        fields = m - 1;
        if m == 1 {
            blocks.push(MeasureBlock {
                src: BlockSrc::U,
                tgt: None,
                coupling: 0.0,
                radius: a[0],
            });
        } else {
            blocks.push(MeasureBlock {
                src: BlockSrc::U,
                tgt: Some(0),
                coupling: 1.0,
                radius: a[0],
            });
            for j in 1..=m - 2 {
                blocks.push(MeasureBlock {
                    src: BlockSrc::V(j - 1),
                    tgt: Some(j),
                    coupling: 1.0,
                    radius: a[j],
                });
            }
            blocks.push(MeasureBlock {
                src: BlockSrc::V(m - 2),
                tgt: None,
                coupling: 0.0,
                radius: a[m - 1],
            });
        }
        frac = None;
    } else {
        fields = k;
        if k == 1 {
            blocks.push(MeasureBlock {
                src: BlockSrc::U,
                tgt: Some(0),
                coupling: s,
                radius: a[0],
            });
        } else {
            blocks.push(MeasureBlock {
                src: BlockSrc::U,
                tgt: Some(0),
                coupling: 1.0,
                radius: a[0],
            });
            for j in 1..=k - 2 {
                blocks.push(MeasureBlock {
                    src: BlockSrc::V(j - 1),
                    tgt: Some(j),
                    coupling: 1.0,
                    radius: a[j],
                });
            }
            blocks.push(MeasureBlock {
                src: BlockSrc::V(k - 2),
                tgt: Some(k - 1),
                coupling: s,
                radius: a[k - 1],
            });
        }
        let params = GagliardoParams::from_order_fraction(s).expect("s in (0,1)");
        let profile = DistanceProfile::build(n, h, &params);
        let root2: Vec<f64> = profile
            .w
            .iter()
            .map(|&w| {
                if w > 0.0 {
                    (2.0 * w).powf(1.0 / params.p())
                } else {
                    0.0
                }
            })
            .collect();
        let ss = s * (1.0 - s);
        frac = Some(FracTail {
            field: k - 1,
            p: params.p(),
            q: params.conjugate(),
            psi_radius: a[k] * ss,
            tau_radius: a[k - 1] * ss,
            root2,
            pairs: n * (n - 1) / 2,
        });
    }

    TgvOperator {
        n,
        h,
        fields,
        scale: 1.0,
        blocks,
        frac,
    }
}

impl TgvOperator {
    pub fn n(&self) -> usize {
        self.n
    }

    /// The operator `factor * K`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.scale *= factor;
        self
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Number of auxiliary v-fields.
    pub fn field_count(&self) -> usize {
        self.fields
    }

    pub fn x_len(&self) -> usize {
        self.n * (1 + self.fields)
    }

    pub fn y_len(&self) -> usize {
        let mut len = self.blocks.len() * (self.n - 1);
        if let Some(f) = &self.frac {
            len += f.pairs + 1;
        }
        len
    }

    pub(crate) fn psi_offset(&self) -> usize {
        self.blocks.len() * (self.n - 1)
    }

    pub(crate) fn tau_offset(&self) -> usize {
        self.psi_offset() + self.frac.as_ref().map_or(0, |f| f.pairs)
    }

    pub(crate) fn field_slice<'a>(&self, x: &'a [f64], src: BlockSrc) -> &'a [f64] {
        match src {
            BlockSrc::U => &x[..self.n],
            BlockSrc::V(t) => &x[(1 + t) * self.n..(2 + t) * self.n],
        }
    }

    /// `y = K x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.x_len());
        debug_assert_eq!(y.len(), self.y_len());
        let n = self.n;
        for (bi, b) in self.blocks.iter().enumerate() {
            let src = self.field_slice(x, b.src);
            let start = bi * (n - 1);
            match b.tgt {
                Some(t) => {
                    let tgt = self.field_slice(x, BlockSrc::V(t));
                    let c = b.coupling * self.h;
                    for i in 0..n - 1 {
                        y[start + i] = src[i + 1] - src[i] - c * tgt[i];
                    }
                }
                None => {
                    for i in 0..n - 1 {
                        y[start + i] = src[i + 1] - src[i];
                    }
                }
            }
        }
        if let Some(f) = &self.frac {
            let vf = self.field_slice(x, BlockSrc::V(f.field));
            let mut idx = self.psi_offset();
            for d in 1..n {
                let w = f.root2[d];
                for i in 0..n - d {
                    y[idx] = w * (vf[i] - vf[i + d]);
                    idx += 1;
                }
            }
            y[idx] = self.h * vf.iter().sum::<f64>();
        }
        if self.scale != 1.0 {
            y.iter_mut().for_each(|v| *v *= self.scale);
        }
    }

    /// `x = K* y` (overwrites `x`).
    pub fn adjoint(&self, y: &[f64], x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.x_len());
        debug_assert_eq!(y.len(), self.y_len());
        let n = self.n;
        x.iter_mut().for_each(|v| *v = 0.0);
        for (bi, b) in self.blocks.iter().enumerate() {
            let phi = &y[bi * (n - 1)..(bi + 1) * (n - 1)];
            let src_base = match b.src {
                BlockSrc::U => 0,
                BlockSrc::V(t) => (1 + t) * n,
            };
            // d^T phi: node i receives phi[i-1] - phi[i].
            x[src_base] -= phi[0];
            for i in 1..n - 1 {
                x[src_base + i] += phi[i - 1] - phi[i];
            }
            x[src_base + n - 1] += phi[n - 2];
            if let Some(t) = b.tgt {
                let c = b.coupling * self.h;
                let tgt_base = (1 + t) * n;
                for i in 0..n - 1 {
                    x[tgt_base + i] -= c * phi[i];
                }
            }
        }
        if let Some(f) = &self.frac {
            let base = (1 + f.field) * n;
            let mut idx = self.psi_offset();
            for d in 1..n {
                let w = f.root2[d];
                for i in 0..n - d {
                    let contrib = w * y[idx];
                    x[base + i] += contrib;
                    x[base + i + d] -= contrib;
                    idx += 1;
                }
            }
            let tau = y[idx];
            for i in 0..n {
                x[base + i] += self.h * tau;
            }
        }
        if self.scale != 1.0 {
            x.iter_mut().for_each(|v| *v *= self.scale);
        }
    }
}

const OPNORM_SEED: u64 = 0x5EED_CAFE;

/// Power-method estimate of `||K||` via the Rayleigh quotient of `K* K`,
/// multiplied by `safety`. The start vector comes from a fixed seed, so the
/// estimate is deterministic and nondecreasing in `iters`.
pub fn estimate_opnorm(op: &TgvOperator, iters: usize, safety: f64) -> f64 {
    let mut x = SplitMix64::new(OPNORM_SEED).next_normal_vec(op.x_len());
    let mut y = vec![0.0; op.y_len()];
    let mut bx = vec![0.0; op.x_len()];
    let mut rayleigh: f64 = 0.0;
    for _ in 0..iters.max(1) {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= norm);
        op.apply(&x, &mut y);
        op.adjoint(&y, &mut bx);
        rayleigh = x.iter().zip(&bx).map(|(a, b)| a * b).sum();
        std::mem::swap(&mut x, &mut bx);
    }
    rayleigh.max(0.0).sqrt() * safety
}
