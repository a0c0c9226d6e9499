//! Single encoder block over the 30-frame window:
//!
//! ```text
//! x + pos -> 2-head attention -> add -> norm1 -> ffn(1024, 28) -> add -> norm2
//!         -> max over time -> dense softmax
//! ```
//!
//! Both feed-forward layers use swish. Each head projects the 28 features to
//! a 28-wide query, key and value.

use ndarray::{s, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{cross_entropy, glorot, sigmoid, softmax_rows, sum_rows, uniform, SEQ_LEN};
use crate::types::{FeatureVector, Taxonomy, FEATURES};

pub const HEADS: usize = 2;
pub const HEAD_WIDTH: usize = 28;
pub const FFN_WIDTH: usize = 1024;
const NORM_EPS: f64 = 1e-3;
const POS_INIT: f64 = 0.05;

pub(super) const BLOCK_NAMES: &[&str] = &[
    "pos.embedding",
    "attn.query.kernel",
    "attn.query.bias",
    "attn.key.kernel",
    "attn.key.bias",
    "attn.value.kernel",
    "attn.value.bias",
    "attn.output.kernel",
    "attn.output.bias",
    "norm1.gamma",
    "norm1.beta",
    "ffn1.kernel",
    "ffn1.bias",
    "ffn2.kernel",
    "ffn2.bias",
    "norm2.gamma",
    "norm2.beta",
    "head.kernel",
    "head.bias",
];

mod ix {
    pub const POS: usize = 0;
    pub const WQ: usize = 1;
    pub const BQ: usize = 2;
    pub const WK: usize = 3;
    pub const BK: usize = 4;
    pub const WV: usize = 5;
    pub const BV: usize = 6;
    pub const WO: usize = 7;
    pub const BO: usize = 8;
    pub const G1: usize = 9;
    pub const B1: usize = 10;
    pub const W_FF1: usize = 11;
    pub const B_FF1: usize = 12;
    pub const W_FF2: usize = 13;
    pub const B_FF2: usize = 14;
    pub const G2: usize = 15;
    pub const B2: usize = 16;
    pub const WH: usize = 17;
    pub const BH: usize = 18;
}

pub(super) fn param_count_for(labels: usize) -> usize {
    let proj = HEADS * HEAD_WIDTH;
    let pos = SEQ_LEN * FEATURES;
    let attn = 3 * (FEATURES * proj + proj) + proj * FEATURES + FEATURES;
    let norms = 2 * 2 * FEATURES;
    let ffn = FEATURES * FFN_WIDTH + FFN_WIDTH + FFN_WIDTH * FEATURES + FEATURES;
    pos + attn + norms + ffn + FEATURES * labels + labels
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerModel {
    pub taxonomy: Taxonomy,
    pub params: Vec<Array2<f64>>,
}

struct NormCache {
    xhat: Array2<f64>,
    inv_std: Vec<f64>,
}

fn layer_norm(
    x: &Array2<f64>,
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
) -> (Array2<f64>, NormCache) {
    let n = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(x.nrows());
    for mut row in xhat.rows_mut() {
        let mu = row.sum() / n;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        row.mapv_inplace(|v| (v - mu) * inv);
        inv_std.push(inv);
    }
    let y = &xhat * gamma + beta;
    (y, NormCache { xhat, inv_std })
}

/// Returns (dx, dgamma, dbeta).
fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    gamma: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let n = dy.ncols() as f64;
    let dgamma = sum_rows(&(dy * &cache.xhat));
    let dbeta = sum_rows(dy);
    let dxhat = dy * gamma;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (r, mut out) in dx.rows_mut().into_iter().enumerate() {
        let dh = dxhat.row(r);
        let xh = cache.xhat.row(r);
        let mean_d = dh.sum() / n;
        let mean_dx = dh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
        let inv = cache.inv_std[r];
        for ((o, &d), &x) in out.iter_mut().zip(dh).zip(xh) {
            *o = inv * (d - mean_d - x * mean_dx);
        }
    }
    (dx, dgamma, dbeta)
}

fn swish(z: f64) -> f64 {
    z * sigmoid(z)
}

fn swish_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s + z * s * (1.0 - s)
}

struct Cache {
    batch: usize,
    e: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// attention weights, index `b * HEADS + h`
    attn: Vec<Array2<f64>>,
    o: Array2<f64>,
    norm1: NormCache,
    n1: Array2<f64>,
    z1: Array2<f64>,
    f1: Array2<f64>,
    z2: Array2<f64>,
    norm2: NormCache,
    /// time step holding each pooled maximum, `batch x features`
    argmax: Vec<usize>,
    pooled: Array2<f64>,
    probs: Array2<f64>,
}

impl TransformerModel {
    pub fn new(taxonomy: Taxonomy, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let proj = HEADS * HEAD_WIDTH;
        let l = taxonomy.size();
        let params = vec![
            uniform(&mut rng, SEQ_LEN, FEATURES, POS_INIT),
            glorot(&mut rng, FEATURES, proj),
            Array2::zeros((1, proj)),
            glorot(&mut rng, FEATURES, proj),
            Array2::zeros((1, proj)),
            glorot(&mut rng, FEATURES, proj),
            Array2::zeros((1, proj)),
            glorot(&mut rng, proj, FEATURES),
            Array2::zeros((1, FEATURES)),
            Array2::ones((1, FEATURES)),
            Array2::zeros((1, FEATURES)),
            glorot(&mut rng, FEATURES, FFN_WIDTH),
            Array2::zeros((1, FFN_WIDTH)),
            glorot(&mut rng, FFN_WIDTH, FEATURES),
            Array2::zeros((1, FEATURES)),
            Array2::ones((1, FEATURES)),
            Array2::zeros((1, FEATURES)),
            glorot(&mut rng, FEATURES, l),
            Array2::zeros((1, l)),
        ];
        TransformerModel { taxonomy, params }
    }

    fn run(&self, windows: &[&[FeatureVector]]) -> Cache {
        let p = &self.params;
        let batch = windows.len();
        let rows = batch * SEQ_LEN;
        let mut e = Array2::zeros((rows, FEATURES));
        for (b, w) in windows.iter().enumerate() {
            for (t, f) in w.iter().enumerate() {
                let r = b * SEQ_LEN + t;
                for j in 0..FEATURES {
                    e[[r, j]] = f.0[j] + p[ix::POS][[t, j]];
                }
            }
        }
        let q = e.dot(&p[ix::WQ]) + &p[ix::BQ];
        let k = e.dot(&p[ix::WK]) + &p[ix::BK];
        let v = e.dot(&p[ix::WV]) + &p[ix::BV];
        let scale = 1.0 / (HEAD_WIDTH as f64).sqrt();
        let mut o = Array2::zeros((rows, HEADS * HEAD_WIDTH));
        let mut attn = Vec::with_capacity(batch * HEADS);
        for b in 0..batch {
            let r = b * SEQ_LEN..(b + 1) * SEQ_LEN;
            for h in 0..HEADS {
                let c = h * HEAD_WIDTH..(h + 1) * HEAD_WIDTH;
                let qh = q.slice(s![r.clone(), c.clone()]);
                let kh = k.slice(s![r.clone(), c.clone()]);
                let vh = v.slice(s![r.clone(), c.clone()]);
                let mut a = qh.dot(&kh.t()) * scale;
                softmax_rows(&mut a);
                o.slice_mut(s![r.clone(), c]).assign(&a.dot(&vh));
                attn.push(a);
            }
        }
        let att_out = o.dot(&p[ix::WO]) + &p[ix::BO];
        let r1 = &e + &att_out;
        let (n1, norm1) = layer_norm(&r1, &p[ix::G1], &p[ix::B1]);
        let z1 = n1.dot(&p[ix::W_FF1]) + &p[ix::B_FF1];
        let f1 = z1.mapv(swish);
        let z2 = f1.dot(&p[ix::W_FF2]) + &p[ix::B_FF2];
        let r2 = &n1 + &z2.mapv(swish);
        let (n2, norm2) = layer_norm(&r2, &p[ix::G2], &p[ix::B2]);
        let mut pooled = Array2::from_elem((batch, FEATURES), f64::NEG_INFINITY);
        let mut argmax = vec![0usize; batch * FEATURES];
        for b in 0..batch {
            for t in 0..SEQ_LEN {
                for j in 0..FEATURES {
                    let val = n2[[b * SEQ_LEN + t, j]];
                    if val > pooled[[b, j]] {
                        pooled[[b, j]] = val;
                        argmax[b * FEATURES + j] = t;
                    }
                }
            }
        }
        let mut probs = pooled.dot(&p[ix::WH]) + &p[ix::BH];
        softmax_rows(&mut probs);
        Cache {
            batch,
            e,
            q,
            k,
            v,
            attn,
            o,
            norm1,
            n1,
            z1,
            f1,
            z2,
            norm2,
            argmax,
            pooled,
            probs,
        }
    }

    pub(super) fn forward(&self, windows: &[&[FeatureVector]]) -> Array2<f64> {
        self.run(windows).probs
    }

    pub(super) fn loss_and_grad(
        &self,
        windows: &[&[FeatureVector]],
        targets: &[usize],
    ) -> (f64, Vec<Array2<f64>>) {
        let p = &self.params;
        let c = self.run(windows);
        let (loss, dlogits) = cross_entropy(&c.probs, targets);
        let mut g: Vec<Array2<f64>> = p.iter().map(|b| Array2::zeros(b.raw_dim())).collect();

        g[ix::WH] = c.pooled.t().dot(&dlogits);
        g[ix::BH] = sum_rows(&dlogits);
        let dpooled = dlogits.dot(&p[ix::WH].t());

        let rows = c.batch * SEQ_LEN;
        let mut dn2 = Array2::zeros((rows, FEATURES));
        for b in 0..c.batch {
            for j in 0..FEATURES {
                let t = c.argmax[b * FEATURES + j];
                dn2[[b * SEQ_LEN + t, j]] = dpooled[[b, j]];
            }
        }
        let (dr2, dg2, db2) = layer_norm_backward(&dn2, &c.norm2, &p[ix::G2]);
        g[ix::G2] = dg2;
        g[ix::B2] = db2;

        let dz2 = &dr2 * &c.z2.mapv(swish_grad);
        g[ix::W_FF2] = c.f1.t().dot(&dz2);
        g[ix::B_FF2] = sum_rows(&dz2);
        let dz1 = dz2.dot(&p[ix::W_FF2].t()) * c.z1.mapv(swish_grad);
        g[ix::W_FF1] = c.n1.t().dot(&dz1);
        g[ix::B_FF1] = sum_rows(&dz1);
        let dn1 = dr2 + dz1.dot(&p[ix::W_FF1].t());

        let (dr1, dg1, db1) = layer_norm_backward(&dn1, &c.norm1, &p[ix::G1]);
        g[ix::G1] = dg1;
        g[ix::B1] = db1;

        g[ix::WO] = c.o.t().dot(&dr1);
        g[ix::BO] = sum_rows(&dr1);
        let d_o = dr1.dot(&p[ix::WO].t());

        let scale = 1.0 / (HEAD_WIDTH as f64).sqrt();
        let proj = HEADS * HEAD_WIDTH;
        let mut dq = Array2::zeros((rows, proj));
        let mut dk = Array2::zeros((rows, proj));
        let mut dv = Array2::zeros((rows, proj));
        for b in 0..c.batch {
            let r = b * SEQ_LEN..(b + 1) * SEQ_LEN;
            for h in 0..HEADS {
                let cols = h * HEAD_WIDTH..(h + 1) * HEAD_WIDTH;
                let a = &c.attn[b * HEADS + h];
                let doh = d_o.slice(s![r.clone(), cols.clone()]);
                let qh = c.q.slice(s![r.clone(), cols.clone()]);
                let kh = c.k.slice(s![r.clone(), cols.clone()]);
                let vh = c.v.slice(s![r.clone(), cols.clone()]);
                let da = doh.dot(&vh.t());
                dv.slice_mut(s![r.clone(), cols.clone()])
                    .assign(&a.t().dot(&doh));
                let row_dot = (&da * a).sum_axis(Axis(1)).insert_axis(Axis(1));
                let ds = a * &(&da - &row_dot) * scale;
                dq.slice_mut(s![r.clone(), cols.clone()])
                    .assign(&ds.dot(&kh));
                dk.slice_mut(s![r.clone(), cols]).assign(&ds.t().dot(&qh));
            }
        }
        g[ix::WQ] = c.e.t().dot(&dq);
        g[ix::BQ] = sum_rows(&dq);
        g[ix::WK] = c.e.t().dot(&dk);
        g[ix::BK] = sum_rows(&dk);
        g[ix::WV] = c.e.t().dot(&dv);
        g[ix::BV] = sum_rows(&dv);
        let de = dr1 + dq.dot(&p[ix::WQ].t()) + dk.dot(&p[ix::WK].t()) + dv.dot(&p[ix::WV].t());
        let mut dpos = Array2::zeros((SEQ_LEN, FEATURES));
        for b in 0..c.batch {
            dpos += &de.slice(s![b * SEQ_LEN..(b + 1) * SEQ_LEN, ..]);
        }
        g[ix::POS] = dpos;
        (loss, g)
    }
}
