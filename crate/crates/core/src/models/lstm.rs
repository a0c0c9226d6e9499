//! Two stacked LSTM layers of 64 units feeding a softmax head from the last
//! hidden state. Gates are packed `[input, forget, cell, output]` along the
//! column axis of each kernel.

use ndarray::{aview1, s, Array2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{cross_entropy, glorot, orthogonal, sigmoid, softmax_rows, sum_rows, SEQ_LEN};
use crate::types::{FeatureVector, Taxonomy, FEATURES};

pub const LSTM_HIDDEN: usize = 64;

pub(super) const BLOCK_NAMES: &[&str] = &[
    "lstm1.kernel",
    "lstm1.recurrent",
    "lstm1.bias",
    "lstm2.kernel",
    "lstm2.recurrent",
    "lstm2.bias",
    "head.kernel",
    "head.bias",
];

pub(super) fn param_count_for(labels: usize) -> usize {
    let layer = |input: usize| 4 * ((input + LSTM_HIDDEN) * LSTM_HIDDEN + LSTM_HIDDEN);
    layer(FEATURES) + layer(LSTM_HIDDEN) + LSTM_HIDDEN * labels + labels
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub taxonomy: Taxonomy,
    pub params: Vec<Array2<f64>>,
}

struct LayerCache {
    xs: Vec<Array2<f64>>,
    /// h_0 ..= h_T
    hs: Vec<Array2<f64>>,
    /// c_0 ..= c_T
    cs: Vec<Array2<f64>>,
    /// activated gates per step
    gates: Vec<Array2<f64>>,
    tanh_c: Vec<Array2<f64>>,
}

fn bias_init(hidden: usize) -> Array2<f64> {
    let mut b = Array2::zeros((1, 4 * hidden));
    b.slice_mut(s![.., hidden..2 * hidden]).fill(1.0);
    b
}

fn layer_forward(
    xs: Vec<Array2<f64>>,
    kernel: &Array2<f64>,
    recurrent: &Array2<f64>,
    bias: &Array2<f64>,
) -> LayerCache {
    let h = recurrent.nrows();
    let batch = xs[0].nrows();
    let mut hs = vec![Array2::zeros((batch, h))];
    let mut cs = vec![Array2::zeros((batch, h))];
    let mut gates = Vec::with_capacity(xs.len());
    let mut tanh_c = Vec::with_capacity(xs.len());
    for x in &xs {
        let mut z = x.dot(kernel) + hs.last().unwrap().dot(recurrent);
        z += bias;
        z.slice_mut(s![.., ..2 * h]).mapv_inplace(sigmoid);
        z.slice_mut(s![.., 2 * h..3 * h]).mapv_inplace(f64::tanh);
        z.slice_mut(s![.., 3 * h..]).mapv_inplace(sigmoid);
        let c_prev = cs.last().unwrap();
        let mut c = Array2::zeros((batch, h));
        Zip::from(&mut c)
            .and(c_prev)
            .and(z.slice(s![.., ..h]))
            .and(z.slice(s![.., h..2 * h]))
            .and(z.slice(s![.., 2 * h..3 * h]))
            .for_each(|c, &cp, &i, &f, &g| *c = f * cp + i * g);
        let tc = c.mapv(f64::tanh);
        let hn = &z.slice(s![.., 3 * h..]) * &tc;
        gates.push(z);
        tanh_c.push(tc);
        cs.push(c);
        hs.push(hn);
    }
    LayerCache {
        xs,
        hs,
        cs,
        gates,
        tanh_c,
    }
}

struct LayerGrads {
    kernel: Array2<f64>,
    recurrent: Array2<f64>,
    bias: Array2<f64>,
    dxs: Option<Vec<Array2<f64>>>,
}

/// Backpropagation through time. `dh_out[t]` is the gradient flowing into
/// `h_{t+1}` from above; `None` entries are zero.
fn layer_backward(
    cache: &LayerCache,
    dh_out: &[Option<Array2<f64>>],
    kernel: &Array2<f64>,
    recurrent: &Array2<f64>,
    want_dx: bool,
) -> LayerGrads {
    let h = recurrent.nrows();
    let batch = cache.xs[0].nrows();
    let steps = cache.xs.len();
    let mut dk = Array2::zeros(kernel.raw_dim());
    let mut dr = Array2::zeros(recurrent.raw_dim());
    let mut db = Array2::zeros((1, 4 * h));
    let mut dh_next: Array2<f64> = Array2::zeros((batch, h));
    let mut dc_next: Array2<f64> = Array2::zeros((batch, h));
    let mut dxs = want_dx.then(|| vec![Array2::zeros((batch, kernel.nrows())); steps]);
    let mut dz = Array2::zeros((batch, 4 * h));
    for t in (0..steps).rev() {
        let mut dh = dh_next;
        if let Some(g) = &dh_out[t] {
            dh += g;
        }
        let gates = &cache.gates[t];
        let tc = &cache.tanh_c[t];
        let c_prev = &cache.cs[t];
        let mut dc = dc_next;
        {
            let (i, f, g, o) = (
                gates.slice(s![.., ..h]),
                gates.slice(s![.., h..2 * h]),
                gates.slice(s![.., 2 * h..3 * h]),
                gates.slice(s![.., 3 * h..]),
            );
            Zip::from(&mut dc)
                .and(&dh)
                .and(&o)
                .and(tc)
                .for_each(|dc, &dh, &o, &tc| *dc += dh * o * (1.0 - tc * tc));
            let (mut di, rest) = dz.view_mut().split_at(ndarray::Axis(1), h);
            let (mut df, rest) = rest.split_at(ndarray::Axis(1), h);
            let (mut dg, mut dout) = rest.split_at(ndarray::Axis(1), h);
            Zip::from(&mut di)
                .and(&dc)
                .and(&g)
                .and(&i)
                .for_each(|d, &dc, &g, &i| *d = dc * g * i * (1.0 - i));
            Zip::from(&mut df)
                .and(&dc)
                .and(c_prev)
                .and(&f)
                .for_each(|d, &dc, &cp, &f| *d = dc * cp * f * (1.0 - f));
            Zip::from(&mut dg)
                .and(&dc)
                .and(&i)
                .and(&g)
                .for_each(|d, &dc, &i, &g| *d = dc * i * (1.0 - g * g));
            Zip::from(&mut dout)
                .and(&dh)
                .and(tc)
                .and(&o)
                .for_each(|d, &dh, &tc, &o| *d = dh * tc * o * (1.0 - o));
            dc *= &f;
        }
        dc_next = dc;
        dk += &cache.xs[t].t().dot(&dz);
        dr += &cache.hs[t].t().dot(&dz);
        db += &sum_rows(&dz);
        if let Some(dxs) = dxs.as_mut() {
            dxs[t] = dz.dot(&kernel.t());
        }
        dh_next = dz.dot(&recurrent.t());
    }
    LayerGrads {
        kernel: dk,
        recurrent: dr,
        bias: db,
        dxs,
    }
}

/// Splits a batch of windows into per-step `batch x features` matrices.
fn time_major(windows: &[&[FeatureVector]]) -> Vec<Array2<f64>> {
    (0..SEQ_LEN)
        .map(|t| {
            let mut m = Array2::zeros((windows.len(), FEATURES));
            for (b, w) in windows.iter().enumerate() {
                m.row_mut(b).assign(&aview1(&w[t].0));
            }
            m
        })
        .collect()
}

impl LstmModel {
    pub fn new(taxonomy: Taxonomy, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = LSTM_HIDDEN;
        let l = taxonomy.size();
        let params = vec![
            glorot(&mut rng, FEATURES, 4 * h),
            orthogonal(&mut rng, h, 4 * h),
            bias_init(h),
            glorot(&mut rng, h, 4 * h),
            orthogonal(&mut rng, h, 4 * h),
            bias_init(h),
            glorot(&mut rng, h, l),
            Array2::zeros((1, l)),
        ];
        LstmModel { taxonomy, params }
    }

    fn run(&self, windows: &[&[FeatureVector]]) -> (LayerCache, LayerCache, Array2<f64>) {
        let p = &self.params;
        let l1 = layer_forward(time_major(windows), &p[0], &p[1], &p[2]);
        let l2 = layer_forward(l1.hs[1..].to_vec(), &p[3], &p[4], &p[5]);
        let mut probs = l2.hs.last().unwrap().dot(&p[6]) + &p[7];
        softmax_rows(&mut probs);
        (l1, l2, probs)
    }

    pub(super) fn forward(&self, windows: &[&[FeatureVector]]) -> Array2<f64> {
        self.run(windows).2
    }

    pub(super) fn loss_and_grad(
        &self,
        windows: &[&[FeatureVector]],
        targets: &[usize],
    ) -> (f64, Vec<Array2<f64>>) {
        let p = &self.params;
        let (l1, l2, probs) = self.run(windows);
        let (loss, dlogits) = cross_entropy(&probs, targets);
        let h_last = l2.hs.last().unwrap();
        let d_head_k = h_last.t().dot(&dlogits);
        let d_head_b = sum_rows(&dlogits);
        let mut dh2: Vec<Option<Array2<f64>>> = vec![None; SEQ_LEN];
        dh2[SEQ_LEN - 1] = Some(dlogits.dot(&p[6].t()));
        let g2 = layer_backward(&l2, &dh2, &p[3], &p[4], true);
        let dh1: Vec<Option<Array2<f64>>> = g2.dxs.unwrap().into_iter().map(Some).collect();
        let g1 = layer_backward(&l1, &dh1, &p[0], &p[1], false);
        (
            loss,
            vec![
                g1.kernel,
                g1.recurrent,
                g1.bias,
                g2.kernel,
                g2.recurrent,
                g2.bias,
                d_head_k,
                d_head_b,
            ],
        )
    }
}
