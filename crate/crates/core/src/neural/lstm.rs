use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::params::LstmParams;

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Everything the backward pass needs from one cell evaluation.
#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    pub x: Array1<f64>,
    pub h_prev: Array1<f64>,
    pub c_prev: Array1<f64>,
    pub i: Array1<f64>,
    pub f: Array1<f64>,
    pub g: Array1<f64>,
    pub o: Array1<f64>,
    pub tanh_c: Array1<f64>,
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LstmPass {
    pub steps: Vec<LstmCache>,
    /// Hidden state after each step, one row per input.
    pub hs: Array2<f64>,
}

impl LstmPass {
    pub fn final_state(&self) -> (Array1<f64>, Array1<f64>) {
        let last = self.steps.last().expect("non-empty sequence");
        (last.h.clone(), last.c.clone())
    }
}

impl LstmParams {
    pub(crate) fn hidden(&self) -> usize {
        self.w_h.ncols()
    }

    /// Gate order in the stacked weights: input, forget, candidate, output.
    pub(crate) fn step(&self, x: ArrayView1<f64>, h_prev: ArrayView1<f64>, c_prev: ArrayView1<f64>) -> LstmCache {
        let m = self.hidden();
        let z = self.w_x.dot(&x) + self.w_h.dot(&h_prev) + &self.b;
        let i = z.slice(s![0..m]).mapv(sigmoid);
        let f = z.slice(s![m..2 * m]).mapv(sigmoid);
        let g = z.slice(s![2 * m..3 * m]).mapv(f64::tanh);
        let o = z.slice(s![3 * m..4 * m]).mapv(sigmoid);
        let c = &f * &c_prev + &i * &g;
        let tanh_c = c.mapv(f64::tanh);
        let h = &o * &tanh_c;
        LstmCache {
            x: x.to_owned(),
            h_prev: h_prev.to_owned(),
            c_prev: c_prev.to_owned(),
            i,
            f,
            g,
            o,
            tanh_c,
            h,
            c,
        }
    }

    /// Backpropagates `dh`, `dc` (gradients w.r.t. this step's outputs)
    /// through one cell. Accumulates weight gradients into `grad` and returns
    /// (dx, dh_prev, dc_prev).
    pub(crate) fn step_backward(
        &self,
        cache: &LstmCache,
        dh: &Array1<f64>,
        dc: &Array1<f64>,
        grad: &mut LstmParams,
    ) -> (Array1<f64>, Array1<f64>, Array1<f64>) {
        let m = self.hidden();
        let d_o = dh * &cache.tanh_c;
        let dc_total = dc + &(dh * &cache.o * &cache.tanh_c.mapv(|t| 1.0 - t * t));
        let d_i = &dc_total * &cache.g;
        let d_g = &dc_total * &cache.i;
        let d_f = &dc_total * &cache.c_prev;
        let dc_prev = &dc_total * &cache.f;

        let mut dz = Array1::<f64>::zeros(4 * m);
        dz.slice_mut(s![0..m]).assign(&(&d_i * &cache.i.mapv(|v| v * (1.0 - v))));
        dz.slice_mut(s![m..2 * m]).assign(&(&d_f * &cache.f.mapv(|v| v * (1.0 - v))));
        dz.slice_mut(s![2 * m..3 * m]).assign(&(&d_g * &cache.g.mapv(|v| 1.0 - v * v)));
        dz.slice_mut(s![3 * m..4 * m]).assign(&(&d_o * &cache.o.mapv(|v| v * (1.0 - v))));

        outer_add(&mut grad.w_x, &dz, &cache.x);
        outer_add(&mut grad.w_h, &dz, &cache.h_prev);
        grad.b += &dz;
        let dx = self.w_x.t().dot(&dz);
        let dh_prev = self.w_h.t().dot(&dz);
        (dx, dh_prev, dc_prev)
    }

    pub(crate) fn run(&self, xs: ArrayView2<f64>, h0: ArrayView1<f64>, c0: ArrayView1<f64>) -> LstmPass {
        let m = self.hidden();
        let n = xs.nrows();
        let mut steps = Vec::with_capacity(n);
        let mut hs = Array2::zeros((n, m));
        let (mut h, mut c) = (h0.to_owned(), c0.to_owned());
        for (t, x) in xs.axis_iter(Axis(0)).enumerate() {
            let cache = self.step(x, h.view(), c.view());
            hs.row_mut(t).assign(&cache.h);
            h = cache.h.clone();
            c = cache.c.clone();
            steps.push(cache);
        }
        LstmPass { steps, hs }
    }

    /// Full backpropagation through time. `d_hs` holds the gradient reaching
    /// each step's hidden output from outside the recurrence; `dh_last` and
    /// `dc_last` the gradient on the final state. Returns the input gradients
    /// (one row per step) and the gradient on the initial state.
    pub(crate) fn run_backward(
        &self,
        pass: &LstmPass,
        d_hs: &Array2<f64>,
        dh_last: Array1<f64>,
        dc_last: Array1<f64>,
        grad: &mut LstmParams,
    ) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let n = pass.steps.len();
        let mut dxs = Array2::zeros((n, self.w_x.ncols()));
        let (mut dh_next, mut dc_next) = (dh_last, dc_last);
        for t in (0..n).rev() {
            let dh = &dh_next + &d_hs.row(t);
            let (dx, dh_prev, dc_prev) = self.step_backward(&pass.steps[t], &dh, &dc_next, grad);
            dxs.row_mut(t).assign(&dx);
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        (dxs, dh_next, dc_next)
    }
}

/// `acc += a ⊗ b`
pub(crate) fn outer_add(acc: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for (mut row, &ai) in acc.axis_iter_mut(Axis(0)).zip(a.iter()) {
        if ai != 0.0 {
            row.scaled_add(ai, b);
        }
    }
}
