//! TDNN and LSTMP layers with explicit forward caches and backward passes.

use ndarray::{s, Array1, Array2, ArrayView1, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    /// Affine + ReLU over the frames at `offsets` relative to the current one.
    Tdnn { offsets: Vec<isize>, dim: usize },
    /// LSTM with forget gate, peepholes and a linear recurrent projection.
    Lstmp { cell_dim: usize, proj_dim: usize },
}

impl LayerSpec {
    pub fn tdnn(offsets: &[isize], dim: usize) -> Self {
        LayerSpec::Tdnn {
            offsets: offsets.to_vec(),
            dim,
        }
    }

    pub fn lstmp(cell_dim: usize, proj_dim: usize) -> Self {
        LayerSpec::Lstmp { cell_dim, proj_dim }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            LayerSpec::Tdnn { dim, .. } => *dim,
            LayerSpec::Lstmp { proj_dim, .. } => *proj_dim,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            LayerSpec::Tdnn { offsets, dim } => {
                if *dim == 0 || offsets.is_empty() {
                    return Err("TDNN needs a positive dim and at least one offset".into());
                }
                if offsets.windows(2).any(|w| w[0] >= w[1]) {
                    return Err("TDNN offsets must be sorted and distinct".into());
                }
            }
            LayerSpec::Lstmp { cell_dim, proj_dim } => {
                if *cell_dim == 0 || *proj_dim == 0 {
                    return Err("LSTMP dims must be positive".into());
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn uniform<T: Real, R: Rng>(
    rows: usize,
    cols: usize,
    bound: f64,
    r: &mut R,
) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || T::lit(r.random_range(-bound..=bound)))
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TdnnLayer<T> {
    pub offsets: Vec<isize>,
    /// `dim x (offsets * input_dim)`
    pub w: Array2<T>,
    pub b: Array1<T>,
}

pub(crate) struct TdnnCache<T> {
    spliced: Array2<T>,
    pre: Array2<T>,
}

impl<T: Real> TdnnLayer<T> {
    pub fn random<R: Rng>(offsets: &[isize], input_dim: usize, dim: usize, r: &mut R) -> Self {
        let fan_in = offsets.len() * input_dim;
        Self {
            offsets: offsets.to_vec(),
            w: uniform(dim, fan_in, (6.0 / fan_in as f64).sqrt(), r),
            b: Array1::zeros(dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols() / self.offsets.len()
    }

    fn splice(&self, x: &Array2<T>) -> Array2<T> {
        let (n, d) = x.dim();
        let mut out = Array2::zeros((n, d * self.offsets.len()));
        for t in 0..n {
            for (j, &o) in self.offsets.iter().enumerate() {
                let src = (t as isize + o).clamp(0, n as isize - 1) as usize;
                out.slice_mut(s![t, j * d..(j + 1) * d]).assign(&x.row(src));
            }
        }
        out
    }

    pub(crate) fn forward(&self, x: &Array2<T>) -> (Array2<T>, TdnnCache<T>) {
        let spliced = self.splice(x);
        let pre = spliced.dot(&self.w.t()) + &self.b;
        let out = pre.mapv(|v| v.max(T::zero()));
        (out, TdnnCache { spliced, pre })
    }

    /// Accumulates parameter gradients into `g` and returns the input gradient.
    pub(crate) fn backward(
        &self,
        cache: &TdnnCache<T>,
        dy: &Array2<T>,
        g: &mut TdnnLayer<T>,
    ) -> Array2<T> {
        let mut dz = dy.clone();
        Zip::from(&mut dz).and(&cache.pre).for_each(|d, &p| {
            if p <= T::zero() {
                *d = T::zero();
            }
        });
        g.w += &dz.t().dot(&cache.spliced);
        g.b += &dz.sum_axis(Axis(0));
        let dspliced = dz.dot(&self.w);
        let n = dy.nrows();
        let d = self.input_dim();
        let mut dx = Array2::zeros((n, d));
        for t in 0..n {
            for (j, &o) in self.offsets.iter().enumerate() {
                let src = (t as isize + o).clamp(0, n as isize - 1) as usize;
                let mut row = dx.row_mut(src);
                row += &dspliced.slice(s![t, j * d..(j + 1) * d]);
            }
        }
        dx
    }

    fn param_slices(&self) -> Vec<&[T]> {
        vec![self.w.as_slice().unwrap(), self.b.as_slice().unwrap()]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.w.as_slice_mut().unwrap(),
            self.b.as_slice_mut().unwrap(),
        ]
    }
}

/// Gate blocks in `w_x`, `w_r` and `b` are ordered input, forget, cell, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmpLayer<T> {
    /// `4c x input_dim`
    pub w_x: Array2<T>,
    /// `4c x proj_dim`
    pub w_r: Array2<T>,
    pub b: Array1<T>,
    pub peep_i: Array1<T>,
    pub peep_f: Array1<T>,
    pub peep_o: Array1<T>,
    /// `proj_dim x c`
    pub w_proj: Array2<T>,
}

pub(crate) struct LstmpCache<T> {
    x: Array2<T>,
    /// rows: i, f, g, o activations per frame (4c)
    gates: Array2<T>,
    cells: Array2<T>,
    tanh_cells: Array2<T>,
    /// outputs of the multiplicative stage, before projection
    m: Array2<T>,
    r: Array2<T>,
}

impl<T: Real> LstmpLayer<T> {
    pub fn random<R: Rng>(input_dim: usize, cell_dim: usize, proj_dim: usize, r: &mut R) -> Self {
        let c = cell_dim;
        let bx = 1.0 / ((input_dim + proj_dim) as f64).sqrt();
        let mut b = Array1::zeros(4 * c);
        b.slice_mut(s![c..2 * c]).fill(T::one());
        Self {
            w_x: uniform(4 * c, input_dim, bx, r),
            w_r: uniform(4 * c, proj_dim, bx, r),
            b,
            peep_i: uniform::<T, R>(1, c, 0.1, r).remove_axis(Axis(0)),
            peep_f: uniform::<T, R>(1, c, 0.1, r).remove_axis(Axis(0)),
            peep_o: uniform::<T, R>(1, c, 0.1, r).remove_axis(Axis(0)),
            w_proj: uniform(proj_dim, c, 1.0 / (c as f64).sqrt(), r),
        }
    }

    pub fn cell_dim(&self) -> usize {
        self.w_proj.ncols()
    }

    pub fn proj_dim(&self) -> usize {
        self.w_proj.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.ncols()
    }

    pub(crate) fn forward(&self, x: &Array2<T>) -> (Array2<T>, LstmpCache<T>) {
        let n = x.nrows();
        let c = self.cell_dim();
        let p = self.proj_dim();
        let pre_x = x.dot(&self.w_x.t()) + &self.b;
        let mut gates = Array2::zeros((n, 4 * c));
        let mut cells = Array2::zeros((n, c));
        let mut tanh_cells = Array2::zeros((n, c));
        let mut m = Array2::zeros((n, c));
        let mut r = Array2::zeros((n, p));
        let mut c_prev = Array1::<T>::zeros(c);
        let mut r_prev = Array1::<T>::zeros(p);
        for t in 0..n {
            let a = &pre_x.row(t) + &self.w_r.dot(&r_prev);
            let mut gt = gates.row_mut(t);
            let mut ct = cells.row_mut(t);
            for k in 0..c {
                let i = sigmoid(a[k] + self.peep_i[k] * c_prev[k]);
                let f = sigmoid(a[c + k] + self.peep_f[k] * c_prev[k]);
                let g = a[2 * c + k].tanh();
                let cell = f * c_prev[k] + i * g;
                let o = sigmoid(a[3 * c + k] + self.peep_o[k] * cell);
                gt[k] = i;
                gt[c + k] = f;
                gt[2 * c + k] = g;
                gt[3 * c + k] = o;
                ct[k] = cell;
                let th = cell.tanh();
                tanh_cells[[t, k]] = th;
                m[[t, k]] = o * th;
            }
            let rt = self.w_proj.dot(&m.row(t));
            r.row_mut(t).assign(&rt);
            c_prev.assign(&cells.row(t));
            r_prev = rt;
        }
        (
            r.clone(),
            LstmpCache {
                x: x.clone(),
                gates,
                cells,
                tanh_cells,
                m,
                r,
            },
        )
    }

    pub(crate) fn backward(
        &self,
        cache: &LstmpCache<T>,
        dy: &Array2<T>,
        g: &mut LstmpLayer<T>,
    ) -> Array2<T> {
        let n = dy.nrows();
        let c = self.cell_dim();
        let p = self.proj_dim();
        let one = T::one();
        let mut dpre = Array2::<T>::zeros((n, 4 * c));
        let mut dr_next = Array1::<T>::zeros(p);
        let mut dc_next = Array1::<T>::zeros(c);
        let zero_c = Array1::<T>::zeros(c);
        let zero_p = Array1::<T>::zeros(p);
        for t in (0..n).rev() {
            let dr = &dy.row(t) + &dr_next;
            outer_add(&mut g.w_proj, dr.view(), cache.m.row(t));
            let dm = self.w_proj.t().dot(&dr);
            let gt = cache.gates.row(t);
            let c_prev = if t > 0 {
                cache.cells.row(t - 1)
            } else {
                zero_c.view()
            };
            let r_prev = if t > 0 {
                cache.r.row(t - 1)
            } else {
                zero_p.view()
            };
            let mut da = dpre.row_mut(t);
            let mut dc_prev = Array1::<T>::zeros(c);
            for k in 0..c {
                let (i, f, gg, o) = (gt[k], gt[c + k], gt[2 * c + k], gt[3 * c + k]);
                let th = cache.tanh_cells[[t, k]];
                let cell = cache.cells[[t, k]];
                let do_pre = dm[k] * th * o * (one - o);
                let dc = dc_next[k] + dm[k] * o * (one - th * th) + do_pre * self.peep_o[k];
                let di_pre = dc * gg * i * (one - i);
                let df_pre = dc * c_prev[k] * f * (one - f);
                let dg_pre = dc * i * (one - gg * gg);
                g.peep_o[k] += do_pre * cell;
                g.peep_i[k] += di_pre * c_prev[k];
                g.peep_f[k] += df_pre * c_prev[k];
                dc_prev[k] = dc * f + di_pre * self.peep_i[k] + df_pre * self.peep_f[k];
                da[k] = di_pre;
                da[c + k] = df_pre;
                da[2 * c + k] = dg_pre;
                da[3 * c + k] = do_pre;
            }
            let da = dpre.row(t);
            outer_add(&mut g.w_r, da, r_prev);
            dr_next = self.w_r.t().dot(&da);
            dc_next = dc_prev;
        }
        g.w_x += &dpre.t().dot(&cache.x);
        g.b += &dpre.sum_axis(Axis(0));
        dpre.dot(&self.w_x)
    }

    fn param_slices(&self) -> Vec<&[T]> {
        vec![
            self.w_x.as_slice().unwrap(),
            self.w_r.as_slice().unwrap(),
            self.b.as_slice().unwrap(),
            self.peep_i.as_slice().unwrap(),
            self.peep_f.as_slice().unwrap(),
            self.peep_o.as_slice().unwrap(),
            self.w_proj.as_slice().unwrap(),
        ]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.w_x.as_slice_mut().unwrap(),
            self.w_r.as_slice_mut().unwrap(),
            self.b.as_slice_mut().unwrap(),
            self.peep_i.as_slice_mut().unwrap(),
            self.peep_f.as_slice_mut().unwrap(),
            self.peep_o.as_slice_mut().unwrap(),
            self.w_proj.as_slice_mut().unwrap(),
        ]
    }
}

fn outer_add<T: Real>(m: &mut Array2<T>, col: ArrayView1<T>, row: ArrayView1<T>) {
    for (mut mr, &a) in m.rows_mut().into_iter().zip(col.iter()) {
        if a != T::zero() {
            mr.scaled_add(a, &row);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Tdnn(TdnnLayer<T>),
    Lstmp(LstmpLayer<T>),
}

pub(crate) enum LayerCache<T> {
    Tdnn(TdnnCache<T>),
    Lstmp(LstmpCache<T>),
}

impl<T: Real> Layer<T> {
    pub fn random<R: Rng>(spec: &LayerSpec, input_dim: usize, r: &mut R) -> Self {
        match spec {
            LayerSpec::Tdnn { offsets, dim } => {
                Layer::Tdnn(TdnnLayer::random(offsets, input_dim, *dim, r))
            }
            LayerSpec::Lstmp { cell_dim, proj_dim } => {
                Layer::Lstmp(LstmpLayer::random(input_dim, *cell_dim, *proj_dim, r))
            }
        }
    }

    /// All-zero layer of the given shape.
    pub fn zeros(spec: &LayerSpec, input_dim: usize) -> Self {
        match spec {
            LayerSpec::Tdnn { offsets, dim } => Layer::Tdnn(TdnnLayer {
                offsets: offsets.clone(),
                w: Array2::zeros((*dim, offsets.len() * input_dim)),
                b: Array1::zeros(*dim),
            }),
            LayerSpec::Lstmp {
                cell_dim: c,
                proj_dim: p,
            } => Layer::Lstmp(LstmpLayer {
                w_x: Array2::zeros((4 * c, input_dim)),
                w_r: Array2::zeros((4 * c, *p)),
                b: Array1::zeros(4 * c),
                peep_i: Array1::zeros(*c),
                peep_f: Array1::zeros(*c),
                peep_o: Array1::zeros(*c),
                w_proj: Array2::zeros((*p, *c)),
            }),
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Tdnn(l) => LayerSpec::Tdnn {
                offsets: l.offsets.clone(),
                dim: l.w.nrows(),
            },
            Layer::Lstmp(l) => LayerSpec::Lstmp {
                cell_dim: l.cell_dim(),
                proj_dim: l.proj_dim(),
            },
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Layer::Tdnn(l) => l.input_dim(),
            Layer::Lstmp(l) => l.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.spec().output_dim()
    }

    pub(crate) fn forward(&self, x: &Array2<T>) -> (Array2<T>, LayerCache<T>) {
        match self {
            Layer::Tdnn(l) => {
                let (y, c) = l.forward(x);
                (y, LayerCache::Tdnn(c))
            }
            Layer::Lstmp(l) => {
                let (y, c) = l.forward(x);
                (y, LayerCache::Lstmp(c))
            }
        }
    }

    pub(crate) fn backward(
        &self,
        cache: &LayerCache<T>,
        dy: &Array2<T>,
        g: &mut Layer<T>,
    ) -> Array2<T> {
        match (self, cache, g) {
            (Layer::Tdnn(l), LayerCache::Tdnn(c), Layer::Tdnn(g)) => l.backward(c, dy, g),
            (Layer::Lstmp(l), LayerCache::Lstmp(c), Layer::Lstmp(g)) => l.backward(c, dy, g),
            _ => unreachable!("gradient buffer shaped like its layer"),
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Layer::Tdnn(_) => &["w", "b"],
            Layer::Lstmp(_) => &["w_x", "w_r", "b", "peep_i", "peep_f", "peep_o", "w_proj"],
        }
    }

    pub fn param_slices(&self) -> Vec<&[T]> {
        match self {
            Layer::Tdnn(l) => l.param_slices(),
            Layer::Lstmp(l) => l.param_slices(),
        }
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Layer::Tdnn(l) => l.param_slices_mut(),
            Layer::Lstmp(l) => l.param_slices_mut(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for s in z.param_slices_mut() {
            s.fill(T::zero());
        }
        z
    }

    /// Frames of context this layer reads beyond the current one, (left, right).
    pub fn context(&self) -> (usize, usize) {
        match self {
            Layer::Tdnn(l) => (
                (-l.offsets.first().copied().unwrap_or(0)).max(0) as usize,
                l.offsets.last().copied().unwrap_or(0).max(0) as usize,
            ),
            Layer::Lstmp(_) => (0, 0),
        }
    }
}
