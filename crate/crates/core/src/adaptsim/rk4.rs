//! Allocation-free classical Runge-Kutta stepping of the joint loop state,
//! packed as `[x, x_m, vec(Theta), vec(K)]` (column-major blocks).

use nalgebra::{DMatrixView, DVector, DVectorView, DVectorViewMut};

use crate::linalg::Mat;

use super::closed_loop::{ClosedLoop, Controller, LoopState};
use super::signal::Reference;

pub(crate) struct Integrator<'a> {
    cl: &'a ClosedLoop,
    n: usize,
    m: usize,
    q: usize,
    b_lambda: Mat,
    e: DVector<f64>,
    e_y: DVector<f64>,
    u: DVector<f64>,
    w: DVector<f64>,
    r0: DVector<f64>,
    rh: DVector<f64>,
    r1: DVector<f64>,
    k1: DVector<f64>,
    k2: DVector<f64>,
    k3: DVector<f64>,
    k4: DVector<f64>,
    tmp: DVector<f64>,
}

impl<'a> Integrator<'a> {
    pub fn new(cl: &'a ClosedLoop) -> Self {
        let (n, m, p, q) = (cl.plant.n(), cl.plant.m(), cl.plant.p(), cl.reference_dim());
        let len = 2 * n + n * m + q * m;
        let z = |k| DVector::zeros(k);
        Self {
            cl,
            n,
            m,
            q,
            b_lambda: &cl.plant.b * &cl.plant.lambda,
            e: z(n),
            e_y: z(p),
            u: z(m),
            w: z(m),
            r0: z(q),
            rh: z(q),
            r1: z(q),
            k1: z(len),
            k2: z(len),
            k3: z(len),
            k4: z(len),
            tmp: z(len),
        }
    }

    pub fn pack(&self, s: &LoopState) -> DVector<f64> {
        let (n, m, q) = (self.n, self.m, self.q);
        let mut v = DVector::zeros(2 * n + n * m + q * m);
        v.rows_mut(0, n).copy_from(&s.x);
        v.rows_mut(n, n).copy_from(&s.x_m);
        v.rows_mut(2 * n, n * m).copy_from_slice(s.theta.as_slice());
        v.rows_mut(2 * n + n * m, q * m).copy_from_slice(s.k.as_slice());
        v
    }

    pub fn unpack(&self, v: &DVector<f64>) -> LoopState {
        let (n, m, q) = (self.n, self.m, self.q);
        LoopState {
            x: v.rows(0, n).into_owned(),
            x_m: v.rows(n, n).into_owned(),
            theta: Mat::from_column_slice(n, m, &v.as_slice()[2 * n..2 * n + n * m]),
            k: Mat::from_column_slice(q, m, &v.as_slice()[2 * n + n * m..]),
        }
    }

    pub fn state_norm(&self, v: &DVector<f64>) -> f64 {
        v.rows(0, self.n).norm()
    }

    #[allow(clippy::too_many_arguments)]
    fn eval(
        cl: &ClosedLoop,
        (n, m, q): (usize, usize, usize),
        b_lambda: &Mat,
        scratch: (
            &mut DVector<f64>,
            &mut DVector<f64>,
            &mut DVector<f64>,
            &mut DVector<f64>,
        ),
        s: &DVector<f64>,
        r: &DVector<f64>,
        out: &mut DVector<f64>,
    ) {
        let (e, e_y, u, w) = scratch;
        let pl = &cl.plant;
        let rm = &cl.reference_model;
        let sl = s.as_slice();
        let x = DVectorView::from_slice(&sl[..n], n);
        let x_m = DVectorView::from_slice(&sl[n..2 * n], n);
        let theta = DMatrixView::from_slice(&sl[2 * n..2 * n + n * m], n, m);
        let k = DMatrixView::from_slice(&sl[2 * n + n * m..], q, m);

        e.copy_from(&x);
        *e -= &x_m;
        e_y.gemv_tr(1.0, &pl.c, e, 0.0);

        let mut adaptive = None;
        match &cl.controller {
            Controller::Adaptive {
                gains,
                baseline,
                feedforward,
            } => {
                u.gemv_tr(1.0, &theta, &x_m, 0.0);
                if let Some(kb) = baseline {
                    u.gemv(1.0, kb, &x_m, 1.0);
                }
                if *feedforward {
                    u.gemv_tr(1.0, &k, r, 1.0);
                }
                adaptive = Some((gains, *feedforward));
            }
            Controller::StateFeedback { k_t } => u.gemv(1.0, k_t, &x, 0.0),
        }

        let o = out.as_mut_slice();
        let (o_x, rest) = o.split_at_mut(n);
        let (o_xm, rest) = rest.split_at_mut(n);
        let (o_theta, o_k) = rest.split_at_mut(n * m);
        let mut dx = DVectorViewMut::from_slice(o_x, n);
        dx.gemv(1.0, &pl.a, &x, 0.0);
        dx.gemv(1.0, b_lambda, u, 1.0);
        dx.gemv(1.0, &pl.b_ref, r, 1.0);
        let mut dxm = DVectorViewMut::from_slice(o_xm, n);
        dxm.gemv(1.0, &rm.a_m, &x_m, 0.0);
        dxm.gemv(1.0, &rm.b_r, r, 1.0);
        dxm.gemv(-1.0, &rm.l, e_y, 1.0);

        match adaptive {
            Some((gains, feedforward)) => {
                w.gemv_tr(1.0, &gains.mixer, e_y, 0.0);
                for j in 0..m {
                    for i in 0..n {
                        o_theta[i + n * j] = -gains.gamma_theta[i] * x_m[i] * w[j];
                    }
                    for i in 0..q {
                        o_k[i + q * j] = if feedforward {
                            -gains.gamma_k[i] * r[i] * w[j]
                        } else {
                            0.0
                        };
                    }
                }
            }
            None => {
                o_theta.fill(0.0);
                o_k.fill(0.0);
            }
        }
    }

    /// Advances `s` in place from `t` to `t + h`.
    pub fn step(&mut self, reference: &Reference, t: f64, s: &mut DVector<f64>, h: f64) {
        let dims = (self.n, self.m, self.q);
        let half = 0.5 * h;
        reference.value_into(t, &mut self.r0);
        reference.value_into(t + half, &mut self.rh);
        reference.value_into(t + h, &mut self.r1);
        let Self {
            cl,
            b_lambda,
            e,
            e_y,
            u,
            w,
            r0,
            rh,
            r1,
            k1,
            k2,
            k3,
            k4,
            tmp,
            ..
        } = self;
        macro_rules! f {
            ($s:expr, $r:expr, $out:expr) => {
                Self::eval(cl, dims, b_lambda, (e, e_y, u, w), $s, $r, $out)
            };
        }
        f!(s, r0, k1);
        tmp.copy_from(s);
        tmp.axpy(half, k1, 1.0);
        f!(tmp, rh, k2);
        tmp.copy_from(s);
        tmp.axpy(half, k2, 1.0);
        f!(tmp, rh, k3);
        tmp.copy_from(s);
        tmp.axpy(h, k3, 1.0);
        f!(tmp, r1, k4);
        let c = h / 6.0;
        for i in 0..s.len() {
            s[i] += c * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
    }
}
