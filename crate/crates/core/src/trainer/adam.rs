use ndarray::{Array1, Array2, Zip};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// First and second moment estimates for one tensor.
#[derive(Debug, Clone)]
struct Moments<A> {
    m: A,
    v: A,
}

/// Adam over the projection matrices and the combine logits.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    step: i32,
    w: Vec<Moments<Array2<f64>>>,
    logits: Moments<Array1<f64>>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[(usize, usize)], m: usize) -> Self {
        Self {
            lr,
            step: 0,
            w: shapes
                .iter()
                .map(|&s| Moments {
                    m: Array2::zeros(s),
                    v: Array2::zeros(s),
                })
                .collect(),
            logits: Moments {
                m: Array1::zeros(m),
                v: Array1::zeros(m),
            },
        }
    }

    pub fn update(&mut self, w: &mut [Array2<f64>], grad_w: &[Array2<f64>], logits: &mut Array1<f64>, grad_logits: &Array1<f64>) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let lr = self.lr;
        let apply = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + EPS);
        };
        for ((p, g), st) in w.iter_mut().zip(grad_w).zip(&mut self.w) {
            Zip::from(p)
                .and(g)
                .and(&mut st.m)
                .and(&mut st.v)
                .for_each(|p, &g, m, v| apply(p, g, m, v));
        }
        Zip::from(logits)
            .and(grad_logits)
            .and(&mut self.logits.m)
            .and(&mut self.logits.v)
            .for_each(|p, &g, m, v| apply(p, g, m, v));
    }
}
