use crate::error::{CasmError, Result};
use crate::model::ModelParams;
use crate::numerics::{Matrix, Real};

/// Bias-corrected Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Matrix<T>>,
    pub v: Vec<Matrix<T>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        Self {
            m: params.set.zeros_like(),
            v: params.set.zeros_like(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Scales `grads` so their global L2 norm is at most `max_norm`. Returns the norm before scaling.
pub fn clip_gradients<T: Real>(grads: &mut [Matrix<T>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|x| x.as_f64() * x.as_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = T::of(max_norm / norm);
        for g in grads.iter_mut() {
            for x in g.data_mut() {
                *x *= s;
            }
        }
    }
    norm
}

/// One Adam update. The padding row's gradient is ignored and the row is
/// zeroed again afterwards.
pub fn adam_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &[Matrix<T>],
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    if grads.len() != params.set.len() || state.m.len() != grads.len() {
        return Err(CasmError::Config(format!(
            "adam: {} gradients for {} parameters",
            grads.len(),
            params.set.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let item_table = params.layout.item_table.0;
    let cols = params.set.get(params.layout.item_table).cols();
    let (tb1, tb2) = (T::of(b1), T::of(b2));
    let (ob1, ob2) = (T::of(1.0 - b1), T::of(1.0 - b2));
    let (tc1, tc2, eps, tlr) = (T::of(c1), T::of(c2), T::of(state.eps), T::of(lr));
    for (i, ((p, g), (m, v))) in params
        .set
        .values_mut()
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
        .enumerate()
    {
        if p.shape() != g.shape() {
            return Err(CasmError::Config(format!("adam: gradient shape {:?} vs parameter {:?}", g.shape(), p.shape())));
        }
        let skip = if i == item_table { cols } else { 0 };
        let (pd, gd, md, vd) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
        for j in skip..pd.len() {
            let gj = gd[j];
            md[j] = tb1 * md[j] + ob1 * gj;
            vd[j] = tb2 * vd[j] + ob2 * gj * gj;
            let m_hat = md[j] / tc1;
            let v_hat = vd[j] / tc2;
            pd[j] -= tlr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    params.zero_padding_row();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn params() -> ModelParams<f64> {
        let cfg = ModelConfig {
            num_items: 5,
            num_behaviors: 2,
            dim: 2,
            heads: 1,
            blocks: 1,
            max_len: 2,
            use_context: true,
            plain_block: false,
        };
        ModelParams::init(&cfg, 1).unwrap()
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = params();
        let before = p.clone();
        let mut s = AdamState::new(&p);
        let g = p.set.zeros_like();
        adam_step(&mut p, &g, &mut s, 0.01).unwrap();
        assert_eq!(p, before);
        assert!(s.m.iter().chain(&s.v).all(|m| m.data().iter().all(|&x| x == 0.0)));
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = params();
        let before = p.clone();
        let mut s = AdamState::new(&p);
        let mut g = p.set.zeros_like();
        let id = p.layout.fuse_bias.0;
        g[id].set(0, 0, 1.0);
        adam_step(&mut p, &g, &mut s, 0.001).unwrap();
        let delta = before.set.values()[id].get(0, 0) - p.set.values()[id].get(0, 0);
        assert!((delta - 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn padding_row_stays_zero() {
        let mut p = params();
        let mut s = AdamState::new(&p);
        let g: Vec<_> = p.set.values().iter().map(|m| Matrix::filled(m.rows(), m.cols(), 1.0)).collect();
        adam_step(&mut p, &g, &mut s, 0.1).unwrap();
        assert!(p.set.get(p.layout.item_table).row(0).iter().all(|&x| x == 0.0));
        assert!(s.m[p.layout.item_table.0].row(0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![Matrix::<f64>::from_rows(&[vec![3.0, 4.0]])];
        assert_eq!(clip_gradients(&mut g, 1.0), 5.0);
        assert!((g[0].get(0, 0) - 0.6).abs() < 1e-15);
    }
}
