//! LSTM cell on the tape.
//!
//! Gate layout is fixed: the `4h` axis holds (input, forget, cell, output)
//! gates in that order, as contiguous `h`-wide blocks.

use rand::Rng;

use super::{Tape, Tensor, TensorError, Var};

/// Parameters of one LSTM cell.
///
/// `w_ih` is `[4h x d]`, `w_hh` is `[4h x h]` and `b` is a `[1 x 4h]` row.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub b: Tensor,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    /// Uniform fan-in init `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero biases.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut fill = |rows: usize, cols: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
            Tensor::from_vec(rows, cols, data)
        };
        LstmParams {
            w_ih: fill(4 * hidden, input, input),
            w_hh: fill(4 * hidden, hidden, hidden),
            b: Tensor::zeros(1, 4 * hidden),
            input,
            hidden,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w_ih: Tensor::zeros(4 * hidden, input),
            w_hh: Tensor::zeros(4 * hidden, hidden),
            b: Tensor::zeros(1, 4 * hidden),
            input,
            hidden,
        }
    }
}

/// Tape handles for one staged set of LSTM parameters.
///
/// The weight leaves hold the transposed layouts (`[d x 4h]`, `[h x 4h]`)
/// so every step runs the streaming matmul kernel; gradients read back from
/// them are transposed likewise. [`stage`]/[`weight_grads`] hide this.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w_ih_t: Var,
    pub w_hh_t: Var,
    pub b: Var,
}

/// Put the parameters on a tape, optionally collecting gradients.
pub fn stage(tape: &mut Tape, params: &LstmParams, needs_grad: bool) -> Result<LstmVars, TensorError> {
    Ok(LstmVars {
        w_ih_t: tape.leaf(params.w_ih.transposed(), needs_grad)?,
        w_hh_t: tape.leaf(params.w_hh.transposed(), needs_grad)?,
        b: tape.leaf(params.b.clone(), needs_grad)?,
    })
}

/// Gradients in parameter layout `(d w_ih, d w_hh, d b)` after a backward
/// pass over staged vars.
pub fn weight_grads(tape: &Tape, vars: &LstmVars) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let unt = |v: Var| -> Option<Vec<f64>> {
        let t = tape.value(v);
        let g = tape.grad(v)?;
        Some(Tensor::from_vec(t.rows(), t.cols(), g.to_vec()).transposed().data().to_vec())
    };
    Some((unt(vars.w_ih_t)?, unt(vars.w_hh_t)?, tape.grad(vars.b).map(<[f64]>::to_vec)?))
}

/// One batched step: `x` is `[B x d]`, `h_prev`/`c_prev` are `[B x h]`.
pub fn lstm_step(
    tape: &mut Tape,
    vars: &LstmVars,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    hidden: usize,
) -> Result<(Var, Var), TensorError> {
    let xw = tape.matmul(x, vars.w_ih_t)?;
    let hw = tape.matmul(h_prev, vars.w_hh_t)?;
    let pre = tape.add(xw, hw)?;
    let pre = tape.add_row(pre, vars.b)?;
    lstm_step_from_pre(tape, pre, c_prev, hidden)
}

/// Gate math given the pre-activation `[B x 4h]`; lets callers that can
/// form the pre-activation with fewer matmuls share one step body.
pub fn lstm_step_from_pre(
    tape: &mut Tape,
    pre: Var,
    c_prev: Var,
    hidden: usize,
) -> Result<(Var, Var), TensorError> {
    let i_gate = tape.slice_cols(pre, 0, hidden)?;
    let f_gate = tape.slice_cols(pre, hidden, 2 * hidden)?;
    let g_gate = tape.slice_cols(pre, 2 * hidden, 3 * hidden)?;
    let o_gate = tape.slice_cols(pre, 3 * hidden, 4 * hidden)?;
    let i = tape.sigmoid(i_gate)?;
    let f = tape.sigmoid(f_gate)?;
    let g = tape.tanh(g_gate)?;
    let o = tape.sigmoid(o_gate)?;
    let fc = tape.mul(f, c_prev)?;
    let ig = tape.mul(i, g)?;
    let c = tape.add(fc, ig)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Single-vector step without an external tape, for inference-style use.
pub fn lstm_step_vec(
    params: &LstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), TensorError> {
    if x.len() != params.input || h_prev.len() != params.hidden || c_prev.len() != params.hidden {
        return Err(TensorError::Shape {
            op: "lstm_step",
            detail: format!(
                "x {} (want {}), h {} / c {} (want {})",
                x.len(),
                params.input,
                h_prev.len(),
                c_prev.len(),
                params.hidden
            ),
        });
    }
    let mut tape = Tape::new();
    let vars = stage(&mut tape, params, false)?;
    let xv = tape.constant(Tensor::row(x.to_vec()))?;
    let hv = tape.constant(Tensor::row(h_prev.to_vec()))?;
    let cv = tape.constant(Tensor::row(c_prev.to_vec()))?;
    let (h, c) = lstm_step(&mut tape, &vars, xv, hv, cv, params.hidden)?;
    Ok((tape.value(h).data().to_vec(), tape.value(c).data().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{central_diff, max_rel_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_parameters_give_zero_hidden_state() {
        let params = LstmParams::zeros(3, 2);
        let (h, c) = lstm_step_vec(&params, &[1.0, -2.0, 0.5], &[0.3, -0.3], &[0.0, 0.0]).unwrap();
        assert_eq!(h, vec![0.0, 0.0], "sigmoid(0) * tanh(0) = 0");
        assert_eq!(c, vec![0.0, 0.0]);
        // With a non-zero cell state only the halved carry survives.
        let (h2, c2) = lstm_step_vec(&params, &[1.0, -2.0, 0.5], &[0.3, -0.3], &[0.1, 0.1]).unwrap();
        assert_eq!(c2, vec![0.05, 0.05], "f = sigmoid(0) = 0.5 halves c_prev");
        for v in h2 {
            assert!((v - 0.5 * 0.05f64.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn hidden_state_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = LstmParams::init(4, 3, &mut rng);
        let mut h = vec![0.0; 3];
        let mut c = vec![0.0; 3];
        for step in 0..50 {
            let x: Vec<f64> = (0..4).map(|j| ((step * 4 + j) as f64 * 0.7).sin() * 3.0).collect();
            let (nh, nc) = lstm_step_vec(&params, &x, &h, &c).unwrap();
            h = nh;
            c = nc;
            assert!(h.iter().all(|v| v.abs() < 1.0), "|h| must stay below 1");
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let params = LstmParams::zeros(3, 2);
        assert!(lstm_step_vec(&params, &[1.0], &[0.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        // d=3, h=2; the scalar loss is the mean of h after two steps.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = LstmParams::init(3, 2, &mut rng);
        let xs = [vec![0.5, -1.0, 0.25], vec![-0.3, 0.8, 1.1]];

        let run = |p: &LstmParams| -> (f64, Vec<Vec<f64>>) {
            let mut tape = Tape::new();
            let vars = stage(&mut tape, p, true).unwrap();
            let mut h = tape.zeros(1, 2).unwrap();
            let mut c = tape.zeros(1, 2).unwrap();
            for x in &xs {
                let xv = tape.constant(Tensor::row(x.clone())).unwrap();
                let (nh, nc) = lstm_step(&mut tape, &vars, xv, h, c, 2).unwrap();
                h = nh;
                c = nc;
            }
            let loss = tape.mean_all(h).unwrap();
            tape.backward(loss).unwrap();
            let (gi, gh, gb) = weight_grads(&tape, &vars).unwrap();
            (tape.value(loss).item(), vec![gi, gh, gb])
        };

        let (_, analytic) = run(&params);

        for (slot, name) in [(0, "w_ih"), (1, "w_hh"), (2, "b")] {
            let base = match slot {
                0 => params.w_ih.clone(),
                1 => params.w_hh.clone(),
                _ => params.b.clone(),
            };
            let numeric = central_diff(
                &mut |v: &[f64]| {
                    let mut p = params.clone();
                    let target = match slot {
                        0 => &mut p.w_ih,
                        1 => &mut p.w_hh,
                        _ => &mut p.b,
                    };
                    *target = Tensor::from_vec(target.rows(), target.cols(), v.to_vec());
                    run(&p).0
                },
                base.data(),
                1e-6,
            );
            let err = max_rel_error(&analytic[slot], &numeric);
            assert!(err < 1e-4, "{name}: rel error {err}");
        }
    }
}
