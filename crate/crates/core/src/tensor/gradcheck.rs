use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Index of the worst coordinate as (input, element).
    pub worst: (usize, usize),
    pub pass: bool,
}

/// Compares tape gradients of a scalar function with central differences.
///
/// `f` is re-run on a fresh tape for every perturbation, so it must be a pure
/// function of its inputs. The relative error of a coordinate is
/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), eps, tolerance)
}

/// [`grad_check`] over several inputs at once.
pub fn grad_check_many<F>(
    f: F,
    inputs: &[Tensor<f64>],
    eps: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>], with_grad: bool| -> Result<(Tape<f64>, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs
            .iter()
            .map(|x| {
                let mut x = x.clone();
                x.requires_grad = with_grad;
                x.grad = None;
                tape.leaf(x)
            })
            .collect();
        let out = f(&mut tape, &vars)?;
        if !tape.value(out).is_scalar() {
            return Err(Error::NonScalar(tape.shape(out).to_vec()));
        }
        Ok((tape, vars, out))
    };

    let (mut tape, vars, out) = eval(inputs, true)?;
    tape.backward(out)?;

    let mut report = GradCheckReport { max_rel_err: 0.0, worst: (0, 0), pass: true };
    let mut probe = inputs.to_vec();
    for (which, var) in vars.iter().enumerate() {
        let analytic = tape.grad(*var).expect("leaf marked requires_grad").to_vec();
        for i in 0..inputs[which].numel() {
            let orig = inputs[which].data()[i];
            probe[which].data_mut()[i] = orig + eps;
            let plus = eval(&probe, false)?;
            let fp = plus.0.value(plus.2).item();
            probe[which].data_mut()[i] = orig - eps;
            let minus = eval(&probe, false)?;
            let fm = minus.0.value(minus.2).item();
            probe[which].data_mut()[i] = orig;

            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic[i];
            let denom = a.abs().max(numeric.abs()).max(1e-12);
            let rel = (a - numeric).abs() / denom;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (which, i);
            }
        }
    }
    report.pass = report.max_rel_err < tolerance;
    Ok(report)
}
