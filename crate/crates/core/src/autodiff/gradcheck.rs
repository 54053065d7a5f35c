use crate::autodiff::network::Network;
use crate::autodiff::tensor::Matrix;
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};

/// Scalar loss of a network output together with `d loss / d output`.
pub trait OutputLoss {
    fn eval(&self, output: &Matrix) -> Result<(f64, Matrix)>;
}

impl<F> OutputLoss for F
where
    F: Fn(&Matrix) -> Result<(f64, Matrix)>,
{
    fn eval(&self, output: &Matrix) -> Result<(f64, Matrix)> {
        self(output)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub probes: Vec<Probe>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

fn loss_at(net: &Network, x: &Matrix, loss: &impl OutputLoss) -> Result<f64> {
    let (l, _) = loss.eval(&net.forward(x)?)?;
    if !l.is_finite() {
        return Err(Error::numeric("non-finite loss during gradient check"));
    }
    Ok(l)
}

/// Runs backward on a copy of `net` and compares the analytic gradient with
/// central differences on `n_probes` randomly chosen scalar parameters.
pub fn gradient_check(
    net: &Network,
    x: &Matrix,
    loss: &impl OutputLoss,
    n_probes: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut work = net.clone();
    work.unfreeze();
    let tape = work.forward_tape(x)?;
    let (l, upstream) = loss.eval(tape.output().expect("forward_tape sets output"))?;
    if !l.is_finite() {
        return Err(Error::numeric("non-finite loss during gradient check"));
    }
    work.backward(&tape, &upstream)?;
    compare_gradients(&work, x, loss, n_probes, h, seed)
}

/// Same as [`gradient_check`] but trusts whatever gradients are already
/// stored in `net`.
pub fn compare_gradients(
    net: &Network,
    x: &Matrix,
    loss: &impl OutputLoss,
    n_probes: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if n_probes == 0 {
        return Err(Error::usage("gradient check needs at least one probe"));
    }
    if !(h > 0.0) {
        return Err(Error::usage("finite-difference step must be positive"));
    }
    let sizes: Vec<usize> = net.params().map(|p| p.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = Rng::with_stream(seed, stream::GRADCHECK);
    let mut probes = Vec::with_capacity(n_probes);
    let mut work = net.clone();
    work.unfreeze();
    for _ in 0..n_probes {
        let mut flat = rng.below(total);
        let mut which = 0;
        while flat >= sizes[which] {
            flat -= sizes[which];
            which += 1;
        }
        let original = net.params().nth(which).expect("index in range").values()[flat];
        let analytic = net.params().nth(which).expect("index in range").grad()[flat];
        let set = |net: &mut Network, value: f64| -> Result<()> {
            net.params_mut()?[which].values_mut()[flat] = value;
            Ok(())
        };
        set(&mut work, original + h)?;
        let plus = loss_at(&work, x, loss)?;
        set(&mut work, original - h)?;
        let minus = loss_at(&work, x, loss)?;
        set(&mut work, original)?;
        let numeric = (plus - minus) / (2.0 * h);
        probes.push(Probe {
            param: net.params().nth(which).expect("index in range").name().to_string(),
            index: flat,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }
    let max_rel_error = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { max_rel_error, probes })
}
