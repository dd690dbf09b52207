//! Diagonally preconditioned gradient descent with Armijo backtracking.

use super::loss::FitConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub x: Vec<f64>,
    pub loss: f64,
    /// Loss at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub accepted: usize,
    pub converged: bool,
}

/// Loss, gradient and search direction at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub direction: Vec<f64>,
}

impl Probe {
    /// Direction `-grad / precond`.
    pub fn diagonal(loss: f64, grad: Vec<f64>, precond: &[f64]) -> Self {
        let direction = grad.iter().zip(precond).map(|(g, p)| -g / p).collect();
        Self { loss, grad, direction }
    }
}

/// Minimizes a loss from `x0`.
///
/// `value` returns `None` where the loss is undefined (such trial points are
/// rejected like ones that fail the Armijo test); `probe` returns the loss,
/// its gradient and a search direction. A direction that is not downhill is
/// replaced by the negative gradient. Steps are only accepted on sufficient
/// decrease, so the trace is strictly decreasing.
pub fn descend<V, G>(x0: Vec<f64>, cfg: &FitConfig, mut value: V, mut probe: G) -> Result<Descent>
where
    V: FnMut(&[f64]) -> Option<f64>,
    G: FnMut(&[f64]) -> Result<Probe>,
{
    let mut value_grad = |x: &[f64]| probe(x).map(|p| (p.loss, p.grad, p.direction));
    let mut x = x0;
    let (mut f, mut g, mut d) = value_grad(&x)?;
    if !f.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut out = Descent {
        x: Vec::new(),
        loss: f,
        trace: vec![f],
        accepted: 0,
        converged: f <= cfg.abs_tolerance,
    };
    let mut step = 1.0_f64;
    while !out.converged && out.accepted < cfg.max_iters {
        let mut slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) || d.iter().any(|v| !v.is_finite()) {
            d = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        if !(slope < 0.0) {
            out.converged = true;
            break;
        }
        step = (step * 2.0).min(1.0);
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            if let Some(ft) = value(&trial) {
                if ft.is_finite() && ft <= f + cfg.armijo * step * slope && ft < f {
                    accepted = Some(trial);
                    break;
                }
            }
            step *= cfg.backtrack;
        }
        let Some(trial) = accepted else {
            // no decrease along the descent direction at working precision
            out.converged = true;
            break;
        };
        x = trial;
        let (fnew, gnew, dnew) = value_grad(&x)?;
        if !fnew.is_finite() {
            return Err(Error::NonFinite {
                iteration: out.accepted + 1,
            });
        }
        let rel = (f - fnew) / f.abs().max(f64::MIN_POSITIVE);
        f = fnew;
        g = gnew;
        d = dnew;
        out.accepted += 1;
        out.trace.push(f);
        if f <= cfg.abs_tolerance || rel < cfg.tolerance {
            out.converged = true;
        }
    }
    out.loss = f;
    out.x = x;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_anisotropic_quadratic() {
        let scales = [1.0, 100.0, 0.01];
        let f = |x: &[f64]| x.iter().zip(&scales).map(|(v, s)| s * (v - 1.0) * (v - 1.0)).sum::<f64>();
        let grad = |x: &[f64]| x.iter().zip(&scales).map(|(v, s)| 2.0 * s * (v - 1.0)).collect::<Vec<_>>();
        let precond: Vec<f64> = scales.iter().map(|s| 2.0 * s).collect();
        let cfg = FitConfig {
            tolerance: 0.0,
            abs_tolerance: 1e-20,
            ..FitConfig::default()
        };
        let r = descend(vec![0.0; 3], &cfg, |x| Some(f(x)), |x| Ok(Probe::diagonal(f(x), grad(x), &precond))).unwrap();
        assert!(r.converged);
        assert!(r.loss < 1e-20);
        assert!(r.trace.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn start_at_optimum_takes_no_step() {
        let cfg = FitConfig::default();
        let r = descend(vec![1.0], &cfg, |x| Some((x[0] - 1.0).powi(2)), |x| {
            Ok(Probe::diagonal((x[0] - 1.0).powi(2), vec![2.0 * (x[0] - 1.0)], &[1.0]))
        })
        .unwrap();
        assert_eq!(r.accepted, 0);
        assert!(r.converged);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let r = descend(vec![0.0], &FitConfig::default(), |_| None, |_| Ok(Probe::diagonal(f64::NAN, vec![0.0], &[1.0])));
        assert!(matches!(r, Err(Error::NonFinite { iteration: 0 })));
    }
}
