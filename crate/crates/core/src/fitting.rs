//! Small nonlinear least-squares helper shared by the Lorentzian and hyperbola fits.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// Sum of squared residuals at `params`.
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Levenberg–Marquardt on `model(params, x)` against `(xs, ys)`, with a
/// forward-difference Jacobian scaled by `steps`.
pub fn levenberg_marquardt<F>(
    model: F,
    xs: &[f64],
    ys: &[f64],
    init: &[f64],
    steps: &[f64],
    max_iter: usize,
) -> LmFit
where
    F: Fn(&[f64], f64) -> f64,
{
    let n = xs.len();
    let m = init.len();
    let residuals = |p: &[f64]| -> DVector<f64> {
        DVector::from_iterator(n, xs.iter().zip(ys).map(|(&x, &y)| y - model(p, x)))
    };
    let mut params = init.to_vec();
    let mut r = residuals(&params);
    let mut rss = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut jac = DMatrix::<f64>::zeros(n, m);
        for k in 0..m {
            let h = steps[k];
            let mut shifted = params.clone();
            shifted[k] += h;
            for (i, &x) in xs.iter().enumerate() {
                jac[(i, k)] = (model(&shifted, x) - model(&params, x)) / h;
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;

        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj.clone();
            for k in 0..m {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(delta) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = params.iter().zip(delta.iter()).map(|(p, d)| p + d).collect();
            let r_trial = residuals(&trial);
            let rss_trial = r_trial.norm_squared();
            if rss_trial.is_finite() && rss_trial <= rss {
                let rel = (rss - rss_trial) / rss.max(1e-300);
                let small_step = delta
                    .iter()
                    .zip(steps)
                    .all(|(d, s)| d.abs() < 1e-3 * s.abs());
                params = trial;
                r = r_trial;
                rss = rss_trial;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < 1e-14 || small_step {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved || converged || rss == 0.0 {
            converged = true;
            break;
        }
    }

    LmFit {
        params,
        rss,
        iterations,
        converged,
    }
}

/// Theil–Sen slope: median of all pairwise slopes with distinct abscissae.
pub fn theil_sen_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let mut slopes = Vec::new();
    for i in 0..xs.len() {
        for j in (i + 1)..xs.len() {
            let dx = xs[j] - xs[i];
            if dx.abs() > 1e-12 {
                slopes.push((ys[j] - ys[i]) / dx);
            }
        }
    }
    median(&mut slopes)
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exponential() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * (-1.3 * x).exp() + 0.5).collect();
        let fit = levenberg_marquardt(
            |p, x| p[0] * (-p[1] * x).exp() + p[2],
            &xs,
            &ys,
            &[1.0, 1.0, 0.0],
            &[1e-6, 1e-6, 1e-6],
            200,
        );
        assert!((fit.params[0] - 2.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.params[1] - 1.3).abs() < 1e-6);
        assert!((fit.params[2] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn theil_sen_ignores_outlier() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [0.0, 1.0, 2.0, 30.0, 4.0, 5.0];
        assert_eq!(theil_sen_slope(&xs, &ys), Some(1.0));
        assert_eq!(theil_sen_slope(&[1.0], &[2.0]), None);
        assert_eq!(median(&mut [3.0, 1.0, 2.0, 4.0]), Some(2.5));
    }
}
