//! Composite Simpson quadrature on uniform grids, including a cumulative
//! variant that returns the running integral at every node.

/// Composite Simpson integral of uniformly spaced samples with spacing `h`.
///
/// Falls back to trapezoid on the final panel when the sample count is even.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        _ => {
            let pairs = (n - 1) / 2;
            let mut acc = 0.0;
            for p in 0..pairs {
                let i = 2 * p;
                acc += h / 3.0 * (values[i] + 4.0 * values[i + 1] + values[i + 2]);
            }
            if (n - 1) % 2 == 1 {
                // Closing panel via the quadratic through the last three nodes.
                acc += h / 12.0 * (-values[n - 3] + 8.0 * values[n - 2] + 5.0 * values[n - 1]);
            }
            acc
        }
    }
}

/// Running integral at every node of uniformly spaced samples, using local
/// cubic fits per interval (fourth-order accurate cumulative quadrature).
pub fn cumulative_simpson(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * h * (values[0] + values[1]);
        return out;
    }
    if n == 3 {
        out[1] = h / 12.0 * (5.0 * values[0] + 8.0 * values[1] - values[2]);
        out[2] = out[1] + h / 12.0 * (-values[0] + 8.0 * values[1] + 5.0 * values[2]);
        return out;
    }
    for i in 1..n {
        // Integral over [x_{i-1}, x_i] of the cubic through four nearby nodes.
        let inc = if i == 1 {
            h / 24.0 * (9.0 * values[0] + 19.0 * values[1] - 5.0 * values[2] + values[3])
        } else if i < n - 1 {
            h / 24.0
                * (-values[i - 2] + 13.0 * values[i - 1] + 13.0 * values[i] - values[i + 1])
        } else {
            h / 24.0
                * (values[n - 4] - 5.0 * values[n - 3] + 19.0 * values[n - 2]
                    + 9.0 * values[n - 1])
        };
        out[i] = out[i - 1] + inc;
    }
    out
}

/// Uniform grid of `n` points spanning `[a, b]` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|i| a + h * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simpson_polynomials_exact() {
        // Simpson is exact for cubics.
        let xs = linspace(0.0, 2.0, 201);
        let h = xs[1] - xs[0];
        let f: Vec<f64> = xs.iter().map(|x| x.powi(3) - x + 2.0).collect();
        assert_relative_eq!(simpson(&f, h), 4.0 - 2.0 + 4.0, epsilon = 1e-12);
    }

    #[test]
    fn simpson_even_sample_count() {
        let xs = linspace(0.0, 1.0, 100);
        let h = xs[1] - xs[0];
        let f: Vec<f64> = xs.iter().map(|x| (std::f64::consts::PI * x).sin()).collect();
        assert_relative_eq!(simpson(&f, h), 2.0 / std::f64::consts::PI, epsilon = 1e-7);
    }

    #[test]
    fn cumulative_matches_antiderivative() {
        let xs = linspace(0.0, 3.0, 301);
        let h = xs[1] - xs[0];
        let f: Vec<f64> = xs.iter().map(|x| x.cos()).collect();
        let c = cumulative_simpson(&f, h);
        for (x, ci) in xs.iter().zip(&c) {
            assert_relative_eq!(*ci, x.sin(), epsilon = 1e-8);
        }
    }

    #[test]
    fn cumulative_total_matches_analytic() {
        let xs = linspace(0.0, 1.0, 201);
        let h = xs[1] - xs[0];
        let f: Vec<f64> = xs.iter().map(|x| (3.0 * x).exp()).collect();
        let c = cumulative_simpson(&f, h);
        let exact = (3.0f64.exp() - 1.0) / 3.0;
        assert_relative_eq!(*c.last().unwrap(), exact, epsilon = 1e-8);
        assert_relative_eq!(simpson(&f, h), exact, epsilon = 1e-8);
    }

    #[test]
    fn cumulative_exact_for_cubics() {
        let xs = linspace(0.0, 2.0, 9);
        let h = xs[1] - xs[0];
        let f: Vec<f64> = xs.iter().map(|x| x.powi(3) - 2.0 * x * x + 1.0).collect();
        let c = cumulative_simpson(&f, h);
        for (x, ci) in xs.iter().zip(&c) {
            let exact = x.powi(4) / 4.0 - 2.0 * x.powi(3) / 3.0 + x;
            assert_relative_eq!(*ci, exact, epsilon = 1e-12);
        }
    }
}
