//! Constant-coefficient tridiagonal systems with a per-row diagonal shift,
//! as produced by one implicit step on a single variance slice.

/// Solves `lower·u[i-1] + (diag + extra[i])·u[i] + upper·u[i+1] = rhs[i]`
/// for `i = 0..n`, with `u[-1]` and `u[n]` already moved into `rhs`.
pub fn solve_shifted(lower: f64, diag: f64, upper: f64, extra: &[f64], rhs: &[f64], out: &mut [f64], work: &mut Vec<f64>) {
    let n = rhs.len();
    debug_assert!(extra.len() == n && out.len() == n);
    work.clear();
    work.resize(n, 0.0);
    let mut b = diag + extra[0];
    work[0] = upper / b;
    out[0] = rhs[0] / b;
    for i in 1..n {
        b = diag + extra[i] - lower * work[i - 1];
        work[i] = upper / b;
        out[i] = (rhs[i] - lower * out[i - 1]) / b;
    }
    for i in (0..n - 1).rev() {
        out[i] -= work[i] * out[i + 1];
    }
}

/// Projected SOR for `A u ≥ rhs, u ≥ floor, (A u − rhs)·(u − floor) = 0`
/// with the constant tridiagonal `A`. Returns the sweeps used and the
/// final update norm.
pub fn psor(
    lower: f64,
    diag: f64,
    upper: f64,
    rhs: &[f64],
    floor: &[f64],
    u: &mut [f64],
    omega: f64,
    tol: f64,
    max_sweeps: usize,
) -> (usize, f64, bool) {
    let n = rhs.len();
    let mut change = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        change = 0.0f64;
        for i in 0..n {
            let left = if i > 0 { lower * u[i - 1] } else { 0.0 };
            let right = if i + 1 < n { upper * u[i + 1] } else { 0.0 };
            let gs = (rhs[i] - left - right) / diag;
            let next = (u[i] + omega * (gs - u[i])).max(floor[i]);
            change = change.max((next - u[i]).abs());
            u[i] = next;
        }
        if change <= tol {
            return (sweep, change, true);
        }
    }
    (max_sweeps, change, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_dense() {
        let n = 6;
        let (l, d, u) = (-1.0, 4.0, -2.0);
        let extra = [0.0, 1.0, 0.0, 0.5, 0.0, 3.0];
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                let mut s = (d + extra[i]) * x_true[i];
                if i > 0 {
                    s += l * x_true[i - 1];
                }
                if i + 1 < n {
                    s += u * x_true[i + 1];
                }
                s
            })
            .collect();
        let mut out = vec![0.0; n];
        solve_shifted(l, d, u, &extra, &rhs, &mut out, &mut Vec::new());
        for (a, b) in out.iter().zip(&x_true) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn psor_respects_floor_and_complementarity() {
        let n = 20;
        let (l, d, u) = (-1.0, 2.2, -1.0);
        let rhs = vec![0.01; n];
        let floor: Vec<f64> = (0..n).map(|i| if i < 5 { 1.0 - 0.1 * i as f64 } else { 0.0 }).collect();
        let mut sol = floor.clone();
        let (_, _, ok) = psor(l, d, u, &rhs, &floor, &mut sol, 1.3, 1e-13, 10_000);
        assert!(ok);
        for i in 0..n {
            assert!(sol[i] >= floor[i]);
            let left = if i > 0 { l * sol[i - 1] } else { 0.0 };
            let right = if i + 1 < n { u * sol[i + 1] } else { 0.0 };
            let resid = left + d * sol[i] + right - rhs[i];
            assert!(resid >= -1e-10);
            assert!((resid * (sol[i] - floor[i])).abs() < 1e-10);
        }
    }
}
