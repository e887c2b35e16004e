/// Central finite differences: for each coordinate of `x`, evaluate
/// `f(x ± h·e_i)` and return (f(x+h) − f(x−h)) / 2h. `f` must treat its
/// argument as read-only input; `x` is restored between probes.
pub fn finite_diff_grad<F>(x: &mut [f64], mut f: F, h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let saved = x[i];
        x[i] = saved + h;
        let up = f(x);
        x[i] = saved - h;
        let down = f(x);
        x[i] = saved;
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Largest relative error between two gradient vectors, with an absolute
/// floor so near-zero entries compare by absolute difference.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_recovered() {
        // f(x) = Σ xᵢ², ∇f = 2x
        let mut x = vec![1.0, -2.0, 0.5];
        let g = finite_diff_grad(&mut x, |v| v.iter().map(|a| a * a).sum(), 1e-5);
        let expect = [2.0, -4.0, 1.0];
        assert!(max_rel_err(&expect, &g, 1e-8) < 1e-8);
        assert_eq!(x, vec![1.0, -2.0, 0.5], "probe must restore x");
    }

    #[test]
    fn rel_err_uses_absolute_floor_near_zero() {
        assert!(max_rel_err(&[0.0], &[1e-12], 1e-6) < 1e-5);
        assert!(max_rel_err(&[1.0], &[2.0], 1e-6) > 0.4);
    }
}
