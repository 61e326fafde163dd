/// Central-difference gradient of `f` at `point` with a common step.
pub fn finite_diff_grad<F>(f: F, point: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(step > 0.0, "finite difference step must be positive");
    let mut x = point.to_vec();
    (0..point.len())
        .map(|j| {
            let orig = x[j];
            x[j] = orig + step;
            let up = f(&x);
            x[j] = orig - step;
            let down = f(&x);
            x[j] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_is_exact() {
        let g = finite_diff_grad(|x| 2.0 * x[0] - 3.0 * x[1] + 0.5 * x[2], &[1.0, -2.0, 4.0], 0.5);
        assert_eq!(g, vec![2.0, -3.0, 0.5]);
    }

    #[test]
    fn error_is_second_order() {
        let f = |x: &[f64]| x[0].sin() * x[0].exp();
        let exact = |x: f64| x.exp() * (x.sin() + x.cos());
        let e1 = (finite_diff_grad(f, &[0.8], 1e-2)[0] - exact(0.8)).abs();
        let e2 = (finite_diff_grad(f, &[0.8], 5e-3)[0] - exact(0.8)).abs();
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }
}
