//! Integer-order Bessel functions of the first kind, `J_n(x)` for real `x`.
//!
//! Orders `0..=n_max` are produced together by Miller's backward recurrence
//! normalized with `J_0 + 2 sum J_2k = 1`. Small arguments use the power
//! series directly.

/// Below this magnitude the power series is used instead of the recurrence.
const SERIES_CUTOFF: f64 = 1.0;

/// `J_0(x), J_1(x), ..., J_{n_max}(x)`.
pub fn bessel_j_orders(x: f64, n_max: usize) -> Vec<f64> {
    if x == 0.0 {
        let mut out = vec![0.0; n_max + 1];
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let mut out = if ax < SERIES_CUTOFF {
        (0..=n_max).map(|n| power_series(ax, n)).collect()
    } else {
        miller(ax, n_max)
    };
    if x < 0.0 {
        // J_n(-x) = (-1)^n J_n(x)
        for (n, v) in out.iter_mut().enumerate() {
            if n % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

/// `J_n(x)` for any integer order, via `J_{-n} = (-1)^n J_n`.
pub fn bessel_j(n: i64, x: f64) -> f64 {
    let m = n.unsigned_abs() as usize;
    let v = bessel_j_orders(x, m)[m];
    if n < 0 && m % 2 == 1 {
        -v
    } else {
        v
    }
}

fn power_series(x: f64, n: usize) -> f64 {
    let half = 0.5 * x;
    // (x/2)^n / n!
    let mut term = 1.0;
    for i in 1..=n {
        term *= half / i as f64;
    }
    let q = half * half;
    let mut sum = term;
    let mut s = 1usize;
    loop {
        term *= -q / (s as f64 * (s + n) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() || s > 200 {
            break;
        }
        s += 1;
    }
    sum
}

fn miller(x: f64, n_max: usize) -> Vec<f64> {
    let scale = (n_max as f64).max(x);
    let mut start = scale as usize + 20 + (40.0 * scale).sqrt() as usize;
    if start % 2 == 1 {
        start += 1;
    }
    let mut out = vec![0.0; n_max + 1];
    let two_over_x = 2.0 / x;
    let mut j_next = 0.0;
    let mut j_curr = 1e-30;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let j_prev = k as f64 * two_over_x * j_curr - j_next;
        j_next = j_curr;
        j_curr = j_prev;
        // j_curr now holds the unnormalized J_{k-1}
        if k - 1 <= n_max {
            out[k - 1] = j_curr;
        }
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * j_curr;
        }
        if j_curr.abs() > 1e250 {
            j_curr *= 1e-250;
            j_next *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    // J_0 enters the normalization sum once.
    norm += j_curr;
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from standard tables.
    #[test]
    fn table_values() {
        let cases = [
            (0, 1.0, 0.765_197_686_557_966_6),
            (1, 1.0, 0.440_050_585_744_933_5),
            (0, 2.404_825_557_695_773, 0.0),
            (2, 5.0, 0.046_565_116_277_752_2),
            (5, 10.0, -0.234_061_528_186_793_6),
            (10, 10.0, 0.207_486_106_633_358_9),
            (0, 0.5, 0.938_469_807_240_813),
            (3, 0.5, 0.002_563_729_994_587_244),
        ];
        for (n, x, want) in cases {
            let got = bessel_j(n, x);
            assert!((got - want).abs() < 1e-13, "J_{n}({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn negative_order_and_argument() {
        assert!((bessel_j(-3, 2.0) + bessel_j(3, 2.0)).abs() < 1e-15);
        assert!((bessel_j(-2, 2.0) - bessel_j(2, 2.0)).abs() < 1e-15);
        assert!((bessel_j(3, -2.0) + bessel_j(3, 2.0)).abs() < 1e-15);
    }

    #[test]
    fn high_orders_decay() {
        let v = bessel_j_orders(3.0, 40);
        assert!(v[40].abs() < 1e-30);
        assert!(v[40] >= 0.0);
    }

    #[test]
    fn addition_identity() {
        for &x in &[0.3, 1.7, 8.0, 25.0, 60.0] {
            let n_max = (x as usize) + 60;
            let v = bessel_j_orders(x, n_max);
            let sum: f64 = v[0] * v[0] + 2.0 * v[1..].iter().map(|j| j * j).sum::<f64>();
            assert!((sum - 1.0).abs() < 1e-13, "x={x}: {sum}");
        }
    }
}
