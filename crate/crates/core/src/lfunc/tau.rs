//! Ramanujan tau via the logarithmic-derivative recursion of
//! `Delta = q prod (1 - q^n)^24`:
//!
//! `(n - 1) tau(n) = -24 sum_{k=1}^{n-1} sigma_1(k) tau(n - k)`.
//!
//! Exact in `i128` well past n = 10^5.

/// `tau(n)` for `0 <= n <= limit` (`tau(0) = 0`).
pub fn tau_table(limit: usize) -> Vec<i128> {
    let mut sigma = vec![0i128; limit + 1];
    for d in 1..=limit {
        let mut m = d;
        while m <= limit {
            sigma[m] += d as i128;
            m += d;
        }
    }
    let mut tau = vec![0i128; limit + 1];
    if limit >= 1 {
        tau[1] = 1;
    }
    for n in 2..=limit {
        let mut acc = 0i128;
        for k in 1..n {
            acc += sigma[k] * tau[n - k];
        }
        tau[n] = -24 * acc / (n as i128 - 1);
    }
    tau
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        let t = tau_table(12);
        let expected = [
            0i128, 1, -24, 252, -1472, 4830, -6048, -16744, 84480, -113643, -115920, 534612,
            -370944,
        ];
        assert_eq!(t, expected);
    }

    #[test]
    fn hecke_relations() {
        let t = tau_table(600);
        // multiplicative on coprime arguments
        assert_eq!(t[6], t[2] * t[3]);
        assert_eq!(t[35], t[5] * t[7]);
        // tau(p^2) = tau(p)^2 - p^11
        for p in [2i128, 3, 5, 7, 11, 13, 17, 19, 23] {
            let p2 = (p * p) as usize;
            assert_eq!(t[p2], t[p as usize].pow(2) - p.pow(11));
        }
        // Deligne bound |tau(p)| <= 2 p^{11/2}
        for p in [101usize, 211, 307, 401, 503, 599] {
            assert!((t[p] as f64).abs() <= 2.0 * (p as f64).powf(5.5));
        }
    }
}
