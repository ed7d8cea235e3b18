use super::EmpiricalMeasure;

/// Order-2 Wasserstein distance between two empirical measures.
pub fn wasserstein2(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
    wasserstein2_squared(mu, nu).sqrt()
}

/// Squared order-2 Wasserstein distance.
///
/// Equal atom counts pair sorted atoms. Otherwise the quantile functions are
/// coupled on the merged partition `{i/n} ∪ {j/m}` of `[0,1]`, tracked in
/// integer units of `1/(n m)` so no breakpoint is rounded.
pub fn wasserstein2_squared(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
    let (a, b) = (mu.atoms(), nu.atoms());
    if a.len() == b.len() {
        let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        return s / a.len() as f64;
    }
    let (n, m) = (a.len() as u64, b.len() as u64);
    // each atom of mu carries m units, each atom of nu carries n units
    let (mut i, mut j) = (0usize, 0usize);
    let (mut left_a, mut left_b) = (m, n);
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let w = left_a.min(left_b);
        let d = a[i] - b[j];
        total += w as f64 * d * d;
        left_a -= w;
        left_b -= w;
        if left_a == 0 {
            i += 1;
            left_a = m;
        }
        if left_b == 0 {
            j += 1;
            left_b = n;
        }
    }
    total / (n as f64 * m as f64)
}

/// A large reference sample prepared for repeated distance queries.
///
/// Stores sorted atoms with prefix sums of `x` and `x^2`, so that the squared
/// distance from an `n`-atom measure costs `O(n)` instead of `O(n + R)`.
#[derive(Clone, Debug)]
pub struct QuantileTable {
    atoms: Vec<f64>,
    shift: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl QuantileTable {
    pub fn new(reference: &EmpiricalMeasure) -> Self {
        let atoms = reference.atoms().to_vec();
        // centring keeps the prefix sums well conditioned
        let shift = reference.mean();
        let mut s1 = Vec::with_capacity(atoms.len() + 1);
        let mut s2 = Vec::with_capacity(atoms.len() + 1);
        let (mut c1, mut c2) = (0.0, 0.0);
        s1.push(0.0);
        s2.push(0.0);
        for &x in &atoms {
            let y = x - shift;
            c1 += y;
            c2 += y * y;
            s1.push(c1);
            s2.push(c2);
        }
        Self { atoms, shift, s1, s2 }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Integrals of `Q` and `Q^2` (centred) over reference units `[0, p/q)`
    /// where the position is `p/q` reference atoms.
    fn cumulative(&self, whole: usize, num: u64, den: u64) -> (f64, f64) {
        let (mut c1, mut c2) = (self.s1[whole], self.s2[whole]);
        if num > 0 {
            let y = self.atoms[whole] - self.shift;
            let f = num as f64 / den as f64;
            c1 += f * y;
            c2 += f * y * y;
        }
        (c1, c2)
    }

    /// Squared distance between `mu` and the reference measure.
    pub fn distance_squared(&self, mu: &EmpiricalMeasure) -> f64 {
        let a = mu.atoms();
        let n = a.len() as u64;
        let r = self.atoms.len() as u64;
        if n == r {
            let s: f64 = a.iter().zip(&self.atoms).map(|(x, y)| (x - y) * (x - y)).sum();
            return s / n as f64;
        }
        let mut total = 0.0;
        let mut prev = (0.0, 0.0);
        for (i, &x) in a.iter().enumerate() {
            // atom i of mu covers reference positions [i r/n, (i+1) r/n)
            let pos = (i as u64 + 1) * r;
            let whole = (pos / n) as usize;
            let rem = pos % n;
            let cur = if whole == self.atoms.len() {
                (self.s1[whole], self.s2[whole])
            } else {
                self.cumulative(whole, rem, n)
            };
            let int1 = cur.0 - prev.0;
            let int2 = cur.1 - prev.1;
            let y = x - self.shift;
            let w = r as f64 / n as f64;
            total += y * y * w - 2.0 * y * int1 + int2;
            prev = cur;
        }
        (total / r as f64).max(0.0)
    }

    pub fn distance(&self, mu: &EmpiricalMeasure) -> f64 {
        self.distance_squared(mu).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::empirical;

    #[test]
    fn known_values() {
        let a = empirical(&[0.0, 1.0]).unwrap();
        let b = empirical(&[0.0, 2.0]).unwrap();
        assert!((wasserstein2(&a, &b) - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(wasserstein2(&a, &a), 0.0);
        let c = empirical(&[2.5, 3.5]).unwrap();
        assert!((wasserstein2(&a, &c) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn unequal_sizes() {
        // {0,1} vs {0,0.5,1}: mismatch on [1/3,1/2) and [1/2,2/3), each 0.25 * 1/6
        let a = empirical(&[0.0, 1.0]).unwrap();
        let b = empirical(&[0.0, 0.5, 1.0]).unwrap();
        let d2 = wasserstein2_squared(&a, &b);
        assert!((d2 - 1.0 / 12.0).abs() < 1e-15, "{d2}");
        assert_eq!(wasserstein2_squared(&a, &b), wasserstein2_squared(&b, &a));
        let single = empirical(&[0.5]).unwrap();
        assert!((wasserstein2_squared(&a, &single) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn table_agrees_with_merge() {
        let reference: Vec<f64> = (0..997).map(|i| ((i * 7919) % 997) as f64 / 97.0 - 3.0).collect();
        let table = QuantileTable::new(&empirical(&reference).unwrap());
        let full = empirical(&reference).unwrap();
        for n in [1usize, 2, 5, 64, 333, 997] {
            let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() * 4.0).collect();
            let mu = empirical(&xs).unwrap();
            let fast = table.distance_squared(&mu);
            let exact = wasserstein2_squared(&mu, &full);
            assert!((fast - exact).abs() < 1e-10 * (1.0 + exact), "n={n}: {fast} vs {exact}");
        }
    }
}
