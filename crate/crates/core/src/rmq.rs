//! Sparse-table range-minimum index.

/// O(1) range-minimum queries after O(N log N) preprocessing.
///
/// Ties resolve to the lowest index, which makes argmins reproducible.
#[derive(Debug, Clone)]
pub struct RangeMin {
    values: Vec<f64>,
    // table[k][i] = argmin of values[i .. i + 2^k]
    table: Vec<Vec<u32>>,
}

impl RangeMin {
    pub fn new(values: &[f64]) -> Self {
        assert!(values.len() < u32::MAX as usize, "sequence too long for the index");
        let n = values.len();
        let mut table = vec![(0..n as u32).collect::<Vec<_>>()];
        let mut width = 1;
        while 2 * width <= n {
            let prev = table.last().unwrap();
            let row: Vec<u32> = (0..=n - 2 * width)
                .map(|i| {
                    let (a, b) = (prev[i], prev[i + width]);
                    if values[b as usize] < values[a as usize] { b } else { a }
                })
                .collect();
            table.push(row);
            width *= 2;
        }
        Self { values: values.to_vec(), table }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of the minimum over the closed range between `i` and `j`.
    pub fn argmin(&self, i: usize, j: usize) -> usize {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        let span = hi - lo + 1;
        let k = (usize::BITS - 1 - span.leading_zeros()) as usize;
        let a = self.table[k][lo];
        let b = self.table[k][hi + 1 - (1 << k)];
        // on ties prefer the lower index
        if self.values[b as usize] < self.values[a as usize] { b as usize } else { a as usize }
    }

    pub fn min(&self, i: usize, j: usize) -> f64 {
        self.values[self.argmin(i, j)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_argmin(v: &[f64], i: usize, j: usize) -> usize {
        let (lo, hi) = (i.min(j), i.max(j));
        let mut best = lo;
        for k in lo..=hi {
            if v[k] < v[best] {
                best = k;
            }
        }
        best
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        let r = RangeMin::new(&[3.0, 1.0, 2.0, 1.0, 1.0]);
        assert_eq!(r.argmin(0, 4), 1);
        assert_eq!(r.argmin(2, 4), 3);
        assert_eq!(r.argmin(4, 2), 3);
        assert_eq!(r.min(0, 0), 3.0);
    }

    proptest! {
        #[test]
        fn matches_linear_scan(v in prop::collection::vec(-5i32..5, 1..70), a in 0usize..70, b in 0usize..70) {
            let v: Vec<f64> = v.into_iter().map(f64::from).collect();
            let (a, b) = (a % v.len(), b % v.len());
            let r = RangeMin::new(&v);
            prop_assert_eq!(r.argmin(a, b), naive_argmin(&v, a, b));
        }
    }
}
