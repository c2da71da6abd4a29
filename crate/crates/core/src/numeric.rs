//! Small numerical helpers shared by the evaluators.

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Exact binomial coefficient; zero when `k < 0`, `n < 0` or `k > n`.
pub fn binomial_exact(n: i64, k: i64) -> i128 {
    if n < 0 || k < 0 || k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: i128 = 1;
    for step in 0..k {
        acc = acc * (n - step) as i128 / (step + 1) as i128;
    }
    acc
}

/// Table of `n!` and `sqrt(n!)` as floats for `n <= max`.
#[derive(Debug, Clone)]
pub struct FactorialTable {
    fact: Vec<f64>,
    sqrt_fact: Vec<f64>,
}

impl FactorialTable {
    pub fn new(max: usize) -> Self {
        let mut fact = Vec::with_capacity(max + 1);
        let mut acc = 1.0_f64;
        fact.push(acc);
        for n in 1..=max {
            acc *= n as f64;
            fact.push(acc);
        }
        let sqrt_fact = fact.iter().map(|f| f.sqrt()).collect();
        Self { fact, sqrt_fact }
    }

    pub fn fact(&self, n: usize) -> f64 {
        self.fact[n]
    }

    pub fn sqrt_fact(&self, n: usize) -> f64 {
        self.sqrt_fact[n]
    }
}

/// Binomial coefficient as `f64` for small arguments.
pub fn binomial(n: usize, k: usize) -> f64 {
    binomial_exact(n as i64, k as i64) as f64
}
