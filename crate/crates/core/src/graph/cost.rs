use std::ops::AddAssign;

/// Unit-cost operation counter: every multiplication, addition and sign test
/// costs one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CostMeter {
    pub multiplications: u64,
    pub additions: u64,
    pub branch_tests: u64,
}

impl CostMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mul(&mut self, n: u64) {
        self.multiplications += n;
    }

    pub fn add(&mut self, n: u64) {
        self.additions += n;
    }

    pub fn test(&mut self, n: u64) {
        self.branch_tests += n;
    }

    pub fn total(&self) -> u64 {
        self.multiplications + self.additions + self.branch_tests
    }
}

impl AddAssign for CostMeter {
    fn add_assign(&mut self, rhs: Self) {
        self.multiplications += rhs.multiplications;
        self.additions += rhs.additions;
        self.branch_tests += rhs.branch_tests;
    }
}
