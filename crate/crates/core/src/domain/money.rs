use std::fmt;
use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

/// Money in integer US cents. The budget ledger never touches floating point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cents(pub u64);

impl Cents {
    pub fn dollars_string(self) -> String {
        format!("${}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl fmt::Display for Cents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dollars_string())
    }
}

impl Add for Cents {
    type Output = Cents;

    fn add(self, rhs: Cents) -> Cents {
        Cents(self.0 + rhs.0)
    }
}

impl Mul<u64> for Cents {
    type Output = Cents;

    fn mul(self, votes: u64) -> Cents {
        Cents(self.0 * votes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_dollars() {
        assert_eq!(Cents(600).to_string(), "$6.00");
        assert_eq!(Cents(5).to_string(), "$0.05");
        assert_eq!((Cents(10) * 60).to_string(), "$6.00");
    }
}
