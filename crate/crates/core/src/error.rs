use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("infeasible allocation: {0}")]
    Infeasible(Violation),
    #[error("instance too large for exhaustive search: K={k}, U={users} (limit K<=5, U<=3)")]
    TooLarge { k: usize, users: usize },
}

/// A constraint broken by an allocation, as reported by the feasibility audit.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// A subcarrier is used zero or several times within one slot.
    Coverage { slot: u8, index: usize, count: usize },
    /// Total power exceeds the budget.
    PowerBudget { used: f64, budget: f64 },
    /// A power value is negative or not finite.
    InvalidPower {
        what: &'static str,
        index: usize,
        value: f64,
    },
    /// A subcarrier or user index is outside the instance dimensions.
    OutOfRange { what: &'static str, value: usize },
    /// A relay-aided pair's power split does not attain the optimal pair rate.
    Split {
        k: usize,
        l: usize,
        achieved: f64,
        optimal: f64,
    },
    /// The allocation uses a structure the protocol forbids.
    Protocol(String),
}

impl Violation {
    /// Short name of the violated constraint.
    pub fn constraint(&self) -> &'static str {
        match self {
            Violation::Coverage { .. } => "ofdma-exclusivity",
            Violation::PowerBudget { .. } => "total-power",
            Violation::InvalidPower { .. } => "power-nonnegativity",
            Violation::OutOfRange { .. } => "index-range",
            Violation::Split { .. } => "pair-power-split",
            Violation::Protocol(_) => "protocol-structure",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] ", self.constraint())?;
        match self {
            Violation::Coverage { slot, index, count } => write!(
                f,
                "subcarrier {index} in slot {slot} is used {count} times (expected exactly once)"
            ),
            Violation::PowerBudget { used, budget } => {
                write!(f, "total power {used} exceeds budget {budget}")
            }
            Violation::InvalidPower { what, index, value } => {
                write!(f, "{what} power at subcarrier {index} is {value}")
            }
            Violation::OutOfRange { what, value } => write!(f, "{what} index {value} out of range"),
            Violation::Split {
                k,
                l,
                achieved,
                optimal,
            } => write!(
                f,
                "pair ({k},{l}) split reaches rate {achieved}, optimum for its sum power is {optimal}"
            ),
            Violation::Protocol(msg) => f.write_str(msg),
        }
    }
}
