use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quality {
    H,
    L,
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quality::H => "H",
            Quality::L => "L",
        })
    }
}

/// System state after the period's arrivals: waiting supply counts and the
/// type of the demand agent present, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub x_h: u32,
    pub x_l: u32,
    pub demand: Option<Quality>,
}

impl State {
    pub const fn new(x_h: u32, x_l: u32, demand: Option<Quality>) -> Self {
        Self { x_h, x_l, demand }
    }

    /// Builds a state from the indicator pair `(y_H, y_L)`; `None` if both are set.
    pub fn from_indicators(x_h: u32, x_l: u32, y_h: u8, y_l: u8) -> Option<Self> {
        let demand = match (y_h, y_l) {
            (0, 0) => None,
            (1, 0) => Some(Quality::H),
            (0, 1) => Some(Quality::L),
            _ => return None,
        };
        Some(Self { x_h, x_l, demand })
    }

    pub fn y_h(&self) -> u8 {
        u8::from(self.demand == Some(Quality::H))
    }

    pub fn y_l(&self) -> u8 {
        u8::from(self.demand == Some(Quality::L))
    }

    pub fn total(&self) -> u32 {
        self.x_h + self.x_l
    }

    pub fn supply(&self, q: Quality) -> u32 {
        match q {
            Quality::H => self.x_h,
            Quality::L => self.x_l,
        }
    }

    pub fn is_legal(&self, a: Action) -> bool {
        match a {
            Action::NoMatch => true,
            Action::Match(i, j) => self.supply(i) >= 1 && self.demand == Some(j),
        }
    }

    /// Supply counts after `a` is carried out. Panics on an illegal action.
    pub fn after(&self, a: Action) -> (u32, u32) {
        assert!(self.is_legal(a), "illegal action {a} in {self}");
        match a {
            Action::NoMatch => (self.x_h, self.x_l),
            Action::Match(Quality::H, _) => (self.x_h - 1, self.x_l),
            Action::Match(Quality::L, _) => (self.x_h, self.x_l - 1),
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x_h, self.x_l, self.y_h(), self.y_l())
    }
}

/// `Match(i, j)` pairs an `i`-type supply agent with the `j`-type demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    NoMatch,
    Match(Quality, Quality),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::NoMatch => f.write_str("NoMatch"),
            Action::Match(i, j) => write!(f, "Match({i},{j})"),
        }
    }
}

/// A total matching rule over post-arrival states.
pub trait MatchRule {
    fn decide(&self, state: &State) -> Action;
}

impl<R: MatchRule + ?Sized> MatchRule for &R {
    fn decide(&self, state: &State) -> Action {
        (**self).decide(state)
    }
}

/// Centralized threshold-`k` policy: greedy for H demand, and for L demand
/// an (L,L) match if possible, otherwise (H,L) only when more than `k` H
/// supply agents are waiting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdPolicy {
    pub k: u32,
}

impl MatchRule for ThresholdPolicy {
    fn decide(&self, s: &State) -> Action {
        use Quality::{H, L};
        match s.demand {
            None => Action::NoMatch,
            Some(H) if s.x_h > 0 => Action::Match(H, H),
            Some(H) if s.x_l > 0 => Action::Match(L, H),
            Some(H) => Action::NoMatch,
            Some(L) if s.x_l > 0 => Action::Match(L, L),
            Some(L) if s.x_h > self.k => Action::Match(H, L),
            Some(L) => Action::NoMatch,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Quality::{H, L};

    #[test]
    fn indicators() {
        assert_eq!(State::from_indicators(1, 2, 0, 1), Some(State::new(1, 2, Some(L))));
        assert_eq!(State::from_indicators(1, 2, 1, 1), None);
        let s = State::new(3, 0, Some(H));
        assert_eq!((s.y_h(), s.y_l()), (1, 0));
        assert_eq!(s.to_string(), "(3, 0, 1, 0)");
    }

    #[test]
    fn legality_and_successors() {
        let s = State::new(1, 0, Some(L));
        assert!(s.is_legal(Action::Match(H, L)));
        assert!(!s.is_legal(Action::Match(L, L)));
        assert!(!s.is_legal(Action::Match(H, H)));
        assert_eq!(s.after(Action::Match(H, L)), (0, 0));
        assert_eq!(s.after(Action::NoMatch), (1, 0));
    }

    #[test]
    #[should_panic(expected = "illegal action")]
    fn illegal_action_panics() {
        State::new(0, 0, Some(H)).after(Action::Match(H, H));
    }

    #[test]
    fn threshold_policy_rules() {
        let pi = ThresholdPolicy { k: 2 };
        assert_eq!(pi.decide(&State::new(2, 0, Some(L))), Action::NoMatch);
        assert_eq!(pi.decide(&State::new(3, 0, Some(L))), Action::Match(H, L));
        assert_eq!(pi.decide(&State::new(3, 1, Some(L))), Action::Match(L, L));
        assert_eq!(pi.decide(&State::new(0, 1, Some(H))), Action::Match(L, H));
        assert_eq!(pi.decide(&State::new(1, 1, Some(H))), Action::Match(H, H));
    }
}
