use serde::{Deserialize, Serialize};

use super::PlaneError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rail {
    V5,
    V12,
}

impl Rail {
    pub fn volts(self) -> f64 {
        match self {
            Rail::V5 => 5.0,
            Rail::V12 => 12.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxGrant {
    pub granted_w: f64,
    pub total_w: f64,
    pub remaining_w: f64,
}

/// Shared power budget of the auxiliary rails. Requests are granted as a
/// batch or not at all.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxBudget {
    budget_w: f64,
    rails: Vec<Rail>,
    allocated_w: f64,
}

impl AuxBudget {
    pub fn new(budget_w: f64, rails: Vec<Rail>) -> Self {
        Self {
            budget_w,
            rails,
            allocated_w: 0.0,
        }
    }

    pub fn allocated_w(&self) -> f64 {
        self.allocated_w
    }

    pub fn remaining_w(&self) -> f64 {
        self.budget_w - self.allocated_w
    }

    pub fn request(&mut self, requests: &[(Rail, f64)]) -> Result<AuxGrant, PlaneError> {
        let mut batch = 0.0;
        for &(rail, watts) in requests {
            if !(watts.is_finite() && watts >= 0.0) {
                return Err(PlaneError::InvalidRequest(watts));
            }
            if !self.rails.contains(&rail) {
                return Err(PlaneError::Config(format!("rail {rail:?} not provided")));
            }
            batch += watts;
        }
        if self.allocated_w + batch > self.budget_w {
            return Err(PlaneError::OverBudget {
                requested_w: batch,
                remaining_w: self.remaining_w(),
            });
        }
        self.allocated_w += batch;
        Ok(AuxGrant {
            granted_w: batch,
            total_w: self.allocated_w,
            remaining_w: self.remaining_w(),
        })
    }

    pub fn release(&mut self, watts: f64) {
        self.allocated_w = (self.allocated_w - watts).max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget() -> AuxBudget {
        AuxBudget::new(50.0, vec![Rail::V5, Rail::V12])
    }

    #[test]
    fn grants_within_budget_then_rejects_overflow() {
        let mut b = budget();
        let g = b.request(&[(Rail::V5, 20.0), (Rail::V12, 25.0)]).unwrap();
        assert_eq!(g.total_w, 45.0);
        assert_eq!(
            b.request(&[(Rail::V12, 10.0)]),
            Err(PlaneError::OverBudget {
                requested_w: 10.0,
                remaining_w: 5.0
            })
        );
        assert_eq!(b.allocated_w(), 45.0);
    }

    #[test]
    fn empty_request_is_granted() {
        let mut b = budget();
        let g = b.request(&[]).unwrap();
        assert_eq!(g.granted_w, 0.0);
        assert_eq!(g.remaining_w, 50.0);
    }

    #[test]
    fn exact_fill_and_release() {
        let mut b = budget();
        b.request(&[(Rail::V5, 50.0)]).unwrap();
        assert_eq!(b.remaining_w(), 0.0);
        b.release(20.0);
        assert!(b.request(&[(Rail::V12, 20.0)]).is_ok());
    }

    #[test]
    fn negative_request_rejected() {
        assert_eq!(
            budget().request(&[(Rail::V5, -1.0)]),
            Err(PlaneError::InvalidRequest(-1.0))
        );
    }
}
