//! Deterministic four-action Gridworld with a uniformly random policy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Mdp, Policy};

/// Action indices.
pub const NORTH: usize = 0;
pub const SOUTH: usize = 1;
pub const EAST: usize = 2;
pub const WEST: usize = 3;

/// Grid layout and rewards. Cell `(x, y)` is state `y * width + x`, with
/// `y = 0` the top row. Every transition earns `step_reward` except
/// transitions that land on the goal cell, which earn `goal_reward`. The goal
/// is not absorbing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Gridworld {
    pub width: usize,
    pub height: usize,
    /// Goal cell `(x, y)`; defaults to the top-right corner.
    pub goal: Option<(usize, usize)>,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub gamma: f64,
}

impl Default for Gridworld {
    fn default() -> Self {
        Self { width: 5, height: 5, goal: None, step_reward: -1.0, goal_reward: 0.0, gamma: 0.9 }
    }
}

impl Gridworld {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, ..Self::default() }
    }

    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    pub fn goal_state(&self) -> usize {
        let (x, y) = self.goal.unwrap_or((self.width.saturating_sub(1), 0));
        y * self.width + x
    }

    /// Successor of `s` under action `a`; moves off the grid leave the agent in place.
    pub fn successor(&self, s: usize, a: usize) -> usize {
        let (x, y) = (s % self.width, s / self.width);
        let (nx, ny) = match a {
            NORTH if y > 0 => (x, y - 1),
            SOUTH if y + 1 < self.height => (x, y + 1),
            EAST if x + 1 < self.width => (x + 1, y),
            WEST if x > 0 => (x - 1, y),
            _ => (x, y),
        };
        ny * self.width + nx
    }

    pub fn mdp(&self) -> Result<Mdp> {
        if self.width == 0 || self.height == 0 || self.n_states() < 2 {
            return Err(Error::InvalidParameter(format!(
                "gridworld needs at least two cells, got {}x{}",
                self.width, self.height
            )));
        }
        if let Some((x, y)) = self.goal {
            if x >= self.width || y >= self.height {
                return Err(Error::InvalidParameter(format!("goal ({x}, {y}) lies outside the grid")));
            }
        }
        let goal = self.goal_state();
        Mdp::from_fn(
            self.n_states(),
            4,
            self.gamma,
            |s, a, s2| if self.successor(s, a) == s2 { 1.0 } else { 0.0 },
            |_, _, s2| if s2 == goal { self.goal_reward } else { self.step_reward },
        )
    }

    /// `mu(a|s) = 1/4` everywhere.
    pub fn uniform_policy(&self) -> Policy {
        Policy::uniform(self.n_states(), 4)
    }
}
