//! Non-increasing step functions of memory and their intersection with a
//! rising preference line.
//!
//! Both trade-off analyses (the provider choosing a reward against users'
//! memory, and users choosing memory against the provider's price) plot a
//! Lagrange multiplier against memory. The multiplier is piecewise constant:
//! `level_i` on `[Z_{i-1}, Z_i)`, and zero past the last step.

/// One flat piece of a staircase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub level: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Staircase {
    steps: Vec<Step>,
}

/// Where a rising line first meets the staircase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub memory: f64,
    pub level: f64,
    /// True when the line passes through a drop between two levels.
    pub vertical: bool,
}

impl Staircase {
    /// Sorts levels in descending order and merges equal levels.
    /// Zero-width steps are dropped.
    pub fn from_levels(levels: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut raw: Vec<Step> = levels
            .into_iter()
            .filter(|&(_, w)| w > 0.0)
            .map(|(level, width)| Step { level, width })
            .collect();
        raw.sort_by(|a, b| b.level.total_cmp(&a.level));
        let mut steps: Vec<Step> = Vec::with_capacity(raw.len());
        for s in raw {
            match steps.last_mut() {
                Some(last) if last.level == s.level => last.width += s.width,
                _ => steps.push(s),
            }
        }
        Staircase { steps }
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn total_width(&self) -> f64 {
        self.steps.iter().map(|s| s.width).sum()
    }

    /// Multiplier at memory `z`.
    pub fn value_at(&self, z: f64) -> f64 {
        let mut start = 0.0;
        for s in &self.steps {
            if z < start + s.width {
                return s.level;
            }
            start += s.width;
        }
        0.0
    }

    /// `(memory, level)` corner points, left to right, ending on the drop to zero.
    pub fn corners(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(2 * self.steps.len() + 1);
        let mut z = 0.0;
        for s in &self.steps {
            out.push((z, s.level));
            z += s.width;
            out.push((z, s.level));
        }
        out.push((z, 0.0));
        out
    }

    /// Smallest memory at which `slope * z` reaches the staircase.
    ///
    /// On a vertical drop the line's own value at the drop is reported.
    pub fn intersect_rising_line(&self, slope: f64) -> Crossing {
        debug_assert!(slope > 0.0);
        let mut start = 0.0;
        for s in &self.steps {
            let line_here = slope * start;
            if line_here >= s.level {
                return Crossing {
                    memory: start,
                    level: line_here,
                    vertical: true,
                };
            }
            let meet = s.level / slope;
            if meet < start + s.width {
                return Crossing {
                    memory: meet,
                    level: s.level,
                    vertical: false,
                };
            }
            start += s.width;
        }
        Crossing {
            memory: start,
            level: slope * start,
            vertical: true,
        }
    }
}
