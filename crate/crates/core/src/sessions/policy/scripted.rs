use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Observation, OperatorInput, Policy, VirtualTracker};
use crate::geometry::{Rot3, Vec3};
use crate::haptics::FINGER_COUNT;
use crate::retargeting::{Side, WristSample};
use crate::sessions::config::ConfigError;

/// Wrist held at home; all fingers close at a fixed rate up to `max_bend`,
/// hold briefly, and the policy finishes.
#[derive(Debug, Clone)]
pub struct ClosureRamp {
    side: Side,
    tracker: VirtualTracker,
    rate: f64,
    max_bend: f64,
    finished: Option<f64>,
}

const RAMP_HOLD: f64 = 0.2;

impl ClosureRamp {
    pub fn new(side: Side, tracker: VirtualTracker, rate: f64, max_bend: f64) -> Self {
        ClosureRamp {
            side,
            tracker,
            rate,
            max_bend,
            finished: None,
        }
    }
}

impl Policy for ClosureRamp {
    fn step(&mut self, obs: &Observation<'_>) -> Vec<OperatorInput> {
        let bend = (self.rate * obs.t).min(self.max_bend);
        if self.finished.is_none() && obs.t >= self.max_bend / self.rate + RAMP_HOLD {
            self.finished = Some(obs.t);
        }
        vec![OperatorInput {
            side: self.side,
            wrist: self.tracker.at_home(self.side, obs.t_us),
            glove_bend: [bend; FINGER_COUNT],
            glove_split: 0.0,
        }]
    }

    fn finished_at(&self) -> Option<f64> {
        self.finished
    }
}

/// One CSV row of a recorded operator trajectory: tracker pose (position and
/// row-major rotation) and glove reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t_s: f64,
    pub side: Side,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
    pub r00: f64,
    pub r01: f64,
    pub r02: f64,
    pub r10: f64,
    pub r11: f64,
    pub r12: f64,
    pub r20: f64,
    pub r21: f64,
    pub r22: f64,
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    pub split: f64,
}

impl TrajectoryRow {
    fn rotation(&self) -> Result<Rot3, ConfigError> {
        Rot3::from_rows([
            [self.r00, self.r01, self.r02],
            [self.r10, self.r11, self.r12],
            [self.r20, self.r21, self.r22],
        ])
        .map_err(|e| ConfigError::Invalid(format!("trajectory row at t={}: {e}", self.t_s)))
    }
}

/// Plays back recorded tracker samples: at each tick, the latest row per side
/// whose time has come. Finishes after the last row.
#[derive(Debug, Clone)]
pub struct TrajectoryReplay {
    rows: Vec<(TrajectoryRow, Rot3)>,
    next: usize,
    current: [Option<usize>; 2],
    end: f64,
    finished: Option<f64>,
}

impl TrajectoryReplay {
    pub fn from_rows(rows: Vec<TrajectoryRow>) -> Result<Self, ConfigError> {
        if rows.is_empty() {
            return Err(ConfigError::Invalid("trajectory has no rows".into()));
        }
        if rows.windows(2).any(|w| w[1].t_s < w[0].t_s) {
            return Err(ConfigError::Invalid("trajectory times must not decrease".into()));
        }
        let end = rows.last().map(|r| r.t_s).unwrap_or(0.0);
        let rows = rows
            .into_iter()
            .map(|r| r.rotation().map(|rot| (r, rot)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TrajectoryReplay {
            rows,
            next: 0,
            current: [None; 2],
            end,
            finished: None,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        let rows = reader
            .deserialize()
            .collect::<Result<Vec<TrajectoryRow>, _>>()
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        Self::from_rows(rows)
    }
}

impl Policy for TrajectoryReplay {
    fn step(&mut self, obs: &Observation<'_>) -> Vec<OperatorInput> {
        while self.next < self.rows.len() && self.rows[self.next].0.t_s <= obs.t + 1e-9 {
            let side = self.rows[self.next].0.side;
            self.current[side.index()] = Some(self.next);
            self.next += 1;
        }
        if self.finished.is_none() && obs.t >= self.end {
            self.finished = Some(obs.t);
        }
        self.current
            .iter()
            .flatten()
            .map(|&i| {
                let (r, rot) = &self.rows[i];
                OperatorInput {
                    side: r.side,
                    wrist: WristSample {
                        p_now: Vec3::new(r.px, r.py, r.pz),
                        r_gn: *rot,
                        t_us: obs.t_us,
                    },
                    glove_bend: [r.b0, r.b1, r.b2, r.b3, r.b4],
                    glove_split: r.split,
                }
            })
            .collect()
    }

    fn finished_at(&self) -> Option<f64> {
        self.finished
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retargeting::RetargetConfig;
    use crate::sessions::policy::SceneHistory;

    fn obs(t: f64, scenes: &SceneHistory) -> Observation<'_> {
        Observation {
            t,
            t_us: (t * 1e6) as u64,
            felt: [None; 2],
            scenes,
        }
    }

    #[test]
    fn ramp_saturates_and_finishes() {
        let h = SceneHistory::default();
        let mut p = ClosureRamp::new(Side::Right, VirtualTracker::new(RetargetConfig::default()), 0.1, 0.6);
        assert_eq!(p.step(&obs(1.0, &h))[0].glove_bend[2], 0.1);
        assert!(p.finished_at().is_none());
        assert_eq!(p.step(&obs(6.1, &h))[0].glove_bend[0], 0.6);
        assert_eq!(p.step(&obs(6.3, &h))[0].glove_bend[0], 0.6);
        assert_eq!(p.finished_at(), Some(6.3));
    }

    #[test]
    fn replay_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        std::fs::write(
            &path,
            "t_s,side,px,py,pz,r00,r01,r02,r10,r11,r12,r20,r21,r22,b0,b1,b2,b3,b4,split\n\
             0.0,right,0.1,0.2,0.3,1,0,0,0,1,0,0,0,1,0,0,0,0,0,0\n\
             0.5,right,0.2,0.2,0.3,1,0,0,0,1,0,0,0,1,0.5,0.5,0.5,0.5,0.5,0.1\n",
        )
        .unwrap();
        let mut p = TrajectoryReplay::load(&path).unwrap();
        let h = SceneHistory::default();
        let a = p.step(&obs(0.2, &h));
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].wrist.p_now.x, 0.1);
        let b = p.step(&obs(0.5, &h));
        assert_eq!(b[0].wrist.p_now.x, 0.2);
        assert_eq!(b[0].glove_bend, [0.5; 5]);
        assert_eq!(p.finished_at(), Some(0.5));
        std::fs::write(&path, "t_s,side\n0.0,up\n").unwrap();
        assert!(TrajectoryReplay::load(&path).is_err());
    }
}
