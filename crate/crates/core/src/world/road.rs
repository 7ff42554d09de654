use std::fmt;

use serde::{Deserialize, Serialize};

pub const N_LANES: usize = 3;

/// Lane index; `Left` has the smallest lateral coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LaneId {
    Left = 0,
    Middle = 1,
    Right = 2,
}

impl LaneId {
    pub const ALL: [LaneId; N_LANES] = [LaneId::Left, LaneId::Middle, LaneId::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<LaneId> {
        LaneId::ALL.get(i).copied()
    }

    /// Phrase used in prompts and decision lines, e.g. `"Left Lane"`.
    pub fn label(self) -> &'static str {
        match self {
            LaneId::Left => "Left Lane",
            LaneId::Middle => "Middle Lane",
            LaneId::Right => "Right Lane",
        }
    }

    /// Lowercase form used inside scene sentences ("the left lane").
    pub fn phrase(self) -> &'static str {
        match self {
            LaneId::Left => "left lane",
            LaneId::Middle => "middle lane",
            LaneId::Right => "right lane",
        }
    }

    pub fn distance(self, other: LaneId) -> usize {
        self.index().abs_diff(other.index())
    }
}

impl fmt::Display for LaneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Small set of lanes, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct LaneSet(u8);

impl LaneSet {
    pub const EMPTY: LaneSet = LaneSet(0);

    pub fn single(lane: LaneId) -> Self {
        LaneSet(1 << lane.index())
    }

    pub fn insert(&mut self, lane: LaneId) {
        self.0 |= 1 << lane.index();
    }

    pub fn contains(&self, lane: LaneId) -> bool {
        self.0 & (1 << lane.index()) != 0
    }

    pub fn union(self, other: LaneSet) -> LaneSet {
        LaneSet(self.0 | other.0)
    }

    pub fn intersects(self, other: LaneSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = LaneId> {
        LaneId::ALL.into_iter().filter(move |l| self.contains(*l))
    }
}

impl FromIterator<LaneId> for LaneSet {
    fn from_iter<I: IntoIterator<Item = LaneId>>(iter: I) -> Self {
        let mut set = LaneSet::EMPTY;
        for lane in iter {
            set.insert(lane);
        }
        set
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadGeometry {
    pub lane_width: f64,
    /// Lowest admissible lateral position of the ego center.
    pub y_inf: f64,
    /// Highest admissible lateral position of the ego center.
    pub y_sup: f64,
}

impl RoadGeometry {
    pub fn new(lane_width: f64, vehicle_width: f64) -> Self {
        Self {
            lane_width,
            y_inf: vehicle_width / 2.0,
            y_sup: N_LANES as f64 * lane_width - vehicle_width / 2.0,
        }
    }

    pub fn n_lanes(&self) -> usize {
        N_LANES
    }

    pub fn lane_center(&self, lane: LaneId) -> f64 {
        (lane.index() as f64 + 0.5) * self.lane_width
    }

    /// `[lower, upper)` lateral extent of a lane.
    pub fn lane_bounds(&self, lane: LaneId) -> (f64, f64) {
        let lo = lane.index() as f64 * self.lane_width;
        (lo, lo + self.lane_width)
    }

    /// Lateral position of the line separating two adjacent lanes.
    pub fn boundary_between(&self, a: LaneId, b: LaneId) -> f64 {
        debug_assert_eq!(a.distance(b), 1);
        a.index().max(b.index()) as f64 * self.lane_width
    }

    pub fn width(&self) -> f64 {
        N_LANES as f64 * self.lane_width
    }
}

/// Lane indicator: `floor(y / lane_width)` clamped to the road.
pub fn lane_of(y: f64, road: &RoadGeometry) -> LaneId {
    let idx = (y / road.lane_width).floor();
    let idx = if idx.is_nan() {
        0.0
    } else {
        idx.clamp(0.0, (N_LANES - 1) as f64)
    };
    LaneId::from_index(idx as usize).expect("clamped lane index")
}

/// Every lane touched by `[y_lo - half_width, y_hi + half_width]`.
pub fn lanes_of_interval(y_lo: f64, y_hi: f64, half_width: f64, road: &RoadGeometry) -> LaneSet {
    debug_assert!(y_lo <= y_hi);
    let first = lane_of(y_lo - half_width, road).index();
    let last = lane_of(y_hi + half_width, road).index();
    (first..=last).filter_map(LaneId::from_index).collect()
}
