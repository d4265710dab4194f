use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ChannelConfig;
use crate::rng::RngStream;
use crate::{Error, Result};

const DROP_ATTEMPTS: usize = 10_000;

/// Manhattan grid: `blocks_x` x `blocks_y` blocks, one two-way street
/// through the middle of every block row and column, wrapping at the region
/// edges so the vehicle density stays constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridGeometry {
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub block_width_m: f64,
    pub block_height_m: f64,
    pub lanes_per_direction: usize,
    pub lane_width_m: f64,
}

impl Default for GridGeometry {
    fn default() -> Self {
        GridGeometry {
            blocks_x: 3,
            blocks_y: 3,
            block_width_m: 433.0,
            block_height_m: 250.0,
            lanes_per_direction: 2,
            lane_width_m: 3.5,
        }
    }
}

impl GridGeometry {
    pub fn width(&self) -> f64 {
        self.blocks_x as f64 * self.block_width_m
    }

    pub fn height(&self) -> f64 {
        self.blocks_y as f64 * self.block_height_m
    }

    /// x coordinate of the centre line of vertical street `i`.
    pub fn vertical_street(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.block_width_m
    }

    /// y coordinate of the centre line of horizontal street `j`.
    pub fn horizontal_street(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.block_height_m
    }

    fn lane_offset(&self, lane: usize) -> f64 {
        (lane as f64 + 0.5) * self.lane_width_m
    }

    /// Perpendicular coordinate of `lane` for traffic heading `heading` on the
    /// street whose centre line is at `centre` (right-hand traffic).
    pub fn lane_coordinate(&self, centre: f64, heading: Heading, lane: usize) -> f64 {
        let off = self.lane_offset(lane);
        match heading {
            Heading::North | Heading::West => centre + off,
            Heading::South | Heading::East => centre - off,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let half_street = self.lanes_per_direction as f64 * self.lane_width_m;
        if self.blocks_x == 0 || self.blocks_y == 0 || self.lanes_per_direction == 0 {
            return Err(Error::config("grid needs at least one block and one lane per direction"));
        }
        if !(self.lane_width_m > 0.0) || 2.0 * half_street >= self.block_width_m.min(self.block_height_m) {
            return Err(Error::config("streets do not fit inside the grid blocks"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub fn unit(self) -> [f64; 2] {
        match self {
            Heading::North => [0.0, 1.0],
            Heading::East => [1.0, 0.0],
            Heading::South => [0.0, -1.0],
            Heading::West => [-1.0, 0.0],
        }
    }

    pub fn left(self) -> Heading {
        match self {
            Heading::North => Heading::West,
            Heading::West => Heading::South,
            Heading::South => Heading::East,
            Heading::East => Heading::North,
        }
    }

    pub fn right(self) -> Heading {
        self.left().left().left()
    }

    fn is_vertical(self) -> bool {
        matches!(self, Heading::North | Heading::South)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub position: [f64; 2],
    pub speed_mps: f64,
    pub heading: Heading,
    pub lane: usize,
    /// Total distance driven since the drop.
    pub odometer_m: f64,
}

impl Vehicle {
    pub fn velocity(&self) -> [f64; 2] {
        let u = self.heading.unit();
        [u[0] * self.speed_mps, u[1] * self.speed_mps]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct V2vLink {
    pub tx: usize,
    pub rx: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub position: [f64; 2],
    pub height_m: f64,
}

/// Vehicles, V2V pairing and the base station at one instant.
///
/// Vehicle `n` transmits the V2I uplink on sub-channel `n`. Link
/// `k = n * per_vehicle + r` goes from vehicle `n` to its `(r + 1)`-th nearest
/// neighbour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySnapshot {
    pub vehicles: Vec<Vehicle>,
    pub links: Vec<V2vLink>,
    pub base_station: BaseStation,
    pub links_per_vehicle: usize,
}

impl TopologySnapshot {
    pub fn num_v2i(&self) -> usize {
        self.vehicles.len()
    }

    pub fn num_v2v(&self) -> usize {
        self.links.len()
    }

    pub fn link_distance(&self, k: usize) -> f64 {
        let l = self.links[k];
        distance(self.vehicles[l.tx].position, self.vehicles[l.rx].position)
    }

    pub fn max_link_distance(&self) -> f64 {
        (0..self.links.len()).map(|k| self.link_distance(k)).fold(0.0, f64::max)
    }

    /// Recompute the nearest-neighbour pairing for the current positions.
    pub fn repair(&mut self) {
        self.links = pair_nearest(&self.vehicles, self.links_per_vehicle);
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// V2V links hosted by each vehicle; errors unless `K` is a multiple of `N`
/// with enough distinct neighbours.
pub fn links_per_vehicle(n_v2i: usize, n_v2v: usize) -> Result<usize> {
    if n_v2i == 0 {
        return if n_v2v == 0 { Ok(0) } else { Err(Error::config("V2V links need at least one vehicle")) };
    }
    if !n_v2v.is_multiple_of(n_v2i) {
        return Err(Error::config(format!("K = {n_v2v} V2V links must be a multiple of N = {n_v2i} vehicles")));
    }
    let per = n_v2v / n_v2i;
    if per >= n_v2i && per > 0 {
        return Err(Error::config(format!(
            "each vehicle needs {per} distinct neighbours but only {} other vehicles exist",
            n_v2i - 1
        )));
    }
    Ok(per)
}

/// Pair every vehicle with its `per_vehicle` nearest neighbours (ties broken by index).
pub fn pair_nearest(vehicles: &[Vehicle], per_vehicle: usize) -> Vec<V2vLink> {
    let mut links = Vec::with_capacity(vehicles.len() * per_vehicle);
    for (i, v) in vehicles.iter().enumerate() {
        let mut others: Vec<(f64, usize)> = vehicles
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, w)| (distance(v.position, w.position), j))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        links.extend(others.iter().take(per_vehicle).map(|&(_, j)| V2vLink { tx: i, rx: j }));
    }
    links
}

fn place_vehicle(cfg: &ChannelConfig, rng: &mut RngStream) -> Vehicle {
    let g = &cfg.grid;
    let (w, h) = (g.width(), g.height());
    // pick a street with probability proportional to its lane length
    let vertical_len = g.blocks_x as f64 * h;
    let horizontal_len = g.blocks_y as f64 * w;
    let vertical = rng.gen::<f64>() * (vertical_len + horizontal_len) < vertical_len;
    let lane = rng.gen_range(0..g.lanes_per_direction);
    let forward = rng.gen::<bool>();
    let (position, heading) = if vertical {
        let heading = if forward { Heading::North } else { Heading::South };
        let x = g.lane_coordinate(g.vertical_street(rng.gen_range(0..g.blocks_x)), heading, lane);
        ([x, rng.gen::<f64>() * h], heading)
    } else {
        let heading = if forward { Heading::East } else { Heading::West };
        let y = g.lane_coordinate(g.horizontal_street(rng.gen_range(0..g.blocks_y)), heading, lane);
        ([rng.gen::<f64>() * w, y], heading)
    };
    let speed_mps = if cfg.speed_max_mps > cfg.speed_min_mps {
        rng.gen_range(cfg.speed_min_mps..=cfg.speed_max_mps)
    } else {
        cfg.speed_min_mps
    };
    Vehicle { position, speed_mps, heading, lane, odometer_m: 0.0 }
}

/// Drop `n_v2i` vehicles uniformly over the lanes and pair each with its
/// nearest neighbours to form `n_v2v` V2V links.
///
/// With `neighbor_radius_m` configured, drops are rejection-sampled until
/// every pair is within the radius; failing that within the attempt budget is
/// reported as a configuration error.
pub fn drop_vehicles(n_v2i: usize, n_v2v: usize, cfg: &ChannelConfig, rng: &mut RngStream) -> Result<TopologySnapshot> {
    cfg.validate()?;
    let per = links_per_vehicle(n_v2i, n_v2v)?;
    let g = &cfg.grid;
    let base_station = BaseStation {
        position: [g.width() / 2.0, g.height() / 2.0],
        height_m: super::ChannelProfile::new(cfg.profile).bs_height_m,
    };
    for _ in 0..DROP_ATTEMPTS {
        let vehicles: Vec<Vehicle> = (0..n_v2i).map(|_| place_vehicle(cfg, rng)).collect();
        let links = pair_nearest(&vehicles, per);
        let snap = TopologySnapshot { vehicles, links, base_station: base_station.clone(), links_per_vehicle: per };
        match cfg.neighbor_radius_m {
            Some(radius) if snap.max_link_distance() > radius => continue,
            _ => return Ok(snap),
        }
    }
    Err(Error::config(format!(
        "region too small: could not place {n_v2i} vehicles with every V2V pair within {:?} m after {DROP_ATTEMPTS} attempts",
        cfg.neighbor_radius_m
    )))
}

/// Turning behaviour at intersections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityModel {
    pub turn_left_probability: f64,
    pub turn_right_probability: f64,
}

impl MobilityModel {
    pub fn straight() -> Self {
        MobilityModel { turn_left_probability: 0.0, turn_right_probability: 0.0 }
    }
}

/// Distance from `s` to the next street centre strictly ahead, travelling
/// in direction `sign` on a ring of length `period`.
fn next_crossing(s: f64, sign: f64, centres: &[f64], period: f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    for &c in centres {
        for shift in [-period, 0.0, period] {
            let d = (c + shift - s) * sign;
            if d > 1e-9 && d < best.0 {
                best = (d, c);
            }
        }
    }
    best
}

fn advance(v: &mut Vehicle, grid: &GridGeometry, mobility: &MobilityModel, dt: f64, rng: &mut RngStream) {
    let (w, h) = (grid.width(), grid.height());
    let verticals: Vec<f64> = (0..grid.blocks_x).map(|i| grid.vertical_street(i)).collect();
    let horizontals: Vec<f64> = (0..grid.blocks_y).map(|j| grid.horizontal_street(j)).collect();
    let mut remaining = v.speed_mps * dt;
    v.odometer_m += remaining;
    while remaining > 0.0 {
        let u = v.heading.unit();
        let (along, crossings, period) =
            if v.heading.is_vertical() { (v.position[1], &horizontals, h) } else { (v.position[0], &verticals, w) };
        let sign = u[0] + u[1];
        let (gap, centre) = next_crossing(along, sign, crossings, period);
        if remaining < gap {
            v.position[0] += u[0] * remaining;
            v.position[1] += u[1] * remaining;
            break;
        }
        v.position[0] += u[0] * gap;
        v.position[1] += u[1] * gap;
        remaining -= gap;
        let draw: f64 = rng.gen();
        let new_heading = if draw < mobility.turn_left_probability {
            Some(v.heading.left())
        } else if draw < mobility.turn_left_probability + mobility.turn_right_probability {
            Some(v.heading.right())
        } else {
            None
        };
        if let Some(nh) = new_heading {
            // snap onto the matching lane of the crossing street
            let lane = v.lane.min(grid.lanes_per_direction - 1);
            let c = grid.lane_coordinate(centre, nh, lane);
            if nh.is_vertical() {
                v.position[0] = c;
            } else {
                v.position[1] = c;
            }
            v.heading = nh;
            v.lane = lane;
        }
    }
    v.position[0] = v.position[0].rem_euclid(w);
    v.position[1] = v.position[1].rem_euclid(h);
}

/// Advance every vehicle by `speed * dt` along its heading, turning at
/// intersections. Speeds and the V2V pairing are left unchanged.
pub fn step_mobility(
    topo: &TopologySnapshot,
    grid: &GridGeometry,
    mobility: &MobilityModel,
    dt: f64,
    rng: &mut RngStream,
) -> TopologySnapshot {
    let mut next = topo.clone();
    if dt > 0.0 {
        for v in &mut next.vehicles {
            advance(v, grid, mobility, dt, rng);
        }
    }
    next
}
