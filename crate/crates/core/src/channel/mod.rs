//! Vehicle topology, mobility and channel power gains.
//!
//! All propagation constants live in [`ChannelProfile`]; swapping the
//! path-loss family is a matter of selecting another [`ProfileKind`]
//! (config key `channel.profile`).

mod fading;
mod gains;
mod pathloss;
mod topology;

use serde::{Deserialize, Serialize};

pub use fading::{update_fading, FadingState, FastFading, Shadowing};
pub use gains::{link_gain, realize_gains, write_gains_csv, ChannelGains, LargeScale, GAIN_FLOOR};
pub use pathloss::{
    compute_pathloss, free_space_db, v2i_pathloss_db, v2v_los_pathloss_db, v2v_nlos_pathloss_db, winner_b1_nlos_db,
    LinkGeometry, LinkKind,
};
pub use topology::{
    drop_vehicles, links_per_vehicle, pair_nearest, step_mobility, BaseStation, GridGeometry, Heading, MobilityModel,
    TopologySnapshot, V2vLink, Vehicle,
};

/// Selectable path-loss family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    /// V2I macro `128.1 + 37.6 log10(d_km)`; V2V urban D2D LOS
    /// `38.77 + 16.7 log10(d) + 18.2 log10(fc)` and NLOS
    /// `36.85 + 30 log10(d) + 18.9 log10(fc)`, LOS when both ends share a street.
    #[default]
    UrbanD2d,
    /// Same V2I and LOS laws; NLOS from the WINNER+ B1 Manhattan corner model.
    WinnerB1,
}

/// Propagation and radio constants for one channel profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    pub kind: ProfileKind,
    pub carrier_ghz: f64,
    pub bs_height_m: f64,
    pub bs_gain_dbi: f64,
    pub bs_noise_figure_db: f64,
    pub vehicle_height_m: f64,
    pub vehicle_gain_dbi: f64,
    pub vehicle_noise_figure_db: f64,
    pub v2i_shadow_std_db: f64,
    pub v2v_shadow_std_db: f64,
    pub v2i_decorrelation_m: f64,
    pub v2v_decorrelation_m: f64,
    /// Distances below this are clamped before evaluating any law.
    pub min_distance_m: f64,
    /// Two vehicles whose perpendicular offset is below this share a street (LOS).
    pub los_street_width_m: f64,
    /// Extra isolation applied when a vehicle would interfere with its own receiver.
    pub self_isolation_db: f64,
}

impl ChannelProfile {
    pub fn new(kind: ProfileKind) -> Self {
        ChannelProfile {
            kind,
            carrier_ghz: 2.0,
            bs_height_m: 25.0,
            bs_gain_dbi: 8.0,
            bs_noise_figure_db: 5.0,
            vehicle_height_m: 5.0,
            vehicle_gain_dbi: 3.0,
            vehicle_noise_figure_db: 9.0,
            v2i_shadow_std_db: 8.0,
            v2v_shadow_std_db: 3.0,
            v2i_decorrelation_m: 50.0,
            v2v_decorrelation_m: 10.0,
            min_distance_m: 3.0,
            los_street_width_m: 14.0,
            self_isolation_db: 50.0,
        }
    }
}

impl Default for ChannelProfile {
    fn default() -> Self {
        ChannelProfile::new(ProfileKind::default())
    }
}

/// Channel section of the simulation config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub profile: ProfileKind,
    /// Maximum V2V pair separation enforced at drop time; unbounded when absent.
    pub neighbor_radius_m: Option<f64>,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub turn_left_probability: f64,
    pub turn_right_probability: f64,
    pub grid: GridGeometry,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            profile: ProfileKind::default(),
            neighbor_radius_m: None,
            speed_min_mps: 10.0,
            speed_max_mps: 15.0,
            turn_left_probability: 0.25,
            turn_right_probability: 0.25,
            grid: GridGeometry::default(),
        }
    }
}

impl ChannelConfig {
    pub fn profile(&self) -> ChannelProfile {
        ChannelProfile::new(self.profile)
    }

    pub fn mobility(&self) -> MobilityModel {
        MobilityModel {
            turn_left_probability: self.turn_left_probability,
            turn_right_probability: self.turn_right_probability,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if !(self.speed_min_mps >= 10.0 && self.speed_max_mps <= 15.0 && self.speed_min_mps <= self.speed_max_mps) {
            return Err(Error::config(format!(
                "vehicle speed range [{}, {}] must lie within [10, 15] m/s",
                self.speed_min_mps, self.speed_max_mps
            )));
        }
        let (l, r) = (self.turn_left_probability, self.turn_right_probability);
        if !(l >= 0.0 && r >= 0.0 && l + r <= 1.0) {
            return Err(Error::config("turn probabilities must be non-negative and sum to at most 1"));
        }
        if let Some(radius) = self.neighbor_radius_m {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(Error::config("channel.neighbor_radius_m must be positive"));
            }
        }
        self.grid.validate()
    }
}
