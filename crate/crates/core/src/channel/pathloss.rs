use super::{ChannelProfile, ProfileKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    V2I,
    V2V,
}

/// Relative placement of receiver to transmitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub dx: f64,
    pub dy: f64,
    /// Antenna height difference.
    pub dz: f64,
}

impl LinkGeometry {
    pub fn between(a: [f64; 2], b: [f64; 2], dz: f64) -> Self {
        LinkGeometry { dx: b[0] - a[0], dy: b[1] - a[1], dz }
    }

    /// Straight-line 2-D distance with no height term.
    pub fn horizontal(d: f64) -> Self {
        LinkGeometry { dx: d, dy: 0.0, dz: 0.0 }
    }

    pub fn distance(&self) -> f64 {
        (self.dx * self.dx + self.dy * self.dy + self.dz * self.dz).sqrt()
    }

    fn ground_distance(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

pub fn free_space_db(d_m: f64, fc_ghz: f64) -> f64 {
    20.0 * d_m.log10() + 20.0 * fc_ghz.log10() + 32.45
}

pub fn v2i_pathloss_db(d_m: f64) -> f64 {
    128.1 + 37.6 * (d_m / 1000.0).log10()
}

pub fn v2v_los_pathloss_db(d_m: f64, fc_ghz: f64) -> f64 {
    38.77 + 16.7 * d_m.log10() + 18.2 * fc_ghz.log10()
}

pub fn v2v_nlos_pathloss_db(d_m: f64, fc_ghz: f64) -> f64 {
    36.85 + 30.0 * d_m.log10() + 18.9 * fc_ghz.log10()
}

/// Manhattan corner loss: LOS along the first street for `d_main`, then a
/// diffraction term for `d_side` down the crossing street.
pub fn winner_b1_nlos_db(d_main: f64, d_side: f64, fc_ghz: f64) -> f64 {
    let n_j = (2.8 - 0.0024 * d_main).max(1.84);
    v2v_los_pathloss_db(d_main, fc_ghz) + 20.0 - 12.5 * n_j + 10.0 * n_j * d_side.log10() + 3.0 * (fc_ghz / 5.0).log10()
}

/// Path loss in dB (positive) for a link of the given kind.
///
/// Distances are clamped to `profile.min_distance_m`; every law is floored at
/// free-space loss so nothing beats free space at very short range.
pub fn compute_pathloss(kind: LinkKind, geometry: &LinkGeometry, profile: &ChannelProfile) -> Result<f64> {
    let d = geometry.distance();
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::invalid(format!("path loss needs a positive finite distance, got {d}")));
    }
    let fc = profile.carrier_ghz;
    let dmin = profile.min_distance_m;
    let pl = match kind {
        LinkKind::V2I => {
            let d = d.max(dmin);
            v2i_pathloss_db(d).max(free_space_db(d, fc))
        }
        LinkKind::V2V => {
            let ground = geometry.ground_distance().max(dmin);
            let (ax, ay) = (geometry.dx.abs(), geometry.dy.abs());
            let los = ax.min(ay) < profile.los_street_width_m;
            let law = if los {
                v2v_los_pathloss_db(ground, fc)
            } else {
                match profile.kind {
                    ProfileKind::UrbanD2d => v2v_nlos_pathloss_db(ground, fc),
                    ProfileKind::WinnerB1 => {
                        let (ax, ay) = (ax.max(dmin), ay.max(dmin));
                        winner_b1_nlos_db(ax, ay, fc).min(winner_b1_nlos_db(ay, ax, fc))
                    }
                }
            };
            law.max(free_space_db(ground, fc))
        }
    };
    Ok(pl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn profile() -> ChannelProfile {
        ChannelProfile::default()
    }

    #[test]
    fn v2i_reference_distances() {
        let p = profile();
        let pl = compute_pathloss(LinkKind::V2I, &LinkGeometry::horizontal(500.0), &p).unwrap();
        assert_abs_diff_eq!(pl, 128.1 + 37.6 * 0.5f64.log10(), epsilon = 1e-12);
        assert_abs_diff_eq!(pl, 116.78, epsilon = 5e-3);
        let pl = compute_pathloss(LinkKind::V2I, &LinkGeometry::horizontal(1000.0), &p).unwrap();
        assert_abs_diff_eq!(pl, 128.1, epsilon = 1e-12);
    }

    #[test]
    fn v2v_los_reference() {
        let pl = compute_pathloss(LinkKind::V2V, &LinkGeometry::horizontal(10.0), &profile()).unwrap();
        assert_abs_diff_eq!(pl, 38.77 + 16.7 + 18.2 * 2f64.log10(), epsilon = 1e-12);
        assert_abs_diff_eq!(pl, 60.95, epsilon = 5e-3);
    }

    #[test]
    fn zero_distance_rejected_and_short_range_clamped() {
        let p = profile();
        assert!(compute_pathloss(LinkKind::V2V, &LinkGeometry::horizontal(0.0), &p).is_err());
        assert!(compute_pathloss(LinkKind::V2I, &LinkGeometry::horizontal(f64::NAN), &p).is_err());
        let at_1 = compute_pathloss(LinkKind::V2V, &LinkGeometry::horizontal(1.0), &p).unwrap();
        let at_3 = compute_pathloss(LinkKind::V2V, &LinkGeometry::horizontal(3.0), &p).unwrap();
        assert_eq!(at_1, at_3);
        assert!(at_3 >= free_space_db(3.0, 2.0));
    }

    #[test]
    fn nlos_when_streets_differ() {
        let p = profile();
        let los = compute_pathloss(LinkKind::V2V, &LinkGeometry { dx: 300.0, dy: 2.0, dz: 0.0 }, &p).unwrap();
        let nlos = compute_pathloss(LinkKind::V2V, &LinkGeometry { dx: 212.0, dy: 212.0, dz: 0.0 }, &p).unwrap();
        assert!(nlos > los + 10.0);
        let corner = compute_pathloss(
            LinkKind::V2V,
            &LinkGeometry { dx: 212.0, dy: 212.0, dz: 0.0 },
            &ChannelProfile::new(ProfileKind::WinnerB1),
        )
        .unwrap();
        assert!(corner > los);
    }

    #[test]
    fn monotone_within_each_branch() {
        let p = profile();
        let mut prev = [0.0f64; 3];
        for i in 1..2000 {
            let d = i as f64 * 0.75;
            let v = [
                compute_pathloss(LinkKind::V2I, &LinkGeometry::horizontal(d), &p).unwrap(),
                compute_pathloss(LinkKind::V2V, &LinkGeometry::horizontal(d), &p).unwrap(),
                compute_pathloss(LinkKind::V2V, &LinkGeometry { dx: d, dy: d, dz: 0.0 }, &p).unwrap(),
            ];
            for b in 0..3 {
                assert!(v[b] >= prev[b], "branch {b} decreased at d={d}");
            }
            prev = v;
        }
    }
}
