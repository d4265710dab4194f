use std::io::Write;

use super::pathloss::{compute_pathloss, LinkGeometry, LinkKind};
use super::{ChannelProfile, FadingState, FastFading, Shadowing, TopologySnapshot};
use crate::units::{db_to_linear, linear_to_db};
use crate::{Error, Result};

/// Smallest gain ever emitted; a zero fading draw is clamped here.
pub const GAIN_FLOOR: f64 = 1e-30;

/// `10^((-PL - shadow + G_tx + G_rx) / 10) * |f|^2`, clamped to [`GAIN_FLOOR`].
pub fn link_gain(pathloss_db: f64, shadow_db: f64, tx_gain_dbi: f64, rx_gain_dbi: f64, fading_power: f64) -> f64 {
    let g = db_to_linear(-pathloss_db - shadow_db + tx_gain_dbi + rx_gain_dbi) * fading_power;
    if g.is_finite() {
        g.max(GAIN_FLOOR)
    } else {
        GAIN_FLOOR
    }
}

/// Large-scale gains in dB (antenna gains included, fading excluded) between
/// every vehicle pair and from every vehicle to the base station.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScale {
    vehicles: usize,
    to_bs_db: Vec<f64>,
    to_vehicle_db: Vec<f64>,
}

impl LargeScale {
    pub fn compute(topo: &TopologySnapshot, shadowing: &Shadowing, profile: &ChannelProfile) -> Result<Self> {
        let n = topo.vehicles.len();
        if shadowing.vehicles() != n {
            return Err(Error::dim(format!("shadowing covers {} vehicles, topology has {n}", shadowing.vehicles())));
        }
        let bs = &topo.base_station;
        let dz = bs.height_m - profile.vehicle_height_m;
        let mut to_bs_db = Vec::with_capacity(n);
        for (i, v) in topo.vehicles.iter().enumerate() {
            let pl = compute_pathloss(LinkKind::V2I, &LinkGeometry::between(v.position, bs.position, dz), profile)?;
            to_bs_db.push(-pl - shadowing.v2i_db(i) + profile.vehicle_gain_dbi + profile.bs_gain_dbi);
        }
        // a vehicle's own receiver sees its transmitter at the minimum distance plus isolation
        let self_db = -compute_pathloss(LinkKind::V2V, &LinkGeometry::horizontal(profile.min_distance_m), profile)?
            - profile.self_isolation_db
            + 2.0 * profile.vehicle_gain_dbi;
        let mut to_vehicle_db = vec![self_db; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let geom = LinkGeometry::between(topo.vehicles[a].position, topo.vehicles[b].position, 0.0);
                let ground = geom.dx.hypot(geom.dy);
                let pl = if ground > 0.0 {
                    compute_pathloss(LinkKind::V2V, &geom, profile)?
                } else {
                    compute_pathloss(LinkKind::V2V, &LinkGeometry::horizontal(profile.min_distance_m), profile)?
                };
                let db = -pl - shadowing.v2v_db(a, b) + 2.0 * profile.vehicle_gain_dbi;
                to_vehicle_db[a * n + b] = db;
                to_vehicle_db[b * n + a] = db;
            }
        }
        Ok(LargeScale { vehicles: n, to_bs_db, to_vehicle_db })
    }

    pub fn vehicles(&self) -> usize {
        self.vehicles
    }

    pub fn to_bs_db(&self, tx: usize) -> f64 {
        self.to_bs_db[tx]
    }

    pub fn to_vehicle_db(&self, tx: usize, rx: usize) -> f64 {
        self.to_vehicle_db[tx * self.vehicles + rx]
    }
}

/// Linear power gains for one slot, indexed by V2I link / sub-channel `n`
/// and V2V link `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGains {
    pub n_v2i: usize,
    pub n_v2v: usize,
    /// `h_b[n]`: V2I link `n` to the BS on its own sub-channel.
    pub h_b: Vec<f64>,
    /// `g_k[n]`, row-major `k * N + n`.
    pub g: Vec<f64>,
    /// `g~_{k,b}[n]`: V2V transmitter `k` to the BS.
    pub g_bs: Vec<f64>,
    /// `g~_{k',k}[n]`, index `(k' * K + k) * N + n`.
    pub g_cross: Vec<f64>,
    /// `h~_k[n]`: V2I transmitter of sub-channel `n` to V2V receiver `k`.
    pub h_tilde: Vec<f64>,
}

impl ChannelGains {
    /// Combine frozen large-scale gains with one slot of fast fading.
    pub fn assemble(topo: &TopologySnapshot, large: &LargeScale, fast: &FastFading) -> Result<Self> {
        let nv = topo.vehicles.len();
        if large.vehicles() != nv || fast.vehicles() != nv || fast.subchannels() != nv {
            return Err(Error::dim(format!(
                "topology has {nv} vehicles, large-scale {} and fading {}x{}",
                large.vehicles(),
                fast.vehicles(),
                fast.subchannels()
            )));
        }
        let (n_sub, k_links) = (nv, topo.links.len());
        let lin = |db: f64, power: f64| {
            let g = db_to_linear(db) * power;
            if g.is_finite() {
                g.max(GAIN_FLOOR)
            } else {
                GAIN_FLOOR
            }
        };
        let h_b = (0..n_sub).map(|n| lin(large.to_bs_db(n), fast.to_bs(n, n))).collect();
        let mut g = Vec::with_capacity(k_links * n_sub);
        let mut g_bs = Vec::with_capacity(k_links * n_sub);
        let mut h_tilde = Vec::with_capacity(k_links * n_sub);
        for l in &topo.links {
            for n in 0..n_sub {
                g.push(lin(large.to_vehicle_db(l.tx, l.rx), fast.to_vehicle(l.tx, l.rx, n)));
                g_bs.push(lin(large.to_bs_db(l.tx), fast.to_bs(l.tx, n)));
                h_tilde.push(lin(large.to_vehicle_db(n, l.rx), fast.to_vehicle(n, l.rx, n)));
            }
        }
        let mut g_cross = Vec::with_capacity(k_links * k_links * n_sub);
        for from in &topo.links {
            for to in &topo.links {
                for n in 0..n_sub {
                    g_cross.push(lin(large.to_vehicle_db(from.tx, to.rx), fast.to_vehicle(from.tx, to.rx, n)));
                }
            }
        }
        Ok(ChannelGains { n_v2i: n_sub, n_v2v: k_links, h_b, g, g_bs, g_cross, h_tilde })
    }

    pub fn g(&self, k: usize, n: usize) -> f64 {
        self.g[k * self.n_v2i + n]
    }

    pub fn g_bs(&self, k: usize, n: usize) -> f64 {
        self.g_bs[k * self.n_v2i + n]
    }

    pub fn g_cross(&self, from: usize, to: usize, n: usize) -> f64 {
        self.g_cross[(from * self.n_v2v + to) * self.n_v2i + n]
    }

    pub fn h_tilde(&self, k: usize, n: usize) -> f64 {
        self.h_tilde[k * self.n_v2i + n]
    }

    fn all(&self) -> impl Iterator<Item = &f64> {
        self.h_b.iter().chain(&self.g).chain(&self.g_bs).chain(&self.g_cross).chain(&self.h_tilde)
    }

    pub fn all_positive_finite(&self) -> bool {
        self.all().all(|g| *g > 0.0 && g.is_finite())
    }
}

/// Large-scale computation and fading assembly in one call.
pub fn realize_gains(topo: &TopologySnapshot, fading: &FadingState, profile: &ChannelProfile) -> Result<ChannelGains> {
    let large = LargeScale::compute(topo, &fading.shadowing, profile)?;
    ChannelGains::assemble(topo, &large, &fading.fast)
}

/// Append one slot of gains as CSV rows `slot,link_type,k,n,gain_db`.
/// Cross V2V rows carry `k` as `from>to`. Pass `header = true` for the first slot.
pub fn write_gains_csv<W: Write>(out: &mut W, slot: usize, gains: &ChannelGains, header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    if header {
        w.write_record(["slot", "link_type", "k", "n", "gain_db"])?;
    }
    let (n_sub, k_links) = (gains.n_v2i, gains.n_v2v);
    let mut row = |kind: &str, k: String, n: usize, g: f64| {
        w.write_record([slot.to_string(), kind.to_string(), k, n.to_string(), format!("{:.6}", linear_to_db(g))])
    };
    for n in 0..n_sub {
        row("v2i", n.to_string(), n, gains.h_b[n])?;
    }
    for k in 0..k_links {
        for n in 0..n_sub {
            row("v2v", k.to_string(), n, gains.g(k, n))?;
            row("v2v_to_bs", k.to_string(), n, gains.g_bs(k, n))?;
            row("v2i_to_v2v", k.to_string(), n, gains.h_tilde(k, n))?;
        }
    }
    for from in 0..k_links {
        for to in 0..k_links {
            if from != to {
                for n in 0..n_sub {
                    row("v2v_to_v2v", format!("{from}>{to}"), n, gains.g_cross(from, to, n))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{drop_vehicles, ChannelConfig};
    use crate::rng::{stream, Stream};
    use num_complex::Complex64;

    #[test]
    fn db_arithmetic() {
        let g = link_gain(100.0, 0.0, 3.0, 3.0, 1.0);
        assert!((g - 3.981_071_705_534_97e-10).abs() / g < 1e-12);
    }

    #[test]
    fn zero_fading_is_clamped() {
        assert_eq!(link_gain(100.0, 0.0, 3.0, 3.0, 0.0), GAIN_FLOOR);
    }

    #[test]
    fn gain_is_linear_in_fading_power() {
        let a = link_gain(87.3, 2.1, 3.0, 8.0, 0.7);
        let b = link_gain(87.3, 2.1, 3.0, 8.0, 1.4);
        assert_eq!(b, 2.0 * a);
    }

    fn setup() -> (TopologySnapshot, FadingState, ChannelProfile) {
        let profile = ChannelProfile::default();
        let topo = drop_vehicles(4, 8, &ChannelConfig::default(), &mut stream(2, Stream::Topology)).unwrap();
        let fading = FadingState::new(&topo, &profile, &mut stream(2, Stream::Shadowing));
        (topo, fading, profile)
    }

    #[test]
    fn gains_are_positive_and_consistent() {
        let (topo, fading, profile) = setup();
        let gains = realize_gains(&topo, &fading, &profile).unwrap();
        assert!(gains.all_positive_finite());
        assert_eq!(gains.g.len(), 8 * 4);
        assert_eq!(gains.g_cross.len(), 8 * 8 * 4);
        // a link interfering with itself is its own desired channel
        for k in 0..8 {
            for n in 0..4 {
                assert_eq!(gains.g_cross(k, k, n), gains.g(k, n));
            }
        }
        let large = LargeScale::compute(&topo, &fading.shadowing, &profile).unwrap();
        let l = topo.links[3];
        let f = fading.fast.to_vehicle(l.tx, l.rx, 2);
        let expected = db_to_linear(large.to_vehicle_db(l.tx, l.rx)) * f;
        assert!((gains.g(3, 2) - expected).abs() <= 1e-15 * expected);
    }

    #[test]
    fn doubling_fading_doubles_the_gain() {
        let (topo, mut fading, profile) = setup();
        let before = realize_gains(&topo, &fading, &profile).unwrap();
        let l = topo.links[0];
        let c = fading.fast.coefficient(l.tx, l.rx, 1);
        fading.fast.set_coefficient(l.tx, l.rx, 1, c * Complex64::new(2f64.sqrt(), 0.0));
        let after = realize_gains(&topo, &fading, &profile).unwrap();
        assert!((after.g(0, 1) / before.g(0, 1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (topo, fading, profile) = setup();
        let other = drop_vehicles(6, 6, &ChannelConfig::default(), &mut stream(2, Stream::Topology)).unwrap();
        assert!(realize_gains(&other, &fading, &profile).is_err());
        let wrong = FastFading::unit(3, 3);
        let large = LargeScale::compute(&topo, &fading.shadowing, &profile).unwrap();
        assert!(ChannelGains::assemble(&topo, &large, &wrong).is_err());
    }

    #[test]
    fn csv_dump_row_count() {
        let (topo, fading, profile) = setup();
        let gains = realize_gains(&topo, &fading, &profile).unwrap();
        let mut buf = Vec::new();
        write_gains_csv(&mut buf, 0, &gains, true).unwrap();
        write_gains_csv(&mut buf, 1, &gains, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows_per_slot = 4 + 3 * 8 * 4 + 8 * 7 * 4;
        assert_eq!(text.lines().count(), 1 + 2 * rows_per_slot);
        assert!(text.starts_with("slot,link_type,k,n,gain_db\n0,v2i,0,0,"));
    }
}
