use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ChannelProfile, TopologySnapshot};
use crate::rng::RngStream;

/// Log-normal shadowing in dB, one value per vehicle pair (symmetric) and one
/// per vehicle towards the base station.
#[derive(Debug, Clone, PartialEq)]
pub struct Shadowing {
    vehicles: usize,
    v2i_db: Vec<f64>,
    v2v_db: Vec<f64>,
    /// Odometer readings the values were last updated at.
    odometer_m: Vec<f64>,
}

fn pair_index(a: usize, b: usize, n: usize) -> usize {
    let (i, j) = if a <= b { (a, b) } else { (b, a) };
    i * n + j
}

impl Shadowing {
    pub fn draw(topo: &TopologySnapshot, profile: &ChannelProfile, rng: &mut RngStream) -> Self {
        let n = topo.vehicles.len();
        let v2i_db = (0..n).map(|_| profile.v2i_shadow_std_db * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut v2v_db = vec![0.0; n * n];
        for a in 0..n {
            for b in a + 1..n {
                v2v_db[a * n + b] = profile.v2v_shadow_std_db * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let odometer_m = topo.vehicles.iter().map(|v| v.odometer_m).collect();
        Shadowing { vehicles: n, v2i_db, v2v_db, odometer_m }
    }

    pub fn vehicles(&self) -> usize {
        self.vehicles
    }

    pub fn v2i_db(&self, vehicle: usize) -> f64 {
        self.v2i_db[vehicle]
    }

    /// Zero for a vehicle paired with itself.
    pub fn v2v_db(&self, a: usize, b: usize) -> f64 {
        self.v2v_db[pair_index(a, b, self.vehicles)]
    }

    /// Gudmundson-style update: each value decorrelates with the distance the
    /// involved vehicles drove since the last update.
    pub fn evolve(&self, topo: &TopologySnapshot, profile: &ChannelProfile, rng: &mut RngStream) -> Self {
        let n = self.vehicles;
        assert_eq!(topo.vehicles.len(), n, "shadowing and topology disagree on vehicle count");
        let moved: Vec<f64> =
            topo.vehicles.iter().zip(&self.odometer_m).map(|(v, o)| (v.odometer_m - o).abs()).collect();
        let mut step = |value: f64, dist: f64, dcorr: f64, std: f64| {
            let a = (-dist / dcorr).exp();
            a * value + (1.0 - a * a).sqrt() * std * rng.sample::<f64, _>(StandardNormal)
        };
        let v2i_db = (0..n)
            .map(|i| step(self.v2i_db[i], moved[i], profile.v2i_decorrelation_m, profile.v2i_shadow_std_db))
            .collect();
        let mut v2v_db = vec![0.0; n * n];
        for a in 0..n {
            for b in a + 1..n {
                v2v_db[a * n + b] = step(
                    self.v2v_db[a * n + b],
                    moved[a] + moved[b],
                    profile.v2v_decorrelation_m,
                    profile.v2v_shadow_std_db,
                );
            }
        }
        let odometer_m = topo.vehicles.iter().map(|v| v.odometer_m).collect();
        Shadowing { vehicles: n, v2i_db, v2v_db, odometer_m }
    }
}

/// Rayleigh small-scale coefficients for every (transmitting vehicle,
/// receiving node, sub-channel), the base station being receiver index
/// `vehicles`.
#[derive(Debug, Clone, PartialEq)]
pub struct FastFading {
    vehicles: usize,
    subchannels: usize,
    coeffs: Vec<Complex64>,
}

impl FastFading {
    pub fn draw(vehicles: usize, subchannels: usize, rng: &mut RngStream) -> Self {
        let len = vehicles * (vehicles + 1) * subchannels;
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        let coeffs = (0..len)
            .map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re * scale, im * scale)
            })
            .collect();
        FastFading { vehicles, subchannels, coeffs }
    }

    /// All coefficients set to `1 + 0i`.
    pub fn unit(vehicles: usize, subchannels: usize) -> Self {
        FastFading {
            vehicles,
            subchannels,
            coeffs: vec![Complex64::new(1.0, 0.0); vehicles * (vehicles + 1) * subchannels],
        }
    }

    pub fn vehicles(&self) -> usize {
        self.vehicles
    }

    pub fn subchannels(&self) -> usize {
        self.subchannels
    }

    fn index(&self, tx: usize, rx: usize, n: usize) -> usize {
        (tx * (self.vehicles + 1) + rx) * self.subchannels + n
    }

    pub fn coefficient(&self, tx: usize, rx: usize, n: usize) -> Complex64 {
        self.coeffs[self.index(tx, rx, n)]
    }

    pub fn set_coefficient(&mut self, tx: usize, rx: usize, n: usize, value: Complex64) {
        let i = self.index(tx, rx, n);
        self.coeffs[i] = value;
    }

    /// `|f|^2` towards another vehicle.
    pub fn to_vehicle(&self, tx: usize, rx: usize, n: usize) -> f64 {
        self.coefficient(tx, rx, n).norm_sqr()
    }

    /// `|f|^2` towards the base station.
    pub fn to_bs(&self, tx: usize, n: usize) -> f64 {
        self.coefficient(tx, self.vehicles, n).norm_sqr()
    }

    pub fn powers(&self) -> impl Iterator<Item = f64> + '_ {
        self.coeffs.iter().map(|c| c.norm_sqr())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FadingState {
    pub shadowing: Shadowing,
    pub fast: FastFading,
}

impl FadingState {
    pub fn new(topo: &TopologySnapshot, profile: &ChannelProfile, rng: &mut RngStream) -> Self {
        let shadowing = Shadowing::draw(topo, profile, rng);
        let fast = FastFading::draw(topo.vehicles.len(), topo.vehicles.len(), rng);
        FadingState { shadowing, fast }
    }
}

/// Redraw the small-scale coefficients i.i.d. CN(0, 1); shadowing is carried over.
pub fn update_fading(state: &FadingState, rng: &mut RngStream) -> FadingState {
    FadingState {
        shadowing: state.shadowing.clone(),
        fast: FastFading::draw(state.fast.vehicles, state.fast.subchannels, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{drop_vehicles, step_mobility, ChannelConfig};
    use crate::rng::{stream, Stream};

    fn setup() -> (TopologySnapshot, FadingState) {
        let topo = drop_vehicles(4, 4, &ChannelConfig::default(), &mut stream(7, Stream::Topology)).unwrap();
        let state = FadingState::new(&topo, &ChannelProfile::default(), &mut stream(7, Stream::Shadowing));
        (topo, state)
    }

    #[test]
    fn unit_mean_power() {
        let mut rng = stream(1, Stream::Fading);
        let f = FastFading::draw(10, 10, &mut rng);
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut state = FadingState { shadowing: setup().1.shadowing, fast: f };
        while count < 1_000_000 {
            sum += state.fast.powers().sum::<f64>();
            count += state.fast.coeffs.len();
            state = update_fading(&state, &mut rng);
        }
        let mean = sum / count as f64;
        assert!((mean - 1.0).abs() < 0.005, "mean |f|^2 = {mean}");
    }

    #[test]
    fn same_rng_state_same_draw() {
        let (_, state) = setup();
        let a = update_fading(&state, &mut stream(3, Stream::Fading));
        let b = update_fading(&state, &mut stream(3, Stream::Fading));
        assert_eq!(a, b);
    }

    #[test]
    fn shadowing_untouched_by_fading_update() {
        let (_, state) = setup();
        let next = update_fading(&state, &mut stream(3, Stream::Fading));
        assert_eq!(state.shadowing, next.shadowing);
        assert_ne!(state.fast, next.fast);
    }

    #[test]
    fn shadowing_std_matches_profile() {
        let profile = ChannelProfile::default();
        let (topo, _) = setup();
        let mut rng = stream(9, Stream::Shadowing);
        let (mut s2_i, mut s2_v, mut ni, mut nv) = (0.0, 0.0, 0, 0);
        for _ in 0..20_000 {
            let s = Shadowing::draw(&topo, &profile, &mut rng);
            for i in 0..4 {
                s2_i += s.v2i_db(i).powi(2);
                ni += 1;
                for j in i + 1..4 {
                    s2_v += s.v2v_db(i, j).powi(2);
                    nv += 1;
                }
            }
        }
        assert!(((s2_i / ni as f64).sqrt() - 8.0).abs() < 0.1);
        assert!(((s2_v / nv as f64).sqrt() - 3.0).abs() < 0.05);
    }

    #[test]
    fn evolution_keeps_variance_and_correlation() {
        let profile = ChannelProfile::default();
        let c = ChannelConfig::default();
        let (topo, _) = setup();
        let mut rng = stream(4, Stream::Shadowing);
        let moved = step_mobility(&topo, &c.grid, &c.mobility(), 0.1, &mut stream(5, Stream::Topology));
        let (mut s2, mut cross, mut count) = (0.0, 0.0, 0);
        for _ in 0..20_000 {
            let s = Shadowing::draw(&topo, &profile, &mut rng);
            let e = s.evolve(&moved, &profile, &mut rng);
            s2 += e.v2i_db(0).powi(2);
            cross += e.v2i_db(0) * s.v2i_db(0);
            count += 1;
        }
        let var = s2 / count as f64;
        let rho = cross / count as f64 / 64.0;
        let expected = (-(moved.vehicles[0].odometer_m) / 50.0).exp();
        assert!((var.sqrt() - 8.0).abs() < 0.15);
        assert!((rho - expected).abs() < 0.02, "rho {rho} vs {expected}");
        assert_eq!(Shadowing::draw(&topo, &profile, &mut rng).v2v_db(2, 2), 0.0);
    }
}
