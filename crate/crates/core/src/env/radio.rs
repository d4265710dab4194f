//! SINR, Shannon rates and the two scenario rewards as pure functions.

use crate::channel::ChannelGains;

/// Transmit configuration of every V2V link for one slot.
///
/// `power_w[k] == 0` means link `k` is off (nothing is radiated at all);
/// the -100 dBm action level is a small but nonzero power.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission<'a> {
    pub channel: &'a [usize],
    pub power_w: &'a [f64],
    pub v2i_power_w: f64,
}

/// Linear SINR of every V2I link at the BS.
pub fn v2i_sinr(gains: &ChannelGains, tx: &Transmission, noise_w: f64) -> Vec<f64> {
    let mut interference = vec![noise_w; gains.n_v2i];
    for (k, (&n, &p)) in tx.channel.iter().zip(tx.power_w).enumerate() {
        interference[n] += p * gains.g_bs(k, n);
    }
    (0..gains.n_v2i).map(|n| tx.v2i_power_w * gains.h_b[n] / interference[n]).collect()
}

/// Interference plus noise seen by V2V receiver `k` on every sub-channel.
pub fn v2v_interference(gains: &ChannelGains, tx: &Transmission, k: usize, noise_w: f64) -> Vec<f64> {
    let mut out: Vec<f64> = (0..gains.n_v2i).map(|n| tx.v2i_power_w * gains.h_tilde(k, n) + noise_w).collect();
    for (kp, (&n, &p)) in tx.channel.iter().zip(tx.power_w).enumerate() {
        if kp != k {
            out[n] += p * gains.g_cross(kp, k, n);
        }
    }
    out
}

/// Linear SINR of every V2V link on the sub-channel it selected (the SINR on
/// every other sub-channel is zero by the single-channel constraint).
pub fn v2v_sinr(gains: &ChannelGains, tx: &Transmission, noise_w: f64) -> Vec<f64> {
    (0..gains.n_v2v)
        .map(|k| {
            let n = tx.channel[k];
            let i = v2v_interference(gains, tx, k, noise_w)[n];
            tx.power_w[k] * gains.g(k, n) / i
        })
        .collect()
}

/// `W log2(1 + sinr)` in bit/s.
pub fn shannon_rate(bandwidth_hz: f64, sinr: f64) -> f64 {
    bandwidth_hz * sinr.ln_1p() / std::f64::consts::LN_2
}

/// V2I rates per sub-channel and V2V rates per link, bit/s.
pub fn rates(sinr_v2i: &[f64], sinr_v2v: &[f64], bandwidth_hz: f64) -> (Vec<f64>, Vec<f64>) {
    (
        sinr_v2i.iter().map(|&s| shannon_rate(bandwidth_hz, s)).collect(),
        sinr_v2v.iter().map(|&s| shannon_rate(bandwidth_hz, s)).collect(),
    )
}

/// Delivery-oriented reward, rates in Mbit/s.
///
/// Each link still holding data at the start of the slot contributes its rate;
/// on the final slot every link whose payload is exhausted adds `big_omega`.
pub fn reward_scenario1(
    v2i_mbps: &[f64],
    v2v_mbps: &[f64],
    bytes_before: &[f64],
    bytes_after: &[f64],
    final_slot: bool,
    omega: f64,
    big_omega: f64,
) -> f64 {
    let v2i: f64 = v2i_mbps.iter().sum();
    let stimulus: f64 = v2v_mbps.iter().zip(bytes_before).filter(|(_, &b)| b > 0.0).map(|(c, _)| c).sum();
    let bonus = if final_slot { big_omega * bytes_after.iter().filter(|&&b| b <= 0.0).count() as f64 } else { 0.0 };
    omega * v2i + stimulus + bonus
}

/// Weighted sum rate, Mbit/s.
pub fn reward_scenario2(v2i_mbps: &[f64], v2v_mbps: &[f64], omega: f64) -> f64 {
    omega * v2i_mbps.iter().sum::<f64>() + (1.0 - omega) * v2v_mbps.iter().sum::<f64>()
}
