use crate::error::{invalid, Result};

/// Blind estimate of `(delta2_0, delta2_1)` from one block of symbol energies.
///
/// The sorted energies are split into a low and a high half; the pilot
/// (reflecting) energies decide which half belongs to the reflecting state.
pub fn semicoh_estimate(frame_energies: &[f64], training_energies: &[f64]) -> Result<(f64, f64)> {
    let m = frame_energies.len();
    if m < 2 || m % 2 != 0 {
        return Err(invalid(format!("semi-coherent estimate needs an even number >= 2 of energies, got {m}")));
    }
    if training_energies.is_empty() {
        return Err(invalid("semi-coherent estimate needs at least one training energy"));
    }

    let mut sorted = frame_energies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (low, high) = sorted.split_at(m / 2);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let sigma_min = mean(low);
    let sigma_max = mean(high);
    let sigma_t = mean(training_energies);

    if (sigma_min - sigma_t).abs() < (sigma_max - sigma_t).abs() {
        Ok((sigma_max, sigma_min))
    } else {
        Ok((sigma_min, sigma_max))
    }
}
