use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Monte-Carlo estimate of the stage kernel with its standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub trials: u64,
    pub defer_frequency: f64,
    pub mean_slots: f64,
    pub defer_std_error: f64,
    pub slots_std_error: f64,
}

impl OracleEstimate {
    /// Whether `p_defer` and `slots` both lie within `k` standard errors.
    ///
    /// A zero standard error (degenerate race) demands agreement to 1e-12.
    pub fn agrees_with(&self, p_defer: f64, slots: f64, k: f64) -> bool {
        self.defer_z(p_defer) <= k && self.slots_z(slots) <= k
    }

    /// Deviation of `p_defer` from the observed frequency in standard errors.
    /// The error uses the larger of the observed and the hypothesised binomial
    /// spread, so a tiny probability that never showed up is not a miss.
    pub fn defer_z(&self, p_defer: f64) -> f64 {
        let model_se = (p_defer * (1.0 - p_defer) / self.trials as f64).sqrt();
        z(self.defer_frequency - p_defer, self.defer_std_error.max(model_se))
    }

    pub fn slots_z(&self, slots: f64) -> f64 {
        z(self.mean_slots - slots, self.slots_std_error)
    }
}

fn z(diff: f64, se: f64) -> f64 {
    if diff.abs() <= 1e-12 {
        0.0
    } else if se > 0.0 {
        diff.abs() / se
    } else {
        f64::INFINITY
    }
}

/// Plays the backoff/deferral race `trials` times against Bernoulli(`p_b`)
/// busy slots.
pub fn mc_oracle(window: u32, deferral: u32, p_b: f64, trials: u64, seed: u64) -> OracleEstimate {
    assert!(trials >= 1, "at least one trial");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut defers = 0u64;
    let mut sum = 0f64;
    let mut sum_sq = 0f64;

    for _ in 0..trials {
        let mut backoff = rng.gen_range(0..=window);
        let mut dc = deferral;
        let mut elapsed = 0u32;
        while backoff > 0 {
            elapsed += 1;
            let busy = p_b > 0.0 && rng.gen::<f64>() < p_b;
            if busy {
                if dc == 0 {
                    defers += 1;
                    break;
                }
                dc -= 1;
            }
            backoff -= 1;
        }
        let e = f64::from(elapsed);
        sum += e;
        sum_sq += e * e;
    }

    let n = trials as f64;
    let freq = defers as f64 / n;
    let mean = sum / n;
    let var = if trials > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    OracleEstimate {
        trials,
        defer_frequency: freq,
        mean_slots: mean,
        defer_std_error: (freq * (1.0 - freq) / n).sqrt(),
        slots_std_error: (var / n).sqrt(),
    }
}
