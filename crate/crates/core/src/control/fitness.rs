use super::ControlError;

/// Urgency inputs for one event.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitnessInputs {
    /// Queue length in metres; always 0 for pedestrian events.
    pub queue_m: f64,
    /// Seconds since the event's last green ended.
    pub red_wait_s: f64,
    /// Length of the event's previous green interval.
    pub prev_green_s: f64,
    /// Vehicles or pedestrians currently waiting.
    pub waiting: f64,
}

impl FitnessInputs {
    pub fn new(queue_m: f64, red_wait_s: f64, prev_green_s: f64, waiting: f64) -> Result<Self, ControlError> {
        let i = FitnessInputs { queue_m, red_wait_s, prev_green_s, waiting };
        if i.as_array().iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(ControlError::InvalidInput(format!("fitness inputs must be finite and non-negative: {i:?}")));
        }
        Ok(i)
    }

    fn as_array(&self) -> [f64; 4] {
        [self.queue_m, self.red_wait_s, self.prev_green_s, self.waiting]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessWeights {
    weights: [f64; 4],
    caps: [f64; 4],
}

impl FitnessWeights {
    /// `weights` and `caps` follow the order queue, red wait, previous
    /// green, waiting count.
    pub fn new(weights: [f64; 4], caps: [f64; 4]) -> Result<Self, ControlError> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(ControlError::InvalidConfig("fitness weights must be non-negative".into()));
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(ControlError::InvalidConfig("at least one fitness weight must be positive".into()));
        }
        if caps.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(ControlError::InvalidConfig("fitness caps must be positive".into()));
        }
        Ok(FitnessWeights { weights, caps })
    }

    pub fn weights(&self) -> [f64; 4] {
        self.weights
    }

    pub fn caps(&self) -> [f64; 4] {
        self.caps
    }
}

impl Default for FitnessWeights {
    fn default() -> Self {
        FitnessWeights {
            weights: [1.0, 1.0, 0.5, 1.0],
            caps: [200.0, 90.0, 30.0, 20.0],
        }
    }
}

pub fn fitness(inputs: &FitnessInputs, weights: &FitnessWeights) -> f64 {
    let sign = [1.0, 1.0, -1.0, 1.0];
    inputs
        .as_array()
        .iter()
        .zip(weights.weights)
        .zip(weights.caps)
        .zip(sign)
        .map(|(((p, w), c), s)| s * w * (p.max(0.0) / c).min(1.0))
        .sum()
}
