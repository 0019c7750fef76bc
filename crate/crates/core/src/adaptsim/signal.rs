use nalgebra::DVector;

/// Reference command `r(t)`, evaluated analytically (also at Runge-Kutta
/// stage times).
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Constant(DVector<f64>),
    /// Zero before `at`, `amplitude` from `at` on.
    Step {
        amplitude: DVector<f64>,
        at: f64,
    },
    /// Unit step through a first-order lag: `amplitude (1 - exp(-t / tau))`.
    FilteredStep {
        amplitude: DVector<f64>,
        time_constant: f64,
    },
    Sine {
        amplitude: DVector<f64>,
        frequency: f64,
    },
}

impl Reference {
    pub fn zero(dim: usize) -> Self {
        Reference::Constant(DVector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        match self {
            Reference::Constant(v) => v.len(),
            Reference::Step { amplitude, .. }
            | Reference::FilteredStep { amplitude, .. }
            | Reference::Sine { amplitude, .. } => amplitude.len(),
        }
    }

    pub fn value(&self, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.value_into(t, &mut out);
        out
    }

    /// `r(t)` written into `out`, which must have `dim()` entries.
    pub fn value_into(&self, t: f64, out: &mut DVector<f64>) {
        let (amplitude, scale) = match self {
            Reference::Constant(v) => (v, 1.0),
            Reference::Step { amplitude, at } => (amplitude, if t >= *at { 1.0 } else { 0.0 }),
            Reference::FilteredStep {
                amplitude,
                time_constant,
            } => (amplitude, 1.0 - (-t / time_constant).exp()),
            Reference::Sine { amplitude, frequency } => (amplitude, (frequency * t).sin()),
        };
        out.zip_apply(amplitude, |o, a| *o = a * scale);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filtered_step_reaches_63_percent_at_tau() {
        let r = Reference::FilteredStep {
            amplitude: DVector::from_element(1, 100.0),
            time_constant: 10.0,
        };
        assert_eq!(r.value(0.0)[0], 0.0);
        assert!((r.value(10.0)[0] - 100.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn step_switches_on_time() {
        let r = Reference::Step {
            amplitude: DVector::from_element(2, 1.0),
            at: 1.0,
        };
        assert_eq!(r.value(0.5).sum(), 0.0);
        assert_eq!(r.value(1.0).sum(), 2.0);
    }
}
