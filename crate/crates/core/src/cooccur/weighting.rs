//! Distance weighting schemes for context windows.
//!
//! Every scheme expresses its weights on a rational lattice: the weight at
//! distance `d` is `units(d) / denominator(window)` with integer `units`.
//! Accumulating integer units makes cooccurrence sums independent of
//! summation order, so sharded and whole-corpus builds agree bit for bit.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Largest supported window: the harmonic denominator lcm(1..=w) must leave
/// ample headroom in a 64-bit accumulator.
pub const MAX_WINDOW: usize = 20;

pub trait DistanceWeighting: Send + Sync {
    fn name(&self) -> &'static str;

    /// Common denominator of all weights for `window`.
    fn denominator(&self, window: usize) -> u64;

    /// Numerator of the weight at `distance` (1 ≤ distance ≤ window).
    fn units(&self, distance: usize, window: usize) -> u64;

    fn weight(&self, distance: usize, window: usize) -> f64 {
        self.units(distance, window) as f64 / self.denominator(window) as f64
    }
}

impl fmt::Debug for dyn DistanceWeighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Weight `1/d`, the reference GloVe behaviour.
#[derive(Debug, Clone, Copy, Default)]
pub struct Harmonic;

impl DistanceWeighting for Harmonic {
    fn name(&self) -> &'static str {
        "harmonic"
    }

    fn denominator(&self, window: usize) -> u64 {
        (1..=window as u64).fold(1, lcm)
    }

    fn units(&self, distance: usize, window: usize) -> u64 {
        self.denominator(window) / distance as u64
    }
}

/// Weight 1 at every distance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Uniform;

impl DistanceWeighting for Uniform {
    fn name(&self) -> &'static str {
        "uniform"
    }

    fn denominator(&self, _window: usize) -> u64 {
        1
    }

    fn units(&self, _distance: usize, _window: usize) -> u64 {
        1
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

#[derive(Clone)]
pub struct WeightingRegistry {
    schemes: BTreeMap<&'static str, Arc<dyn DistanceWeighting>>,
}

impl Default for WeightingRegistry {
    fn default() -> Self {
        let mut r = WeightingRegistry {
            schemes: BTreeMap::new(),
        };
        r.register(Arc::new(Harmonic));
        r.register(Arc::new(Uniform));
        r
    }
}

impl WeightingRegistry {
    pub fn register(&mut self, scheme: Arc<dyn DistanceWeighting>) -> Option<Arc<dyn DistanceWeighting>> {
        self.schemes.insert(scheme.name(), scheme)
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn DistanceWeighting>> {
        self.schemes.get(name).cloned().ok_or_else(|| {
            Error::validation(
                "weighting",
                format!("unknown scheme {name:?} (known: {})", self.names().join(", ")),
            )
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.schemes.keys().copied().collect()
    }
}

/// Looks up a scheme in the built-in registry.
pub fn weighting(name: &str) -> Result<Arc<dyn DistanceWeighting>> {
    WeightingRegistry::default().get(name)
}

pub fn validate_window(window: usize) -> Result<()> {
    if window == 0 || window > MAX_WINDOW {
        return Err(Error::validation(
            "window",
            format!("must be in 1..={MAX_WINDOW}, got {window}"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_lattice() {
        assert_eq!(Harmonic.denominator(10), 2520);
        for d in 1..=10 {
            assert_eq!(Harmonic.weight(d, 10), 1.0 / d as f64);
            assert_eq!(Harmonic.units(d, 10) * d as u64, 2520);
        }
        assert_eq!(Harmonic.denominator(MAX_WINDOW), 232_792_560);
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(weighting("harmonic").unwrap().name(), "harmonic");
        assert_eq!(weighting("uniform").unwrap().weight(7, 10), 1.0);
        assert!(weighting("gaussian").is_err());
    }

    #[test]
    fn window_bounds() {
        assert!(validate_window(0).is_err());
        assert!(validate_window(10).is_ok());
        assert!(validate_window(MAX_WINDOW + 1).is_err());
    }
}
