//! Gain function, synaptic kernel and network weights.

mod gain;
mod kernel;
mod network;
mod weights;

pub use gain::{FixedPoints, GainFunction, GainParams};
pub use kernel::{KernelFamily, KernelParams, SynapticKernel};
pub use network::Network;
pub use weights::{WeightMatrix, DEFAULT_POPULATION_CAP};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetry_identities_on_grid() {
        let f = GainFunction::new(8.0, 0.5).unwrap();
        let w = SynapticKernel::gaussian(1.0).unwrap();
        for i in -100..=100 {
            let x = 0.037 * i as f64;
            assert_eq!(w.eval(x), w.eval(-x));
            assert!((f.eval(x) + f.eval(1.0 - x) - 1.0).abs() < 1e-12);
        }
    }
}
