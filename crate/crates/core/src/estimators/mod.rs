//! Parameter estimators: periodogram peak analysis, log-inversion least
//! squares for the z-drive model, and profiled likelihood over `(omega, gamma)`.

pub mod bayes;
pub mod fourier;
pub mod timeseries;

pub use bayes::{bayes_loglik, bayes_loglik_with, bayes_surface, LikelihoodPoint, LikelihoodSurface, NoiseScale};
pub use fourier::{damped_sine_spectrum, fourier_estimate, periodogram, FourierEstimate, Spectrum};
pub use timeseries::{
    gamma_least_squares, sequential_stop, truncation_time, z_inversion, GammaEstimate, LsqOptions, StopRule,
    Truncation, ZSample,
};
