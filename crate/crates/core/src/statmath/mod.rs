//! Numerical kernels: normal distribution, quadrature, root finding,
//! one-dimensional maximisation and seeded random streams.

pub mod interval;
pub mod normal;
pub mod optimize;
pub mod quad;
pub mod rng;
pub mod roots;

pub use interval::Interval;
pub use normal::{norm_cdf, norm_pdf, norm_quantile, norm_sf, normal_density, upper_quantile};
pub use optimize::{maximize_1d, maximize_on_grid, Maximum};
pub use quad::{gaussian_expectation, integrate, integrate_pieces, DEFAULT_QUAD_TOL};
pub use rng::RngStream;
pub use roots::{find_root, DEFAULT_ROOT_TOL};

/// Compensated (Neumaier) summation. The result depends only on the order
/// of the input, never on how the values were produced.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
