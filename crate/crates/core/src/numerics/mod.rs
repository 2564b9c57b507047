//! Small dense linear-algebra and statistics kernel.

mod matrix;
mod ols;
mod stats;
mod svd;

pub use matrix::Matrix;
pub use ols::{ols_fit, OlsFit};
pub use stats::{
    chi_square_sf, column_mean_sd, gamma_q, kruskal_wallis, ln_gamma, mae_relative, median,
    pearson, quantile, r2_log, ranks, spearman, standardize, Standardized,
};
pub use svd::{svd, SvdResult};
