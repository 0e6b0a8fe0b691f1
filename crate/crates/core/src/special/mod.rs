//! Gamma, Kummer and Tricomi functions and the stationary solution `ψ`.

pub mod gamma;
pub mod hypergeometric;
pub mod psi;
pub mod quadrature;

pub use gamma::{gamma_fn, rgamma};
pub use hypergeometric::{kummer_m, tricomi_u};
pub use psi::{
    calibrate_c_star, classify_region, comparability, ln_psi, psi_exact, upsilon, upsilon_branches, upsilon_zero,
    Comparability, PsiRegion, RegionTag,
};
