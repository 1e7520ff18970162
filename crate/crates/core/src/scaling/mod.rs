//! Finite-size scaling of ensemble tables.
//!
//! [`EnsembleTable`] is the on-disk interchange format. [`fit_collapse`]
//! locates `(p_c, nu)` from entropy curves, [`bootstrap_nu`] and
//! [`extrapolate_nu`] attach error bars and an infinite-size estimate, and
//! [`fit_gradvar_collapse`] fits the gradient-variance form at a known `p_c`.

mod collapse;
mod extrapolate;
mod gradvar;
mod mutinfo;
mod nelder_mead;
mod table;

pub use collapse::{
    bootstrap_nu, candidate_grid, fit_at, fit_collapse, rescale, Chi2Convention, CollapseFit,
    AnchorMode, CollapseOptions, ErrorScale, RescaledPoint, SIGMA_FLOOR,
};
pub use extrapolate::{extrapolate_nu, nu_vs_size, ExtrapolationFit, SizePoint};
pub use gradvar::{fit_gradvar_collapse, GradVarCollapseFit, GradVarOptions, PlateauMode, VARIANCE_FLOOR};
pub use mutinfo::{mutual_info_peak, MutualInfoPeak};
pub use nelder_mead::{Minimum, NelderMead};
pub use table::{EnsembleTable, TableRow, ValueKind, SCHEMA_VERSION};
