//! Selection mathematics for bi-objective maximization: Pareto dominance,
//! non-dominated sorting, crowding distance, exact 2-D hypervolume and the
//! NSGA-II / SMS-EMOA survivor selectors.

mod crowding;
mod dominance;
mod hypervolume;
mod selection;

pub use crowding::crowding_distance;
pub use dominance::{dominates, nondominated_sort, sort_with_counts, Front, Sorting};
pub use hypervolume::{
    hv_contributions, hv_subset_select, hypervolume_2d, HypervolumeError, ReferencePoint,
    SubsetMode,
};
pub use selection::{
    nsga2_select, nsga2_select_points, sms_emoa_select, sms_emoa_select_points, Diagnostics,
    SelectionError, SelectionOutcome, Selector,
};
