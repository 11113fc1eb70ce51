//! Strictly convex surfaces of revolution: profiles, equatorial return maps
//! and the order of vanishing of the rotation map.

mod profile;
mod returnmap;

pub use profile::{validate_profile, ProfileSpec, RevolutionProfile};
pub use returnmap::{
    clairaut_constant, default_return_constant, first_return, first_return_from, rational_recurrence_measure,
    theta_quadrature, vanishing_order, vanishing_order_from, ReturnMapSample, ReturnMapTable, VanishingOrder,
    ALPHA_MARGIN,
};
