pub mod normal;
pub mod quadrature;
pub mod roots;

pub use quadrature::{integrate, GaussLegendre, QuadratureConfig};
pub use roots::brent;
