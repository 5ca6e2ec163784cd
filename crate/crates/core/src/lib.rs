//! Embedded dimensional warehouse.
//!
//! Datamarts plug into a bus of conformed dimensions declared in a small schema
//! language ([`dsl`]). Heterogeneous delimited sources are harmonized by
//! [`mapping`] rules and loaded by [`etl`] into an append-only segment
//! [`store`]. The [`olap`] engine answers cube queries with hierarchy
//! navigation, normality flagging, attribute-value export and complex-fact
//! assembly.

pub mod dsl;
pub mod etl;
pub mod mapping;
pub mod model;
pub mod olap;
pub mod store;
pub mod value;

pub use value::Value;
