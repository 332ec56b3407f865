//! Ontological models, exact feasibility certificates and relational state
//! ledgers for the PBR no-go argument and its relational counterpart.

pub mod feasibility;
pub mod hilbert;
pub mod ontmodel;
pub mod rqm;
