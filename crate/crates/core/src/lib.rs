//! Learning SPARQL basic graph patterns that connect ground-truth
//! source-target pairs in an RDF graph, and predicting targets for new
//! sources with the learned patterns.

pub mod bgp;
pub mod canon;
pub mod endpoint;
pub mod evalharness;
pub mod evolution;
pub mod fitness;
pub mod predict;
pub mod rdf;
pub mod simplify;
pub mod synth;
