pub mod api;
pub mod autodiff;
pub mod bench;
pub mod corpus;
pub mod g2t;
pub mod graph;
pub mod kernel;
pub mod knn;
pub mod search;
