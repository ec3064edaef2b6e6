pub mod dist;
pub mod gof;
pub mod linalg;
pub mod optim;
pub mod regress;
pub mod scaletest;
pub mod loctest;
pub mod simgen;
pub mod bench;
