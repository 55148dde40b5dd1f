pub mod bench;
pub mod solve;
pub mod timestep;
pub mod topopt;
pub mod verify;
