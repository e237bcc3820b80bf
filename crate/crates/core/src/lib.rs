pub mod amg;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod precond;
pub mod verify;
