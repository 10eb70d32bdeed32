pub mod conv;
pub mod elementwise;
pub mod layout;
pub mod linalg;
pub mod reduce;
pub mod softmax;
