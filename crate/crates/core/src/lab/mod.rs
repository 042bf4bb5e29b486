mod probes;
mod recovery;
mod regime;
mod sweep;
mod transition;

pub use probes::*;
pub use recovery::*;
pub use regime::*;
pub use sweep::*;
pub use transition::*;
