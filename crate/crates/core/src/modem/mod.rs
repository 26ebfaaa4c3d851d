//! Gray QPSK, encoded-pilot packets, reflection schedules and the
//! Kronecker-structured `Λ` matrices built from them.

pub mod lambda;
pub mod packet;
pub mod qpsk;
pub mod schedule;

pub use lambda::build_lambda;
pub use packet::{FrameLayout, PacketBuilder, TxBlock};
pub use qpsk::{qpsk_modulate, qpsk_soft_demod};
pub use schedule::PhaseSchedule;
