//! Binary wire protocol, rate schedule and freshness mailboxes.

mod mailbox;
mod schedule;
mod wire;

pub use mailbox::LatestWins;
pub use schedule::{tick_count, tick_schedule, tick_time_us, MultiRateSchedule, Stream, TickEvent};
pub use wire::*;
