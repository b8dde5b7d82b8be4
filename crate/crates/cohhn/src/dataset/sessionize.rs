//! Split each key's event stream at UTC calendar-day boundaries.

use super::{Interaction, RawSession};

const SECONDS_PER_DAY: i64 = 86_400;

/// Partition interactions into sessions: consecutive events of the
/// same key stay together while they fall on the same UTC calendar
/// day; a new day starts a new session. Input must already be sorted
/// by `(session_key, timestamp)` (as [`super::load_interactions`]
/// guarantees); order is preserved.
pub fn sessionize_daily(interactions: &[Interaction]) -> Vec<RawSession> {
    let mut out: Vec<RawSession> = Vec::new();
    for event in interactions {
        let day = event.timestamp.div_euclid(SECONDS_PER_DAY);
        let continues = out.last().is_some_and(|s| {
            s.session_key == event.session_key
                && s.events.last().expect("sessions are non-empty").timestamp
                    .div_euclid(SECONDS_PER_DAY)
                    == day
        });
        if continues {
            out.last_mut().unwrap().events.push(event.clone());
        } else {
            out.push(RawSession {
                session_key: event.session_key.clone(),
                start: event.timestamp,
                events: vec![event.clone()],
            });
        }
    }
    out
}
