//! Chronological 70/20/10 split.

use super::{IndexedSession, Session, SplitDataset};
use crate::error::DataError;

/// Minimum session count for a meaningful split.
const MIN_SESSIONS: usize = 10;

/// Sort sessions by `(start, session_key)` and take the earliest 70%
/// as training, the next 20% as validation, and the final 10% as test.
/// Boundaries are floors, so 10 sessions split 7/2/1.
pub fn split_chronological(mut sessions: Vec<IndexedSession>) -> Result<SplitDataset, DataError> {
    let n = sessions.len();
    if n < MIN_SESSIONS {
        return Err(DataError::TooFewSessions {
            min: MIN_SESSIONS,
            got: n,
        });
    }
    sessions.sort_by(|a, b| a.start.cmp(&b.start).then(a.session_key.cmp(&b.session_key)));

    let train_end = n * 7 / 10;
    let valid_end = n * 9 / 10;
    let into_sessions = |range: std::ops::Range<usize>| -> Vec<Session> {
        sessions[range]
            .iter()
            .map(|s| Session::new(s.items.clone()))
            .collect()
    };
    Ok(SplitDataset {
        train: into_sessions(0..train_end),
        valid: into_sessions(train_end..valid_end),
        test: into_sessions(valid_end..n),
    })
}
