//! Leave-one-out splitting.

use super::log::{Event, InteractionLog, UserHistory};
use crate::error::{CasmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitOptions {
    /// Also hold out the second-to-last interaction as a validation target.
    pub validation: bool,
    /// Only emit test instances whose held-out interaction has `primary_behavior`.
    pub target_behavior_only: bool,
    pub primary_behavior: usize,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self { validation: false, target_behavior_only: true, primary_behavior: 0 }
    }
}

/// A withheld interaction together with everything the user did before it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeldOut {
    pub user_id: u64,
    pub item: usize,
    pub behavior: usize,
    pub history: Vec<Event>,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: InteractionLog,
    pub test: Vec<HeldOut>,
    pub validation: Vec<HeldOut>,
}

/// Withholds each user's chronologically last interaction for testing.
///
/// Users with a single interaction stay in the training log and produce no
/// test instance. With `validation`, users with at least three interactions
/// also give up their second-to-last interaction as a validation target.
pub fn leave_one_out_split(log: &InteractionLog, options: &SplitOptions) -> Result<Split> {
    if log.num_users() == 0 || log.num_interactions() == 0 {
        return Err(CasmError::Data("cannot split an empty interaction log".into()));
    }
    let mut train_users = Vec::with_capacity(log.num_users());
    let mut test = Vec::new();
    let mut validation = Vec::new();
    for user in log.users() {
        let events = &user.events;
        let n = events.len();
        if n < 2 {
            train_users.push(user.clone());
            continue;
        }
        let last = events[n - 1];
        if !options.target_behavior_only || last.behavior == options.primary_behavior {
            test.push(HeldOut {
                user_id: user.user_id,
                item: last.item,
                behavior: last.behavior,
                history: events[..n - 1].to_vec(),
            });
        }
        let mut keep = n - 1;
        if options.validation && n >= 3 {
            let val = events[n - 2];
            validation.push(HeldOut {
                user_id: user.user_id,
                item: val.item,
                behavior: val.behavior,
                history: events[..n - 2].to_vec(),
            });
            keep = n - 2;
        }
        train_users.push(UserHistory { user_id: user.user_id, events: events[..keep].to_vec() });
    }
    let train = InteractionLog::from_users(
        train_users,
        log.num_items(),
        log.num_behaviors(),
        log.behavior_names().to_vec(),
    );
    Ok(Split { train, test, validation })
}
