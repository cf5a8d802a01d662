//! Reader agents: prompt rendering, Tf-Idf candidate selection, feedback
//! simulation and parsing, and the broadcast loop that fills the ledger.

mod broadcast;
mod feedback;
mod prompt;
mod tfidf;

pub use broadcast::{
    broadcast_plan, broadcast_pool, reader_key, run_broadcast, run_broadcast_with, simulate_feedback, BroadcastError, BroadcastOptions,
};
pub use feedback::{
    behavior_table, parse_feedback, Behavior, BehaviorRow, FeedbackLedger, LedgerError, LedgerRecord, ParsedFeedback, SimulatedFeedback,
    BEHAVIOR_COLUMNS, UNPARSED,
};
pub use prompt::{build_agent_prompt, sample_history, visible_history, AgentPrompt, HISTORY_SAMPLE, HISTORY_SEPARATOR};
pub use tfidf::{select_topk_posts, CandidatePool, RankError, SCORE_QUANTUM};
