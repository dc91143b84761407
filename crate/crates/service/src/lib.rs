//! HTTP labeling sessions: a learner runs on its own thread and every pair
//! query it makes is handed to a person through a small JSON API.
//!
//! | route | method | |
//! |---|---|---|
//! | `/sessions` | POST | create `{tree \| tree_path, algorithm, params, seed, budget}` |
//! | `/sessions/{id}/question` | GET | pending question, or the final clustering |
//! | `/sessions/{id}/answer` | POST | `{question_id, similar}` |
//! | `/sessions/{id}/clustering` | GET | current clustering |
//! | `/sessions/{id}/stats` | GET | counters |
//! | `/sessions/{id}/stop` | POST | finish with the current estimate |
//! | `/sessions/{id}` | DELETE | drop the session and its snapshot |

pub mod api;
pub mod session;

pub use api::router;
pub use session::{Learner, LearnerConfig, Session, Sessions};

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

/// Serves the API until the process is killed. With a snapshot directory,
/// sessions found there are resumed first.
pub async fn serve(addr: SocketAddr, snapshot_dir: Option<PathBuf>) -> treecut::Result<()> {
    let sessions = match &snapshot_dir {
        Some(dir) => Sessions::restore(dir)?,
        None => Sessions::new(None),
    };
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(sessions))).await?;
    Ok(())
}
