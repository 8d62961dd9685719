//! Result ingestion and the report tables built from it.

mod cross;
mod loss;
mod matrix;
mod rank;
mod results;
pub mod table;

pub use cross::{cross_scale_table, CrossScaleRow, CrossScaleTable, ScaleScores, SignSummary};
pub use loss::{loss_vs_climb_table, LossRow, LossTable};
pub use matrix::{per_task_delta_matrix, DeltaMatrix};
pub use rank::{rank_table, RankRow, RankTable};
pub use results::{aggregate, climb_avg, read_scores_csv, MethodScore, ResultsFile, TASKS};
pub use table::Table;
