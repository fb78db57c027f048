use std::io::Write;

use super::Logger;
use crate::error::{Error, Result};
use crate::events::MetricState;

/// Prints a fixed-width table after every validation round: one row per
/// validated task, then an `all` row with the round averages.
pub struct ConsoleLogger {
    out: Box<dyn Write + Send>,
}

impl ConsoleLogger {
    pub fn stdout() -> Self {
        Self::to_writer(Box::new(std::io::stdout()))
    }

    pub fn to_writer(out: Box<dyn Write + Send>) -> Self {
        Self { out }
    }
}

impl Default for ConsoleLogger {
    fn default() -> Self {
        Self::stdout()
    }
}

/// Renders the table for the latest row of `state`.
pub fn render_table(state: &MetricState) -> Result<String> {
    let l = state.num_rows();
    let row = state.row(l)?;
    let mut s = format!("after task {l}\n{:>6} {:>8} {:>8} {:>10}\n", "task", "acc", "avg_acc", "forgetting");
    for (i, acc) in row.iter().enumerate() {
        let j = i + 1;
        let forgetting = if j < l {
            format!("{:.4}", state.task_forgetting(l, j)?)
        } else {
            "-".to_string()
        };
        s += &format!("{j:>6} {acc:>8.4} {:>8} {forgetting:>10}\n", "-");
    }
    let forgetting = if l >= 2 {
        format!("{:.4}", state.forgetting(l)?)
    } else {
        "-".to_string()
    };
    s += &format!(
        "{:>6} {:>8} {:>8.4} {forgetting:>10}\n",
        "all",
        "-",
        state.average_accuracy(l)?
    );
    Ok(s)
}

impl Logger for ConsoleLogger {
    fn name(&self) -> &str {
        "console"
    }

    fn validation_round(&mut self, state: &MetricState) -> Result<()> {
        let table = render_table(state)?;
        self.out
            .write_all(table.as_bytes())
            .map_err(|e| Error::io("<console>", e))
    }

    fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io("<console>", e))
    }
}
