use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::Direction;

/// Filtered ranking metrics over a set of queries.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

impl Metrics {
    /// `ranks` are 1-based.
    pub fn from_ranks(ranks: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Metrics::default();
        let (mut rr, mut h1, mut h3, mut h10) = (0.0, 0usize, 0usize, 0usize);
        for r in ranks {
            debug_assert!(r >= 1);
            m.count += 1;
            rr += 1.0 / r as f64;
            h1 += usize::from(r <= 1);
            h3 += usize::from(r <= 3);
            h10 += usize::from(r <= 10);
        }
        if m.count > 0 {
            let n = m.count as f64;
            m.mrr = rr / n;
            m.hits1 = h1 as f64 / n;
            m.hits3 = h3 as f64 / n;
            m.hits10 = h10 as f64 / n;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tail: Metrics,
    pub head: Metrics,
    pub combined: Metrics,
}

/// MRR and Hits@{1,3,10} per direction and over all queries.
pub fn evaluate(ranks: &[(Direction, usize)]) -> Result<MetricsReport> {
    if ranks.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    let of = |d: Direction| {
        Metrics::from_ranks(ranks.iter().filter(|(dir, _)| *dir == d).map(|&(_, r)| r))
    };
    Ok(MetricsReport {
        tail: of(Direction::Tail),
        head: of(Direction::Head),
        combined: Metrics::from_ranks(ranks.iter().map(|&(_, r)| r)),
    })
}

impl MetricsReport {
    /// Fixed-width text table.
    pub fn render_table(&self) -> String {
        let mut s = String::from("direction  count      MRR   Hits@1   Hits@3  Hits@10\n");
        for (name, m) in [
            ("tail", &self.tail),
            ("head", &self.head),
            ("combined", &self.combined),
        ] {
            s.push_str(&format!(
                "{name:<9} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
                m.count, m.mrr, m.hits1, m.hits3, m.hits10
            ));
        }
        s
    }
}
