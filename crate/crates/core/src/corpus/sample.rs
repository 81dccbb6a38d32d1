use super::{CandidateQuestion, CorpusWarning, Topic};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCount {
    pub topic: Topic,
    pub causal: bool,
    pub available: usize,
    pub drawn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub questions: Vec<CandidateQuestion>,
    pub cells: Vec<CellCount>,
    pub warnings: Vec<CorpusWarning>,
    /// Questions skipped because a topic or causal label was missing.
    pub unlabeled: usize,
}

/// Draws `per_cell` questions uniformly without replacement from each
/// (topic, causal) cell. Cells are visited in topic order, non-causal first,
/// with one seeded generator shared across cells. Within a cell the drawn
/// questions keep their input order.
pub fn stratified_sample(questions: &[CandidateQuestion], per_cell: usize, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unlabeled = questions.iter().filter(|q| q.topic.is_none() || q.causal.is_none()).count();
    let mut warnings = Vec::new();
    if unlabeled > 0 {
        warnings.push(CorpusWarning::new("unlabeled_excluded", format!("{unlabeled} question(s) lack strata labels")));
    }
    let mut out = Vec::new();
    let mut cells = Vec::new();
    for topic in Topic::ALL {
        for causal in [false, true] {
            let members: Vec<&CandidateQuestion> =
                questions.iter().filter(|q| q.topic == Some(topic) && q.causal == Some(causal)).collect();
            let take = per_cell.min(members.len());
            if members.len() < per_cell {
                warnings.push(CorpusWarning::new(
                    "cell_shortfall",
                    format!("{topic} / causal={causal}: {} of {per_cell} available", members.len()),
                ));
            }
            let mut picked = index::sample(&mut rng, members.len(), take).into_vec();
            picked.sort_unstable();
            out.extend(picked.into_iter().map(|i| members[i].clone()));
            cells.push(CellCount { topic, causal, available: members.len(), drawn: take });
        }
    }
    Sample { questions: out, cells, warnings, unlabeled }
}
