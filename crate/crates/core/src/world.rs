//! Researcher and reviewer pools, the keyword universe, and manuscript arrivals.

use serde::{Deserialize, Serialize};

use crate::config::WorldConfig;
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub type Keyword = u16;
pub type ResearcherId = u32;
pub type ReviewerId = u32;
pub type ManuscriptId = u64;

/// Sorted, duplicate-free keyword set.
pub type KeywordSet = Vec<Keyword>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Researcher {
    pub id: ResearcherId,
    pub keywords: KeywordSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewerKind {
    Human,
    Ai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reviewer {
    pub id: ReviewerId,
    pub kind: ReviewerKind,
    pub keywords: KeywordSet,
    pub reliability: f64,
    pub workload: u32,
    pub cluster_id: Option<u32>,
    /// Researcher identity behind a human reviewer; used for conflict-of-interest checks.
    pub researcher: Option<ResearcherId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManuscriptState {
    Backlog,
    InReview,
    Escalated,
    Accepted,
    Rejected,
    Revise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manuscript {
    pub id: ManuscriptId,
    pub authors: Vec<ResearcherId>,
    pub keywords: KeywordSet,
    pub quality: f64,
    pub complexity: f64,
    pub arrived_at: u32,
    pub state: ManuscriptState,
    pub revision_count: u32,
    pub reviews: Vec<crate::pipeline::Review>,
    /// Times the manuscript scored below the triage threshold.
    pub deferrals: u32,
    pub rounds_used: u32,
}

impl Manuscript {
    pub fn is_authored_by(&self, researcher: ResearcherId) -> bool {
        self.authors.contains(&researcher)
    }
}

/// `|a ∩ b| / |a ∪ b|` over sorted keyword sets; two empty sets give 0.
pub fn jaccard(a: &[Keyword], b: &[Keyword]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Builds a sorted keyword set from arbitrary input.
pub fn keyword_set(mut kws: Vec<Keyword>) -> KeywordSet {
    kws.sort_unstable();
    kws.dedup();
    kws
}

fn sample_keywords(rng: &mut RngStream, universe: usize, count: usize) -> KeywordSet {
    keyword_set(
        rng.sample_indices(universe, count)
            .into_iter()
            .map(|k| k as Keyword)
            .collect(),
    )
}

#[derive(Debug, Clone)]
pub struct World {
    pub researchers: Vec<Researcher>,
    pub reviewers: Vec<Reviewer>,
    next_manuscript_id: ManuscriptId,
}

impl World {
    /// Builds the fixed pools. Human reviewer `i` is researcher `i` when such a researcher exists.
    pub fn new(cfg: &WorldConfig, rng: &mut RngStream) -> Result<Self> {
        if cfg.n_authors == 0 {
            return Err(Error::Config("empty author pool".into()));
        }
        let universe = cfg.keyword_universe_size;
        if universe > Keyword::MAX as usize {
            return Err(Error::Config("keyword universe too large".into()));
        }
        let researchers: Vec<Researcher> = (0..cfg.n_authors)
            .map(|i| Researcher {
                id: i as ResearcherId,
                keywords: sample_keywords(rng, universe, cfg.keywords_per_researcher),
            })
            .collect();

        let mut reviewers = Vec::with_capacity(cfg.n_human_reviewers + cfg.n_ai_reviewers);
        for i in 0..cfg.n_human_reviewers {
            let researcher = (i < researchers.len()).then_some(i as ResearcherId);
            let keywords = match researcher {
                Some(r) => researchers[r as usize].keywords.clone(),
                None => sample_keywords(rng, universe, cfg.keywords_per_researcher),
            };
            let reliability =
                rng.uniform_range(cfg.human_reliability_min, cfg.human_reliability_max);
            reviewers.push(Reviewer {
                id: i as ReviewerId,
                kind: ReviewerKind::Human,
                keywords,
                reliability: if reliability > 0.0 { reliability } else { cfg.human_reliability_min },
                workload: 0,
                cluster_id: None,
                researcher,
            });
        }
        for j in 0..cfg.n_ai_reviewers {
            reviewers.push(Reviewer {
                id: (cfg.n_human_reviewers + j) as ReviewerId,
                kind: ReviewerKind::Ai,
                keywords: sample_keywords(rng, universe, cfg.keywords_per_researcher),
                reliability: 1.0,
                workload: 0,
                cluster_id: None,
                researcher: None,
            });
        }
        Ok(Self {
            researchers,
            reviewers,
            next_manuscript_id: 0,
        })
    }

    pub fn reviewer(&self, id: ReviewerId) -> Option<&Reviewer> {
        self.reviewers.get(id as usize)
    }

    pub fn manuscripts_created(&self) -> u64 {
        self.next_manuscript_id
    }

    pub fn mean_workload(&self) -> f64 {
        if self.reviewers.is_empty() {
            return 0.0;
        }
        self.reviewers.iter().map(|r| r.workload as f64).sum::<f64>() / self.reviewers.len() as f64
    }

    pub fn max_workload(&self) -> u32 {
        self.reviewers.iter().map(|r| r.workload).max().unwrap_or(0)
    }

    /// Draws this timestep's submissions. `cfg` carries the effective (window-adjusted)
    /// arrival and quality parameters; pool sizes are fixed at construction.
    pub fn generate_arrivals(
        &mut self,
        cfg: &WorldConfig,
        rng: &mut RngStream,
        t: u32,
        p_sub_override: Option<f64>,
    ) -> Result<Vec<Manuscript>> {
        if self.researchers.is_empty() {
            return Err(Error::Config("empty author pool".into()));
        }
        let p = p_sub_override.unwrap_or(cfg.p_sub);
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("submission probability {p} outside [0, 1]")));
        }
        let count = rng.binomial(self.researchers.len() as u64, p)?;
        let mut out = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let n_auth = (1 + rng.index(3)).min(self.researchers.len());
            let mut authors: Vec<ResearcherId> = rng
                .sample_indices(self.researchers.len(), n_auth)
                .into_iter()
                .map(|i| i as ResearcherId)
                .collect();
            authors.sort_unstable();
            let union = keyword_set(
                authors
                    .iter()
                    .flat_map(|&a| self.researchers[a as usize].keywords.iter().copied())
                    .collect(),
            );
            let n_kw = union.len().min(3);
            let keywords = keyword_set(
                rng.sample_indices(union.len(), n_kw)
                    .into_iter()
                    .map(|i| union[i])
                    .collect(),
            );
            let quality = rng.normal(cfg.quality_mu, cfg.quality_sigma)?.clamp(0.0, 1.0);
            let complexity = rng
                .normal(cfg.complexity_mu, cfg.complexity_sigma)?
                .clamp(0.0, 1.0);
            let id = self.next_manuscript_id;
            self.next_manuscript_id += 1;
            out.push(Manuscript {
                id,
                authors,
                keywords,
                quality,
                complexity,
                arrived_at: t,
                state: ManuscriptState::Backlog,
                revision_count: 0,
                reviews: Vec::new(),
                deferrals: 0,
                rounds_used: 0,
            });
        }
        Ok(out)
    }
}
