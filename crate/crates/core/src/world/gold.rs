use std::sync::atomic::{AtomicU64, Ordering};

/// Why a gold answer is being read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GoldPurpose {
    /// Constructing a training reward (gold-EM baseline).
    TrainingReward,
    /// Held-out accuracy measurement.
    Evaluation,
    /// Tests and offline inspection.
    Diagnostics,
}

/// Counts gold-answer reads so gold-free training can be audited.
#[derive(Debug, Default)]
pub struct GoldAudit {
    training: AtomicU64,
    evaluation: AtomicU64,
    diagnostics: AtomicU64,
}

impl GoldAudit {
    pub(crate) fn record(&self, purpose: GoldPurpose) {
        let counter = match purpose {
            GoldPurpose::TrainingReward => &self.training,
            GoldPurpose::Evaluation => &self.evaluation,
            GoldPurpose::Diagnostics => &self.diagnostics,
        };
        counter.fetch_add(1, Ordering::Relaxed);
    }

    pub fn reads(&self, purpose: GoldPurpose) -> u64 {
        match purpose {
            GoldPurpose::TrainingReward => self.training.load(Ordering::Relaxed),
            GoldPurpose::Evaluation => self.evaluation.load(Ordering::Relaxed),
            GoldPurpose::Diagnostics => self.diagnostics.load(Ordering::Relaxed),
        }
    }
}
