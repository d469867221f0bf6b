use std::fmt;

use kern_core::baselines::BaselineError;
use kern_core::corpus::CorpusError;
use kern_core::eval::EvalError;
use kern_core::gradkernel::GradError;
use kern_core::kern::KernError;
use kern_core::taxonomy::TaxonomyError;

/// A CLI-level failure with its error class.
#[derive(Debug)]
pub struct Failure {
    pub class: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(class: &'static str, message: impl Into<String>) -> Self {
        Self {
            class,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("usage", message)
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new("io", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new("not-found", message)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

/// Error class of the innermost recognised cause.
pub fn classify(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.class;
        }
        if let Some(e) = cause.downcast_ref::<CorpusError>() {
            return match e {
                CorpusError::Io { .. } => "io",
                CorpusError::InvalidConfig(_) => "config",
                _ => "corpus",
            };
        }
        if let Some(e) = cause.downcast_ref::<KernError>() {
            return match e {
                KernError::Checkpoint(_) => "checkpoint",
                KernError::InvalidConfig(_) => "config",
                KernError::Corpus(CorpusError::Io { .. }) => "io",
                _ => "train",
            };
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return match e {
                EvalError::SettingMismatch { .. } | EvalError::MissingCheckpoint => "checkpoint",
                EvalError::NoMethods => "usage",
                _ => "eval",
            };
        }
        if cause.downcast_ref::<TaxonomyError>().is_some() {
            return "taxonomy";
        }
        if cause.downcast_ref::<BaselineError>().is_some() {
            return "eval";
        }
        if cause.downcast_ref::<GradError>().is_some() {
            return "train";
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "internal"
}

/// ` (did you mean ...?)` with up to three close candidates, or nothing.
pub fn suggest<S: AsRef<str>>(name: &str, candidates: &[S]) -> String {
    let lower = name.to_lowercase();
    let mut scored: Vec<(f64, &str)> = candidates
        .iter()
        .map(|c| (strsim::jaro_winkler(&lower, &c.as_ref().to_lowercase()), c.as_ref()))
        .filter(|(s, _)| *s >= 0.7)
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    scored.dedup_by(|a, b| a.1 == b.1);
    if scored.is_empty() {
        return String::new();
    }
    let names: Vec<String> = scored.iter().take(3).map(|(_, n)| format!("`{n}`")).collect();
    format!(" (did you mean {}?)", names.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suggestions() {
        assert_eq!(suggest("turtle-nek", &["turtle-neck", "v-neck", "dress"]), " (did you mean `turtle-neck`?)");
        assert_eq!(suggest("zzz", &["dress"]), "");
    }

    #[test]
    fn classes() {
        let e: anyhow::Error = Failure::usage("x").into();
        assert_eq!(classify(&e), "usage");
        let e: anyhow::Error = anyhow::Error::new(KernError::Checkpoint("bad".into())).context("loading");
        assert_eq!(classify(&e), "checkpoint");
        assert_eq!(classify(&anyhow::anyhow!("plain")), "internal");
    }
}
