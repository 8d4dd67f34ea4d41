//! CLI error classification; each kind maps to a distinct exit code.

use zner_core::corpus::CorpusError;
use zner_core::curation::CurationError;
use zner_core::evaluation::EvalError;
use zner_core::guidelines::GuidelineError;
use zner_core::inference::InferenceError;
use zner_core::llm::LlmError;
use zner_core::prompting::PromptError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Transport,
    Validation,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Transport => 4,
            ErrorKind::Validation => 5,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: String) -> Self {
        Self { kind, message }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        Self::new(ErrorKind::Data, e.to_string())
    }
}

impl From<CurationError> for CliError {
    fn from(e: CurationError) -> Self {
        Self::new(ErrorKind::Config, e.to_string())
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        let kind = match e {
            PromptError::TooFewExamples { .. } => ErrorKind::Data,
            _ => ErrorKind::Config,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        let kind = match e {
            LlmError::MissingApiKey(_) => ErrorKind::Config,
            LlmError::MalformedResponse(_) => ErrorKind::Validation,
            _ => ErrorKind::Transport,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<GuidelineError> for CliError {
    fn from(e: GuidelineError) -> Self {
        match e {
            GuidelineError::Prompt(p) => p.into(),
            GuidelineError::Llm(l) => l.into(),
            GuidelineError::File(f) => f.into(),
            GuidelineError::InvalidResponse { .. } => {
                Self::new(ErrorKind::Validation, e.to_string())
            }
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        let kind = match e {
            InferenceError::MissingDg(_) => ErrorKind::Data,
            InferenceError::NoTags | InferenceError::Chunk(_) | InferenceError::Prompt(_) => {
                ErrorKind::Config
            }
            InferenceError::Cache { .. } => ErrorKind::Data,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        Self::new(ErrorKind::Data, e.to_string())
    }
}
