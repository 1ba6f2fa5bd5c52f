use std::fmt;

use bggan::ErrorCategory;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    Usage,
    Validation,
    Io,
    Numerical,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Usage => 2,
            Category::Validation | Category::Io => 3,
            Category::Numerical => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Usage => "usage",
            Category::Validation => "validation",
            Category::Io => "io",
            Category::Numerical => "numerical",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub detail: String,
}

impl CliError {
    pub fn usage(detail: impl Into<String>) -> Self {
        CliError { category: Category::Usage, detail: detail.into() }
    }

    pub fn validation(detail: impl Into<String>) -> Self {
        CliError { category: Category::Validation, detail: detail.into() }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError { category: Category::Io, detail: format!("{}: {e}", path.display()) }
    }
}

impl fmt::Display for CliError {
    /// Two lines: the machine-readable category, then the human detail.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error: {}\n{}", self.category.name(), self.detail)
    }
}

impl std::error::Error for CliError {}

impl From<bggan::Error> for CliError {
    fn from(e: bggan::Error) -> Self {
        let category = match e.category() {
            ErrorCategory::Validation => Category::Validation,
            ErrorCategory::Numerical => Category::Numerical,
            ErrorCategory::Io => Category::Io,
        };
        CliError { category, detail: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;
