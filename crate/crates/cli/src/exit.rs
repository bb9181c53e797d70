use specmon_core::Error;

pub const SUCCESS: i32 = 0;
pub const USAGE: i32 = 2;
pub const CONFIG: i32 = 3;
pub const IO: i32 = 4;
pub const FORMAT: i32 = 5;
pub const CORRUPTION: i32 = 6;
pub const VOCABULARY: i32 = 7;
pub const COVERAGE: i32 = 8;
pub const INPUT: i32 = 9;
pub const LABEL: i32 = 10;
pub const DIMENSION: i32 = 11;
pub const DEGENERATE: i32 = 12;
pub const TRAINING: i32 = 13;
pub const EVALUATION: i32 = 14;
pub const STATE: i32 = 15;

/// Every library error kind has its own exit status.
pub fn code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => CONFIG,
        Error::Io { .. } => IO,
        Error::Format(_) => FORMAT,
        Error::Corruption(_) => CORRUPTION,
        Error::Vocabulary { .. } => VOCABULARY,
        Error::Coverage(_) => COVERAGE,
        Error::Input(_) => INPUT,
        Error::Label { .. } => LABEL,
        Error::Dimension { .. } => DIMENSION,
        Error::DegenerateInput(_) => DEGENERATE,
        Error::Training(_) => TRAINING,
        Error::Evaluation(_) => EVALUATION,
        Error::State(_) => STATE,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    #[test]
    fn codes_are_distinct_and_nonzero() {
        let errors = [
            Error::Config(String::new()),
            Error::Io {
                path: "p".into(),
                source: std::io::Error::other("x"),
            },
            Error::Format(String::new()),
            Error::Corruption(String::new()),
            Error::Vocabulary {
                kind: "k",
                value: String::new(),
            },
            Error::Coverage(String::new()),
            Error::Input(String::new()),
            Error::Label {
                label: 0,
                classes: 0,
            },
            Error::Dimension {
                axis: String::new(),
                expected: 0,
                actual: 0,
            },
            Error::DegenerateInput(String::new()),
            Error::Training(String::new()),
            Error::Evaluation(String::new()),
            Error::State(String::new()),
        ];
        let codes: HashSet<i32> = errors.iter().map(code).collect();
        assert_eq!(codes.len(), errors.len());
        assert!(!codes.contains(&SUCCESS) && !codes.contains(&USAGE));
    }
}
