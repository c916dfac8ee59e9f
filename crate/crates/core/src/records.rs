//! Line-oriented, tab-separated record files shared by every resource and
//! configuration format in the crate.

/// One non-comment, non-blank line split on tabs.
pub(crate) struct Record<'a> {
    pub line: usize,
    pub fields: Vec<&'a str>,
}

/// Iterates over records, skipping blank lines and lines starting with `#`.
/// Trailing `\r` is stripped so files edited on Windows still parse.
pub(crate) fn records(text: &str) -> impl Iterator<Item = Record<'_>> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            return None;
        }
        Some(Record {
            line: i + 1,
            fields: line.split('\t').collect(),
        })
    })
}
