//! Source-level pragma injection at marker comments.
//!
//! A loop is marked by a `/* mrl:loop <ID> */` line directly above its
//! header; loop pragmas go between the marker and the header. A load site is
//! marked by `/* mrl:load <address expr using PF_DIST> */` inside the loop
//! body; the prefetch call goes on the line after it.

use serde_json::{json, Value};

use super::CompilerError;

pub const LOOP_PRAGMA: &str = "#pragma clang loop";
const PREFETCH_CALL: &str = "__builtin_prefetch(";
const DISTANCE_TOKEN: &str = "PF_DIST";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PragmaKind {
    Unroll,
    Vectorize,
    Interleave,
    Prefetch,
}

impl PragmaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PragmaKind::Unroll => "unroll",
            PragmaKind::Vectorize => "vectorize",
            PragmaKind::Interleave => "interleave",
            PragmaKind::Prefetch => "prefetch",
        }
    }
}

/// One roster entry applied at one loop. `param` is `None` for the
/// `enable` forms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PragmaAction {
    pub kind: PragmaKind,
    pub param: Option<u32>,
    pub marker: String,
}

pub const ROSTER: [&str; 12] = [
    "unroll_2",
    "unroll_4",
    "unroll_8",
    "vectorize_enable",
    "vectorize_width_4",
    "vectorize_width_8",
    "interleave_enable",
    "interleave_count_2",
    "interleave_count_4",
    "prefetch_8",
    "prefetch_16",
    "prefetch_64",
];

impl PragmaAction {
    pub fn from_id(id: &str, marker: &str) -> Result<Self, CompilerError> {
        if !ROSTER.contains(&id) {
            return Err(CompilerError::UnknownAction(id.to_string()));
        }
        let (kind, rest) = if let Some(r) = id.strip_prefix("unroll_") {
            (PragmaKind::Unroll, r)
        } else if let Some(r) = id.strip_prefix("vectorize_") {
            (PragmaKind::Vectorize, r.strip_prefix("width_").unwrap_or(r))
        } else if let Some(r) = id.strip_prefix("interleave_") {
            (PragmaKind::Interleave, r.strip_prefix("count_").unwrap_or(r))
        } else {
            (PragmaKind::Prefetch, id.trim_start_matches("prefetch_"))
        };
        let param = if rest == "enable" { None } else { Some(rest.parse().expect("roster ids are well formed")) };
        Ok(Self { kind, param, marker: marker.to_string() })
    }

    pub fn payload(&self) -> Value {
        let parameter = match self.param {
            Some(n) => json!(n),
            None => json!("enable"),
        };
        json!({ "kind": self.kind.as_str(), "parameter": parameter })
    }

    /// The exact line (without indentation) this action contributes; for
    /// prefetch, `load_expr` is the load site's address expression.
    fn directive(&self, load_expr: &str) -> String {
        match (self.kind, self.param) {
            (PragmaKind::Unroll, Some(n)) => format!("{LOOP_PRAGMA} unroll_count({n})"),
            (PragmaKind::Unroll, None) => format!("{LOOP_PRAGMA} unroll(enable)"),
            (PragmaKind::Vectorize, Some(w)) => format!("{LOOP_PRAGMA} vectorize_width({w})"),
            (PragmaKind::Vectorize, None) => format!("{LOOP_PRAGMA} vectorize(enable)"),
            (PragmaKind::Interleave, Some(c)) => format!("{LOOP_PRAGMA} interleave_count({c})"),
            (PragmaKind::Interleave, None) => format!("{LOOP_PRAGMA} interleave(enable)"),
            (PragmaKind::Prefetch, d) => {
                format!("{PREFETCH_CALL}{});", load_expr.replace(DISTANCE_TOKEN, &d.unwrap_or(16).to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub source: String,
    /// One entry per replaced conflicting pragma.
    pub warnings: Vec<String>,
}

fn loop_marker_id(line: &str) -> Option<&str> {
    line.trim().strip_prefix("/* mrl:loop ")?.strip_suffix("*/").map(str::trim)
}

fn load_marker_expr(line: &str) -> Option<&str> {
    line.trim().strip_prefix("/* mrl:load ")?.strip_suffix("*/").map(str::trim)
}

fn indent(line: &str) -> &str {
    &line[..line.len() - line.trim_start().len()]
}

/// Marker ids in source order.
pub fn loop_markers(source: &str) -> Vec<String> {
    source.lines().filter_map(loop_marker_id).map(str::to_string).collect()
}

fn find_marker(lines: &[String], marker: &str) -> Result<usize, CompilerError> {
    let hits: Vec<usize> =
        lines.iter().enumerate().filter(|(_, l)| loop_marker_id(l) == Some(marker)).map(|(i, _)| i).collect();
    match hits.as_slice() {
        [i] => Ok(*i),
        [] => Err(CompilerError::MarkerNotFound(marker.to_string())),
        _ => Err(CompilerError::InvalidKernel(format!("loop marker {marker} appears {} times", hits.len()))),
    }
}

/// Index one past the last line of the loop whose header is at `header`.
fn loop_end(lines: &[String], header: usize) -> Result<usize, CompilerError> {
    let mut depth = 0i32;
    let mut opened = false;
    for (i, line) in lines.iter().enumerate().skip(header) {
        for c in line.chars() {
            match c {
                '{' => {
                    depth += 1;
                    opened = true;
                }
                '}' => depth -= 1,
                ';' if !opened && i > header => return Ok(i + 1),
                _ => {}
            }
        }
        if opened && depth <= 0 {
            return Ok(i + 1);
        }
    }
    Err(CompilerError::InvalidKernel(format!("unterminated loop starting at line {}", header + 1)))
}

/// Applies `action` at its marker. Re-applying the same action is a no-op;
/// applying a different parameter of the same kind replaces the earlier one
/// and records a warning.
pub fn inject_pragma(source: &str, action: &PragmaAction) -> Result<Injection, CompilerError> {
    let mut lines: Vec<String> = source.lines().map(str::to_string).collect();
    let marker = find_marker(&lines, &action.marker)?;
    let mut header = marker + 1;
    while header < lines.len() && lines[header].trim_start().starts_with(LOOP_PRAGMA) {
        header += 1;
    }
    if header >= lines.len() {
        return Err(CompilerError::InvalidKernel(format!("no loop follows marker {}", action.marker)));
    }
    let mut warnings = Vec::new();

    if action.kind == PragmaKind::Prefetch {
        let end = loop_end(&lines, header)?;
        let (site, expr) = (header..end)
            .find_map(|i| load_marker_expr(&lines[i]).map(|e| (i, e.to_string())))
            .ok_or_else(|| CompilerError::NoLoadSite(action.marker.clone()))?;
        let line = format!("{}{}", indent(&lines[site]), action.directive(&expr));
        let next = site + 1;
        if next < lines.len() && lines[next].trim_start().starts_with(PREFETCH_CALL) {
            if lines[next].trim() != line.trim() {
                warnings.push(format!(
                    "ConflictingPragma at {}: replaced `{}` with `{}`",
                    action.marker,
                    lines[next].trim(),
                    line.trim()
                ));
                lines[next] = line;
            }
        } else {
            lines.insert(next, line);
        }
    } else {
        let directive = action.directive("");
        let kind_prefix = format!("{LOOP_PRAGMA} {}", action.kind.as_str());
        let existing = (marker + 1..header).find(|&i| lines[i].trim_start().starts_with(&kind_prefix));
        let line = format!("{}{}", indent(&lines[header]), directive);
        match existing {
            Some(i) if lines[i].trim() == directive => {}
            Some(i) => {
                warnings.push(format!(
                    "ConflictingPragma at {}: replaced `{}` with `{}`",
                    action.marker,
                    lines[i].trim(),
                    directive
                ));
                lines[i] = line;
            }
            None => lines.insert(header, line),
        }
    }

    let mut out = lines.join("\n");
    if source.ends_with('\n') {
        out.push('\n');
    }
    Ok(Injection { source: out, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "int main(void) {\n    /* mrl:loop L0 */\n    for (int i = 0; i < n; i++) {\n        /* mrl:loop L1 */\n        for (int j = 0; j < n; j++) {\n            /* mrl:load &a[i * n + j + PF_DIST] */\n            a[i * n + j] += 1.0;\n        }\n    }\n    return 0;\n}\n";

    fn act(id: &str, marker: &str) -> PragmaAction {
        PragmaAction::from_id(id, marker).unwrap()
    }

    fn line_before(src: &str, needle: &str) -> String {
        let lines: Vec<&str> = src.lines().collect();
        let i = lines.iter().position(|l| l.contains(needle)).unwrap();
        lines[i - 1].to_string()
    }

    #[test]
    fn vectorize_goes_directly_above_header() {
        let out = inject_pragma(SRC, &act("vectorize_enable", "L0")).unwrap();
        assert_eq!(line_before(&out.source, "for (int i"), "    #pragma clang loop vectorize(enable)");
        assert!(out.warnings.is_empty());
        assert!(out.source.ends_with("}\n"));
    }

    #[test]
    fn reinjection_is_idempotent() {
        let once = inject_pragma(SRC, &act("unroll_4", "L1")).unwrap().source;
        let twice = inject_pragma(&once, &act("unroll_4", "L1")).unwrap();
        assert_eq!(once, twice.source);
        assert!(twice.warnings.is_empty());
    }

    #[test]
    fn same_kind_replaces_with_warning() {
        let a = inject_pragma(SRC, &act("unroll_4", "L1")).unwrap().source;
        let b = inject_pragma(&a, &act("unroll_8", "L1")).unwrap();
        assert_eq!(b.source.matches("unroll").count(), 1);
        assert!(b.source.contains("#pragma clang loop unroll_count(8)"));
        assert_eq!(b.warnings.len(), 1);
    }

    #[test]
    fn different_kinds_stack() {
        let a = inject_pragma(SRC, &act("unroll_4", "L1")).unwrap().source;
        let b = inject_pragma(&a, &act("interleave_count_2", "L1")).unwrap().source;
        let c = inject_pragma(&b, &act("vectorize_width_4", "L1")).unwrap().source;
        assert_eq!(c.matches(LOOP_PRAGMA).count(), 3);
        assert_eq!(line_before(&c, "for (int j"), "        #pragma clang loop vectorize_width(4)");
        // vectorize(enable) and vectorize_width share a kind
        let d = inject_pragma(&c, &act("vectorize_enable", "L1")).unwrap();
        assert_eq!(d.source.matches(LOOP_PRAGMA).count(), 3);
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn prefetch_at_load_site() {
        let out = inject_pragma(SRC, &act("prefetch_16", "L0")).unwrap().source;
        assert!(out.contains("            __builtin_prefetch(&a[i * n + j + 16]);\n            a[i * n + j] += 1.0;"));
        let again = inject_pragma(&out, &act("prefetch_64", "L1")).unwrap();
        assert_eq!(again.source.matches(PREFETCH_CALL).count(), 1);
        assert!(again.source.contains("j + 64]"));
        assert_eq!(again.warnings.len(), 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(inject_pragma(SRC, &act("unroll_2", "L7")), Err(CompilerError::MarkerNotFound(_))));
        assert!(matches!(PragmaAction::from_id("unroll_3", "L0"), Err(CompilerError::UnknownAction(_))));
        let no_load = SRC.replace("/* mrl:load &a[i * n + j + PF_DIST] */", "");
        assert!(matches!(inject_pragma(&no_load, &act("prefetch_8", "L1")), Err(CompilerError::NoLoadSite(_))));
    }

    #[test]
    fn roster_parses() {
        for id in ROSTER {
            let a = act(id, "L0");
            assert_eq!(a.payload()["kind"], a.kind.as_str());
        }
        assert_eq!(loop_markers(SRC), vec!["L0", "L1"]);
    }
}
