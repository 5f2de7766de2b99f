//! Token composition of plotting scripts.
//!
//! Scripts are lexed into Python-like tokens and grouped into logical
//! statements (bracketed continuations join lines). Every token receives
//! exactly one category from the rule table below, applied in order:
//!
//! | rule | scope | category |
//! |------|-------|----------|
//! | comment marker and words | token | boilerplate |
//! | `import` / `from` statement | statement | boilerplate |
//! | statement whose first call is a setup/output call (`figure`, `subplots`, `subplot`, `savefig`, `show`, `close`, `tight_layout`, `use`, `rc`, `switch_backend`) or that touches `rcParams` | statement | boilerplate |
//! | assignment whose right side is a literal or starts with a data-constructor call | statement | data_definition |
//! | style keyword argument `name=value` (see `STYLE_KWARGS`) inside a plot-API statement | span | visual_config |
//! | list literal or data-constructor call used as an argument inside a plot-API statement | span | data_definition |
//! | remaining tokens of a statement rooted at `plt`, `ax*`, `fig*`, `axes`, `axs` | statement | plotting_calls |
//! | anything else | token | other |
//!
//! Attribute values are the value tokens of `color`, `marker`, `fontsize`,
//! `linewidth`, `linestyle` and `alpha` keyword arguments (aliases `c`, `lw`,
//! `ls` fold into their canonical names). Positional format strings such as
//! `'r--'` are not attribute values under this table.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

pub const RULE_TABLE_VERSION: &str = "asym-rules-v1";

const BOILERPLATE_CALLS: &[&str] = &[
    "figure",
    "subplots",
    "subplot",
    "savefig",
    "show",
    "close",
    "tight_layout",
    "use",
    "rc",
    "switch_backend",
];

const DATA_CALLS: &[&str] = &[
    "array",
    "asarray",
    "linspace",
    "arange",
    "zeros",
    "ones",
    "full",
    "meshgrid",
    "random",
    "rand",
    "randn",
    "randint",
    "normal",
    "uniform",
    "choice",
    "seed",
    "DataFrame",
    "Series",
    "read_csv",
    "range",
    "list",
    "dict",
    "tuple",
    "zip",
    "sin",
    "cos",
    "exp",
    "log",
    "sqrt",
    "cumsum",
    "date_range",
];

const STYLE_KWARGS: &[&str] = &[
    "color",
    "c",
    "colors",
    "marker",
    "markersize",
    "ms",
    "markerfacecolor",
    "markeredgecolor",
    "linewidth",
    "lw",
    "linestyle",
    "ls",
    "alpha",
    "fontsize",
    "fontweight",
    "fontfamily",
    "edgecolor",
    "facecolor",
    "cmap",
    "hatch",
    "width",
    "s",
    "capsize",
    "zorder",
];

/// Attributes tracked for value statistics, with their aliases.
pub const ATTRIBUTES: &[(&str, &[&str])] = &[
    ("color", &["color", "c"]),
    ("marker", &["marker"]),
    ("fontsize", &["fontsize"]),
    ("linewidth", &["linewidth", "lw"]),
    ("linestyle", &["linestyle", "ls"]),
    ("alpha", &["alpha"]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenCategory {
    Boilerplate,
    DataDefinition,
    VisualConfig,
    PlottingCalls,
    Other,
}

impl TokenCategory {
    pub const ALL: [TokenCategory; 5] = [
        TokenCategory::Boilerplate,
        TokenCategory::DataDefinition,
        TokenCategory::VisualConfig,
        TokenCategory::PlottingCalls,
        TokenCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TokenCategory::Boilerplate => "boilerplate",
            TokenCategory::DataDefinition => "data_definition",
            TokenCategory::VisualConfig => "visual_config",
            TokenCategory::PlottingCalls => "plotting_calls",
            TokenCategory::Other => "other",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymmetryError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no script in the corpus could be parsed")]
    NothingParseable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Ident,
    Number,
    Str,
    Op,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Token {
    kind: Kind,
    text: String,
}

impl Token {
    fn is(&self, s: &str) -> bool {
        self.kind != Kind::Str && self.kind != Kind::Comment && self.text == s
    }
}

const MULTI_OPS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "==", "!=", "<=", ">=", "**", "//", "->", "+=", "-=", "*=", "/=",
    "%=", "&=", "|=", "^=", ":=", "<<", ">>",
];
const SINGLE_OPS: &str = "+-*/%=<>()[]{},.:;@&|^~!";

/// Splits a script into logical statements of tokens.
fn lex(src: &str) -> Result<Vec<Vec<Token>>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut statements = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    let mut stack: Vec<char> = Vec::new();
    let mut i = 0;
    let mut line = 1;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '\n' => {
                line += 1;
                i += 1;
                if stack.is_empty() && !current.is_empty() {
                    statements.push(std::mem::take(&mut current));
                }
            }
            '\\' if chars.get(i + 1) == Some(&'\n') => {
                i += 2;
                line += 1;
            }
            c if c.is_whitespace() => i += 1,
            '#' => {
                let start = i + 1;
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                current.push(Token {
                    kind: Kind::Comment,
                    text: "#".into(),
                });
                let body: String = chars[start..i].iter().collect();
                current.extend(body.split_whitespace().map(|w| Token {
                    kind: Kind::Comment,
                    text: w.to_string(),
                }));
            }
            '\'' | '"' => {
                let (text, next) = lex_string(&chars, i, String::new())
                    .ok_or(format!("line {line}: unterminated string"))?;
                line += text.matches('\n').count();
                current.push(Token {
                    kind: Kind::Str,
                    text,
                });
                i = next;
            }
            c if c.is_ascii_digit()
                || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) =>
            {
                let start = i;
                while i < chars.len() {
                    let d = chars[i];
                    let exp_sign = (d == '+' || d == '-')
                        && matches!(chars[i - 1], 'e' | 'E')
                        && !is_hex(&chars[start..i]);
                    if d.is_ascii_alphanumeric() || d == '.' || d == '_' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                current.push(Token {
                    kind: Kind::Number,
                    text: chars[start..i].iter().collect(),
                });
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                // String prefixes: f'..', r"..", b'..', rb'..'
                if word.len() <= 2
                    && word.chars().all(|p| "rRbBfFuU".contains(p))
                    && matches!(chars.get(i), Some('\'') | Some('"'))
                {
                    let (text, next) = lex_string(&chars, i, word.clone())
                        .ok_or(format!("line {line}: unterminated string"))?;
                    line += text.matches('\n').count();
                    current.push(Token {
                        kind: Kind::Str,
                        text,
                    });
                    i = next;
                } else {
                    current.push(Token {
                        kind: Kind::Ident,
                        text: word,
                    });
                }
            }
            _ => {
                let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
                let op = MULTI_OPS
                    .iter()
                    .find(|op| rest.starts_with(**op))
                    .map(|s| s.to_string())
                    .or_else(|| SINGLE_OPS.contains(c).then(|| c.to_string()))
                    .ok_or(format!("line {line}: unexpected character {c:?}"))?;
                match op.as_str() {
                    "(" | "[" | "{" => stack.push(c),
                    ")" | "]" | "}" => {
                        let open = match c {
                            ')' => '(',
                            ']' => '[',
                            _ => '{',
                        };
                        if stack.pop() != Some(open) {
                            return Err(format!("line {line}: unbalanced {c:?}"));
                        }
                    }
                    _ => {}
                }
                i += op.chars().count();
                current.push(Token {
                    kind: Kind::Op,
                    text: op,
                });
            }
        }
    }
    if !stack.is_empty() {
        return Err("unclosed bracket at end of script".into());
    }
    if !current.is_empty() {
        statements.push(current);
    }
    Ok(statements)
}

fn is_hex(prefix: &[char]) -> bool {
    prefix.len() >= 2 && prefix[0] == '0' && matches!(prefix[1], 'x' | 'X')
}

/// Lexes a quoted string starting at `start`; returns its source text and
/// the index after the closing quote.
fn lex_string(chars: &[char], start: usize, prefix: String) -> Option<(String, usize)> {
    let q = chars[start];
    let triple = chars.get(start + 1) == Some(&q) && chars.get(start + 2) == Some(&q);
    let mut i = start + if triple { 3 } else { 1 };
    while i < chars.len() {
        let c = chars[i];
        if c == '\\' {
            i += 2;
            continue;
        }
        if !triple && c == '\n' {
            return None;
        }
        if c == q && (!triple || (chars.get(i + 1) == Some(&q) && chars.get(i + 2) == Some(&q))) {
            let end = i + if triple { 3 } else { 1 };
            let body: String = chars[start..end].iter().collect();
            return Some((prefix + &body, end));
        }
        i += 1;
    }
    None
}

fn is_plot_root(name: &str) -> bool {
    name == "plt"
        || name == "axes"
        || name == "axs"
        || name.starts_with("ax")
        || name.starts_with("fig")
}

/// Index of the top-level `=` of an assignment, if any.
fn assignment_split(tokens: &[Token]) -> Option<usize> {
    let mut depth = 0i32;
    for (i, t) in tokens.iter().enumerate() {
        match t.text.as_str() {
            "(" | "[" | "{" if t.kind == Kind::Op => depth += 1,
            ")" | "]" | "}" if t.kind == Kind::Op => depth -= 1,
            "=" if t.kind == Kind::Op && depth == 0 => return Some(i),
            _ => {}
        }
    }
    None
}

/// Name of the first called function: the identifier right before the
/// first `(` that follows an identifier.
fn first_callee(tokens: &[Token]) -> Option<&str> {
    tokens
        .windows(2)
        .find(|w| w[0].kind == Kind::Ident && w[1].is("("))
        .map(|w| w[0].text.as_str())
}

/// If `tokens[i..]` starts a dotted call chain `a.b.c(`, returns the index
/// of the `(` and the final name.
fn call_chain(tokens: &[Token], i: usize) -> Option<(usize, &str)> {
    let mut j = i;
    if tokens.get(j)?.kind != Kind::Ident {
        return None;
    }
    while tokens.get(j + 1).is_some_and(|t| t.is("."))
        && tokens.get(j + 2).is_some_and(|t| t.kind == Kind::Ident)
    {
        j += 2;
    }
    tokens
        .get(j + 1)
        .filter(|t| t.is("("))
        .map(|_| (j + 1, tokens[j].text.as_str()))
}

fn matching_close(tokens: &[Token], open: usize) -> usize {
    let mut depth = 0i32;
    for (k, t) in tokens.iter().enumerate().skip(open) {
        if t.kind != Kind::Op {
            continue;
        }
        match t.text.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => {
                depth -= 1;
                if depth == 0 {
                    return k;
                }
            }
            _ => {}
        }
    }
    tokens.len() - 1
}

/// End (exclusive) of a keyword-argument value starting at `start`.
fn value_end(tokens: &[Token], start: usize) -> usize {
    let mut depth = 0i32;
    for (k, t) in tokens.iter().enumerate().skip(start) {
        if t.kind != Kind::Op {
            continue;
        }
        match t.text.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" if depth == 0 => return k,
            ")" | "]" | "}" => depth -= 1,
            "," if depth == 0 => return k,
            _ => {}
        }
    }
    tokens.len()
}

fn is_data_rhs(rhs: &[Token]) -> bool {
    let Some(first) = rhs.first() else {
        return false;
    };
    match first.kind {
        Kind::Number | Kind::Str => true,
        Kind::Op if first.is("[") || first.is("(") || first.is("{") => true,
        Kind::Op if first.is("-") => rhs.get(1).is_some_and(|t| t.kind == Kind::Number),
        Kind::Ident => call_chain(rhs, 0).is_some_and(|(_, name)| DATA_CALLS.contains(&name)),
        _ => false,
    }
}

struct AttributeHit {
    attribute: &'static str,
    value: String,
    tokens: usize,
}

fn canonical_attribute(name: &str) -> Option<&'static str> {
    ATTRIBUTES
        .iter()
        .find(|(_, aliases)| aliases.contains(&name))
        .map(|(canon, _)| *canon)
}

fn normalize_value(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(|t| match t.kind {
            Kind::Str => t
                .text
                .trim_start_matches(|c: char| c.is_ascii_alphabetic())
                .trim_matches(|c| c == '\'' || c == '"')
                .to_string(),
            _ => t.text.clone(),
        })
        .collect::<String>()
        .to_lowercase()
}

fn classify_statement(
    tokens: &[Token],
    out: &mut Vec<TokenCategory>,
    hits: &mut Vec<AttributeHit>,
) {
    let start = out.len();
    out.extend(std::iter::repeat_n(TokenCategory::Other, tokens.len()));
    let cats = &mut out[start..];
    let code: Vec<usize> = (0..tokens.len())
        .filter(|&i| tokens[i].kind != Kind::Comment)
        .collect();
    for (i, t) in tokens.iter().enumerate() {
        if t.kind == Kind::Comment {
            cats[i] = TokenCategory::Boilerplate;
        }
    }
    if code.is_empty() {
        return;
    }
    let stmt: Vec<Token> = code.iter().map(|&i| tokens[i].clone()).collect();
    let mut set = |cat_of: &mut dyn FnMut(usize) -> TokenCategory| {
        for (k, &i) in code.iter().enumerate() {
            cats[i] = cat_of(k);
        }
    };

    let head = &stmt[0];
    let boiler = head.is("import")
        || head.is("from")
        || stmt.iter().any(|t| t.is("rcParams"))
        || first_callee(&stmt).is_some_and(|c| BOILERPLATE_CALLS.contains(&c));
    if boiler {
        set(&mut |_| TokenCategory::Boilerplate);
        return;
    }
    if let Some(eq) = assignment_split(&stmt) {
        if is_data_rhs(&stmt[eq + 1..]) {
            set(&mut |_| TokenCategory::DataDefinition);
            return;
        }
    }
    if !(head.kind == Kind::Ident && is_plot_root(&head.text)) {
        return;
    }

    let mut local = vec![TokenCategory::PlottingCalls; stmt.len()];
    let mut k = 0;
    while k < stmt.len() {
        let after_sep = k > 0 && (stmt[k - 1].is("(") || stmt[k - 1].is(","));
        let t = &stmt[k];
        if after_sep
            && t.kind == Kind::Ident
            && STYLE_KWARGS.contains(&t.text.as_str())
            && stmt.get(k + 1).is_some_and(|n| n.is("="))
        {
            let end = value_end(&stmt, k + 2);
            local[k..end]
                .iter_mut()
                .for_each(|c| *c = TokenCategory::VisualConfig);
            if let Some(attribute) = canonical_attribute(&t.text) {
                hits.push(AttributeHit {
                    attribute,
                    value: normalize_value(&stmt[k + 2..end]),
                    tokens: end - (k + 2),
                });
            }
            k = end;
            continue;
        }
        let arg_position =
            k > 0 && (stmt[k - 1].is("(") || stmt[k - 1].is(",") || stmt[k - 1].is("="));
        if arg_position && t.is("[") {
            let close = matching_close(&stmt, k);
            local[k..=close]
                .iter_mut()
                .for_each(|c| *c = TokenCategory::DataDefinition);
            k = close + 1;
            continue;
        }
        if arg_position {
            if let Some((open, name)) = call_chain(&stmt, k) {
                if DATA_CALLS.contains(&name) {
                    let close = matching_close(&stmt, open);
                    local[k..=close]
                        .iter_mut()
                        .for_each(|c| *c = TokenCategory::DataDefinition);
                    k = close + 1;
                    continue;
                }
            }
        }
        k += 1;
    }
    set(&mut |k| local[k]);
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedScript {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenCategoryReport {
    pub rule_table_version: &'static str,
    pub scripts_analyzed: usize,
    pub skipped: Vec<SkippedScript>,
    pub total_tokens: usize,
    pub counts: BTreeMap<&'static str, usize>,
    /// Fractions of `total_tokens`; they sum to 1.
    pub shares: BTreeMap<&'static str, f64>,
    /// Share of the visual configuration category.
    pub visual_related_share: f64,
    pub attribute_value_tokens: usize,
    pub attribute_value_share: f64,
    /// Value -> occurrences, per tracked attribute that occurs.
    pub attribute_values: BTreeMap<&'static str, BTreeMap<String, usize>>,
    /// Fraction of an attribute's occurrences covered by its three most
    /// frequent values.
    pub top3_coverage: BTreeMap<&'static str, f64>,
}

/// Per-token categories for one script, exposed for inspection.
pub fn classify_script(src: &str) -> Result<Vec<(String, TokenCategory)>, String> {
    let statements = lex(src)?;
    let mut out = Vec::new();
    for stmt in &statements {
        let mut cats = Vec::new();
        classify_statement(stmt, &mut cats, &mut Vec::new());
        out.extend(stmt.iter().map(|t| t.text.clone()).zip(cats));
    }
    Ok(out)
}

pub fn token_asymmetry_report<S: AsRef<str>>(
    corpus: &[S],
) -> Result<TokenCategoryReport, AsymmetryError> {
    if corpus.is_empty() {
        return Err(AsymmetryError::EmptyCorpus);
    }
    let mut counts: BTreeMap<TokenCategory, usize> =
        TokenCategory::ALL.iter().map(|c| (*c, 0)).collect();
    let mut skipped = Vec::new();
    let mut hits = Vec::new();
    let mut analyzed = 0;
    for (index, script) in corpus.iter().enumerate() {
        let statements = match lex(script.as_ref()) {
            Ok(s) => s,
            Err(reason) => {
                skipped.push(SkippedScript { index, reason });
                continue;
            }
        };
        analyzed += 1;
        let mut cats = Vec::new();
        for stmt in &statements {
            classify_statement(stmt, &mut cats, &mut hits);
        }
        for c in cats {
            *counts.get_mut(&c).expect("all categories present") += 1;
        }
    }
    if analyzed == 0 {
        return Err(AsymmetryError::NothingParseable);
    }
    let total: usize = counts.values().sum();
    let share = |n: usize| {
        if total == 0 {
            0.0
        } else {
            n as f64 / total as f64
        }
    };
    let mut shares: BTreeMap<&'static str, f64> = counts
        .iter()
        .map(|(c, &n)| (c.as_str(), share(n)))
        .collect();
    if total == 0 {
        // An all-empty corpus is entirely "other" by convention.
        shares.insert(TokenCategory::Other.as_str(), 1.0);
    }

    let mut attribute_values: BTreeMap<&'static str, BTreeMap<String, usize>> = BTreeMap::new();
    let mut value_tokens = 0;
    for h in &hits {
        *attribute_values
            .entry(h.attribute)
            .or_default()
            .entry(h.value.clone())
            .or_insert(0) += 1;
        value_tokens += h.tokens;
    }
    let top3_coverage = attribute_values
        .iter()
        .map(|(attr, values)| {
            let mut n: Vec<usize> = values.values().copied().collect();
            n.sort_unstable_by(|a, b| b.cmp(a));
            let all: usize = n.iter().sum();
            (*attr, n.iter().take(3).sum::<usize>() as f64 / all as f64)
        })
        .collect();

    Ok(TokenCategoryReport {
        rule_table_version: RULE_TABLE_VERSION,
        scripts_analyzed: analyzed,
        skipped,
        total_tokens: total,
        counts: counts.iter().map(|(c, &n)| (c.as_str(), n)).collect(),
        visual_related_share: shares[TokenCategory::VisualConfig.as_str()],
        shares,
        attribute_value_tokens: value_tokens,
        attribute_value_share: share(value_tokens),
        attribute_values,
        top3_coverage,
    })
}
