//! Line-oriented text inputs: token tables, frame spans and prompt files.
//!
//! Blank lines and lines starting with `#` are skipped. Errors report the
//! 1-based line of the offending input.

use crate::error::{Error, Result};
use crate::promptblend::{parse_organized, OrganizedPrompt, TokenId, TokenTable, Tokenizer};

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
}

fn column_of(line: &str, field: &str) -> usize {
    let byte = field.as_ptr() as usize - line.as_ptr() as usize;
    line[..byte].chars().count() + 1
}

/// `token<TAB>id` per line.
pub fn parse_token_table(text: &str) -> Result<TokenTable> {
    let mut table = TokenTable::new();
    for (line_no, line) in content_lines(text) {
        let Some((token, id)) = line.split_once('\t') else {
            return Err(Error::parse(line_no, 1, "expected token<TAB>id"));
        };
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(Error::parse(line_no, 1, format!("invalid token {token:?}")));
        }
        let id_str = id.trim();
        let id: TokenId = id_str.parse().map_err(|e| {
            Error::parse(
                line_no,
                column_of(line, id_str),
                format!("bad id {id_str:?}: {e}"),
            )
        })?;
        if table.insert(token, id).is_some() {
            return Err(Error::parse(
                line_no,
                1,
                format!("token {token:?} listed twice"),
            ));
        }
    }
    Ok(table)
}

/// `start end` per line.
pub fn parse_spans(text: &str) -> Result<Vec<(usize, usize)>> {
    content_lines(text)
        .map(|(line_no, line)| {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::parse(
                    line_no,
                    1,
                    format!("expected `start end`, found {} fields", fields.len()),
                ));
            }
            let num = |f: &str| {
                f.parse::<usize>().map_err(|e| {
                    Error::parse(
                        line_no,
                        column_of(line, f),
                        format!("bad frame index {f:?}: {e}"),
                    )
                })
            };
            Ok((num(fields[0])?, num(fields[1])?))
        })
        .collect()
}

/// One organized prompt per line.
pub fn parse_prompts(text: &str, tokenizer: &impl Tokenizer) -> Result<Vec<OrganizedPrompt>> {
    content_lines(text)
        .map(|(line_no, line)| {
            parse_organized(line, tokenizer).map_err(|e| match e {
                Error::Parse {
                    column, message, ..
                } => Error::parse(line_no, column, message),
                other => Error::parse(line_no, 1, other.to_string()),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_table() {
        let t = parse_token_table("# vocab\na\t0\nbig dog\t1\n\nc\t 7\n").unwrap_err();
        assert!(matches!(t, Error::Parse { line: 3, .. }));
        let t = parse_token_table("a\t0\n\nc\t7\n").unwrap();
        assert_eq!(t.get("c"), Some(7));
        let e = parse_token_table("a\t0\nb\tx\n").unwrap_err();
        assert!(
            matches!(
                e,
                Error::Parse {
                    line: 2,
                    column: 3,
                    ..
                }
            ),
            "{e}"
        );
        assert!(parse_token_table("a\t0\na\t1\n").is_err());
        assert!(parse_token_table("a 0\n").is_err());
    }

    #[test]
    fn spans() {
        assert_eq!(
            parse_spans("0 50\n\n150 200\n").unwrap(),
            vec![(0, 50), (150, 200)]
        );
        let e = parse_spans("0 50\n150\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = parse_spans("0 50\n150 -2\n").unwrap_err();
        assert!(
            matches!(
                e,
                Error::Parse {
                    line: 2,
                    column: 5,
                    ..
                }
            ),
            "{e}"
        );
    }

    #[test]
    fn prompts_carry_line_numbers() {
        let table = TokenTable::from_corpus(["a b c d e"]);
        let ok = parse_prompts("a$b$c$d$e\n# skip\nb$a$c$d$e\n", &table).unwrap();
        assert_eq!(ok.len(), 2);
        let e = parse_prompts("a$b$c$d$e\n\na$b$c$d\n", &table).unwrap_err();
        assert!(
            matches!(
                e,
                Error::Parse {
                    line: 3,
                    column: 8,
                    ..
                }
            ),
            "{e}"
        );
        let e = parse_prompts("a$b$zzz$d$e\n", &table).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }), "{e}");
    }
}
