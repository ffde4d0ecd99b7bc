use super::{TokenSeq, EDIT_END, EDIT_START};

/// Text to tokens and back. Implementations must keep both markers as
/// single tokens.
pub trait Tokenizer: Send + Sync {
    fn id(&self) -> &str;
    fn tokenize(&self, text: &str) -> Vec<String>;
    fn detokenize(&self, tokens: &[String]) -> String {
        tokens.concat()
    }

    fn seq(&self, text: &str) -> TokenSeq {
        TokenSeq::new(self.tokenize(text), self.id())
    }
}

/// Reference tokenizer: word runs (`[A-Za-z0-9_]+`), whitespace runs and
/// single punctuation characters. Whitespace is kept, so detokenizing is
/// concatenation and round-trips exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WordPunct;

#[derive(PartialEq, Clone, Copy)]
enum Class {
    Word,
    Space,
    Punct,
}

fn class(c: char) -> Class {
    if c.is_alphanumeric() || c == '_' {
        Class::Word
    } else if c.is_whitespace() {
        Class::Space
    } else {
        Class::Punct
    }
}

impl Tokenizer for WordPunct {
    fn id(&self) -> &str {
        "word-punct-v1"
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut rest = text;
        while !rest.is_empty() {
            if let Some(m) = [EDIT_START, EDIT_END].into_iter().find(|m| rest.starts_with(m)) {
                out.push(m.to_owned());
                rest = &rest[m.len()..];
                continue;
            }
            let first = rest.chars().next().expect("non-empty");
            let cls = class(first);
            let end = match cls {
                Class::Punct => first.len_utf8(),
                _ => rest.char_indices().find(|(_, c)| class(*c) != cls).map_or(rest.len(), |(i, _)| i),
            };
            out.push(rest[..end].to_owned());
            rest = &rest[end..];
        }
        out
    }
}
