use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Result, SrbError};

pub type TokenId = usize;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
/// Number of reserved ids at the start of every vocabulary.
pub const RESERVED: usize = 4;
pub const DEFAULT_VOCAB_SIZE: usize = 4000;

const RESERVED_NAMES: [&str; RESERVED] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Rendering of [`UNK`] by [`Vocabulary::decode`].
const UNK_CHAR: char = '\u{FFFD}';

/// Bidirectional character/id map. Ids `0..4` are reserved for
/// PAD, BOS, EOS and UNK; characters take ids `4..`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    char_to_id: HashMap<char, TokenId>,
    id_to_char: Vec<char>,
    max_size: usize,
}

impl Vocabulary {
    /// Keeps the `max_size - 4` most frequent characters. Equal counts are
    /// ordered by first occurrence, so the result depends only on the input
    /// order.
    pub fn build<I, S>(texts: I, max_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if max_size <= RESERVED {
            return Err(SrbError::argument(format!(
                "vocabulary size must be at least {}, got {max_size}",
                RESERVED + 1
            )));
        }
        // char -> (count, first occurrence)
        let mut counts: HashMap<char, (usize, usize)> = HashMap::new();
        let mut seen = 0usize;
        for text in texts {
            for ch in text.as_ref().chars() {
                counts.entry(ch).or_insert((0, seen)).0 += 1;
                seen += 1;
            }
        }
        if counts.is_empty() {
            return Err(SrbError::argument("cannot build a vocabulary from an empty corpus"));
        }
        let mut ranked: Vec<(char, usize, usize)> =
            counts.into_iter().map(|(c, (n, first))| (c, n, first)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        ranked.truncate(max_size - RESERVED);
        Ok(Self::from_chars(ranked.into_iter().map(|(c, _, _)| c).collect(), max_size))
    }

    fn from_chars(id_to_char: Vec<char>, max_size: usize) -> Self {
        let char_to_id = id_to_char
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i + RESERVED))
            .collect();
        Vocabulary {
            char_to_id,
            id_to_char,
            max_size,
        }
    }

    /// Total number of ids, reserved tokens included.
    pub fn len(&self) -> usize {
        self.id_to_char.len() + RESERVED
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn id(&self, ch: char) -> Option<TokenId> {
        self.char_to_id.get(&ch).copied()
    }

    pub fn char_of(&self, id: TokenId) -> Option<char> {
        id.checked_sub(RESERVED).and_then(|i| self.id_to_char.get(i)).copied()
    }

    /// One id per Unicode scalar value; unknown characters become [`UNK`].
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        text.chars().map(|c| self.id(c).unwrap_or(UNK)).collect()
    }

    /// Inverse of [`Vocabulary::encode`]. PAD, BOS and EOS render as nothing
    /// and UNK as U+FFFD. Ids beyond the vocabulary are rejected.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let mut out = String::with_capacity(ids.len());
        for &id in ids {
            match id {
                PAD | BOS | EOS => {}
                UNK => out.push(UNK_CHAR),
                _ => out.push(self.char_of(id).ok_or_else(|| {
                    SrbError::argument(format!("token id {id} outside vocabulary of {}", self.len()))
                })?),
            }
        }
        Ok(out)
    }

    /// Writes `id<TAB>char` lines, reserved tokens first. Tab, newline,
    /// carriage return and backslash are backslash-escaped.
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "# max_size={}", self.max_size)?;
        for (id, name) in RESERVED_NAMES.iter().enumerate() {
            writeln!(out, "{id}\t{name}")?;
        }
        for (i, &c) in self.id_to_char.iter().enumerate() {
            writeln!(out, "{}\t{}", i + RESERVED, escape(c))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path)?;
        let err = |line: usize, message: String| SrbError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut max_size = None;
        let mut chars = Vec::new();
        let mut next_id = 0usize;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if let Some(rest) = line.strip_prefix("# max_size=") {
                max_size = Some(rest.trim().parse().map_err(|_| err(lineno, "bad max_size".into()))?);
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (id, token) = line
                .split_once('\t')
                .ok_or_else(|| err(lineno, "expected id<TAB>char".into()))?;
            let id: usize = id.parse().map_err(|_| err(lineno, format!("bad id {id:?}")))?;
            if id != next_id {
                return Err(err(lineno, format!("expected id {next_id}, found {id}")));
            }
            next_id += 1;
            if id < RESERVED {
                if token != RESERVED_NAMES[id] {
                    return Err(err(lineno, format!("reserved id {id} must be {}", RESERVED_NAMES[id])));
                }
                continue;
            }
            let ch = unescape(token).ok_or_else(|| err(lineno, format!("expected one character, got {token:?}")))?;
            chars.push(ch);
        }
        if next_id < RESERVED {
            return Err(err(next_id + 1, "missing reserved-token header".into()));
        }
        let size = chars.len() + RESERVED;
        let vocab = Self::from_chars(chars, max_size.unwrap_or(size.max(DEFAULT_VOCAB_SIZE)));
        if vocab.char_to_id.len() != vocab.id_to_char.len() {
            return Err(err(0, "duplicate characters".into()));
        }
        Ok(vocab)
    }
}

fn escape(c: char) -> String {
    match c {
        '\t' => "\\t".into(),
        '\n' => "\\n".into(),
        '\r' => "\\r".into(),
        '\\' => "\\\\".into(),
        c => c.to_string(),
    }
}

fn unescape(token: &str) -> Option<char> {
    match token {
        "\\t" => Some('\t'),
        "\\n" => Some('\n'),
        "\\r" => Some('\r'),
        "\\\\" => Some('\\'),
        _ => {
            let mut it = token.chars();
            let c = it.next()?;
            it.next().is_none().then_some(c)
        }
    }
}
