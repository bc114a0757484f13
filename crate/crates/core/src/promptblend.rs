//! Multi-prompt conditioning: align the token sequences of several organized
//! prompts component by component, embed them, and blend neighbouring
//! prompts across transition windows.
//!
//! A prompt is organized into five components in a fixed order, separated by
//! `$`. For each component, every prompt's tokens are repeated cyclically up
//! to the longest instance of that component across prompts, so all aligned
//! prompts have the same token count and their embeddings can be mixed
//! entrywise.

use std::collections::HashMap;
use std::fmt;

use ndarray::Array2;

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const COMPONENT_COUNT: usize = 5;
pub const SEPARATOR: char = '$';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Subject,
    Action,
    Place,
    Time,
    Quality,
}

impl Component {
    pub const ALL: [Component; COMPONENT_COUNT] = [
        Component::Subject,
        Component::Action,
        Component::Place,
        Component::Time,
        Component::Quality,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Component::Subject => "subject",
            Component::Action => "action",
            Component::Place => "place",
            Component::Time => "time",
            Component::Quality => "quality",
        })
    }
}

/// Turns component text into token ids.
pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>>;
}

/// Whitespace tokenizer backed by an explicit word-to-id table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenTable {
    ids: HashMap<String, TokenId>,
}

impl TokenTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, token: impl Into<String>, id: TokenId) -> Option<TokenId> {
        self.ids.insert(token.into(), id)
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Table assigning consecutive ids to every distinct whitespace-separated
    /// word of `texts`, in order of first appearance.
    pub fn from_corpus<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut table = TokenTable::new();
        for text in texts {
            for word in text.split(|c: char| c.is_whitespace() || c == SEPARATOR) {
                if !word.is_empty() && table.get(word).is_none() {
                    let id = table.len() as TokenId;
                    table.insert(word, id);
                }
            }
        }
        table
    }
}

impl Tokenizer for TokenTable {
    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        text.split_whitespace()
            .map(|word| {
                self.get(word).ok_or_else(|| {
                    Error::domain(format!("token `{word}` is not in the token table"))
                })
            })
            .collect()
    }
}

/// Split organized prompt text into its five trimmed component strings.
/// Error columns are 1-based character positions.
pub fn split_components(text: &str) -> Result<[&str; COMPONENT_COUNT]> {
    let positions: Vec<usize> = text
        .char_indices()
        .filter(|&(_, c)| c == SEPARATOR)
        .map(|(i, _)| i)
        .collect();
    if positions.len() != COMPONENT_COUNT - 1 {
        let column = match positions.get(COMPONENT_COUNT - 1) {
            Some(&extra) => text[..extra].chars().count() + 1,
            None => text.chars().count() + 1,
        };
        return Err(Error::parse(
            1,
            column,
            format!(
                "expected {} `{SEPARATOR}` separators, found {}",
                COMPONENT_COUNT - 1,
                positions.len()
            ),
        ));
    }
    let mut parts = [""; COMPONENT_COUNT];
    for (slot, part) in parts.iter_mut().zip(text.split(SEPARATOR)) {
        *slot = part.trim();
    }
    Ok(parts)
}

/// A prompt split into its five ordered components and tokenized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrganizedPrompt {
    components: [Vec<TokenId>; COMPONENT_COUNT],
    raw_text: String,
}

impl OrganizedPrompt {
    pub fn from_tokens(
        components: [Vec<TokenId>; COMPONENT_COUNT],
        raw_text: impl Into<String>,
    ) -> Self {
        OrganizedPrompt {
            components,
            raw_text: raw_text.into(),
        }
    }

    pub fn component(&self, c: Component) -> &[TokenId] {
        &self.components[c.index()]
    }

    pub fn components(&self) -> &[Vec<TokenId>; COMPONENT_COUNT] {
        &self.components
    }

    pub fn raw_text(&self) -> &str {
        &self.raw_text
    }
}

pub fn parse_organized(text: &str, tokenizer: &impl Tokenizer) -> Result<OrganizedPrompt> {
    let parts = split_components(text)?;
    let mut components: [Vec<TokenId>; COMPONENT_COUNT] = Default::default();
    for (slot, part) in components.iter_mut().zip(parts) {
        *slot = tokenizer.tokenize(part)?;
    }
    Ok(OrganizedPrompt {
        components,
        raw_text: text.to_owned(),
    })
}

/// What to do when a component is empty in one prompt but not in another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptySegment {
    /// Refuse: there is nothing to repeat.
    #[default]
    Reject,
    /// Fill the empty segment with this token repeated.
    Fill(TokenId),
}

/// Prompts whose components all have the same per-component length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedPromptSet {
    prompts: Vec<Vec<TokenId>>,
    component_lengths: [usize; COMPONENT_COUNT],
}

impl AlignedPromptSet {
    pub fn prompts(&self) -> &[Vec<TokenId>] {
        &self.prompts
    }

    pub fn component_lengths(&self) -> [usize; COMPONENT_COUNT] {
        self.component_lengths
    }

    pub fn total_length(&self) -> usize {
        self.component_lengths.iter().sum()
    }

    /// Tokens of component `c` in aligned prompt `i`.
    pub fn segment(&self, i: usize, c: Component) -> &[TokenId] {
        let start: usize = self.component_lengths[..c.index()].iter().sum();
        &self.prompts[i][start..start + self.component_lengths[c.index()]]
    }

    /// The aligned prompts viewed as organized prompts again.
    pub fn to_organized(&self) -> Vec<OrganizedPrompt> {
        (0..self.prompts.len())
            .map(|i| {
                let components = Component::ALL.map(|c| self.segment(i, c).to_vec());
                OrganizedPrompt {
                    components,
                    raw_text: String::new(),
                }
            })
            .collect()
    }
}

/// Align with [`EmptySegment::Reject`].
pub fn align(prompts: &[OrganizedPrompt]) -> Result<AlignedPromptSet> {
    align_with(prompts, EmptySegment::Reject)
}

pub fn align_with(prompts: &[OrganizedPrompt], empty: EmptySegment) -> Result<AlignedPromptSet> {
    if prompts.is_empty() {
        return Err(Error::domain("need at least one prompt to align"));
    }
    let mut component_lengths = [0; COMPONENT_COUNT];
    for c in Component::ALL {
        let longest = prompts
            .iter()
            .map(|p| p.component(c).len())
            .max()
            .unwrap_or(0);
        component_lengths[c.index()] = longest;
        if longest > 0 && empty == EmptySegment::Reject {
            if let Some(i) = prompts.iter().position(|p| p.component(c).is_empty()) {
                return Err(Error::Alignment {
                    component: c,
                    message: format!(
                        "prompt {} leaves it empty while another prompt has {longest} tokens",
                        i + 1
                    ),
                });
            }
        }
    }
    let aligned = prompts
        .iter()
        .map(|p| {
            let mut tokens = Vec::with_capacity(component_lengths.iter().sum());
            for c in Component::ALL {
                let target = component_lengths[c.index()];
                let source = p.component(c);
                match (source.is_empty(), empty) {
                    (false, _) => tokens.extend(source.iter().cycle().take(target)),
                    (true, EmptySegment::Fill(pad)) => {
                        tokens.extend(std::iter::repeat_n(pad, target))
                    }
                    (true, EmptySegment::Reject) => {}
                }
            }
            tokens
        })
        .collect();
    Ok(AlignedPromptSet {
        prompts: aligned,
        component_lengths,
    })
}

/// One embedding row per aligned token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedPrompt(Array2<f64>);

impl EmbeddedPrompt {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("embedding contains non-finite entries"));
        }
        Ok(EmbeddedPrompt(matrix))
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.0
    }
}

/// Per-token embedding lookup table, `vocab x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable(Array2<f64>);

impl EmbeddingTable {
    pub fn new(table: Array2<f64>) -> Result<Self> {
        if table.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("embedding table contains non-finite entries"));
        }
        Ok(EmbeddingTable(table))
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn vocab(&self) -> usize {
        self.0.nrows()
    }

    pub fn embed(&self, tokens: &[TokenId]) -> Result<EmbeddedPrompt> {
        let mut out = Array2::zeros((tokens.len(), self.dim()));
        for (r, &t) in tokens.iter().enumerate() {
            let t = t as usize;
            if t >= self.vocab() {
                return Err(Error::domain(format!(
                    "token id {t} outside embedding table of {} rows",
                    self.vocab()
                )));
            }
            out.row_mut(r).assign(&self.0.row(t));
        }
        Ok(EmbeddedPrompt(out))
    }

    pub fn embed_all(&self, aligned: &AlignedPromptSet) -> Result<Vec<EmbeddedPrompt>> {
        aligned.prompts().iter().map(|p| self.embed(p)).collect()
    }
}

/// `(n - n_e) / (n_s_next - n_e)` for `n_e <= n <= n_s_next`.
pub fn interpolation_weight(n: usize, span_end: usize, next_start: usize) -> Result<f64> {
    if next_start <= span_end {
        return Err(Error::domain(format!(
            "transition window [{span_end}, {next_start}] is empty"
        )));
    }
    if n < span_end || n > next_start {
        return Err(Error::domain(format!(
            "frame {n} is outside transition window [{span_end}, {next_start}]"
        )));
    }
    Ok((n - span_end) as f64 / (next_start - span_end) as f64)
}

/// When and where prompts are blended.
///
/// Each prompt owns the closed frame span `[start, end]`; the frames strictly
/// between one span's end and the next span's start form a transition
/// window. Blending is active at denoising timesteps in `[t1, t2]` or at
/// network layers `d >= layer_threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendSchedule {
    spans: Vec<(usize, usize)>,
    t_window: (f64, f64),
    layer_threshold: usize,
}

impl BlendSchedule {
    pub fn new(
        spans: Vec<(usize, usize)>,
        t_window: (f64, f64),
        layer_threshold: usize,
    ) -> Result<Self> {
        if spans.is_empty() {
            return Err(Error::domain("schedule needs at least one span"));
        }
        for (i, &(s, e)) in spans.iter().enumerate() {
            if s > e {
                return Err(Error::domain(format!(
                    "span {} starts after it ends ({s} > {e})",
                    i + 1
                )));
            }
            if let Some(&(next, _)) = spans.get(i + 1) {
                if e >= next {
                    return Err(Error::domain(format!(
                        "span {} ends at {e}, not before span {} starts at {next}",
                        i + 1,
                        i + 2
                    )));
                }
            }
        }
        let (t1, t2) = t_window;
        if !(t1.is_finite() && t2.is_finite() && t1 <= t2) {
            return Err(Error::domain(format!(
                "timestep window [{t1}, {t2}] is invalid"
            )));
        }
        Ok(BlendSchedule {
            spans,
            t_window,
            layer_threshold,
        })
    }

    pub fn spans(&self) -> &[(usize, usize)] {
        &self.spans
    }

    pub fn t_window(&self) -> (f64, f64) {
        self.t_window
    }

    pub fn layer_threshold(&self) -> usize {
        self.layer_threshold
    }

    /// Frames `0..=end` of the last span.
    pub fn total_frames(&self) -> usize {
        self.spans.last().map_or(0, |&(_, e)| e + 1)
    }

    pub fn blends_at(&self, t: f64, d: usize) -> bool {
        (self.t_window.0..=self.t_window.1).contains(&t) || d >= self.layer_threshold
    }

    /// Where frame `n` sits in the schedule.
    pub fn locate(&self, n: usize) -> Result<FramePosition> {
        if n >= self.total_frames() {
            return Err(Error::domain(format!(
                "frame {n} is past the last frame {}",
                self.total_frames() - 1
            )));
        }
        for (i, &(s, e)) in self.spans.iter().enumerate() {
            if n <= e {
                if n >= s || i == 0 {
                    return Ok(FramePosition::Span(i));
                }
                // n_{i-1}^e < n < n_i^s
                let prev_end = self.spans[i - 1].1;
                return Ok(FramePosition::Transition {
                    from: i - 1,
                    weight: interpolation_weight(n, prev_end, s)?,
                });
            }
        }
        unreachable!("frame {n} below total frame count must fall in some span")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FramePosition {
    /// Inside prompt `i`'s own span (or before the first span).
    Span(usize),
    /// Between prompt `from` and prompt `from + 1`, with blend weight `a_n`.
    Transition { from: usize, weight: f64 },
}

/// Text conditioning for frame `n`, timestep `t`, layer `d`.
pub fn conditioning(
    schedule: &BlendSchedule,
    embedded: &[EmbeddedPrompt],
    n: usize,
    t: f64,
    d: usize,
) -> Result<EmbeddedPrompt> {
    if embedded.len() != schedule.spans.len() {
        return Err(Error::Shape {
            left: format!("{} spans", schedule.spans.len()),
            right: format!("{} embedded prompts", embedded.len()),
        });
    }
    let shape = embedded[0].0.dim();
    if let Some(bad) = embedded.iter().find(|e| e.0.dim() != shape) {
        return Err(Error::Shape {
            left: format!("embedding {shape:?}"),
            right: format!("embedding {:?}", bad.0.dim()),
        });
    }
    match schedule.locate(n)? {
        FramePosition::Span(i) => Ok(embedded[i].clone()),
        FramePosition::Transition { from, weight } => {
            if schedule.blends_at(t, d) {
                let mixed = &embedded[from].0 * (1.0 - weight) + &embedded[from + 1].0 * weight;
                Ok(EmbeddedPrompt(mixed))
            } else {
                Ok(embedded[from].clone())
            }
        }
    }
}
