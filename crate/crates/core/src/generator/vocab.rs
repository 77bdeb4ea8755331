use std::collections::{BTreeSet, HashMap};

use crate::corpus::{Corpus, Token};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const SEP: usize = 3;
pub const UNK: usize = 4;
pub const RESERVED: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<sep>", "<unk>"];

/// Token inventory shared by posts and responses; reserved ids come first.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    tokens: Vec<Token>,
    index: HashMap<Token, usize>,
}

impl Vocab {
    /// Reserved tokens followed by `tokens` in sorted order, without duplicates.
    pub fn from_tokens(tokens: impl IntoIterator<Item = Token>) -> Vocab {
        let sorted: BTreeSet<Token> = tokens
            .into_iter()
            .filter(|t| !RESERVED.contains(&t.as_str()))
            .collect();
        let all: Vec<Token> = RESERVED.iter().map(|s| s.to_string()).chain(sorted).collect();
        Self::from_list(all)
    }

    /// Rebuilds a vocabulary from its full id-ordered token list.
    pub fn from_list(tokens: Vec<Token>) -> Vocab {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    pub fn from_corpus(corpus: &Corpus) -> Vocab {
        Self::from_tokens(
            corpus
                .pairs()
                .iter()
                .flat_map(|p| p.post.iter().chain(&p.response).cloned()),
        )
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn encode(&self, tokens: &[Token]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn is_reserved(id: usize) -> bool {
        id < RESERVED.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed_and_unknowns_map_to_unk() {
        let v = Vocab::from_tokens(["b", "a", "b", "<eos>"].iter().map(|s| s.to_string()));
        assert_eq!(v.len(), 7);
        assert_eq!(v.token(EOS), "<eos>");
        assert_eq!(v.id("a"), 5);
        assert_eq!(v.id("zzz"), UNK);
        assert_eq!(Vocab::from_list(v.tokens().to_vec()), v);
    }
}
