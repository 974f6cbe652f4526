/// Which positions each position may attend to (`true` = may attend).
///
/// Rows `0..text_len` are text: causal, never seeing a pose query. Rows
/// `text_len..` are pose queries: they see the whole text prefix and every
/// other query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    size: usize,
    text_len: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn text_len(&self) -> usize {
        self.text_len
    }

    pub fn n_queries(&self) -> usize {
        self.size - self.text_len
    }

    pub fn allowed(&self, row: usize, col: usize) -> bool {
        self.allowed[row * self.size + col]
    }

    /// Columns row `row` may attend to; always a prefix `0..end`.
    pub fn visible(&self, row: usize) -> std::ops::Range<usize> {
        if row < self.text_len {
            0..row + 1
        } else {
            0..self.size
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<bool>> {
        self.allowed
            .chunks(self.size)
            .map(<[bool]>::to_vec)
            .collect()
    }
}

pub fn build_mask(text_len: usize, n_queries: usize) -> AttentionMask {
    let size = text_len + n_queries;
    let mut allowed = vec![false; size * size];
    for row in 0..size {
        let end = if row < text_len { row + 1 } else { size };
        for col in 0..end {
            allowed[row * size + col] = true;
        }
    }
    AttentionMask {
        size,
        text_len,
        allowed,
    }
}
