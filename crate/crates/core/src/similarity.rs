//! Ratcliff/Obershelp gestalt similarity over Unicode scalar values.

/// Length and start positions of a common block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub a: usize,
    pub b: usize,
    pub len: usize,
}

/// Longest common substring of `a[alo..ahi]` and `b[blo..bhi]`.
///
/// Among equally long blocks the one starting earliest in `a` wins, then the
/// one starting earliest in `b`.
fn longest_match(a: &[char], b: &[char], alo: usize, ahi: usize, blo: usize, bhi: usize) -> Block {
    let mut best = Block { a: alo, b: blo, len: 0 };
    let width = bhi - blo;
    let mut prev = vec![0usize; width + 1];
    let mut cur = vec![0usize; width + 1];
    for i in alo..ahi {
        for (k, j) in (blo..bhi).enumerate() {
            cur[k + 1] = if a[i] == b[j] { prev[k] + 1 } else { 0 };
            let run = cur[k + 1];
            if run > best.len {
                best = Block {
                    a: i + 1 - run,
                    b: j + 1 - run,
                    len: run,
                };
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Matching blocks in ascending order, without the zero-length sentinel.
pub fn matching_blocks(a: &[char], b: &[char]) -> Vec<Block> {
    let mut out = Vec::new();
    let mut stack = vec![(0, a.len(), 0, b.len())];
    while let Some((alo, ahi, blo, bhi)) = stack.pop() {
        if alo >= ahi || blo >= bhi {
            continue;
        }
        let m = longest_match(a, b, alo, ahi, blo, bhi);
        if m.len == 0 {
            continue;
        }
        out.push(m);
        stack.push((alo, m.a, blo, m.b));
        stack.push((m.a + m.len, ahi, m.b + m.len, bhi));
    }
    out.sort_by_key(|m| (m.a, m.b));
    out
}

/// Total characters matched by the recursive decomposition.
pub fn matched_chars(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    matching_blocks(&a, &b).iter().map(|m| m.len).sum()
}

/// `2·M / (|a| + |b|)`, with two empty strings scoring 1.
pub fn similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    let m: usize = matching_blocks(&a, &b).iter().map(|m| m.len).sum();
    2.0 * m as f64 / total as f64
}

pub fn check_similarity(a: &str, b: &str, threshold: f64) -> bool {
    similarity(a, b) >= threshold
}
