/// Fixed-length bitset over region indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionSet {
    words: Vec<u64>,
    len: usize,
}

impl RegionSet {
    pub fn empty(len: usize) -> Self {
        RegionSet { words: vec![0; len.div_ceil(64)], len }
    }

    /// Takes raw words; bits at or beyond `len` must be zero.
    pub fn from_words(len: usize, words: Vec<u64>) -> Self {
        assert_eq!(words.len(), len.div_ceil(64));
        debug_assert!(len.is_multiple_of(64) || words.last().is_none_or(|w| w >> (len % 64) == 0));
        RegionSet { words, len }
    }

    pub fn from_indices(len: usize, idx: impl IntoIterator<Item = usize>) -> Self {
        let mut s = RegionSet::empty(len);
        for i in idx {
            s.insert(i);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "region index {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|i| self.contains(*i))
    }

    fn zip(&self, other: &RegionSet, f: impl Fn(u64, u64) -> u64) -> RegionSet {
        assert_eq!(self.len, other.len);
        RegionSet { words: self.words.iter().zip(&other.words).map(|(a, b)| f(*a, *b)).collect(), len: self.len }
    }

    pub fn union(&self, other: &RegionSet) -> RegionSet {
        self.zip(other, |a, b| a | b)
    }

    pub fn intersect(&self, other: &RegionSet) -> RegionSet {
        self.zip(other, |a, b| a & b)
    }

    pub fn subtract(&self, other: &RegionSet) -> RegionSet {
        self.zip(other, |a, b| a & !b)
    }

    pub fn intersect_count(&self, other: &RegionSet) -> u64 {
        self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones() as u64).sum()
    }

    /// |a ∩ b| / |a ∪ b|, with two empty sets counting as identical.
    pub fn jaccard(&self, other: &RegionSet) -> f64 {
        let (mut inter, mut uni) = (0u64, 0u64);
        for (a, b) in self.words.iter().zip(&other.words) {
            inter += (a & b).count_ones() as u64;
            uni += (a | b).count_ones() as u64;
        }
        if uni == 0 {
            1.0
        } else {
            inter as f64 / uni as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_algebra() {
        let a = RegionSet::from_indices(130, [0, 64, 129]);
        let b = RegionSet::from_indices(130, [64, 100]);
        assert_eq!(a.union(&b).iter().collect::<Vec<_>>(), vec![0, 64, 100, 129]);
        assert_eq!(a.intersect(&b).iter().collect::<Vec<_>>(), vec![64]);
        assert_eq!(a.subtract(&b).iter().collect::<Vec<_>>(), vec![0, 129]);
        assert_eq!(a.intersect_count(&b), 1);
        assert_eq!(a.jaccard(&b), 0.25);
        assert_eq!(RegionSet::empty(5).jaccard(&RegionSet::empty(5)), 1.0);
    }
}
