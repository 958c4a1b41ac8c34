use std::cmp::Ordering;
use std::fmt;

/// A set of user indices, stored as a bitmask (at most 64 users).
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct UserSet(u64);

impl UserSet {
    pub const MAX_USERS: usize = 64;

    pub const fn empty() -> Self {
        UserSet(0)
    }

    pub fn all(n: usize) -> Self {
        debug_assert!(n <= Self::MAX_USERS);
        if n == 64 {
            UserSet(u64::MAX)
        } else {
            UserSet((1u64 << n) - 1)
        }
    }

    pub const fn from_bits(bits: u64) -> Self {
        UserSet(bits)
    }

    pub fn single(user: usize) -> Self {
        UserSet(1u64 << user)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, user: usize) -> bool {
        user < 64 && self.0 & (1u64 << user) != 0
    }

    pub fn with(self, user: usize) -> Self {
        UserSet(self.0 | (1u64 << user))
    }

    pub fn without(self, user: usize) -> Self {
        UserSet(self.0 & !(1u64 << user))
    }

    pub fn is_subset_of(self, other: UserSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Members in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }

    /// Lexicographic order of the sorted member lists.
    pub fn lex_cmp(self, other: UserSet) -> Ordering {
        self.iter().cmp(other.iter())
    }

    /// One-based, comma separated (`"1,3"`), as used in CSV output.
    pub fn to_one_based(self) -> String {
        self.iter()
            .map(|u| (u + 1).to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl fmt::Debug for UserSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<usize> for UserSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        iter.into_iter().fold(UserSet::empty(), UserSet::with)
    }
}

/// All `k`-subsets of `{0, .., n-1}` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> impl Iterator<Item = UserSet> {
    let mut idx: Vec<usize> = (0..k).collect();
    let mut done = k > n;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let set: UserSet = idx.iter().copied().collect();
        // advance to the next combination
        let mut i = k;
        loop {
            if i == 0 {
                done = true;
                break;
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(set)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_are_lexicographic() {
        let got: Vec<String> = combinations(4, 2).map(|s| s.to_one_based()).collect();
        assert_eq!(got, ["1,2", "1,3", "1,4", "2,3", "2,4", "3,4"]);
        assert_eq!(combinations(5, 0).count(), 1);
        assert_eq!(combinations(3, 4).count(), 0);
        assert_eq!(combinations(6, 3).count(), 20);
    }

    #[test]
    fn lex_cmp_orders_by_members() {
        let a: UserSet = [0, 3].into_iter().collect();
        let b: UserSet = [1, 2].into_iter().collect();
        assert_eq!(a.lex_cmp(b), Ordering::Less);
        assert_eq!(b.lex_cmp(a), Ordering::Greater);
        assert_eq!(a.lex_cmp(a), Ordering::Equal);
    }

    #[test]
    fn set_ops() {
        let s = UserSet::all(3).without(1);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 2]);
        assert!(s.contains(2) && !s.contains(1));
        assert!(UserSet::single(2).is_subset_of(s));
        assert_eq!(UserSet::all(64).len(), 64);
    }
}
