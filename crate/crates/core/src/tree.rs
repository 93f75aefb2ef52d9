//! Index algebra for the `N`-ary tree `J` and the dyadic cubes it addresses.
//!
//! A node is a finite path of child labels in `1..=N`, `N = 2^d`. Labels are
//! packed `d` bits each into a `u64`, most significant label first, so the
//! nodes of one generation are exactly the integers `0..N^n` (the "code") and
//! a generation can be walked with a counter.
//!
//! Child label `k` of a cube selects the lower or upper half along axis `a`
//! according to bit `a` of `k - 1` (little-endian across axes). The same rule
//! is applied at every level, so the homothety sending the unit cube to `Q_j`
//! sends `Q_k` to `Q_{jk}`.

use std::fmt;
use std::str::FromStr;

use crate::error::{domain, RcmError, Result};

/// Largest supported spatial dimension (`N = 32`).
pub const MAX_DIM: u32 = 5;

const LABEL_CHARS: &[u8] = b"123456789abcdefghijklmnopqrstuvw";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeIndex {
    dim: u8,
    gen: u8,
    code: u64,
}

impl TreeIndex {
    pub fn root(dim: u32) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim: dim as u8,
            gen: 0,
            code: 0,
        })
    }

    /// Deepest generation representable in the packed form for dimension `dim`.
    pub fn max_generation(dim: u32) -> u32 {
        64 / dim
    }

    pub fn from_code(dim: u32, generation: u32, code: u64) -> Result<Self> {
        check_dim(dim)?;
        if generation > Self::max_generation(dim) {
            return domain(format!(
                "generation {generation} exceeds packed capacity {} for d={dim}",
                Self::max_generation(dim)
            ));
        }
        let bits = dim * generation;
        if bits < 64 && code >> bits != 0 {
            return domain(format!("code {code} out of range for generation {generation}"));
        }
        Ok(Self {
            dim: dim as u8,
            gen: generation as u8,
            code,
        })
    }

    pub fn from_labels(dim: u32, labels: &[u8]) -> Result<Self> {
        let mut j = Self::root(dim)?;
        for &k in labels {
            j = j.child(k)?;
        }
        Ok(j)
    }

    pub fn dim(&self) -> u32 {
        self.dim as u32
    }

    pub fn branching(&self) -> u32 {
        1 << self.dim
    }

    /// `|j|`
    pub fn generation(&self) -> u32 {
        self.gen as u32
    }

    pub fn code(&self) -> u64 {
        self.code
    }

    pub fn is_root(&self) -> bool {
        self.gen == 0
    }

    /// Label at position `pos` (0 = first step below the root).
    pub fn label_at(&self, pos: u32) -> u8 {
        debug_assert!(pos < self.generation());
        let shift = self.dim as u32 * (self.generation() - 1 - pos);
        ((self.code >> shift) & (self.branching() as u64 - 1)) as u8 + 1
    }

    pub fn last_label(&self) -> Option<u8> {
        (!self.is_root()).then(|| (self.code & (self.branching() as u64 - 1)) as u8 + 1)
    }

    pub fn labels(&self) -> Vec<u8> {
        (0..self.generation()).map(|p| self.label_at(p)).collect()
    }

    pub fn parent(&self) -> Result<Self> {
        if self.is_root() {
            return domain("the root has no father inside the tree");
        }
        Ok(Self {
            dim: self.dim,
            gen: self.gen - 1,
            code: self.code >> self.dim,
        })
    }

    pub fn child(&self, label: u8) -> Result<Self> {
        let n = self.branching();
        if label == 0 || label as u32 > n {
            return domain(format!("label {label} outside 1..={n}"));
        }
        if self.generation() + 1 > Self::max_generation(self.dim()) {
            return domain("child generation exceeds packed capacity");
        }
        Ok(Self {
            dim: self.dim,
            gen: self.gen + 1,
            code: (self.code << self.dim) | (label as u64 - 1),
        })
    }

    /// The offspring set `O_j`, in label order.
    pub fn offspring(&self) -> Result<Vec<Self>> {
        (1..=self.branching() as u8).map(|k| self.child(k)).collect()
    }

    /// The path `self` followed by the path `tail` (the node `jk`).
    pub fn concat(&self, tail: &Self) -> Result<Self> {
        if self.dim != tail.dim {
            return domain("cannot concatenate indices of different dimension");
        }
        let g = self.generation() + tail.generation();
        if g > Self::max_generation(self.dim()) {
            return domain("concatenated generation exceeds packed capacity");
        }
        let shifted = self
            .code
            .checked_shl(self.dim as u32 * tail.generation())
            .unwrap_or(0);
        Ok(Self {
            dim: self.dim,
            gen: g as u8,
            code: shifted | tail.code,
        })
    }

    /// `self ≤ other` in the tree order, i.e. `self` is a prefix of `other`.
    pub fn is_prefix_of(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.gen <= other.gen
            && shr(other.code, self.dim as u32 * (other.generation() - self.generation()))
                == self.code
    }

    /// The truncation of `self` to its first `generation` labels.
    pub fn ancestor_at(&self, generation: u32) -> Self {
        debug_assert!(generation <= self.generation());
        Self {
            dim: self.dim,
            gen: generation as u8,
            code: shr(self.code, self.dim as u32 * (self.generation() - generation)),
        }
    }

    /// The chain `∅ = k_0 < k_1 < … < k_n = self`.
    pub fn ancestors(&self) -> impl Iterator<Item = Self> + '_ {
        (0..=self.generation()).map(move |g| self.ancestor_at(g))
    }

    /// Every node of generation `n`, in code order.
    pub fn generation_iter(dim: u32, n: u32) -> Result<impl Iterator<Item = Self>> {
        check_dim(dim)?;
        let count = generation_size(dim, n)?;
        Ok((0..count).map(move |code| Self {
            dim: dim as u8,
            gen: n as u8,
            code,
        }))
    }
}

/// `N^n` as a `u64`, failing when it does not fit.
pub fn generation_size(dim: u32, n: u32) -> Result<u64> {
    let bits = dim as u64 * n as u64;
    if bits >= 64 {
        return Err(RcmError::ResourceLimit {
            what: "generation size",
            needed: 1u128.checked_shl(bits as u32).unwrap_or(u128::MAX),
            budget: u64::MAX as u128,
        });
    }
    Ok(1u64 << bits)
}

/// Offset of generation `n` in a generation-major flat array.
pub fn generation_offset(dim: u32, n: u32) -> u64 {
    let big_n = 1u64 << dim;
    ((1u64 << (dim * n)) - 1) / (big_n - 1)
}

#[inline]
fn shr(x: u64, s: u32) -> u64 {
    x.checked_shr(s).unwrap_or(0)
}

fn check_dim(dim: u32) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(RcmError::InvalidModel(format!(
            "dimension {dim} outside 1..={MAX_DIM}"
        )));
    }
    Ok(())
}

impl fmt::Display for TreeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in 0..self.generation() {
            let k = self.label_at(p);
            write!(f, "{}", LABEL_CHARS[k as usize - 1] as char)?;
        }
        Ok(())
    }
}

/// Parses the digit-string form; the dimension must be supplied separately,
/// so this is a helper rather than a `FromStr` impl on `TreeIndex`.
pub struct TreeIndexText {
    pub dim: u32,
    pub text: String,
}

impl TreeIndexText {
    pub fn parse(&self) -> Result<TreeIndex> {
        let labels = self
            .text
            .bytes()
            .map(|c| {
                LABEL_CHARS
                    .iter()
                    .position(|&x| x == c)
                    .map(|p| p as u8 + 1)
                    .ok_or_else(|| RcmError::Domain(format!("bad label character {:?}", c as char)))
            })
            .collect::<Result<Vec<u8>>>()?;
        TreeIndex::from_labels(self.dim, &labels)
    }
}

impl FromStr for TreeIndexText {
    type Err = RcmError;

    /// Accepts `"<d>:<labels>"`, e.g. `"1:12"`.
    fn from_str(s: &str) -> Result<Self> {
        let (d, text) = s
            .split_once(':')
            .ok_or_else(|| RcmError::Domain("expected <d>:<labels>".into()))?;
        let dim = d
            .parse()
            .map_err(|_| RcmError::Domain(format!("bad dimension {d:?}")))?;
        Ok(Self {
            dim,
            text: text.to_string(),
        })
    }
}

/// Exact dyadic cube `origin + [0, side)^d` with `side = 2^-gen`; the origin
/// is stored as integer numerators over `2^gen`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DyadicCube {
    gen: u32,
    numerators: Vec<u64>,
}

impl DyadicCube {
    pub fn dim(&self) -> u32 {
        self.numerators.len() as u32
    }

    pub fn generation(&self) -> u32 {
        self.gen
    }

    pub fn side(&self) -> f64 {
        (-(self.gen as f64)).exp2()
    }

    pub fn volume(&self) -> f64 {
        (-((self.gen * self.dim()) as f64)).exp2()
    }

    pub fn origin_numerators(&self) -> &[u64] {
        &self.numerators
    }

    pub fn origin(&self) -> Vec<f64> {
        let side = self.side();
        self.numerators.iter().map(|&k| k as f64 * side).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        let side = self.side();
        self.numerators
            .iter()
            .map(|&k| (k as f64 + 0.5) * side)
            .collect()
    }

    /// Half-open containment.
    pub fn contains(&self, x: &[f64]) -> bool {
        let side = self.side();
        x.len() == self.numerators.len()
            && self.numerators.iter().zip(x).all(|(&k, &xa)| {
                let lo = k as f64 * side;
                xa >= lo && xa < lo + side
            })
    }
}

/// The cube `Q_j`.
pub fn cube_of(j: &TreeIndex) -> DyadicCube {
    let d = j.dim();
    let mut numerators = vec![0u64; d as usize];
    for pos in 0..j.generation() {
        let bits = j.label_at(pos) as u64 - 1;
        for (a, num) in numerators.iter_mut().enumerate() {
            *num = (*num << 1) | ((bits >> a) & 1);
        }
    }
    DyadicCube {
        gen: j.generation(),
        numerators,
    }
}

/// The node `x_n` with `|x_n| = n` and `x ∈ Q_{x_n}`, for `x ∈ [0,1)^d`.
pub fn path_of_point(x: &[f64], n: u32) -> Result<TreeIndex> {
    let d = x.len() as u32;
    if x.iter().any(|&xa| !(0.0..1.0).contains(&xa)) {
        return domain("point must lie in the half-open unit cube [0,1)^d");
    }
    if n > 52 {
        return domain("paths deeper than 52 levels exceed f64 resolution");
    }
    let mut j = TreeIndex::root(d)?;
    for level in 0..n {
        let scale = ((level + 1) as f64).exp2();
        let mut bits = 0u8;
        for (a, &xa) in x.iter().enumerate() {
            let bit = ((xa * scale).floor() as u64) & 1;
            bits |= (bit as u8) << a;
        }
        j = j.child(bits + 1)?;
    }
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(d: u32, labels: &[u8]) -> TreeIndex {
        TreeIndex::from_labels(d, labels).unwrap()
    }

    #[test]
    fn parent_drops_last_label() {
        assert_eq!(idx(2, &[1, 3, 2]).parent().unwrap(), idx(2, &[1, 3]));
        assert_eq!(idx(3, &[5]).parent().unwrap(), TreeIndex::root(3).unwrap());
        assert!(TreeIndex::root(1).unwrap().parent().is_err());
    }

    #[test]
    fn offspring_in_label_order() {
        let root = TreeIndex::root(1).unwrap();
        assert_eq!(root.offspring().unwrap(), vec![idx(1, &[1]), idx(1, &[2])]);
        assert_eq!(
            idx(1, &[2]).offspring().unwrap(),
            vec![idx(1, &[2, 1]), idx(1, &[2, 2])]
        );
        let kids = TreeIndex::root(3).unwrap().offspring().unwrap();
        assert_eq!(kids.len(), 8);
        for (k, c) in kids.iter().enumerate() {
            assert_eq!(c.labels(), vec![k as u8 + 1]);
            assert_eq!(c.parent().unwrap(), TreeIndex::root(3).unwrap());
        }
    }

    #[test]
    fn cube_geometry() {
        let root = cube_of(&TreeIndex::root(2).unwrap());
        assert_eq!(root.side(), 1.0);
        assert_eq!(root.origin(), vec![0.0, 0.0]);
        let c = cube_of(&idx(3, &[4, 7, 2]));
        assert_eq!(c.side(), 0.125);
        assert_eq!(c.volume(), (-9f64).exp2());
        assert_eq!(cube_of(&idx(2, &[1, 1])).origin(), cube_of(&idx(2, &[1])).origin());
    }

    #[test]
    fn children_tile_parent() {
        let j = idx(2, &[3, 2]);
        let parent = cube_of(&j);
        let mut seen = std::collections::HashSet::new();
        for c in j.offspring().unwrap() {
            let q = cube_of(&c);
            assert!(parent.contains(&q.origin()));
            assert_eq!(q.side() * 2.0, parent.side());
            assert!(seen.insert(q.origin_numerators().to_vec()));
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn homothety_consistency() {
        // The map Q_∅ → Q_j sends Q_k to Q_{jk}.
        let j = idx(2, &[2, 3]);
        let k = idx(2, &[4, 1, 2]);
        let jk = TreeIndex::from_labels(2, &[j.labels(), k.labels()].concat()).unwrap();
        let qj = cube_of(&j);
        let qk = cube_of(&k);
        let qjk = cube_of(&jk);
        for a in 0..2 {
            let mapped = qj.origin()[a] + qj.side() * qk.origin()[a];
            assert_eq!(mapped, qjk.origin()[a]);
        }
        assert_eq!(qj.side() * qk.side(), qjk.side());
    }

    #[test]
    fn point_paths() {
        // 0.3 = 0.0100110011..._2
        assert_eq!(path_of_point(&[0.3], 2).unwrap(), idx(1, &[1, 2]));
        assert_eq!(path_of_point(&[0.0, 0.0, 0.0], 4).unwrap(), idx(3, &[1, 1, 1, 1]));
        let j = idx(3, &[6, 2, 8]);
        let centre = cube_of(&j).center();
        assert_eq!(path_of_point(&centre, 3).unwrap(), j);
        assert!(path_of_point(&[1.0], 1).is_err());
    }

    #[test]
    fn generation_volumes_sum_to_one() {
        for (d, n) in [(1, 10), (2, 5), (3, 3)] {
            let total: f64 = TreeIndex::generation_iter(d, n)
                .unwrap()
                .map(|j| cube_of(&j).volume())
                .sum();
            assert_eq!(total, 1.0);
        }
    }

    #[test]
    fn text_form() {
        let j = idx(3, &[1, 3, 2, 8]);
        assert_eq!(j.to_string(), "1328");
        assert_eq!(TreeIndex::root(1).unwrap().to_string(), "");
        let parsed: TreeIndexText = "3:1328".parse().unwrap();
        assert_eq!(parsed.parse().unwrap(), j);
    }

    #[test]
    fn flat_offsets() {
        assert_eq!(generation_offset(1, 0), 0);
        assert_eq!(generation_offset(1, 3), 7);
        assert_eq!(generation_offset(3, 2), 9);
    }

    #[test]
    fn capacity_guard() {
        assert_eq!(TreeIndex::max_generation(3), 21);
        let deep = TreeIndex::from_code(3, 21, 0).unwrap();
        assert!(deep.child(1).is_err());
    }
}
