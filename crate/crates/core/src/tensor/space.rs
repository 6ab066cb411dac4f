//! Abelian charge groups and graded index spaces.

use serde::{Deserialize, Serialize};

use super::TensorError;

/// Charge label. Z_N charges live in `[0, N)`, U(1) charges are signed.
pub type Charge = i64;

/// Abelian symmetry group grading a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChargeGroup {
    Trivial,
    Zn { modulus: u32 },
    U1,
}

impl ChargeGroup {
    pub fn z2() -> Self {
        ChargeGroup::Zn { modulus: 2 }
    }

    pub fn identity(&self) -> Charge {
        0
    }

    /// Bring a charge into canonical range.
    pub fn normalize(&self, q: Charge) -> Charge {
        match *self {
            ChargeGroup::Trivial => 0,
            ChargeGroup::Zn { modulus } => q.rem_euclid(modulus as i64),
            ChargeGroup::U1 => q,
        }
    }

    pub fn fuse(&self, a: Charge, b: Charge) -> Charge {
        self.normalize(a + b)
    }

    pub fn inverse(&self, q: Charge) -> Charge {
        self.normalize(-q)
    }

    pub fn is_valid(&self, q: Charge) -> bool {
        match *self {
            ChargeGroup::Trivial => q == 0,
            ChargeGroup::Zn { modulus } => (0..modulus as i64).contains(&q),
            ChargeGroup::U1 => true,
        }
    }
}

/// Arrow of an index. Incoming charges count positively towards the
/// conservation law, outgoing ones negatively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::In => Direction::Out,
            Direction::Out => Direction::In,
        }
    }

    pub fn sign(self) -> Charge {
        match self {
            Direction::In => 1,
            Direction::Out => -1,
        }
    }
}

/// A graded vector space: an ordered list of charge sectors with their
/// degeneracies, plus an arrow.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexSpace {
    group: ChargeGroup,
    sectors: Vec<(Charge, usize)>,
    dir: Direction,
}

impl IndexSpace {
    pub fn new(
        group: ChargeGroup,
        sectors: Vec<(Charge, usize)>,
        dir: Direction,
    ) -> Result<Self, TensorError> {
        let mut seen = Vec::with_capacity(sectors.len());
        for &(q, deg) in &sectors {
            if !group.is_valid(q) {
                return Err(TensorError::InvalidCharge { charge: q, group });
            }
            if deg == 0 {
                return Err(TensorError::InvalidSpace(format!(
                    "sector {q} has zero degeneracy"
                )));
            }
            if seen.contains(&q) {
                return Err(TensorError::InvalidSpace(format!("duplicate sector {q}")));
            }
            seen.push(q);
        }
        Ok(IndexSpace { group, sectors, dir })
    }

    /// Ungraded space of dimension `dim`.
    pub fn trivial(dim: usize, dir: Direction) -> Self {
        IndexSpace { group: ChargeGroup::Trivial, sectors: vec![(0, dim)], dir }
    }

    /// One-dimensional space carrying a single charge.
    pub fn one(group: ChargeGroup, charge: Charge, dir: Direction) -> Self {
        IndexSpace { group, sectors: vec![(group.normalize(charge), 1)], dir }
    }

    pub fn group(&self) -> ChargeGroup {
        self.group
    }

    pub fn dir(&self) -> Direction {
        self.dir
    }

    pub fn sectors(&self) -> &[(Charge, usize)] {
        &self.sectors
    }

    pub fn dim(&self) -> usize {
        self.sectors.iter().map(|s| s.1).sum()
    }

    pub fn degeneracy(&self, q: Charge) -> Option<usize> {
        self.sectors.iter().find(|s| s.0 == q).map(|s| s.1)
    }

    /// Offset of sector `q` inside the dense ordering of this space.
    pub fn offset(&self, q: Charge) -> Option<usize> {
        let mut off = 0;
        for &(c, d) in &self.sectors {
            if c == q {
                return Some(off);
            }
            off += d;
        }
        None
    }

    /// Maps a dense basis index to `(charge, index inside sector)`.
    pub fn locate(&self, mut i: usize) -> Option<(Charge, usize)> {
        for &(c, d) in &self.sectors {
            if i < d {
                return Some((c, i));
            }
            i -= d;
        }
        None
    }

    /// Signed contribution of charge `q` on this index to the conservation law.
    pub fn signed(&self, q: Charge) -> Charge {
        self.group.normalize(self.dir.sign() * q)
    }

    /// The space that can be contracted with this one: same sectors, opposite arrow.
    pub fn dual(&self) -> Self {
        IndexSpace { group: self.group, sectors: self.sectors.clone(), dir: self.dir.flip() }
    }

    pub fn with_dir(&self, dir: Direction) -> Self {
        IndexSpace { group: self.group, sectors: self.sectors.clone(), dir }
    }

    pub fn is_dual_of(&self, other: &IndexSpace) -> bool {
        self.group == other.group && self.sectors == other.sectors && self.dir != other.dir
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zn_fusion_wraps() {
        let g = ChargeGroup::Zn { modulus: 3 };
        assert_eq!(g.fuse(2, 2), 1);
        assert_eq!(g.inverse(1), 2);
        assert!(!g.is_valid(3));
    }

    #[test]
    fn dual_flips_arrow_and_keeps_sectors() {
        let s = IndexSpace::new(ChargeGroup::U1, vec![(1, 2), (-1, 3)], Direction::In).unwrap();
        let d = s.dual();
        assert_eq!(d.dir(), Direction::Out);
        assert_eq!(d.sectors(), s.sectors());
        assert!(s.is_dual_of(&d));
        // signed charge negates under dualization
        assert_eq!(s.signed(1), -d.signed(1));
        assert_eq!(s.dim(), 5);
        assert_eq!(s.locate(3), Some((-1, 1)));
        assert_eq!(s.offset(-1), Some(2));
    }

    #[test]
    fn rejects_duplicate_and_invalid_sectors() {
        assert!(IndexSpace::new(ChargeGroup::z2(), vec![(0, 1), (0, 1)], Direction::In).is_err());
        assert!(IndexSpace::new(ChargeGroup::z2(), vec![(2, 1)], Direction::In).is_err());
        assert!(IndexSpace::new(ChargeGroup::Trivial, vec![(0, 0)], Direction::In).is_err());
    }
}
