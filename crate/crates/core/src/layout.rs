//! Class-to-domain partition.

use serde::{Deserialize, Serialize};

use crate::error::{LdlError, Result};

/// Partition of classes `0..C` into `K` domains.
///
/// `phi[j]` is the domain of class `j`; `index_sets[d]` lists the classes of
/// domain `d` in ascending order. Every domain holds at least one class.
/// The layout itself accepts `K = 1` (single-source baselines); the
/// redistribution engine additionally requires `K >= 2`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LayoutRepr", into = "LayoutRepr")]
pub struct DomainLayout {
    phi: Vec<usize>,
    index_sets: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct LayoutRepr {
    domain_count: usize,
    phi: Vec<usize>,
}

impl TryFrom<LayoutRepr> for DomainLayout {
    type Error = LdlError;
    fn try_from(r: LayoutRepr) -> Result<Self> {
        DomainLayout::from_assignment(r.phi, r.domain_count)
    }
}

impl From<DomainLayout> for LayoutRepr {
    fn from(l: DomainLayout) -> Self {
        LayoutRepr { domain_count: l.domain_count(), phi: l.phi }
    }
}

impl DomainLayout {
    /// Builds a layout from an explicit class → domain assignment.
    pub fn from_assignment(phi: Vec<usize>, domain_count: usize) -> Result<Self> {
        if phi.is_empty() {
            return Err(LdlError::InvalidLayout("no classes".into()));
        }
        if domain_count == 0 {
            return Err(LdlError::InvalidLayout("no domains".into()));
        }
        let mut index_sets = vec![Vec::new(); domain_count];
        for (class, &d) in phi.iter().enumerate() {
            if d >= domain_count {
                return Err(LdlError::InvalidLayout(format!(
                    "class {class} assigned to domain {d}, only {domain_count} domains"
                )));
            }
            index_sets[d].push(class);
        }
        if let Some(d) = index_sets.iter().position(Vec::is_empty) {
            return Err(LdlError::InvalidLayout(format!("domain {d} has no classes")));
        }
        Ok(Self { phi, index_sets })
    }

    /// Contiguous layout: the first `counts[0]` classes form domain 0, and so on.
    pub fn contiguous(counts: &[usize]) -> Result<Self> {
        let phi = counts.iter().enumerate().flat_map(|(d, &n)| std::iter::repeat_n(d, n)).collect();
        Self::from_assignment(phi, counts.len())
    }

    #[inline]
    pub fn class_count(&self) -> usize {
        self.phi.len()
    }

    #[inline]
    pub fn domain_count(&self) -> usize {
        self.index_sets.len()
    }

    /// Domain of `class`. Panics if the class is out of range.
    #[inline]
    pub fn domain_of(&self, class: usize) -> usize {
        self.phi[class]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.phi
    }

    pub fn classes_in(&self, domain: usize) -> &[usize] {
        &self.index_sets[domain]
    }

    pub fn count(&self, domain: usize) -> usize {
        self.index_sets[domain].len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.index_sets.iter().map(Vec::len).collect()
    }

    /// Domains other than the one holding `class`, ascending.
    pub fn cross_domains(&self, class: usize) -> impl Iterator<Item = usize> + '_ {
        let own = self.phi[class];
        (0..self.domain_count()).filter(move |&d| d != own)
    }

    /// Number of classes outside the domain of `class`.
    pub fn cross_class_count(&self, class: usize) -> usize {
        self.class_count() - self.count(self.phi[class])
    }

    pub(crate) fn check_class(&self, class: usize) -> Result<()> {
        if class < self.class_count() {
            Ok(())
        } else {
            Err(LdlError::ClassOutOfRange { class, class_count: self.class_count() })
        }
    }
}
