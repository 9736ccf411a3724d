use super::PolicyError;

/// A threshold-gate tree. A gate with `c` children and threshold `k` is
/// satisfied when at least `k` children are: `k = 1` is OR, `k = c` is AND.
///
/// The leaf payload is generic so the same shape carries plaintext tokens,
/// client ciphertexts and stored server ciphertexts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConditionNode<L> {
    Gate {
        threshold: usize,
        children: Vec<ConditionNode<L>>,
    },
    Leaf(L),
}

/// Gate structure with the leaf payloads erased.
pub type Shape = ConditionNode<()>;

impl<L> ConditionNode<L> {
    pub fn gate(threshold: usize, children: Vec<ConditionNode<L>>) -> Result<Self, PolicyError> {
        if threshold == 0 || threshold > children.len() {
            return Err(PolicyError::Threshold {
                k: threshold,
                c: children.len(),
            });
        }
        Ok(ConditionNode::Gate {
            threshold,
            children,
        })
    }

    /// `c`-of-`c`. Panics on an empty child list.
    pub fn and(children: Vec<ConditionNode<L>>) -> Self {
        let k = children.len();
        Self::gate(k, children).expect("AND gate needs at least one child")
    }

    /// 1-of-`c`. Panics on an empty child list.
    pub fn or(children: Vec<ConditionNode<L>>) -> Self {
        Self::gate(1, children).expect("OR gate needs at least one child")
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, ConditionNode::Leaf(_))
    }

    /// Leaves in pre-order.
    pub fn leaves(&self) -> Vec<&L> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a L>) {
        match self {
            ConditionNode::Leaf(l) => out.push(l),
            ConditionNode::Gate { children, .. } => {
                children.iter().for_each(|c| c.collect_leaves(out))
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            ConditionNode::Leaf(_) => 1,
            ConditionNode::Gate { children, .. } => children.iter().map(Self::leaf_count).sum(),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            ConditionNode::Leaf(_) => 1,
            ConditionNode::Gate { children, .. } => {
                1 + children.iter().map(Self::node_count).sum::<usize>()
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            ConditionNode::Leaf(_) => 1,
            ConditionNode::Gate { children, .. } => {
                1 + children.iter().map(Self::depth).max().unwrap_or(0)
            }
        }
    }

    pub fn map_leaves<M>(&self, f: &mut impl FnMut(&L) -> M) -> ConditionNode<M> {
        match self {
            ConditionNode::Leaf(l) => ConditionNode::Leaf(f(l)),
            ConditionNode::Gate {
                threshold,
                children,
            } => ConditionNode::Gate {
                threshold: *threshold,
                children: children.iter().map(|c| c.map_leaves(f)).collect(),
            },
        }
    }

    pub fn try_map_leaves<M, E>(
        &self,
        f: &mut impl FnMut(&L) -> Result<M, E>,
    ) -> Result<ConditionNode<M>, E> {
        Ok(match self {
            ConditionNode::Leaf(l) => ConditionNode::Leaf(f(l)?),
            ConditionNode::Gate {
                threshold,
                children,
            } => ConditionNode::Gate {
                threshold: *threshold,
                children: children
                    .iter()
                    .map(|c| c.try_map_leaves(f))
                    .collect::<Result<_, _>>()?,
            },
        })
    }

    pub fn shape(&self) -> Shape {
        self.map_leaves(&mut |_| ())
    }

    /// Checks `1 <= k <= c` at every gate.
    pub fn validate(&self) -> Result<(), PolicyError> {
        if let ConditionNode::Gate {
            threshold,
            children,
        } = self
        {
            if *threshold == 0 || *threshold > children.len() {
                return Err(PolicyError::Threshold {
                    k: *threshold,
                    c: children.len(),
                });
            }
            children.iter().try_for_each(Self::validate)?;
        }
        Ok(())
    }

    /// Threshold recursion from the root; `leaf` decides each leaf. Stops
    /// visiting a gate's children once its threshold is met.
    pub fn evaluate(&self, leaf: &mut impl FnMut(&L) -> bool) -> bool {
        match self {
            ConditionNode::Leaf(l) => leaf(l),
            ConditionNode::Gate {
                threshold,
                children,
            } => {
                let mut satisfied = 0;
                for c in children {
                    if c.evaluate(leaf) {
                        satisfied += 1;
                        if satisfied >= *threshold {
                            return true;
                        }
                    }
                }
                false
            }
        }
    }
}
