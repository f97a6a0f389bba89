//! Arena red-black tree whose order is defined externally.
//!
//! Nodes carry a payload but no key: the caller walks the tree (normally by
//! asking a human which of two clips is better) and inserts at the empty
//! child slot it reached. In-order traversal yields payloads best-first.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Color {
    Red,
    Black,
}

/// Child slot relative to a node. `Better` is the left subtree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Better,
    Worse,
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: T,
    color: Color,
    parent: Option<usize>,
    better: Option<usize>,
    worse: Option<usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuditError {
    #[error("root is red")]
    RedRoot,
    #[error("red node {0} has a red child")]
    RedRed(usize),
    #[error("unequal black height below node {0}")]
    BlackHeight(usize),
    #[error("broken parent link at node {0}")]
    ParentLink(usize),
    #[error("node count mismatch: reachable {reachable}, stored {stored}")]
    Unreachable { reachable: usize, stored: usize },
}

#[derive(Debug, Clone)]
pub struct RbTree<T> {
    nodes: Vec<Node<T>>,
    root: Option<usize>,
}

impl<T> Default for RbTree<T> {
    fn default() -> Self {
        RbTree {
            nodes: Vec::new(),
            root: None,
        }
    }
}

impl<T> RbTree<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> Option<usize> {
        self.root
    }

    pub fn child(&self, node: usize, side: Side) -> Option<usize> {
        let n = &self.nodes[node];
        match side {
            Side::Better => n.better,
            Side::Worse => n.worse,
        }
    }

    pub fn value(&self, node: usize) -> &T {
        &self.nodes[node].value
    }

    pub fn value_mut(&mut self, node: usize) -> &mut T {
        &mut self.nodes[node].value
    }

    pub fn color(&self, node: usize) -> Color {
        self.nodes[node].color
    }

    fn is_red(&self, node: Option<usize>) -> bool {
        node.is_some_and(|n| self.nodes[n].color == Color::Red)
    }

    fn set_child(&mut self, parent: usize, side: Side, child: Option<usize>) {
        match side {
            Side::Better => self.nodes[parent].better = child,
            Side::Worse => self.nodes[parent].worse = child,
        }
    }

    fn side_of(&self, node: usize) -> Option<Side> {
        let p = self.nodes[node].parent?;
        Some(if self.nodes[p].better == Some(node) {
            Side::Better
        } else {
            Side::Worse
        })
    }

    /// Inserts `value` as the root of an empty tree, or into the empty child
    /// slot `(parent, side)`, then restores the red-black invariants.
    ///
    /// Panics if the slot is occupied or the tree/slot combination is invalid.
    pub fn insert_at(&mut self, slot: Option<(usize, Side)>, value: T) -> usize {
        let id = self.nodes.len();
        match slot {
            None => {
                assert!(self.root.is_none(), "root slot is occupied");
                self.nodes.push(Node {
                    value,
                    color: Color::Black,
                    parent: None,
                    better: None,
                    worse: None,
                });
                self.root = Some(id);
                return id;
            }
            Some((parent, side)) => {
                assert!(self.child(parent, side).is_none(), "child slot is occupied");
                self.nodes.push(Node {
                    value,
                    color: Color::Red,
                    parent: Some(parent),
                    better: None,
                    worse: None,
                });
                self.set_child(parent, side, Some(id));
            }
        }
        self.insert_fixup(id);
        id
    }

    /// Rotation that lifts the `side` child of `x` into `x`'s place.
    fn rotate(&mut self, x: usize, lift: Side) {
        let other = match lift {
            Side::Better => Side::Worse,
            Side::Worse => Side::Better,
        };
        let y = self.child(x, lift).expect("rotation requires a child");
        let inner = self.child(y, other);
        self.set_child(x, lift, inner);
        if let Some(i) = inner {
            self.nodes[i].parent = Some(x);
        }
        let xp = self.nodes[x].parent;
        self.nodes[y].parent = xp;
        match xp {
            None => self.root = Some(y),
            Some(p) => {
                let s = if self.nodes[p].better == Some(x) {
                    Side::Better
                } else {
                    Side::Worse
                };
                self.set_child(p, s, Some(y));
            }
        }
        self.set_child(y, other, Some(x));
        self.nodes[x].parent = Some(y);
    }

    fn insert_fixup(&mut self, mut z: usize) {
        while let Some(p) = self.nodes[z].parent.filter(|&p| self.nodes[p].color == Color::Red) {
            // a red parent is never the root
            let g = self.nodes[p].parent.expect("red node has a parent");
            let p_side = self.side_of(p).expect("parent has a side");
            let uncle_side = match p_side {
                Side::Better => Side::Worse,
                Side::Worse => Side::Better,
            };
            let uncle = self.child(g, uncle_side);
            if self.is_red(uncle) {
                self.nodes[p].color = Color::Black;
                self.nodes[uncle.expect("red uncle exists")].color = Color::Black;
                self.nodes[g].color = Color::Red;
                z = g;
                continue;
            }
            let mut p = p;
            if self.side_of(z) == Some(uncle_side) {
                // inner grandchild: rotate into the outer position first
                z = p;
                self.rotate(z, uncle_side);
                p = self.nodes[z].parent.expect("rotated node has a parent");
            }
            self.nodes[p].color = Color::Black;
            self.nodes[g].color = Color::Red;
            self.rotate(g, p_side);
        }
        if let Some(r) = self.root {
            self.nodes[r].color = Color::Black;
        }
    }

    /// Node ids in order, best first.
    pub fn in_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = Vec::new();
        let mut cur = self.root;
        while cur.is_some() || !stack.is_empty() {
            while let Some(n) = cur {
                stack.push(n);
                cur = self.nodes[n].better;
            }
            let n = stack.pop().expect("stack non-empty");
            out.push(n);
            cur = self.nodes[n].worse;
        }
        out
    }

    /// Number of nodes on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        fn h<T>(t: &RbTree<T>, n: Option<usize>) -> usize {
            n.map_or(0, |n| 1 + h(t, t.nodes[n].better).max(h(t, t.nodes[n].worse)))
        }
        h(self, self.root)
    }

    /// Depth of a node (root = 0).
    pub fn depth(&self, mut node: usize) -> usize {
        let mut d = 0;
        while let Some(p) = self.nodes[node].parent {
            d += 1;
            node = p;
        }
        d
    }

    /// Full check of the red-black invariants and link structure. Returns the
    /// black height (counting the nil leaves).
    pub fn audit(&self) -> Result<usize, AuditError> {
        let Some(root) = self.root else {
            return Ok(1);
        };
        if self.nodes[root].color == Color::Red {
            return Err(AuditError::RedRoot);
        }
        if self.nodes[root].parent.is_some() {
            return Err(AuditError::ParentLink(root));
        }
        let mut count = 0;
        let bh = self.audit_node(root, &mut count)?;
        if count != self.nodes.len() {
            return Err(AuditError::Unreachable {
                reachable: count,
                stored: self.nodes.len(),
            });
        }
        Ok(bh)
    }

    fn audit_node(&self, n: usize, count: &mut usize) -> Result<usize, AuditError> {
        *count += 1;
        let node = &self.nodes[n];
        let mut heights = [1usize; 2];
        for (i, child) in [node.better, node.worse].into_iter().enumerate() {
            if let Some(c) = child {
                if self.nodes[c].parent != Some(n) {
                    return Err(AuditError::ParentLink(c));
                }
                if node.color == Color::Red && self.nodes[c].color == Color::Red {
                    return Err(AuditError::RedRed(n));
                }
                heights[i] = self.audit_node(c, count)?;
            }
        }
        if heights[0] != heights[1] {
            return Err(AuditError::BlackHeight(n));
        }
        Ok(heights[0] + usize::from(node.color == Color::Black))
    }
}
