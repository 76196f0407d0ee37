use std::fmt;

use serde::{Deserialize, Serialize};

/// Queue / server node label, also used as the side label of the triangle
/// (side `i` is the face where queue `i` is empty).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Node {
    N1,
    N2,
    N3,
}

pub type Side = Node;

impl Node {
    pub const ALL: [Node; 3] = [Node::N1, Node::N2, Node::N3];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Node {
        Node::ALL[i % 3]
    }

    /// One-based label.
    pub fn label(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_label(label: u8) -> Option<Node> {
        match label {
            1 => Some(Node::N1),
            2 => Some(Node::N2),
            3 => Some(Node::N3),
            _ => None,
        }
    }

    /// Cyclic successor `î → ĵ`.
    pub fn next(self) -> Node {
        Node::from_index(self.index() + 1)
    }

    /// Cyclic predecessor `î → k̂`.
    pub fn prev(self) -> Node {
        Node::from_index(self.index() + 2)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}
