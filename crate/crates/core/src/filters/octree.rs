//! Octree colour quantisation.
//!
//! Colours are discretised to 8-bit RGB and inserted into an octree whose
//! level `l` branches on bit `7 - l` of each component (most significant bit
//! first), so a tree of depth `d` ignores the `8 - d` low bits. While there are
//! more than `K` leaves, the least populated leaf on the deepest occupied level
//! is folded, together with its siblings, into their parent. Ties go to the
//! leaf created first. Each leaf's palette entry is the rounded mean of the
//! colours that reached it.

use super::discretize::{from_byte, to_byte};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Real;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Node {
    children: [usize; 8],
    parent: usize,
    level: usize,
    leaf: bool,
    count: u64,
    sum: [u64; 3],
    order: usize,
}

impl Node {
    fn new(parent: usize, level: usize, order: usize) -> Self {
        Self { children: [NONE; 8], parent, level, leaf: false, count: 0, sum: [0; 3], order }
    }
}

#[inline]
fn branch(rgb: [u8; 3], level: usize) -> usize {
    let bit = 7 - level;
    (usize::from((rgb[0] >> bit) & 1) << 2) | (usize::from((rgb[1] >> bit) & 1) << 1) | usize::from((rgb[2] >> bit) & 1)
}

/// Octree over 8-bit RGB colours.
#[derive(Debug, Clone)]
pub struct Octree {
    nodes: Vec<Node>,
    depth: usize,
    leaves: usize,
    created: usize,
}

impl Octree {
    pub fn new(depth: usize) -> Self {
        assert!((1..=8).contains(&depth));
        Self { nodes: vec![Node::new(NONE, 0, 0)], depth, leaves: 0, created: 1 }
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves
    }

    pub fn insert(&mut self, rgb: [u8; 3]) {
        let mut at = 0;
        loop {
            let node = &self.nodes[at];
            if node.leaf {
                break;
            }
            if node.level == self.depth {
                self.nodes[at].leaf = true;
                self.leaves += 1;
                break;
            }
            let b = branch(rgb, node.level);
            let child = node.children[b];
            at = if child == NONE {
                let level = node.level + 1;
                let id = self.nodes.len();
                self.nodes.push(Node::new(at, level, self.created));
                self.created += 1;
                self.nodes[at].children[b] = id;
                id
            } else {
                child
            };
        }
        let node = &mut self.nodes[at];
        node.count += 1;
        for (s, &v) in node.sum.iter_mut().zip(&rgb) {
            *s += u64::from(v);
        }
    }

    /// Folds leaves until at most `max_leaves` remain.
    pub fn reduce(&mut self, max_leaves: usize) {
        while self.leaves > max_leaves {
            let mut pick: Option<usize> = None;
            for (i, n) in self.nodes.iter().enumerate() {
                if !n.leaf {
                    continue;
                }
                pick = match pick {
                    None => Some(i),
                    Some(p) => {
                        let q = &self.nodes[p];
                        let better = n.level > q.level
                            || (n.level == q.level && (n.count, n.order) < (q.count, q.order));
                        Some(if better { i } else { p })
                    }
                };
            }
            let leaf = pick.expect("leaf exists while count exceeds bound");
            let parent = self.nodes[leaf].parent;
            if parent == NONE {
                break;
            }
            self.fold(parent);
        }
    }

    fn fold(&mut self, parent: usize) {
        let children = std::mem::replace(&mut self.nodes[parent].children, [NONE; 8]);
        let (mut count, mut sum, mut order, mut folded) = (0, [0u64; 3], usize::MAX, 0);
        for c in children.into_iter().filter(|&c| c != NONE) {
            let child = &mut self.nodes[c];
            debug_assert!(child.leaf);
            child.leaf = false;
            child.parent = NONE;
            count += child.count;
            for (s, v) in sum.iter_mut().zip(child.sum) {
                *s += v;
            }
            order = order.min(child.order);
            folded += 1;
        }
        let p = &mut self.nodes[parent];
        p.leaf = true;
        p.count = count;
        p.sum = sum;
        p.order = order;
        self.leaves = self.leaves + 1 - folded;
    }

    fn leaf_of(&self, rgb: [u8; 3]) -> usize {
        let mut at = 0;
        while !self.nodes[at].leaf {
            let next = self.nodes[at].children[branch(rgb, self.nodes[at].level)];
            debug_assert_ne!(next, NONE, "colour was never inserted");
            at = next;
        }
        at
    }

    /// Palette colour (rounded mean of member colours) for an inserted colour.
    pub fn palette_color(&self, rgb: [u8; 3]) -> [u8; 3] {
        let n = &self.nodes[self.leaf_of(rgb)];
        n.sum.map(|s| ((2 * s + n.count) / (2 * n.count)) as u8)
    }
}

/// Reduces an RGB image to at most `max_colors` colours.
pub fn octree_quantize<T: Real>(img: &Image<T>, max_colors: usize, depth: usize) -> Result<Image<T>> {
    if max_colors < 2 {
        return Err(Error::InvalidFilter(format!("octree max_colors {max_colors} < 2")));
    }
    if !(1..=8).contains(&depth) {
        return Err(Error::InvalidFilter(format!("octree depth {depth} outside 1..=8")));
    }
    let (c, h, w) = img.dims();
    if c != 3 {
        return Err(Error::UnsupportedImage("octree quantisation needs an RGB image".into()));
    }
    let n = h * w;
    let d = img.data();
    let colors: Vec<[u8; 3]> = (0..n).map(|i| [to_byte(d[i]), to_byte(d[n + i]), to_byte(d[2 * n + i])]).collect();
    let mut tree = Octree::new(depth);
    for &rgb in &colors {
        tree.insert(rgb);
    }
    tree.reduce(max_colors);
    let mut out = vec![T::zero(); 3 * n];
    for (i, &rgb) in colors.iter().enumerate() {
        let p = tree.palette_color(rgb);
        for ch in 0..3 {
            out[ch * n + i] = from_byte(p[ch]);
        }
    }
    Ok(img.with_data(out))
}
