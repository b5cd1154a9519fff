//! ResNet-50 as an ordered chain of placement units (stem plus sixteen
//! bottleneck blocks) together with the per-block cost metadata the
//! optimizer needs: memory load, multiplication count and output size.
//!
//! Block ids are 1-based throughout the public surface; the stem is block 1.
//! Keep/drop vectors are indexed from 0, so `keep[0]` is the stem.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bytes per stored element unless configured otherwise.
pub const DEFAULT_WEIGHT_BYTES: u64 = 4;

/// Longest run of consecutive dropped blocks a skip edge may span in the
/// default topology.
pub const DEFAULT_MAX_SKIP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Pool,
    Fc,
}

/// One layer of a block. `shortcut` marks a projection on the skip path of a
/// convolutional block; it sits outside the main-path channel chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel_side: u64,
    pub in_channels: u64,
    pub out_channels: u64,
    pub out_spatial: u64,
    pub in_elements: u64,
    pub shortcut: bool,
}

impl LayerSpec {
    pub fn conv(kernel_side: u64, in_channels: u64, out_channels: u64, out_spatial: u64, in_elements: u64) -> Self {
        Self {
            kind: LayerKind::Conv,
            kernel_side,
            in_channels,
            out_channels,
            out_spatial,
            in_elements,
            shortcut: false,
        }
    }

    pub fn pool(kernel_side: u64, channels: u64, out_spatial: u64, in_elements: u64) -> Self {
        Self {
            kind: LayerKind::Pool,
            kernel_side,
            in_channels: channels,
            out_channels: channels,
            out_spatial,
            in_elements,
            shortcut: false,
        }
    }

    /// 1×1 projection on the shortcut path.
    pub fn projection(in_channels: u64, out_channels: u64, out_spatial: u64, in_elements: u64) -> Self {
        Self {
            shortcut: true,
            ..Self::conv(1, in_channels, out_channels, out_spatial, in_elements)
        }
    }

    fn validate(&self) -> Result<()> {
        let dims = [
            self.kernel_side,
            self.in_channels,
            self.out_channels,
            self.out_spatial,
            self.in_elements,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidModel(format!(
                "layer dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Multiplications for one forward pass: in·kernel²·out·spatial². Pooling costs nothing.
    pub fn multiplications(&self) -> u64 {
        match self.kind {
            LayerKind::Pool => 0,
            LayerKind::Conv | LayerKind::Fc => {
                self.in_channels
                    * self.kernel_side
                    * self.kernel_side
                    * self.out_channels
                    * self.out_spatial
                    * self.out_spatial
            }
        }
    }

    /// Learnable parameter count (biases ignored).
    pub fn weight_count(&self) -> u64 {
        match self.kind {
            LayerKind::Pool => 0,
            LayerKind::Conv | LayerKind::Fc => {
                self.kernel_side * self.kernel_side * self.in_channels * self.out_channels
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Stem,
    ConvBlock,
    IdentityBlock,
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockKind::Stem => "stem",
            BlockKind::ConvBlock => "conv_block",
            BlockKind::IdentityBlock => "identity_block",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSpec {
    pub block_id: usize,
    pub stage: usize,
    pub kind: BlockKind,
    pub layers: Vec<LayerSpec>,
    pub droppable: bool,
    pub out_elements: u64,
}

impl BlockSpec {
    pub fn new(
        block_id: usize,
        stage: usize,
        kind: BlockKind,
        layers: Vec<LayerSpec>,
        droppable: bool,
        out_elements: u64,
    ) -> Result<Self> {
        let block = Self {
            block_id,
            stage,
            kind,
            layers,
            droppable,
            out_elements,
        };
        block.validate()?;
        Ok(block)
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidModel(format!("block {}: {msg}", self.block_id)));
        if self.out_elements == 0 {
            return fail("out_elements must be positive".into());
        }
        if self.kind == BlockKind::Stem && self.droppable {
            return fail("the stem cannot be droppable".into());
        }
        for layer in &self.layers {
            layer.validate()?;
        }
        let main: Vec<&LayerSpec> = self.layers.iter().filter(|l| !l.shortcut).collect();
        for pair in main.windows(2) {
            if pair[1].in_channels != pair[0].out_channels {
                return fail(format!(
                    "channel chain broken: {} -> {}",
                    pair[0].out_channels, pair[1].in_channels
                ));
            }
        }
        if self.kind == BlockKind::IdentityBlock {
            match main.first() {
                Some(first) if first.in_elements == self.out_elements => {}
                _ => return fail("identity block input size must equal its output size".into()),
            }
        }
        Ok(())
    }
}

/// The θ relation: which (destination, source) block pairs are joined by a
/// skip connection, limited to spans of at most `max_skip`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipTopology {
    edges: BTreeSet<(usize, usize)>,
    max_skip: usize,
}

impl SkipTopology {
    pub fn new(max_skip: usize) -> Self {
        Self {
            edges: BTreeSet::new(),
            max_skip,
        }
    }

    /// Adds θ(dst, src) = 1. Block ids are 1-based.
    pub fn insert(&mut self, dst: usize, src: usize) -> Result<()> {
        if src == 0 || dst <= src || dst - src > self.max_skip {
            return Err(Error::InvalidModel(format!(
                "skip edge {src}->{dst} outside span 1..={}",
                self.max_skip
            )));
        }
        self.edges.insert((dst, src));
        Ok(())
    }

    pub fn contains(&self, dst: usize, src: usize) -> bool {
        self.edges.contains(&(dst, src))
    }

    pub fn max_skip(&self) -> usize {
        self.max_skip
    }

    /// (dst, src) pairs in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// θ(j+1, j−1) for every interior block and θ(j+2, j−1) for every
    /// adjacent interior pair, so any single drop or two-block drop run is
    /// bridgeable.
    pub fn default_for(blocks: &[BlockSpec]) -> Self {
        let m = blocks.len();
        let mut topo = Self::new(DEFAULT_MAX_SKIP);
        for j in 2..m {
            if blocks[j - 1].droppable {
                topo.edges.insert((j + 1, j - 1));
            }
        }
        for j in 2..m.saturating_sub(1) {
            if blocks[j - 1].droppable && blocks[j].droppable {
                topo.edges.insert((j + 2, j - 1));
            }
        }
        topo
    }
}

/// How the memory load of a block is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryMode {
    /// Sum of each layer's input tensor size.
    #[default]
    Inputs,
    /// Sum of each layer's parameter count.
    Weights,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResNetGraph {
    pub blocks: Vec<BlockSpec>,
    pub skip: SkipTopology,
    pub weight_bytes: u64,
}

impl ResNetGraph {
    /// Assembles a graph, checking contiguous ids and that every droppable
    /// block except the last is bypassed by at least one skip edge.
    pub fn from_parts(blocks: Vec<BlockSpec>, skip: SkipTopology, weight_bytes: u64) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidModel("graph has no blocks".into()));
        }
        for (idx, block) in blocks.iter().enumerate() {
            if block.block_id != idx + 1 {
                return Err(Error::InvalidModel(format!(
                    "block ids must be contiguous from 1; position {} has id {}",
                    idx + 1,
                    block.block_id
                )));
            }
        }
        if blocks[0].droppable {
            return Err(Error::InvalidModel("the first block must not be droppable".into()));
        }
        let m = blocks.len();
        for (dst, _) in skip.iter() {
            if dst > m {
                return Err(Error::InvalidModel(format!("skip edge targets missing block {dst}")));
            }
        }
        for block in blocks.iter().filter(|b| b.droppable && b.block_id < m) {
            let j = block.block_id;
            if !skip.iter().any(|(dst, src)| src < j && j < dst) {
                return Err(Error::InvalidModel(format!(
                    "droppable block {j} has no bypassing skip edge"
                )));
            }
        }
        Ok(Self {
            blocks,
            skip,
            weight_bytes,
        })
    }

    /// Number of placement units M.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Block by 1-based id.
    pub fn block(&self, id: usize) -> &BlockSpec {
        &self.blocks[id - 1]
    }

    /// The first `m` units with the skip topology restricted to them.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.len() {
            return Err(Error::InvalidModel(format!(
                "cannot truncate {} blocks to {m}",
                self.len()
            )));
        }
        let blocks = self.blocks[..m].to_vec();
        let mut skip = SkipTopology::new(self.skip.max_skip);
        skip.edges = self.skip.edges.iter().copied().filter(|&(dst, _)| dst <= m).collect();
        Self::from_parts(blocks, skip, self.weight_bytes)
    }

    pub fn memory_load(&self, id: usize, mode: MemoryMode) -> u64 {
        memory_load(self.block(id), mode, self.weight_bytes)
    }

    pub fn compute_load(&self, id: usize) -> u64 {
        compute_load(self.block(id))
    }

    pub fn output_bits(&self, id: usize) -> u64 {
        output_bits(self.block(id), self.weight_bytes)
    }
}

/// ResNet-50 for a square RGB input: a 7×7/64 stem with 3×3 max-pool, then
/// bottleneck stages of [3, 4, 6, 3] blocks. Strided stages downsample in the
/// first 1×1 convolution of their convolutional block.
pub fn build_resnet50(input_side: u32) -> Result<ResNetGraph> {
    if !(32..=1024).contains(&input_side) || !input_side.is_multiple_of(32) {
        return Err(Error::InvalidInputSide(input_side));
    }
    let side = u64::from(input_side);
    let conv_side = side / 2;
    let pool_side = side / 4;

    let stem = BlockSpec::new(
        1,
        1,
        BlockKind::Stem,
        vec![
            LayerSpec::conv(7, 3, 64, conv_side, side * side * 3),
            LayerSpec::pool(3, 64, pool_side, conv_side * conv_side * 64),
        ],
        false,
        pool_side * pool_side * 64,
    )?;
    let mut blocks = vec![stem];

    let stages: [(usize, u64); 4] = [(3, 64), (4, 128), (6, 256), (3, 512)];
    let mut in_channels = 64;
    let mut in_side = pool_side;
    for (stage_idx, &(count, mid)) in stages.iter().enumerate() {
        let stage = stage_idx + 2;
        let out = 4 * mid;
        let out_side = if stage_idx == 0 { in_side } else { in_side / 2 };
        for b in 0..count {
            let id = blocks.len() + 1;
            let block = if b == 0 {
                let in_elems = in_side * in_side * in_channels;
                BlockSpec::new(
                    id,
                    stage,
                    BlockKind::ConvBlock,
                    vec![
                        LayerSpec::conv(1, in_channels, mid, out_side, in_elems),
                        LayerSpec::conv(3, mid, mid, out_side, out_side * out_side * mid),
                        LayerSpec::conv(1, mid, out, out_side, out_side * out_side * mid),
                        LayerSpec::projection(in_channels, out, out_side, in_elems),
                    ],
                    true,
                    out_side * out_side * out,
                )?
            } else {
                let area = out_side * out_side;
                BlockSpec::new(
                    id,
                    stage,
                    BlockKind::IdentityBlock,
                    vec![
                        LayerSpec::conv(1, out, mid, out_side, area * out),
                        LayerSpec::conv(3, mid, mid, out_side, area * mid),
                        LayerSpec::conv(1, mid, out, out_side, area * mid),
                    ],
                    true,
                    area * out,
                )?
            };
            blocks.push(block);
        }
        in_channels = out;
        in_side = out_side;
    }

    let skip = SkipTopology::default_for(&blocks);
    ResNetGraph::from_parts(blocks, skip, DEFAULT_WEIGHT_BYTES)
}

/// Memory load m_j in bytes.
pub fn memory_load(block: &BlockSpec, mode: MemoryMode, bytes_per_element: u64) -> u64 {
    let inputs: u64 = block.layers.iter().map(|l| l.in_elements).sum();
    let weights: u64 = block.layers.iter().map(LayerSpec::weight_count).sum();
    let elements = match mode {
        MemoryMode::Inputs => inputs,
        MemoryMode::Weights => weights,
        MemoryMode::Both => inputs + weights,
    };
    elements * bytes_per_element
}

/// Computational load c_j in multiplications.
pub fn compute_load(block: &BlockSpec) -> u64 {
    block.layers.iter().map(LayerSpec::multiplications).sum()
}

/// Output size K_j in bits.
pub fn output_bits(block: &BlockSpec, bytes_per_element: u64) -> u64 {
    block.out_elements * bytes_per_element * 8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Direct,
    Skip { sigma: usize },
}

/// A per-request data transfer between two blocks (1-based ids). The payload
/// is always the source block's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
}

/// Transfers needed to serve one request under the given keep vector: a
/// direct edge between consecutive kept blocks, and a skip edge into each
/// kept block whose predecessor run was dropped (plus any span-1 θ edge that
/// runs alongside a direct edge). Trailing dropped blocks need no bridge.
pub fn effective_edges(graph: &ResNetGraph, keep: &[bool]) -> Result<Vec<Edge>> {
    let m = graph.len();
    if keep.len() != m {
        return Err(Error::LengthMismatch {
            what: "keep vector",
            expected: m,
            got: keep.len(),
        });
    }
    if !keep[0] {
        return Err(Error::StemDropped);
    }
    if let Some(idx) = (0..m).find(|&i| !keep[i] && !graph.blocks[i].droppable) {
        return Err(Error::NotDroppable(idx + 1));
    }

    let mut edges = Vec::with_capacity(m);
    let mut last_kept = 1;
    for dst in 2..=m {
        if !keep[dst - 1] {
            continue;
        }
        let sigma = dst - last_kept;
        if sigma == 1 {
            edges.push(Edge {
                src: last_kept,
                dst,
                kind: EdgeKind::Direct,
            });
            if graph.skip.contains(dst, last_kept) {
                edges.push(Edge {
                    src: last_kept,
                    dst,
                    kind: EdgeKind::Skip { sigma: 1 },
                });
            }
        } else if sigma <= graph.skip.max_skip() && graph.skip.contains(dst, last_kept) {
            edges.push(Edge {
                src: last_kept,
                dst,
                kind: EdgeKind::Skip { sigma },
            });
        } else {
            return Err(Error::UnbridgeableDrop {
                block: dst,
                sigma,
                max_skip: graph.skip.max_skip(),
            });
        }
        last_kept = dst;
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g224() -> ResNetGraph {
        build_resnet50(224).unwrap()
    }

    fn keep_all_but(m: usize, dropped: &[usize]) -> Vec<bool> {
        (1..=m).map(|id| !dropped.contains(&id)).collect()
    }

    #[test]
    fn resnet50_shape() {
        let g = g224();
        assert_eq!(g.len(), 17);
        let mut stage_sizes = [0; 6];
        for b in &g.blocks {
            stage_sizes[b.stage] += 1;
        }
        assert_eq!(&stage_sizes[1..], &[1, 3, 4, 6, 3]);
        assert_eq!(g.block(1).out_elements, 200_704);
        assert_eq!(g.block(17).out_elements, 100_352);
        assert_eq!(g.block(4).out_elements, 56 * 56 * 256);
        assert_eq!(g.block(8).out_elements, 28 * 28 * 512);
        assert_eq!(g.block(14).out_elements, 14 * 14 * 1024);
        for stage_first in [2, 5, 9, 15] {
            assert_eq!(g.block(stage_first).kind, BlockKind::ConvBlock);
        }
        assert!(!g.block(1).droppable);
        assert_eq!(g.weight_bytes, 4);
        assert_eq!(g.skip.max_skip(), 3);
    }

    #[test]
    fn rejects_bad_input_side() {
        assert_eq!(build_resnet50(100), Err(Error::InvalidInputSide(100)));
        assert_eq!(build_resnet50(16), Err(Error::InvalidInputSide(16)));
        assert_eq!(build_resnet50(1056), Err(Error::InvalidInputSide(1056)));
        assert!(build_resnet50(32).is_ok());
        assert!(build_resnet50(1024).is_ok());
    }

    #[test]
    fn memory_load_examples() {
        let g = g224();
        // stage-2 identity block
        assert_eq!(memory_load(g.block(3), MemoryMode::Inputs, 4), 4_816_896);
        assert_eq!(memory_load(g.block(3), MemoryMode::Inputs, 0), 0);
        let single = BlockSpec::new(
            2,
            2,
            BlockKind::ConvBlock,
            vec![LayerSpec::conv(1, 256, 64, 56, 56 * 56 * 256)],
            true,
            56 * 56 * 64,
        )
        .unwrap();
        assert_eq!(memory_load(&single, MemoryMode::Weights, 4), 65_536);
        let both = memory_load(&single, MemoryMode::Both, 4);
        assert_eq!(both, 65_536 + 4 * 56 * 56 * 256);
    }

    #[test]
    fn compute_load_examples() {
        let g = g224();
        assert_eq!(compute_load(g.block(1)), 118_013_952);
        assert_eq!(compute_load(g.block(3)), 218_365_952);
        let pool_only = BlockSpec::new(
            2,
            2,
            BlockKind::ConvBlock,
            vec![LayerSpec::pool(3, 64, 28, 56 * 56 * 64)],
            true,
            28 * 28 * 64,
        )
        .unwrap();
        assert_eq!(compute_load(&pool_only), 0);
    }

    #[test]
    fn conv_block_costs_more_than_identity_in_every_stage() {
        let g = g224();
        for (conv, ident) in [(2, 3), (5, 6), (9, 10), (15, 16)] {
            assert!(
                compute_load(g.block(conv)) > compute_load(g.block(ident)),
                "stage of block {conv}"
            );
        }
    }

    #[test]
    fn output_bits_examples() {
        let g = g224();
        assert_eq!(output_bits(g.block(2), 4), 25_690_112);
        assert_eq!(output_bits(g.block(17), 4), 3_211_264);
        let mut tiny = g.block(2).clone();
        tiny.out_elements = 1;
        assert_eq!(output_bits(&tiny, 4), 32);
    }

    #[test]
    fn default_topology_bridges_single_and_pair_drops() {
        let g = g224();
        assert!(g.skip.contains(6, 4));
        assert!(g.skip.contains(7, 4));
        assert!(!g.skip.contains(8, 4));
    }

    #[test]
    fn edges_without_drops_are_the_direct_chain() {
        let g = g224();
        let edges = effective_edges(&g, &[true; 17]).unwrap();
        assert_eq!(edges.len(), 16);
        for (k, e) in edges.iter().enumerate() {
            assert_eq!((e.src, e.dst, e.kind), (k + 1, k + 2, EdgeKind::Direct));
        }
    }

    #[test]
    fn single_drop_rewires_through_skip() {
        let g = g224();
        let edges = effective_edges(&g, &keep_all_but(17, &[5])).unwrap();
        let into6: Vec<_> = edges.iter().filter(|e| e.dst == 6).collect();
        assert_eq!(into6.len(), 1);
        assert_eq!((into6[0].src, into6[0].kind), (4, EdgeKind::Skip { sigma: 2 }));
        assert!(edges.iter().all(|e| e.src != 5 && e.dst != 5));
    }

    #[test]
    fn pair_drop_rewires_through_long_skip() {
        let g = g224();
        let edges = effective_edges(&g, &keep_all_but(17, &[5, 6])).unwrap();
        assert!(edges.contains(&Edge {
            src: 4,
            dst: 7,
            kind: EdgeKind::Skip { sigma: 3 }
        }));
        assert_eq!(edges.len(), 14);
    }

    #[test]
    fn trailing_drop_needs_no_bridge() {
        let g = g224();
        let edges = effective_edges(&g, &keep_all_but(17, &[16, 17])).unwrap();
        assert_eq!(edges.last().unwrap().dst, 15);
    }

    #[test]
    fn unbridgeable_and_invalid_drops() {
        let g = g224();
        assert_eq!(
            effective_edges(&g, &keep_all_but(17, &[5, 6, 7])),
            Err(Error::UnbridgeableDrop {
                block: 8,
                sigma: 4,
                max_skip: 3
            })
        );
        let mut singles = SkipTopology::new(DEFAULT_MAX_SKIP);
        for j in 2..17 {
            singles.insert(j + 1, j - 1).unwrap();
        }
        let sparse = ResNetGraph::from_parts(g.blocks.clone(), singles, DEFAULT_WEIGHT_BYTES).unwrap();
        assert!(effective_edges(&sparse, &keep_all_but(17, &[8])).is_ok());
        assert_eq!(
            effective_edges(&sparse, &keep_all_but(17, &[7, 8])),
            Err(Error::UnbridgeableDrop {
                block: 9,
                sigma: 3,
                max_skip: 3
            })
        );
        assert_eq!(effective_edges(&g, &keep_all_but(17, &[1])), Err(Error::StemDropped));
        assert!(matches!(
            effective_edges(&g, &[true; 5]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn truncation_keeps_prefix_topology() {
        let g = g224().truncated(4).unwrap();
        assert_eq!(g.len(), 4);
        assert!(g.skip.contains(4, 2));
        assert!(effective_edges(&g, &[true, true, false, true]).is_ok());
        assert!(effective_edges(&g, &[true, true, true, false]).is_ok());
    }

    #[test]
    fn from_parts_rejects_gaps_and_unbypassed_blocks() {
        let g = g224();
        let mut blocks = g.blocks[..4].to_vec();
        blocks[2].block_id = 7;
        assert!(ResNetGraph::from_parts(blocks, SkipTopology::new(3), 4).is_err());
        let blocks = g.blocks[..4].to_vec();
        assert!(ResNetGraph::from_parts(blocks, SkipTopology::new(3), 4).is_err());
    }

    #[test]
    fn block_validation() {
        let broken = BlockSpec::new(
            3,
            2,
            BlockKind::IdentityBlock,
            vec![LayerSpec::conv(1, 256, 64, 56, 10), LayerSpec::conv(3, 32, 64, 56, 10)],
            true,
            56 * 56 * 256,
        );
        assert!(broken.is_err());
        let stem = BlockSpec::new(1, 1, BlockKind::Stem, vec![], true, 1);
        assert!(stem.is_err());
    }
}
