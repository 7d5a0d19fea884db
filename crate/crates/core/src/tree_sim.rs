//! Generation-by-generation simulation of a bifurcating Markov chain on the
//! full binary tree.
//!
//! Randomness is attached to tree addresses rather than drawn from a single
//! sequential generator: the pair of children of node `(g, i)` is produced
//! from a stream derived only from `(master_seed, replicate_index, g, i)`.
//! A trajectory therefore does not depend on traversal order or thread count.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Per-node random stream.
pub type NodeRng = Xoshiro256PlusPlus;

/// Deepest generation whose addresses fit the 64-bit node id.
pub const MAX_GENERATION: u32 = 63;

/// Position `(generation, index)` in the full binary tree. The root is `(0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeAddress {
    pub generation: u32,
    pub index: u64,
}

impl NodeAddress {
    pub const ROOT: NodeAddress = NodeAddress {
        generation: 0,
        index: 0,
    };

    pub fn new(generation: u32, index: u64) -> Result<Self> {
        if generation > MAX_GENERATION {
            return Err(Error::Capacity { generation });
        }
        if index >> generation != 0 {
            return Err(Error::InvalidConfig(format!(
                "index {index} out of range for generation {generation}"
            )));
        }
        Ok(NodeAddress { generation, index })
    }

    /// Heap numbering: `2^g + i`, unique across the whole tree.
    pub fn node_id(self) -> u64 {
        (1u64 << self.generation) | self.index
    }

    pub fn children(self) -> Result<(NodeAddress, NodeAddress)> {
        node_children(self)
    }
}

/// The two children `(g+1, 2i)` and `(g+1, 2i+1)`.
pub fn node_children(addr: NodeAddress) -> Result<(NodeAddress, NodeAddress)> {
    if addr.generation >= MAX_GENERATION {
        return Err(Error::Capacity {
            generation: addr.generation + 1,
        });
    }
    let generation = addr.generation + 1;
    let left = addr.index << 1;
    Ok((
        NodeAddress {
            generation,
            index: left,
        },
        NodeAddress {
            generation,
            index: left | 1,
        },
    ))
}

/// Identifies one independent replicate of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReplicateSeed {
    pub master_seed: u64,
    pub replicate_index: u64,
}

impl ReplicateSeed {
    pub fn new(master_seed: u64, replicate_index: u64) -> Self {
        ReplicateSeed {
            master_seed,
            replicate_index,
        }
    }
}

// splitmix64 finalizer
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STREAM_BRANCH: u64 = 0x6a09_e667_f3bc_c908;
const STREAM_INITIAL: u64 = 0xbb67_ae85_84ca_a73b;

#[inline]
fn stream_key(seed: ReplicateSeed, node_id: u64, tag: u64) -> u64 {
    let mut k = mix64(seed.master_seed ^ 0x9e37_79b9_7f4a_7c15);
    k = mix64(k ^ mix64(seed.replicate_index.wrapping_add(0x3c6e_f372_fe94_f82b)));
    k = mix64(k ^ mix64(node_id ^ tag));
    k
}

/// Stream used to branch node `addr` into its two children.
#[inline]
pub fn node_randomness(seed: ReplicateSeed, addr: NodeAddress) -> NodeRng {
    NodeRng::seed_from_u64(stream_key(seed, addr.node_id(), STREAM_BRANCH))
}

/// Stream used to draw the root state.
pub fn initial_randomness(seed: ReplicateSeed) -> NodeRng {
    NodeRng::seed_from_u64(stream_key(
        seed,
        NodeAddress::ROOT.node_id(),
        STREAM_INITIAL,
    ))
}

/// Joint law of the two children given the parent state.
pub trait TransitionKernel: Send + Sync {
    /// Draws `(child0, child1)` from the parent state and node-local randomness.
    fn branch(&self, parent: f64, rng: &mut NodeRng) -> (f64, f64);

    fn descriptor(&self) -> String;
}

/// Law of the root state.
pub trait InitialSampler: Send + Sync {
    fn sample(&self, rng: &mut NodeRng) -> f64;
}

impl<F> InitialSampler for F
where
    F: Fn(&mut NodeRng) -> f64 + Send + Sync,
{
    fn sample(&self, rng: &mut NodeRng) -> f64 {
        self(rng)
    }
}

/// Dirac mass at a fixed root state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMass(pub f64);

impl InitialSampler for PointMass {
    fn sample(&self, _rng: &mut NodeRng) -> f64 {
        self.0
    }
}

/// `(y, z) = (x, x)`: every node copies its parent.
#[derive(Debug, Clone, Copy, Default)]
pub struct CopyKernel;

impl TransitionKernel for CopyKernel {
    fn branch(&self, parent: f64, _rng: &mut NodeRng) -> (f64, f64) {
        (parent, parent)
    }

    fn descriptor(&self) -> String {
        "copy".to_string()
    }
}

/// States of one generation; `states[i]` is the trait of node `(generation, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationBuffer {
    generation: u32,
    states: Vec<f64>,
}

impl GenerationBuffer {
    pub fn new(generation: u32, states: Vec<f64>) -> Result<Self> {
        if generation > MAX_GENERATION || states.len() as u64 != 1u64 << generation {
            return Err(Error::Mismatch(format!(
                "generation {generation} needs 2^{generation} states, got {}",
                states.len()
            )));
        }
        Ok(GenerationBuffer { generation, states })
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn into_states(self) -> Vec<f64> {
        self.states
    }

    /// `M_G(f) = Σ_i f(X_i)` over this generation, summed in index order.
    pub fn sum(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.states.iter().map(|&x| f(x)).sum()
    }
}

impl AsRef<GenerationBuffer> for GenerationBuffer {
    fn as_ref(&self) -> &GenerationBuffer {
        self
    }
}

/// Builds generation `g+1` from generation `g`.
pub fn branch_generation<K: TransitionKernel + ?Sized>(
    kernel: &K,
    parents: &GenerationBuffer,
    seed: ReplicateSeed,
    exec: Execution,
) -> Result<GenerationBuffer> {
    let generation = parents.generation;
    if generation >= MAX_GENERATION {
        return Err(Error::Capacity {
            generation: generation + 1,
        });
    }
    let mut children = vec![0.0; parents.states.len() * 2];
    let states = &parents.states;
    exec.fill_pairs(&mut children, |i, pair| {
        let addr = NodeAddress {
            generation,
            index: i as u64,
        };
        let mut rng = node_randomness(seed, addr);
        let (y, z) = kernel.branch(states[i], &mut rng);
        pair[0] = y;
        pair[1] = z;
    });
    Ok(GenerationBuffer {
        generation: generation + 1,
        states: children,
    })
}

/// Lazily yields generations `0..=n` of one replicate.
///
/// Only the most recent generation is kept; a consumer that drops each buffer
/// after use keeps memory at `O(2^g)`.
pub struct GenerationStream<'a, K: ?Sized, S: ?Sized> {
    kernel: &'a K,
    initial: &'a S,
    seed: ReplicateSeed,
    exec: Execution,
    last: u32,
    current: Option<Arc<GenerationBuffer>>,
    done: bool,
}

impl<K, S> Iterator for GenerationStream<'_, K, S>
where
    K: TransitionKernel + ?Sized,
    S: InitialSampler + ?Sized,
{
    type Item = Arc<GenerationBuffer>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let next = match &self.current {
            None => {
                let mut rng = initial_randomness(self.seed);
                GenerationBuffer {
                    generation: 0,
                    states: vec![self.initial.sample(&mut rng)],
                }
            }
            Some(parents) => branch_generation(self.kernel, parents, self.seed, self.exec)
                .expect("generation bound checked at construction"),
        };
        let next = Arc::new(next);
        if next.generation >= self.last {
            self.done = true;
        }
        self.current = Some(Arc::clone(&next));
        Some(next)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let produced = self
            .current
            .as_ref()
            .map_or(0, |c| c.generation as usize + 1);
        let left = if self.done {
            0
        } else {
            self.last as usize + 1 - produced
        };
        (left, Some(left))
    }
}

/// Simulates generations `0..=n` with the given kernel and root law.
pub fn simulate_generations<'a, K, S>(
    kernel: &'a K,
    initial: &'a S,
    n: u32,
    seed: ReplicateSeed,
    exec: Execution,
) -> Result<GenerationStream<'a, K, S>>
where
    K: TransitionKernel + ?Sized,
    S: InitialSampler + ?Sized,
{
    if n > MAX_GENERATION {
        return Err(Error::Capacity { generation: n });
    }
    Ok(GenerationStream {
        kernel,
        initial,
        seed,
        exec,
        last: n,
        current: None,
        done: false,
    })
}

/// Simulates and keeps every generation `0..=n`.
pub fn simulate_tree<K, S>(
    kernel: &K,
    initial: &S,
    n: u32,
    seed: ReplicateSeed,
    exec: Execution,
) -> Result<Vec<GenerationBuffer>>
where
    K: TransitionKernel + ?Sized,
    S: InitialSampler + ?Sized,
{
    Ok(simulate_generations(kernel, initial, n, seed, exec)?
        .map(|g| Arc::try_unwrap(g).unwrap_or_else(|shared| (*shared).clone()))
        .collect())
}

/// Which nodes an additive statistic runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    /// The last generation `G_n` only.
    #[serde(rename = "generation_n", alias = "gen")]
    Generation,
    /// The whole tree `T_n` up to generation `n`.
    #[serde(rename = "tree_n", alias = "tree")]
    Tree,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Generation => "generation_n",
            Scope::Tree => "tree_n",
        }
    }

    /// `|G_n| = 2^n` or `|T_n| = 2^{n+1} - 1`.
    pub fn cardinality(self, n: u32) -> u64 {
        match self {
            Scope::Generation => 1u64 << n,
            Scope::Tree => (1u64 << (n + 1)) - 1,
        }
    }
}

impl std::str::FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gen" | "generation" | "generation_n" => Ok(Scope::Generation),
            "tree" | "tree_n" => Ok(Scope::Tree),
            other => Err(Error::InvalidConfig(format!("unknown scope `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `M_{G_n}(f)` or `M_{T_n}(f)` accumulated online over a generation stream.
pub fn collect_statistic<I>(
    generations: I,
    f: impl Fn(f64) -> f64,
    scope: Scope,
    n: u32,
) -> Result<f64>
where
    I: IntoIterator,
    I::Item: AsRef<GenerationBuffer>,
{
    let mut total = 0.0;
    let mut seen = 0usize;
    for buffer in generations {
        let buffer = buffer.as_ref();
        let g = buffer.generation();
        if g > n {
            break;
        }
        seen += 1;
        match scope {
            Scope::Generation if g == n => total = buffer.sum(&f),
            Scope::Generation => {}
            Scope::Tree => total += buffer.sum(&f),
        }
        if g == n {
            return Ok(total);
        }
    }
    Err(Error::IncompleteStream {
        needed: n,
        got: seen,
    })
}

/// Writes `generation,index,state` rows, generations ascending.
pub fn write_trajectory_csv<I, W>(generations: I, out: W) -> std::result::Result<(), csv::Error>
where
    I: IntoIterator,
    I::Item: AsRef<GenerationBuffer>,
    W: Write,
{
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    writer.write_record(["generation", "index", "state"])?;
    for buffer in generations {
        let buffer = buffer.as_ref();
        let g = buffer.generation().to_string();
        for (i, x) in buffer.states().iter().enumerate() {
            writer.write_record([g.as_str(), &i.to_string(), &x.to_string()])?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::collections::HashSet;

    #[test]
    fn children_indexing() {
        let c = |g, i| node_children(NodeAddress::new(g, i).unwrap()).unwrap();
        assert_eq!(
            c(0, 0),
            (
                NodeAddress::new(1, 0).unwrap(),
                NodeAddress::new(1, 1).unwrap()
            )
        );
        assert_eq!(
            c(1, 1),
            (
                NodeAddress::new(2, 2).unwrap(),
                NodeAddress::new(2, 3).unwrap()
            )
        );
        assert_eq!(
            c(3, 5),
            (
                NodeAddress::new(4, 10).unwrap(),
                NodeAddress::new(4, 11).unwrap()
            )
        );
    }

    #[test]
    fn children_overflow_is_a_capacity_error() {
        let deep = NodeAddress::new(MAX_GENERATION, 7).unwrap();
        assert!(matches!(node_children(deep), Err(Error::Capacity { .. })));
        assert!(NodeAddress::new(64, 0).is_err());
        assert!(NodeAddress::new(2, 4).is_err());
    }

    #[test]
    fn node_stream_is_deterministic() {
        let seed = ReplicateSeed::new(42, 3);
        let addr = NodeAddress::new(5, 17).unwrap();
        let a: Vec<u64> = (0..8)
            .map({
                let mut r = node_randomness(seed, addr);
                move |_| r.random()
            })
            .collect();
        let b: Vec<u64> = (0..8)
            .map({
                let mut r = node_randomness(seed, addr);
                move |_| r.random()
            })
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn no_first_output_collisions_over_a_million_streams() {
        let mut seen = HashSet::with_capacity(1 << 21);
        let seed0 = ReplicateSeed::new(2024, 0);
        let seed1 = ReplicateSeed::new(2024, 1);
        // 2^19 nodes of generation 19, for two replicates: ~10^6 streams
        for i in 0..(1u64 << 19) {
            let addr = NodeAddress::new(19, i).unwrap();
            assert!(seen.insert(node_randomness(seed0, addr).random::<u64>()));
            assert!(seen.insert(node_randomness(seed1, addr).random::<u64>()));
        }
        let root = NodeAddress::ROOT;
        assert_ne!(
            node_randomness(seed0, root).random::<u64>(),
            initial_randomness(seed0).random::<u64>()
        );
    }

    #[test]
    fn single_generation_run() {
        let stream = simulate_generations(
            &CopyKernel,
            &PointMass(3.5),
            0,
            ReplicateSeed::new(1, 0),
            Execution::Sequential,
        )
        .unwrap();
        let gens: Vec<_> = stream.collect();
        assert_eq!(gens.len(), 1);
        assert_eq!(gens[0].states(), &[3.5]);
    }

    #[test]
    fn copy_kernel_is_constant() {
        let tree = simulate_tree(
            &CopyKernel,
            &PointMass(-2.0),
            6,
            ReplicateSeed::new(9, 9),
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(tree.len(), 7);
        for (g, buf) in tree.iter().enumerate() {
            assert_eq!(buf.generation() as usize, g);
            assert_eq!(buf.states().len(), 1 << g);
            assert!(buf.states().iter().all(|&x| x == -2.0));
        }
    }

    #[test]
    fn statistic_cardinalities() {
        let seed = ReplicateSeed::new(0, 0);
        let run = || {
            simulate_generations(&CopyKernel, &PointMass(1.0), 5, seed, Execution::Sequential)
                .unwrap()
        };
        assert_eq!(
            collect_statistic(run(), |_| 1.0, Scope::Generation, 5).unwrap(),
            32.0
        );
        assert_eq!(
            collect_statistic(run(), |_| 1.0, Scope::Tree, 5).unwrap(),
            63.0
        );
        assert_eq!(Scope::Generation.cardinality(5), 32);
        assert_eq!(Scope::Tree.cardinality(5), 63);

        let c = 1.7;
        let root = PointMass(c);
        let run = simulate_generations(&CopyKernel, &root, 3, seed, Execution::Sequential).unwrap();
        let got = collect_statistic(run, |x| x * x, Scope::Tree, 3).unwrap();
        assert!((got - 15.0 * c * c).abs() < 1e-12);
    }

    #[test]
    fn short_stream_is_reported() {
        let seed = ReplicateSeed::new(0, 0);
        let run =
            simulate_generations(&CopyKernel, &PointMass(1.0), 2, seed, Execution::Sequential)
                .unwrap();
        let err = collect_statistic(run, |_| 1.0, Scope::Tree, 4).unwrap_err();
        assert!(matches!(err, Error::IncompleteStream { needed: 4, got: 3 }));
    }

    #[test]
    fn trajectory_csv_layout() {
        let tree = simulate_tree(
            &CopyKernel,
            &PointMass(0.5),
            1,
            ReplicateSeed::new(0, 0),
            Execution::Sequential,
        )
        .unwrap();
        let mut out = Vec::new();
        write_trajectory_csv(&tree, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "generation,index,state\n0,0,0.5\n1,0,0.5\n1,1,0.5\n");
    }
}
