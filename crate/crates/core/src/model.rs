//! The one-step forecast function.
//!
//! Grid inputs, mesh node positions and edge geometry are first embedded into
//! a common latent width. Encoding runs one grid→mesh message-passing block per
//! mesh and a residual MLP on the grid latents. Processing runs a stack of
//! mesh→mesh blocks on each mesh independently. Decoding runs one mesh→grid
//! block per mesh in the configured order, then an output MLP whose result,
//! scaled by the one-day difference deviations, is added to the current state.
//!
//! Parameter names:
//!
//! | prefix | role |
//! |---|---|
//! | `embed.{grid,mesh,g2m,m2m,m2g}` | input embedders (mesh ones shared by both meshes) |
//! | `encode.g2m.{coarse,fine}` | grid→mesh blocks |
//! | `encode.grid` | grid residual MLP |
//! | `process.{coarse,fine,shared}.{i}` | processor blocks |
//! | `decode.m2g.{coarse,fine}` | mesh→grid blocks |
//! | `decode.output` | output MLP, no layer norm |
//!
//! A block at prefix `p` owns `p.edge` and `p.node`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Matrix, Mlp, MlpInput, MlpSpec, NodeId, ParamStore, Scalar, Tape};
use crate::error::{Error, Result};
use crate::graph::{EdgeSet, GraphOptions, MeshEdges, OceanGraph};
use crate::grid::{
    assemble_grid_input, check_window, forcing_static_rows, ChannelSchema, FieldSet,
    NormStats, Role, STD_FLOOR,
};

/// Order of the two mesh→grid blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecodeOrder {
    #[default]
    CoarseFirst,
    FineFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Embedding width of every latent.
    pub latent: usize,
    /// Message-passing iterations per mesh.
    pub processor_iterations: usize,
    /// Hidden layers per MLP.
    pub mlp_hidden_layers: usize,
    pub activation: Activation,
    /// One processor block reused at every iteration.
    pub share_across_iterations: bool,
    /// Same processor blocks for both meshes.
    pub share_across_meshes: bool,
    pub decode_order: DecodeOrder,
    /// Level of the fine mesh; the coarse mesh is one level below.
    pub mesh_level: u32,
    pub graph: GraphOptions,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent: 192,
            processor_iterations: 16,
            mlp_hidden_layers: 1,
            activation: Activation::Silu,
            share_across_iterations: false,
            share_across_meshes: false,
            decode_order: DecodeOrder::CoarseFirst,
            mesh_level: 3,
            graph: GraphOptions::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent == 0 || self.processor_iterations == 0 {
            return Err(Error::Config(
                "latent width and processor iterations must be at least 1".into(),
            ));
        }
        if self.mesh_level == 0 {
            return Err(Error::Config("mesh level must be at least 1".into()));
        }
        Ok(())
    }

    fn spec(&self, input: usize, output: usize, layer_norm: bool) -> MlpSpec {
        MlpSpec {
            input,
            hidden: self.latent,
            output,
            hidden_layers: self.mlp_hidden_layers,
            layer_norm,
            activation: self.activation,
        }
    }

    fn processor_prefix(&self, mesh: &str, i: usize) -> String {
        let m = if self.share_across_meshes { "shared" } else { mesh };
        let it = if self.share_across_iterations { 0 } else { i };
        format!("process.{m}.{it}")
    }
}

/// One message-passing block: edge update then node update, both residual.
#[derive(Debug, Clone)]
pub struct GnnBlock {
    pub edge: Mlp,
    pub node: Mlp,
}

impl GnnBlock {
    fn specs(config: &ModelConfig) -> (MlpSpec, MlpSpec) {
        let l = config.latent;
        (config.spec(3 * l, l, true), config.spec(2 * l, l, true))
    }

    pub fn init<T: Scalar>(
        config: &ModelConfig,
        store: &mut ParamStore<T>,
        prefix: &str,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let (e, n) = Self::specs(config);
        Ok(Self {
            edge: e.init(store, &format!("{prefix}.edge"), rng)?,
            node: n.init(store, &format!("{prefix}.node"), rng)?,
        })
    }

    pub fn bind<T: Scalar>(config: &ModelConfig, store: &ParamStore<T>, prefix: &str) -> Result<Self> {
        let (e, n) = Self::specs(config);
        Ok(Self {
            edge: e.bind(store, &format!("{prefix}.edge"))?,
            node: n.bind(store, &format!("{prefix}.node"))?,
        })
    }

    /// `e ← MLP([e, v_s, v_r]) + e`, then `v_r ← MLP([v_r, Σ e]) + v_r`.
    /// Returns the updated `(e, v_r)`.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        v_s: NodeId,
        v_r: NodeId,
        e: NodeId,
        edges: &EdgeIndex,
    ) -> Result<(NodeId, NodeId)> {
        let upd = self.edge.forward(
            tape,
            params,
            &[
                MlpInput::Node(e),
                MlpInput::Gather {
                    node: v_s,
                    index: edges.senders.clone(),
                },
                MlpInput::Gather {
                    node: v_r,
                    index: edges.receivers.clone(),
                },
            ],
        )?;
        let e_new = tape.add(e, upd)?;
        let n_r = tape.value(v_r).rows();
        let agg = tape.segment_sum(e_new, edges.receivers.clone(), n_r)?;
        let upd = self
            .node
            .forward(tape, params, &[MlpInput::Node(v_r), MlpInput::Node(agg)])?;
        let v_new = tape.add(v_r, upd)?;
        Ok((e_new, v_new))
    }
}

/// Sender and receiver indices of one edge set.
#[derive(Debug, Clone)]
pub struct EdgeIndex {
    pub senders: Arc<[u32]>,
    pub receivers: Arc<[u32]>,
}

/// Edge indices plus z-scored features, ready for the tape.
#[derive(Debug, Clone)]
pub struct EdgeTensors<T> {
    pub index: EdgeIndex,
    pub features: Matrix<T>,
}

impl<T: Scalar> EdgeTensors<T> {
    /// Features standardized per column over the set (deviation floored).
    pub fn new(e: &EdgeSet) -> Self {
        let n = e.len();
        let mut mean = [0.0f64; 4];
        let mut std = [1.0f64; 4];
        if n > 0 {
            for c in 0..4 {
                let m = e.features.iter().map(|f| f[c] as f64).sum::<f64>() / n as f64;
                let v = e
                    .features
                    .iter()
                    .map(|f| (f[c] as f64 - m).powi(2))
                    .sum::<f64>()
                    / n as f64;
                mean[c] = m;
                std[c] = v.sqrt().max(STD_FLOOR);
            }
        }
        Self {
            index: EdgeIndex {
                senders: e.senders.clone().into(),
                receivers: e.receivers.clone().into(),
            },
            features: Matrix::from_fn(n, 4, |r, c| T::of((e.features[r][c] as f64 - mean[c]) / std[c])),
        }
    }
}

/// Tensors of one mesh.
#[derive(Debug, Clone)]
pub struct MeshTensors<T> {
    pub node_features: Matrix<T>,
    pub g2m: EdgeTensors<T>,
    pub m2m: EdgeTensors<T>,
    pub m2g: EdgeTensors<T>,
}

impl<T: Scalar> MeshTensors<T> {
    fn new(m: &MeshEdges) -> Self {
        let f = m.nodes.input_features();
        Self {
            node_features: Matrix::from_fn(f.len(), 3, |r, c| T::of(f[r][c])),
            g2m: EdgeTensors::new(&m.g2m),
            m2m: EdgeTensors::new(&m.m2m),
            m2g: EdgeTensors::new(&m.m2g),
        }
    }
}

/// Graph data converted once and reused by every forward pass.
#[derive(Debug, Clone)]
pub struct GraphTensors<T> {
    pub n_grid: usize,
    /// Grid cell ids of the rows of every grid-node matrix.
    pub cells: Vec<usize>,
    pub coarse: MeshTensors<T>,
    pub fine: MeshTensors<T>,
}

impl<T: Scalar> GraphTensors<T> {
    pub fn new(graph: &OceanGraph) -> Self {
        Self {
            n_grid: graph.n_grid(),
            cells: graph.grid_cells.iter().map(|&c| c as usize).collect(),
            coarse: MeshTensors::new(&graph.coarse),
            fine: MeshTensors::new(&graph.fine),
        }
    }
}

/// Latent arrays after a stage.
#[derive(Debug, Clone, Copy)]
pub struct LatentState {
    pub v_grid: NodeId,
    pub v_coarse: NodeId,
    pub v_fine: NodeId,
    pub e_g2m_coarse: NodeId,
    pub e_g2m_fine: NodeId,
    pub e_m2m_coarse: NodeId,
    pub e_m2m_fine: NodeId,
    pub e_m2g_coarse: NodeId,
    pub e_m2g_fine: NodeId,
}

/// The model bound to a parameter layout.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub schema: ChannelSchema,
    embed_grid: Mlp,
    embed_mesh: Mlp,
    embed_g2m: Mlp,
    embed_m2m: Mlp,
    embed_m2g: Mlp,
    encode_coarse: GnnBlock,
    encode_fine: GnnBlock,
    encode_grid: Mlp,
    process_coarse: Vec<GnnBlock>,
    process_fine: Vec<GnnBlock>,
    decode_coarse: GnnBlock,
    decode_fine: GnnBlock,
    output: Mlp,
}

fn check_finite<T: Scalar>(tape: &Tape<T>, nodes: &[NodeId], stage: &str) -> Result<()> {
    if nodes.iter().all(|&n| tape.value(n).all_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            stage: stage.into(),
        })
    }
}

impl Model {
    /// Creates fresh parameters from `seed`.
    pub fn init<T: Scalar>(
        config: &ModelConfig,
        schema: &ChannelSchema,
        seed: u64,
    ) -> Result<(Self, ParamStore<T>)> {
        config.validate()?;
        let mut store = ParamStore::new(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = config.latent;
        let c = config;
        let embed_grid = c.spec(schema.c_in(), l, true).init(&mut store, "embed.grid", &mut rng)?;
        let embed_mesh = c.spec(3, l, true).init(&mut store, "embed.mesh", &mut rng)?;
        let embed_g2m = c.spec(4, l, true).init(&mut store, "embed.g2m", &mut rng)?;
        let embed_m2m = c.spec(4, l, true).init(&mut store, "embed.m2m", &mut rng)?;
        let embed_m2g = c.spec(4, l, true).init(&mut store, "embed.m2g", &mut rng)?;
        let encode_coarse = GnnBlock::init(c, &mut store, "encode.g2m.coarse", &mut rng)?;
        let encode_fine = GnnBlock::init(c, &mut store, "encode.g2m.fine", &mut rng)?;
        let encode_grid = c.spec(l, l, true).init(&mut store, "encode.grid", &mut rng)?;
        let process = |mesh: &str, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng| {
            (0..c.processor_iterations)
                .map(|i| {
                    let p = c.processor_prefix(mesh, i);
                    if store.id(&format!("{p}.edge.l0.w")).is_some() {
                        GnnBlock::bind(c, store, &p)
                    } else {
                        GnnBlock::init(c, store, &p, rng)
                    }
                })
                .collect::<Result<Vec<_>>>()
        };
        let process_coarse = process("coarse", &mut store, &mut rng)?;
        let process_fine = process("fine", &mut store, &mut rng)?;
        let decode_coarse = GnnBlock::init(c, &mut store, "decode.m2g.coarse", &mut rng)?;
        let decode_fine = GnnBlock::init(c, &mut store, "decode.m2g.fine", &mut rng)?;
        let output = c.spec(l, schema.c_x(), false).init(&mut store, "decode.output", &mut rng)?;
        Ok((
            Self {
                config: config.clone(),
                schema: schema.clone(),
                embed_grid,
                embed_mesh,
                embed_g2m,
                embed_m2m,
                embed_m2g,
                encode_coarse,
                encode_fine,
                encode_grid,
                process_coarse,
                process_fine,
                decode_coarse,
                decode_fine,
                output,
            },
            store,
        ))
    }

    /// Binds to existing parameters, checking every name and shape.
    pub fn bind<T: Scalar>(
        config: &ModelConfig,
        schema: &ChannelSchema,
        store: &ParamStore<T>,
    ) -> Result<Self> {
        config.validate()?;
        let c = config;
        let l = c.latent;
        let process = |mesh: &str| {
            (0..c.processor_iterations)
                .map(|i| GnnBlock::bind(c, store, &c.processor_prefix(mesh, i)))
                .collect::<Result<Vec<_>>>()
        };
        let model = Self {
            config: config.clone(),
            schema: schema.clone(),
            embed_grid: c.spec(schema.c_in(), l, true).bind(store, "embed.grid")?,
            embed_mesh: c.spec(3, l, true).bind(store, "embed.mesh")?,
            embed_g2m: c.spec(4, l, true).bind(store, "embed.g2m")?,
            embed_m2m: c.spec(4, l, true).bind(store, "embed.m2m")?,
            embed_m2g: c.spec(4, l, true).bind(store, "embed.m2g")?,
            encode_coarse: GnnBlock::bind(c, store, "encode.g2m.coarse")?,
            encode_fine: GnnBlock::bind(c, store, "encode.g2m.fine")?,
            encode_grid: c.spec(l, l, true).bind(store, "encode.grid")?,
            process_coarse: process("coarse")?,
            process_fine: process("fine")?,
            decode_coarse: GnnBlock::bind(c, store, "decode.m2g.coarse")?,
            decode_fine: GnnBlock::bind(c, store, "decode.m2g.fine")?,
            output: c.spec(l, schema.c_x(), false).bind(store, "decode.output")?,
        };
        let (w, b) = model.output.output_layer();
        if store.get(w).cols() != schema.c_x() || store.get(b).cols() != schema.c_x() {
            return Err(Error::Shape("output layer width differs from C_X".into()));
        }
        Ok(model)
    }

    /// Zeroes the output layer so that every step is exact persistence.
    pub fn zero_output_layer<T: Scalar>(&self, store: &mut ParamStore<T>) {
        let (w, b) = self.output.output_layer();
        store.values_mut(w).fill(T::zero());
        store.values_mut(b).fill(T::zero());
    }

    /// Embeds inputs and runs the grid→mesh blocks and the grid residual MLP.
    pub fn encode<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        graph: &GraphTensors<T>,
        grid_input: NodeId,
    ) -> Result<LatentState> {
        let rows = tape.value(grid_input).rows();
        if rows != graph.n_grid {
            return Err(Error::Shape(format!(
                "grid input has {rows} rows, graph has {} grid nodes",
                graph.n_grid
            )));
        }
        let embed = |tape: &mut Tape<T>, mlp: &Mlp, m: &Matrix<T>| -> Result<NodeId> {
            let x = tape.input(m.clone());
            mlp.forward(tape, params, &[MlpInput::Node(x)])
        };
        let v_grid = self
            .embed_grid
            .forward(tape, params, &[MlpInput::Node(grid_input)])?;
        let v_coarse = embed(tape, &self.embed_mesh, &graph.coarse.node_features)?;
        let v_fine = embed(tape, &self.embed_mesh, &graph.fine.node_features)?;
        let e_g2m_coarse = embed(tape, &self.embed_g2m, &graph.coarse.g2m.features)?;
        let e_g2m_fine = embed(tape, &self.embed_g2m, &graph.fine.g2m.features)?;
        let e_m2m_coarse = embed(tape, &self.embed_m2m, &graph.coarse.m2m.features)?;
        let e_m2m_fine = embed(tape, &self.embed_m2m, &graph.fine.m2m.features)?;
        let e_m2g_coarse = embed(tape, &self.embed_m2g, &graph.coarse.m2g.features)?;
        let e_m2g_fine = embed(tape, &self.embed_m2g, &graph.fine.m2g.features)?;
        check_finite(tape, &[v_grid, v_coarse, v_fine], "embedding")?;

        let (e_g2m_coarse, v_coarse) = self.encode_coarse.forward(
            tape,
            params,
            v_grid,
            v_coarse,
            e_g2m_coarse,
            &graph.coarse.g2m.index,
        )?;
        let (e_g2m_fine, v_fine) =
            self.encode_fine
                .forward(tape, params, v_grid, v_fine, e_g2m_fine, &graph.fine.g2m.index)?;
        let upd = self
            .encode_grid
            .forward(tape, params, &[MlpInput::Node(v_grid)])?;
        let v_grid = tape.add(v_grid, upd)?;
        check_finite(tape, &[v_grid, v_coarse, v_fine], "encode")?;
        Ok(LatentState {
            v_grid,
            v_coarse,
            v_fine,
            e_g2m_coarse,
            e_g2m_fine,
            e_m2m_coarse,
            e_m2m_fine,
            e_m2g_coarse,
            e_m2g_fine,
        })
    }

    /// Mesh→mesh message passing on each mesh independently.
    pub fn process<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        graph: &GraphTensors<T>,
        state: LatentState,
    ) -> Result<LatentState> {
        let mut s = state;
        for block in &self.process_coarse {
            let (e, v) = block.forward(
                tape,
                params,
                s.v_coarse,
                s.v_coarse,
                s.e_m2m_coarse,
                &graph.coarse.m2m.index,
            )?;
            s.e_m2m_coarse = e;
            s.v_coarse = v;
        }
        for block in &self.process_fine {
            let (e, v) =
                block.forward(tape, params, s.v_fine, s.v_fine, s.e_m2m_fine, &graph.fine.m2m.index)?;
            s.e_m2m_fine = e;
            s.v_fine = v;
        }
        check_finite(tape, &[s.v_coarse, s.v_fine], "process")?;
        Ok(s)
    }

    /// Mesh→grid blocks and the output MLP; returns the normalized delta.
    pub fn decode<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        graph: &GraphTensors<T>,
        state: LatentState,
    ) -> Result<NodeId> {
        let mut s = state;
        let order: [bool; 2] = match self.config.decode_order {
            DecodeOrder::CoarseFirst => [true, false],
            DecodeOrder::FineFirst => [false, true],
        };
        for coarse in order {
            if coarse {
                let (e, v) = self.decode_coarse.forward(
                    tape,
                    params,
                    s.v_coarse,
                    s.v_grid,
                    s.e_m2g_coarse,
                    &graph.coarse.m2g.index,
                )?;
                s.e_m2g_coarse = e;
                s.v_grid = v;
            } else {
                let (e, v) = self.decode_fine.forward(
                    tape,
                    params,
                    s.v_fine,
                    s.v_grid,
                    s.e_m2g_fine,
                    &graph.fine.m2g.index,
                )?;
                s.e_m2g_fine = e;
                s.v_grid = v;
            }
        }
        let out = self
            .output
            .forward(tape, params, &[MlpInput::Node(s.v_grid)])?;
        check_finite(tape, &[out], "decode")?;
        Ok(out)
    }

    /// Normalized delta for a grid input node.
    pub fn delta<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        graph: &GraphTensors<T>,
        grid_input: NodeId,
    ) -> Result<NodeId> {
        let s = self.encode(tape, params, graph, grid_input)?;
        let s = self.process(tape, params, graph, s)?;
        self.decode(tape, params, graph, s)
    }

    /// Physical next state on the ocean rows: `x_cur + delta · diff_std`.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        graph: &GraphTensors<T>,
        stats: &NormStats,
        grid_input: NodeId,
        x_cur: NodeId,
    ) -> Result<NodeId> {
        let delta = self.delta(tape, params, graph, grid_input)?;
        let dstd: Vec<T> = stats.diff_stds().iter().map(|&v| T::of(v)).collect();
        let zero = vec![T::zero(); dstd.len()];
        let scaled = tape.affine_cols(delta, &dstd, &zero)?;
        let pred = tape.add(x_cur, scaled)?;
        check_finite(tape, &[pred], "residual output")?;
        Ok(pred)
    }

    /// Normalized version of a physical ocean-row node, for feeding a
    /// prediction back as input.
    pub fn normalize_node<T: Scalar>(
        tape: &mut Tape<T>,
        stats: &NormStats,
        x: NodeId,
    ) -> Result<NodeId> {
        let (mean, std) = (stats.means(Role::Ocean), stats.stds(Role::Ocean));
        let scale: Vec<T> = std.iter().map(|&s| T::of(1.0 / s)).collect();
        let shift: Vec<T> = mean.iter().zip(&std).map(|(&m, &s)| T::of(-m / s)).collect();
        tape.affine_cols(x, &scale, &shift)
    }

    /// `X^{t+1}` from the input window. Land cells carry `NaN`.
    #[allow(clippy::too_many_arguments)]
    pub fn step<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        graph: &GraphTensors<T>,
        stats: &NormStats,
        x_prev: &FieldSet,
        x_cur: &FieldSet,
        a_prev: &FieldSet,
        a_cur: &FieldSet,
        a_next: &FieldSet,
        statics: &FieldSet,
    ) -> Result<FieldSet> {
        check_inputs(&self.schema, &graph.cells, x_prev, x_cur, a_prev, a_cur, a_next)?;
        let input = assemble_grid_input::<T>(x_prev, x_cur, a_prev, a_cur, a_next, statics, stats)?;
        let mut tape = Tape::new();
        let grid_input = tape.input(input);
        let x = tape.input(x_cur.rows::<T>(&graph.cells));
        let pred = self.forward(&mut tape, params, graph, stats, grid_input, x)?;
        let mut out = x_cur.clone();
        out.day = x_cur.day + 1;
        out.values.fill(f32::NAN);
        out.scatter_rows(&graph.cells, tape.value(pred))?;
        Ok(out)
    }

    /// Records one step on `tape` with the previous and current states given
    /// as physical ocean-row nodes (which may themselves be predictions).
    #[allow(clippy::too_many_arguments)]
    pub fn step_on_tape<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        graph: &GraphTensors<T>,
        stats: &NormStats,
        x_prev: NodeId,
        x_cur: NodeId,
        forcing: &[&FieldSet; 3],
        statics: &FieldSet,
    ) -> Result<NodeId> {
        let rest =
            forcing_static_rows::<T>(forcing[0], forcing[1], forcing[2], statics, stats, &graph.cells)?;
        let prev_n = Self::normalize_node(tape, stats, x_prev)?;
        let cur_n = Self::normalize_node(tape, stats, x_cur)?;
        let rest = tape.input(rest);
        let grid_input = tape.concat(&[prev_n, cur_n, rest])?;
        self.forward(tape, params, graph, stats, grid_input, x_cur)
    }
}

/// Checks that a window of field sets fits `graph` and `schema`.
#[allow(clippy::too_many_arguments)]
pub fn check_inputs(
    schema: &ChannelSchema,
    graph_cells: &[usize],
    x_prev: &FieldSet,
    x_cur: &FieldSet,
    a_prev: &FieldSet,
    a_cur: &FieldSet,
    a_next: &FieldSet,
) -> Result<()> {
    check_window(x_prev, x_cur, a_prev, a_cur, a_next)?;
    if x_cur.channels != schema.ocean_names() {
        return Err(Error::Data("ocean channels differ from the model schema".into()));
    }
    if a_cur.channels != schema.forcing_names() {
        return Err(Error::Data("forcing channels differ from the model schema".into()));
    }
    let cells = crate::grid::ocean_cells(&x_cur.mask);
    if cells != graph_cells {
        return Err(Error::Data("ocean mask differs from the graph's grid nodes".into()));
    }
    Ok(())
}
