//! Network description: layer stages, group partition, and validation.
//!
//! A model is an ordered list of stages forming a DAG restricted to a linear
//! chain plus concat fan-in, which covers every topology this crate targets
//! (plain chains and inception-style modules). Stages are listed in
//! topological order and reference their producers by name; the reserved
//! name `input` denotes the network input. Stages are partitioned into
//! contiguous layer groups; a group is the granularity at which precision is
//! assigned and traffic is accounted.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reserved producer name that refers to the network input tensor.
pub const INPUT_NAME: &str = "input";

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weights: String,
    pub bias: String,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcParams {
    pub weights: String,
    pub bias: String,
    pub out_features: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolParams {
    pub window: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

/// Across-channel local response normalization constants.
#[derive(Debug, Clone, PartialEq)]
pub struct LrnParams {
    pub size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
}

impl Default for LrnParams {
    fn default() -> Self {
        LrnParams {
            size: 5,
            alpha: 1e-4,
            beta: 0.75,
            k: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StageKind {
    Conv(ConvParams),
    FullyConnected(FcParams),
    Relu,
    MaxPool(PoolParams),
    AvgPool(PoolParams),
    Lrn(LrnParams),
    Dropout,
    Softmax,
    Concat,
}

impl StageKind {
    pub fn kind_name(&self) -> &'static str {
        match self {
            StageKind::Conv(_) => "conv",
            StageKind::FullyConnected(_) => "fully_connected",
            StageKind::Relu => "relu",
            StageKind::MaxPool(_) => "max_pool",
            StageKind::AvgPool(_) => "avg_pool",
            StageKind::Lrn(_) => "lrn",
            StageKind::Dropout => "dropout",
            StageKind::Softmax => "softmax",
            StageKind::Concat => "concat",
        }
    }
}

/// One computational stage. `inputs` names the producing stages (or
/// [`INPUT_NAME`]); when empty it defaults to the preceding stage in list
/// order, or to the network input for the first stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub name: String,
    pub inputs: Vec<String>,
    pub kind: StageKind,
}

impl Stage {
    pub fn new(name: impl Into<String>, kind: StageKind) -> Self {
        Stage {
            name: name.into(),
            inputs: Vec::new(),
            kind,
        }
    }

    pub fn with_inputs(name: impl Into<String>, inputs: Vec<String>, kind: StageKind) -> Self {
        Stage {
            name: name.into(),
            inputs,
            kind,
        }
    }
}

/// A contiguous run of stages sharing one precision assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGroup {
    pub name: String,
    pub members: Vec<String>,
}

/// A resolved producer reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputRef {
    Network,
    Stage(usize),
}

/// Named weight tensors, keyed deterministically.
#[derive(Debug, Clone, Default)]
pub struct WeightStore {
    tensors: BTreeMap<String, Tensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        WeightStore::default()
    }

    /// Inserts a tensor; duplicate names are rejected.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::Weights(format!("duplicate weight tensor {name:?}")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Weights(format!("missing weight tensor {name:?}")))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }
}

/// A validated network: stages in topological order, resolved references,
/// inferred per-item shapes, and the group partition.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    name: String,
    input_shape: Vec<usize>,
    class_count: usize,
    stages: Vec<Stage>,
    groups: Vec<LayerGroup>,
    resolved_inputs: Vec<Vec<InputRef>>,
    stage_shapes: Vec<Vec<usize>>,
    group_of: Vec<usize>,
    group_members: Vec<Vec<usize>>,
    group_exit: Vec<usize>,
}

impl NetworkModel {
    pub fn new(
        name: impl Into<String>,
        input_shape: Vec<usize>,
        class_count: usize,
        stages: Vec<Stage>,
        groups: Vec<LayerGroup>,
    ) -> Result<Self> {
        let name = name.into();
        if stages.is_empty() {
            return Err(Error::config("model has no stages"));
        }
        if input_shape.is_empty() || input_shape.iter().product::<usize>() == 0 {
            return Err(Error::config(format!(
                "bad input shape {input_shape:?}: extents must be positive"
            )));
        }
        if class_count == 0 {
            return Err(Error::config("class count must be positive"));
        }

        // Resolve producer names; stages must appear in topological order.
        let mut index_by_name: HashMap<&str, usize> = HashMap::new();
        for (i, stage) in stages.iter().enumerate() {
            if stage.name == INPUT_NAME {
                return Err(Error::config(format!(
                    "stage name {INPUT_NAME:?} is reserved for the network input"
                )));
            }
            if index_by_name.insert(&stage.name, i).is_some() {
                return Err(Error::config(format!("duplicate stage name {:?}", stage.name)));
            }
        }
        let mut resolved_inputs: Vec<Vec<InputRef>> = Vec::with_capacity(stages.len());
        for (i, stage) in stages.iter().enumerate() {
            let names: Vec<String> = if stage.inputs.is_empty() {
                if i == 0 {
                    vec![INPUT_NAME.to_string()]
                } else {
                    vec![stages[i - 1].name.clone()]
                }
            } else {
                stage.inputs.clone()
            };
            let expected = if matches!(stage.kind, StageKind::Concat) {
                2..=usize::MAX
            } else {
                1..=1
            };
            if !expected.contains(&names.len()) {
                return Err(Error::config(format!(
                    "stage {:?} ({}) takes {} input(s), got {}",
                    stage.name,
                    stage.kind.kind_name(),
                    if matches!(stage.kind, StageKind::Concat) { ">=2" } else { "1" },
                    names.len()
                )));
            }
            let mut refs = Vec::with_capacity(names.len());
            for n in &names {
                if n == INPUT_NAME {
                    refs.push(InputRef::Network);
                } else {
                    match index_by_name.get(n.as_str()) {
                        Some(&j) if j < i => refs.push(InputRef::Stage(j)),
                        Some(_) => {
                            return Err(Error::config(format!(
                                "stage {:?} consumes {:?} which is not defined earlier; stages must be listed in topological order",
                                stage.name, n
                            )))
                        }
                        None => {
                            return Err(Error::config(format!(
                                "stage {:?} consumes unknown producer {:?}",
                                stage.name, n
                            )))
                        }
                    }
                }
            }
            resolved_inputs.push(refs);
        }

        // Exactly one output stage, and it must be the last one: with
        // topological listing any interior stage without consumers would be
        // dead weight the traffic model cannot attribute.
        let mut consumed = vec![false; stages.len()];
        for refs in &resolved_inputs {
            for r in refs {
                if let InputRef::Stage(j) = r {
                    consumed[*j] = true;
                }
            }
        }
        let unconsumed: Vec<usize> = (0..stages.len()).filter(|&i| !consumed[i]).collect();
        if unconsumed != [stages.len() - 1] {
            let names: Vec<&str> = unconsumed.iter().map(|&i| stages[i].name.as_str()).collect();
            return Err(Error::config(format!(
                "model must have exactly one output stage (the last); unconsumed stages: {names:?}"
            )));
        }

        // Group partition: every stage in exactly one group, groups
        // contiguous along stage order.
        if groups.is_empty() {
            return Err(Error::config("model has no layer groups"));
        }
        let mut group_of = vec![usize::MAX; stages.len()];
        let mut group_members: Vec<Vec<usize>> = Vec::with_capacity(groups.len());
        let mut group_names = HashSet::new();
        for (g, group) in groups.iter().enumerate() {
            if !group_names.insert(group.name.as_str()) {
                return Err(Error::config(format!("duplicate group name {:?}", group.name)));
            }
            if group.members.is_empty() {
                return Err(Error::config(format!("group {:?} has no member stages", group.name)));
            }
            let mut members = Vec::with_capacity(group.members.len());
            for m in &group.members {
                let &i = index_by_name.get(m.as_str()).ok_or_else(|| {
                    Error::config(format!("group {:?} references unknown stage {m:?}", group.name))
                })?;
                if group_of[i] != usize::MAX {
                    return Err(Error::config(format!(
                        "stage {m:?} is assigned to more than one group"
                    )));
                }
                group_of[i] = g;
                members.push(i);
            }
            group_members.push(members);
        }
        if let Some(i) = group_of.iter().position(|&g| g == usize::MAX) {
            return Err(Error::config(format!(
                "stage {:?} is not assigned to any group",
                stages[i].name
            )));
        }
        let mut next_start = 0;
        for (g, members) in group_members.iter().enumerate() {
            let lo = *members.iter().min().unwrap();
            let hi = *members.iter().max().unwrap();
            if lo != next_start || hi - lo + 1 != members.len() {
                return Err(Error::config(format!(
                    "group {:?} is not a contiguous run of stages in topological order",
                    groups[g].name
                )));
            }
            next_start = hi + 1;
        }

        // Each group exposes exactly one tensor to the outside: the output
        // of its single exit stage. That is where precision is applied.
        let mut group_exit = Vec::with_capacity(groups.len());
        for (g, members) in group_members.iter().enumerate() {
            let mut exits: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&i| {
                    !consumed[i]
                        || resolved_inputs.iter().enumerate().any(|(j, refs)| {
                            group_of[j] != g && refs.contains(&InputRef::Stage(i))
                        })
                })
                .collect();
            exits.sort_unstable();
            match exits.as_slice() {
                [e] => group_exit.push(*e),
                _ => {
                    let names: Vec<&str> = exits.iter().map(|&i| stages[i].name.as_str()).collect();
                    return Err(Error::config(format!(
                        "group {:?} must expose exactly one output tensor, found exits {names:?}",
                        groups[g].name
                    )));
                }
            }
        }

        // The network input is data entering the first group.
        for (i, refs) in resolved_inputs.iter().enumerate() {
            if refs.contains(&InputRef::Network) && group_of[i] != 0 {
                return Err(Error::config(format!(
                    "stage {:?} reads the network input but is not in the first group",
                    stages[i].name
                )));
            }
        }

        let mut model = NetworkModel {
            name,
            input_shape,
            class_count,
            stages,
            groups,
            resolved_inputs,
            stage_shapes: Vec::new(),
            group_of,
            group_members,
            group_exit,
        };
        model.stage_shapes = model.infer_shapes()?;

        let out_len: usize = model.stage_shapes[model.output_stage()].iter().product();
        if out_len != model.class_count {
            return Err(Error::config(format!(
                "output stage {:?} yields {} values per item but the model declares {} classes",
                model.stages[model.output_stage()].name,
                out_len,
                model.class_count
            )));
        }
        Ok(model)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Per-item input shape (no batch axis).
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn groups(&self) -> &[LayerGroup] {
        &self.groups
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn group_names(&self) -> Vec<&str> {
        self.groups.iter().map(|g| g.name.as_str()).collect()
    }

    /// Resolved producer references of a stage.
    pub fn stage_inputs(&self, stage: usize) -> &[InputRef] {
        &self.resolved_inputs[stage]
    }

    /// Inferred per-item output shape of a stage (no batch axis).
    pub fn stage_shape(&self, stage: usize) -> &[usize] {
        &self.stage_shapes[stage]
    }

    pub fn group_of_stage(&self, stage: usize) -> usize {
        self.group_of[stage]
    }

    /// Stage indices belonging to a group, in topological order.
    pub fn group_member_indices(&self, group: usize) -> &[usize] {
        &self.group_members[group]
    }

    /// The group's single exit stage: the one whose output crosses the
    /// group boundary (or is the network output).
    pub fn group_exit_stage(&self, group: usize) -> usize {
        self.group_exit[group]
    }

    pub fn is_group_exit(&self, stage: usize) -> bool {
        self.group_exit[self.group_of[stage]] == stage
    }

    pub fn output_stage(&self) -> usize {
        self.stages.len() - 1
    }

    /// Distinct tensors read by a group from outside it (network input or
    /// other groups' exits), in first-use order.
    pub fn group_external_inputs(&self, group: usize) -> Vec<InputRef> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for &i in &self.group_members[group] {
            for r in &self.resolved_inputs[i] {
                let external = match r {
                    InputRef::Network => true,
                    InputRef::Stage(j) => self.group_of[*j] != group,
                };
                if external && seen.insert(*r) {
                    out.push(*r);
                }
            }
        }
        out
    }

    /// Per-item element count of a producer's output.
    pub fn ref_len(&self, r: InputRef) -> usize {
        match r {
            InputRef::Network => self.input_shape.iter().product(),
            InputRef::Stage(j) => self.stage_shapes[j].iter().product(),
        }
    }

    /// Expected weight and bias shapes of a stage, if it has parameters.
    pub fn stage_weight_shapes(&self, stage: usize) -> Option<(Vec<usize>, Vec<usize>)> {
        match &self.stages[stage].kind {
            StageKind::Conv(p) => {
                let in_shape = self.ref_shape(self.resolved_inputs[stage][0]);
                let c = in_shape[0];
                Some((
                    vec![p.out_channels, c, p.kernel.0, p.kernel.1],
                    vec![p.out_channels],
                ))
            }
            StageKind::FullyConnected(p) => {
                let in_len: usize = self.ref_shape(self.resolved_inputs[stage][0]).iter().product();
                Some((vec![p.out_features, in_len], vec![p.out_features]))
            }
            _ => None,
        }
    }

    /// Weight tensor names referenced by a stage (weights then bias).
    pub fn stage_weight_names(&self, stage: usize) -> Option<(&str, &str)> {
        match &self.stages[stage].kind {
            StageKind::Conv(p) => Some((&p.weights, &p.bias)),
            StageKind::FullyConnected(p) => Some((&p.weights, &p.bias)),
            _ => None,
        }
    }

    /// Total weight + bias elements held by a group.
    pub fn group_weight_elements(&self, group: usize) -> usize {
        self.group_members[group]
            .iter()
            .filter_map(|&i| self.stage_weight_shapes(i))
            .map(|(w, b)| {
                w.iter().product::<usize>() + b.iter().product::<usize>()
            })
            .sum()
    }

    /// Checks that every referenced weight tensor exists in `store` with the
    /// expected shape.
    pub fn check_weights(&self, store: &WeightStore) -> Result<()> {
        for i in 0..self.stages.len() {
            let Some((w_name, b_name)) = self.stage_weight_names(i) else {
                continue;
            };
            let (w_shape, b_shape) = self.stage_weight_shapes(i).unwrap();
            for (name, shape) in [(w_name, &w_shape), (b_name, &b_shape)] {
                let t = store.require(name)?;
                if t.shape() != shape.as_slice() {
                    return Err(Error::Weights(format!(
                        "tensor {:?} has shape {:?}, stage {:?} expects {:?}",
                        name,
                        t.shape(),
                        self.stages[i].name,
                        shape
                    )));
                }
            }
        }
        Ok(())
    }

    fn ref_shape(&self, r: InputRef) -> &[usize] {
        match r {
            InputRef::Network => &self.input_shape,
            InputRef::Stage(j) => &self.stage_shapes[j],
        }
    }

    fn infer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(self.stages.len());
        for (i, stage) in self.stages.iter().enumerate() {
            let input_shapes: Vec<&[usize]> = self.resolved_inputs[i]
                .iter()
                .map(|&r| match r {
                    InputRef::Network => self.input_shape.as_slice(),
                    InputRef::Stage(j) => shapes[j].as_slice(),
                })
                .collect();
            let shape = infer_stage_shape(stage, &input_shapes)
                .map_err(|e| Error::config(format!("stage {:?}: {e}", stage.name)))?;
            shapes.push(shape);
        }
        Ok(shapes)
    }
}

/// Spatial output extent of a windowed op: floor((in + 2*pad - win)/stride) + 1.
pub(crate) fn windowed_extent(input: usize, win: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if win == 0 || stride == 0 || padded < win {
        return None;
    }
    Some((padded - win) / stride + 1)
}

fn infer_stage_shape(stage: &Stage, inputs: &[&[usize]]) -> std::result::Result<Vec<usize>, String> {
    match &stage.kind {
        StageKind::Conv(p) => {
            let shape = inputs[0];
            let [c, h, w] = shape else {
                return Err(format!("conv expects a C,H,W input, got {shape:?}"));
            };
            let _ = c;
            let oh = windowed_extent(*h, p.kernel.0, p.stride.0, p.pad.0)
                .ok_or_else(|| format!("kernel {}x{} does not fit {h}x{w} input with pad {:?}", p.kernel.0, p.kernel.1, p.pad))?;
            let ow = windowed_extent(*w, p.kernel.1, p.stride.1, p.pad.1)
                .ok_or_else(|| format!("kernel {}x{} does not fit {h}x{w} input with pad {:?}", p.kernel.0, p.kernel.1, p.pad))?;
            if p.out_channels == 0 {
                return Err("conv output channels must be positive".into());
            }
            Ok(vec![p.out_channels, oh, ow])
        }
        StageKind::FullyConnected(p) => {
            if p.out_features == 0 {
                return Err("fully connected output size must be positive".into());
            }
            Ok(vec![p.out_features])
        }
        StageKind::Relu | StageKind::Dropout | StageKind::Softmax => Ok(inputs[0].to_vec()),
        StageKind::MaxPool(p) | StageKind::AvgPool(p) => {
            let shape = inputs[0];
            let [c, h, w] = shape else {
                return Err(format!("pooling expects a C,H,W input, got {shape:?}"));
            };
            if p.pad.0 >= p.window.0 || p.pad.1 >= p.window.1 {
                return Err(format!(
                    "pool pad {:?} must be smaller than the window {:?}",
                    p.pad, p.window
                ));
            }
            let oh = windowed_extent(*h, p.window.0, p.stride.0, p.pad.0)
                .ok_or_else(|| format!("pool window {:?} exceeds padded {h}x{w} input", p.window))?;
            let ow = windowed_extent(*w, p.window.1, p.stride.1, p.pad.1)
                .ok_or_else(|| format!("pool window {:?} exceeds padded {h}x{w} input", p.window))?;
            Ok(vec![*c, oh, ow])
        }
        StageKind::Lrn(p) => {
            let shape = inputs[0];
            if shape.len() != 3 {
                return Err(format!("lrn expects a C,H,W input, got {shape:?}"));
            }
            if p.size == 0 || p.size % 2 == 0 {
                return Err(format!("lrn window size must be odd and positive, got {}", p.size));
            }
            Ok(shape.to_vec())
        }
        StageKind::Concat => {
            let first = inputs[0];
            if first.len() != 3 {
                return Err(format!("concat expects C,H,W inputs, got {first:?}"));
            }
            let (h, w) = (first[1], first[2]);
            let mut channels = 0;
            for shape in inputs {
                if shape.len() != 3 || shape[1] != h || shape[2] != w {
                    return Err(format!(
                        "concat inputs must share spatial extents; got {inputs:?}"
                    ));
                }
                channels += shape[0];
            }
            Ok(vec![channels, h, w])
        }
    }
}
