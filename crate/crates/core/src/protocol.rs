//! SplitFed training: clients run their segment up to the cut layer, the main
//! server finishes forward/backward on a per-client working copy of the
//! server segment and returns the cut-layer gradient, then the fed server
//! averages client segments and the main server averages its working copies.
//!
//! The server side never looks at whether a client is malicious.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::{self, compose, split_at, Model, ModelSegment, ModelSpec, SegmentCache, SplitPoint};
use crate::nn::{self, argmax_rows, softmax_cross_entropy, Layer};
use crate::poisoning::{AttackConfig, AttackKind, DistanceScope};
use crate::tensor::Tensor;

/// How often the fed server and main server aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationSchedule {
    #[default]
    PerEpoch,
    PerBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub lr: f64,
    pub batch_size: usize,
    /// Seed for per-client, per-epoch batch order.
    pub seed: u64,
    pub shuffle: bool,
    pub aggregation: AggregationSchedule,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            lr: nn::DEFAULT_LR,
            batch_size: 32,
            seed: 0,
            shuffle: true,
            aggregation: AggregationSchedule::PerEpoch,
        }
    }
}

/// SplitMix64 finaliser folded over `parts`.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

/// Sample order a client uses in `epoch`. Shared with centralized reference training.
pub fn epoch_order(seed: u64, client_id: usize, epoch: usize, n: usize, shuffle: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[client_id as u64, epoch as u64]));
        order.shuffle(&mut rng);
    }
    order
}

/// Splits an order into consecutive batches; the last one may be short.
pub fn batch_slices(order: &[usize], batch_size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(batch_size.max(1))
}

/// A batch drawn from one client's shard, tagged with that client's id.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientBatch {
    pub owner: usize,
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

/// Cut-layer activations and labels sent from a client to the main server.
#[derive(Debug, Clone, PartialEq)]
pub struct SmashedBatch {
    pub client_id: usize,
    pub activations: Tensor,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    pub segment: ModelSegment,
    shard: Dataset,
    pub is_malicious: bool,
    pub attack: AttackConfig,
    input_shape: Vec<usize>,
    pending: Option<SegmentCache>,
}

impl ClientState {
    pub fn new(
        client_id: usize,
        segment: ModelSegment,
        shard: Dataset,
        input_shape: Vec<usize>,
        is_malicious: bool,
        attack: AttackConfig,
    ) -> Self {
        Self {
            client_id,
            segment,
            shard,
            is_malicious,
            attack,
            input_shape,
            pending: None,
        }
    }

    pub fn shard(&self) -> &Dataset {
        &self.shard
    }

    fn attack_rng(&self, epoch: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.attack.seed, &[self.client_id as u64, epoch as u64]))
    }

    /// Training batches for one local epoch. Malicious clients see a poisoned
    /// label view; the stored shard is never modified.
    pub fn epoch_batches(&self, epoch: usize, opts: &TrainOptions) -> Result<Vec<ClientBatch>> {
        let order = epoch_order(opts.seed, self.client_id, epoch, self.shard.len(), opts.shuffle);
        let num_classes = self.shard.num_classes;
        let mut rng = self.attack_rng(epoch);
        let per_batch = self.is_malicious
            && matches!(self.attack.kind, AttackKind::DistanceBased { .. })
            && self.attack.scope == DistanceScope::Batch;
        let labels = if self.is_malicious && !per_batch {
            self.attack.apply(&self.shard.inputs, &self.shard.labels, num_classes, &mut rng)?
        } else {
            self.shard.labels.clone()
        };

        batch_slices(&order, opts.batch_size)
            .map(|idx| {
                let flat = self.shard.inputs.select_rows(idx)?;
                let mut batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
                if per_batch {
                    batch_labels = self.attack.apply(&flat, &batch_labels, num_classes, &mut rng)?;
                }
                let mut shape = vec![idx.len()];
                shape.extend_from_slice(&self.input_shape);
                Ok(ClientBatch {
                    owner: self.client_id,
                    inputs: flat.reshape(shape)?,
                    labels: batch_labels,
                })
            })
            .collect()
    }

    /// Forward pass up to the cut layer. The cache is kept for [`Self::client_backward`].
    pub fn client_local_pass(&mut self, batch: &ClientBatch) -> Result<SmashedBatch> {
        if batch.owner != self.client_id {
            return Err(Error::ForeignShard(format!(
                "client {} was handed a batch from client {}'s shard",
                self.client_id, batch.owner
            )));
        }
        if batch.inputs.batch_size() != batch.labels.len() {
            return Err(Error::shape("client batch labels", vec![batch.inputs.batch_size()], vec![batch.labels.len()]));
        }
        let (activations, cache) = self.segment.forward(&batch.inputs)?;
        self.pending = Some(cache);
        Ok(SmashedBatch {
            client_id: self.client_id,
            activations,
            labels: batch.labels.clone(),
        })
    }

    /// Backprop of the returned cut-layer gradient and one SGD step.
    pub fn client_backward(&mut self, cut_gradient: &Tensor, lr: f64) -> Result<()> {
        let cache = self
            .pending
            .take()
            .ok_or_else(|| Error::CacheMismatch(format!("client {} has no pending forward pass", self.client_id)))?;
        let (grads, _) = self.segment.backward(&cache, cut_gradient)?;
        self.segment.sgd_step(&grads, lr)
    }
}

/// One server step on `segment`: forward, loss, backward, SGD. Returns the
/// gradient w.r.t. the smashed activations, computed before the update.
pub fn server_step(segment: &mut ModelSegment, smashed: &SmashedBatch, lr: f64) -> Result<Tensor> {
    if smashed.activations.batch_size() != smashed.labels.len() {
        return Err(Error::shape(
            "smashed batch labels",
            vec![smashed.activations.batch_size()],
            vec![smashed.labels.len()],
        ));
    }
    let (logits, cache) = segment.forward(&smashed.activations)?;
    let (_, dlogits) = softmax_cross_entropy(&logits, &smashed.labels)?;
    let (grads, cut_gradient) = segment.backward(&cache, &dlogits)?;
    segment.sgd_step(&grads, lr)?;
    Ok(cut_gradient)
}

/// Main server: one global server segment plus per-client working copies during a round.
#[derive(Debug, Clone)]
pub struct ServerState {
    pub global: ModelSegment,
    working: Vec<ModelSegment>,
}

impl ServerState {
    pub fn new(global: ModelSegment) -> Self {
        Self {
            global,
            working: Vec::new(),
        }
    }

    /// Hands every client a fresh copy of the global server segment.
    pub fn begin_round(&mut self, num_clients: usize) {
        self.working = vec![self.global.clone(); num_clients];
    }

    pub fn working(&self) -> &[ModelSegment] {
        &self.working
    }

    pub fn server_step(&mut self, smashed: &SmashedBatch, lr: f64) -> Result<Tensor> {
        let n = self.working.len();
        let seg = self.working.get_mut(smashed.client_id).ok_or_else(|| {
            Error::Aggregation(format!("no working copy for client {} ({n} open)", smashed.client_id))
        })?;
        server_step(seg, smashed, lr)
    }

    /// Equal-weight FedAvg of the working copies into the global segment.
    pub fn aggregate(&mut self) -> Result<()> {
        if self.working.is_empty() {
            return Err(Error::Aggregation("no working copies to aggregate".into()));
        }
        let sets: Vec<&[Layer]> = self.working.iter().map(ModelSegment::layers).collect();
        let averaged = fedavg(&sets, &equal_weights(sets.len()))?;
        self.global.replace_layers(averaged)?;
        self.working.clear();
        Ok(())
    }
}

/// Fed server: collects one client-side parameter set per client, then averages.
#[derive(Debug, Clone)]
pub struct FedServerState {
    received: Vec<Option<Vec<Layer>>>,
}

impl FedServerState {
    pub fn new(num_clients: usize) -> Self {
        Self {
            received: vec![None; num_clients],
        }
    }

    pub fn submit(&mut self, client_id: usize, layers: Vec<Layer>) -> Result<()> {
        let slot = self
            .received
            .get_mut(client_id)
            .ok_or_else(|| Error::Aggregation(format!("unknown client {client_id}")))?;
        if slot.is_some() {
            return Err(Error::Aggregation(format!("client {client_id} submitted twice")));
        }
        *slot = Some(layers);
        Ok(())
    }

    /// Averages in ascending client id order once all clients have submitted.
    pub fn aggregate(&mut self) -> Result<Vec<Layer>> {
        let missing: Vec<usize> = (0..self.received.len()).filter(|&k| self.received[k].is_none()).collect();
        if !missing.is_empty() {
            return Err(Error::Aggregation(format!("missing client updates from {missing:?}")));
        }
        let sets: Vec<Vec<Layer>> = self.received.iter_mut().map(|s| s.take().unwrap()).collect();
        let refs: Vec<&[Layer]> = sets.iter().map(Vec::as_slice).collect();
        fedavg(&refs, &equal_weights(refs.len()))
    }
}

pub fn equal_weights(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Weighted elementwise average of structurally identical layer lists,
/// accumulated in list order starting from the first weighted term.
pub fn fedavg(param_sets: &[&[Layer]], weights: &[f64]) -> Result<Vec<Layer>> {
    let Some(first) = param_sets.first() else {
        return Err(Error::Aggregation("no parameter sets".into()));
    };
    if weights.len() != param_sets.len() {
        return Err(Error::Aggregation(format!(
            "{} weights for {} parameter sets",
            weights.len(),
            param_sets.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Aggregation("weights must be nonnegative and sum to 1".into()));
    }
    for (k, set) in param_sets.iter().enumerate() {
        let same = set.len() == first.len()
            && set.iter().zip(first.iter()).all(|(a, b)| {
                a.kind() == b.kind()
                    && a.params().map(|(w, b)| (w.shape(), b.shape())) == b.params().map(|(w, b)| (w.shape(), b.shape()))
            });
        if !same {
            return Err(Error::Aggregation(format!("parameter set {k} differs in shape from set 0")));
        }
    }
    let mut out: Vec<Layer> = first.to_vec();
    for (li, layer) in out.iter_mut().enumerate() {
        let Some((w, b)) = layer.params_mut() else { continue };
        for (ti, target) in [w, b].into_iter().enumerate() {
            let source = |k: usize| -> &[f64] {
                let (w, b) = param_sets[k][li].params().unwrap();
                if ti == 0 {
                    w.data()
                } else {
                    b.data()
                }
            };
            let acc = target.data_mut();
            for (a, v) in acc.iter_mut().zip(source(0)) {
                *a = weights[0] * v;
            }
            for k in 1..param_sets.len() {
                for (a, v) in acc.iter_mut().zip(source(k)) {
                    *a += weights[k] * v;
                }
            }
        }
    }
    Ok(out)
}

/// Full SplitFed state: clients, main server and fed server.
#[derive(Debug, Clone)]
pub struct SflSystem {
    pub spec: ModelSpec,
    pub clients: Vec<ClientState>,
    pub server: ServerState,
    pub fed_server: FedServerState,
}

impl SflSystem {
    /// Splits `model` and hands every client an identical copy of the client segment.
    pub fn new(
        model: &Model,
        split: SplitPoint,
        shards: Vec<Dataset>,
        malicious: &[bool],
        attack: AttackConfig,
    ) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::Config("need at least one client".into()));
        }
        if malicious.len() != shards.len() {
            return Err(Error::Config(format!(
                "{} malicious flags for {} clients",
                malicious.len(),
                shards.len()
            )));
        }
        for s in &shards {
            check_dataset(&model.spec, s)?;
        }
        if malicious.iter().any(|&m| m) {
            attack.validate(model.spec.num_classes)?;
        }
        let (client_seg, server_seg) = split_at(model, split)?;
        let clients = shards
            .into_iter()
            .enumerate()
            .map(|(k, shard)| {
                ClientState::new(k, client_seg.clone(), shard, model.spec.input_shape.clone(), malicious[k], attack)
            })
            .collect::<Vec<_>>();
        let k = clients.len();
        Ok(Self {
            spec: model.spec.clone(),
            clients,
            server: ServerState::new(server_seg),
            fed_server: FedServerState::new(k),
        })
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    /// One global epoch. Clients advance batch by batch in lockstep; each
    /// works against its own server copy, so the result does not depend on
    /// how the per-client work is scheduled. An error aborts the epoch and
    /// leaves the system in an unspecified state.
    pub fn run_global_epoch(&mut self, epoch: usize, opts: &TrainOptions) -> Result<()> {
        let k = self.num_clients();
        let batches: Vec<Vec<ClientBatch>> = self
            .clients
            .par_iter()
            .map(|c| c.epoch_batches(epoch, opts))
            .collect::<Result<_>>()?;
        let rounds = batches.iter().map(Vec::len).max().unwrap_or(0);

        self.server.begin_round(k);
        for j in 0..rounds {
            self.clients
                .par_iter_mut()
                .zip(self.server.working.par_iter_mut())
                .zip(batches.par_iter())
                .try_for_each(|((client, server_copy), client_batches)| -> Result<()> {
                    let Some(batch) = client_batches.get(j) else {
                        return Ok(());
                    };
                    let smashed = client.client_local_pass(batch)?;
                    let cut_gradient = server_step(server_copy, &smashed, opts.lr)?;
                    client.client_backward(&cut_gradient, opts.lr)
                })?;
            if opts.aggregation == AggregationSchedule::PerBatch {
                self.aggregate()?;
                if j + 1 < rounds {
                    self.server.begin_round(k);
                }
            }
        }
        if opts.aggregation == AggregationSchedule::PerEpoch {
            self.aggregate()?;
        }
        Ok(())
    }

    fn aggregate(&mut self) -> Result<()> {
        for c in &self.clients {
            self.fed_server.submit(c.client_id, c.segment.layers().to_vec())?;
        }
        let averaged = self.fed_server.aggregate()?;
        for c in &mut self.clients {
            c.segment.replace_layers(averaged.clone())?;
        }
        self.server.aggregate()
    }

    /// Global client segment (all clients hold the same one after aggregation)
    /// composed with the global server segment.
    pub fn global_model(&self) -> Model {
        compose(&self.spec, &self.clients[0].segment, &self.server.global)
    }
}

fn check_dataset(spec: &ModelSpec, data: &Dataset) -> Result<()> {
    if data.features() != spec.input_size() || data.num_classes != spec.num_classes {
        return Err(Error::Config(format!(
            "dataset {:?} ({} features, {} classes) does not fit model {} ({} inputs, {} classes)",
            data.name,
            data.features(),
            data.num_classes,
            spec.name,
            spec.input_size(),
            spec.num_classes
        )));
    }
    Ok(())
}

/// Class predictions for every row of `data`, evaluated in chunks.
pub fn predict_dataset(model: &Model, data: &Dataset) -> Result<Vec<usize>> {
    check_dataset(&model.spec, data)?;
    let n = data.len();
    let idx: Vec<usize> = (0..n).collect();
    let mut preds = Vec::with_capacity(n);
    for chunk in idx.chunks(256) {
        let batch = model::shape_batch(&model.spec, data.inputs.select_rows(chunk)?)?;
        preds.extend(argmax_rows(&nn::predict(&model.layers, &batch)?));
    }
    Ok(preds)
}

pub fn evaluate(model: &Model, data: &Dataset, epoch: usize, fingerprint: &str) -> Result<MetricsReport> {
    let preds = predict_dataset(model, data)?;
    MetricsReport::from_predictions(epoch, &preds, &data.labels, data.num_classes, fingerprint)
}

/// Everything needed for one training run.
#[derive(Debug, Clone)]
pub struct TrainingSetup {
    pub spec: ModelSpec,
    pub split: SplitPoint,
    pub shards: Vec<Dataset>,
    pub test: Dataset,
    pub malicious: Vec<bool>,
    pub attack: AttackConfig,
    pub epochs: usize,
    pub init_seed: u64,
    pub options: TrainOptions,
    pub fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: Model,
    pub reports: Vec<MetricsReport>,
}

impl TrainingOutcome {
    pub fn final_report(&self) -> Option<&MetricsReport> {
        self.reports.last()
    }
}

/// Trains for `setup.epochs` global epochs, evaluating on the test set after each.
pub fn run_training(setup: TrainingSetup) -> Result<TrainingOutcome> {
    check_dataset(&setup.spec, &setup.test)?;
    if setup.options.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let model = setup.spec.init(setup.init_seed)?;
    let mut system = SflSystem::new(&model, setup.split, setup.shards, &setup.malicious, setup.attack)?;
    let mut reports = Vec::with_capacity(setup.epochs);
    for epoch in 0..setup.epochs {
        system.run_global_epoch(epoch, &setup.options)?;
        reports.push(evaluate(&system.global_model(), &setup.test, epoch, &setup.fingerprint)?);
    }
    Ok(TrainingOutcome {
        model: system.global_model(),
        reports,
    })
}
