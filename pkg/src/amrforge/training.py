"""Training recipes: full finetuning, low-rank adapters, and the two-stage
schedule that applies adapter tuning on top of a fully finetuned model.

Full finetuning updates every parameter with Adam at a small learning rate.
Adapter (LoRA) tuning freezes the base weights and trains rank-r factors on
the query and value projections; the effective weight is
W + (alpha / rank) * (B @ A)^T with A random-normal and B zero at attach
time, so attaching never changes model outputs. Following the
merge-for-eval / split-for-update discipline, the parameter dict carries
merged effective weights during adapter training and every update
recomputes them from the frozen base plus the factors; split() restores the
stored base bitwise.

Model selection: the validation set is decoded greedily at the end of every
epoch (plus once before training, so a tuning stage can never end worse
than it started) and the checkpoint with the highest validation Smatch
wins, earliest epoch on ties. Two-stage runs train one adapter model per
adapter configuration, each with its own derived seed, and report the mean
and standard deviation of their test scores.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace

import numpy as np

from amrforge.corpus import generate_synthetic
from amrforge.graph import to_triples
from amrforge.linearize import (
    TASK_PREFIX,
    build_wiki_table,
    deserialize,
    make_pair,
    strip_wiki,
)
from amrforge.model import (
    ModelSpec,
    greedy_decode_batch,
    init_params,
    loss_and_grads,
)
from amrforge.smatch import micro_score, smatch_counts
from amrforge.tokenizer import Tokenizer, train_tokenizer

FFT = "fft"
LORA = "lora"
FFT_THEN_LORA = "fft_then_lora"

DEFAULT_FFT_LR = 5e-5
DEFAULT_LORA_LR = 4e-1


class TrainingDiverged(Exception):
    pass


@dataclass
class TrainConfig:
    """Hyperparameters of one tuning stage.

    learning_rate defaults by mode: 5e-5 for full finetuning, 4e-1 for
    adapter tuning. Batches are sentence-based: every batch except possibly
    the last holds exactly batch_size pairs.
    """

    learning_rate: float = None
    batch_size: int = 8
    max_source_len: int = 128
    max_target_len: int = 128
    epochs: int = 5
    seed: int = 0
    mode: str = FFT

    def __post_init__(self):
        if self.mode not in (FFT, LORA, FFT_THEN_LORA):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.learning_rate is None:
            self.learning_rate = DEFAULT_LORA_LR if self.mode == LORA else DEFAULT_FFT_LR
        for name in ("learning_rate", "batch_size", "max_source_len", "max_target_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    def to_dict(self):
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_source_len": self.max_source_len,
            "max_target_len": self.max_target_len,
            "epochs": self.epochs,
            "seed": self.seed,
            "mode": self.mode,
        }


@dataclass(frozen=True)
class LoraSpec:
    rank: int = 8
    alpha: float = 32.0
    targets: tuple = ("q", "v")

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if not self.targets:
            raise ValueError("targets must be nonempty")

    @property
    def scale(self) -> float:
        return self.alpha / self.rank


DEFAULT_LORA_SPECS = (LoraSpec(8, 32.0), LoraSpec(16, 64.0))


class AdapterState:
    """Low-rank factors plus frozen base copies for the adapted weights."""

    def __init__(self, lora: LoraSpec):
        self.lora = lora
        self.base = {}  # name -> frozen base weight (copy)
        self.a = {}  # name -> (rank, d_in)
        self.b = {}  # name -> (d_out, rank)
        self.merged = False

    @property
    def names(self):
        return sorted(self.base)

    def delta(self, name):
        return self.lora.scale * (self.b[name] @ self.a[name]).T

    def trainable_count(self):
        return sum(a.size for a in self.a.values()) + sum(
            b.size for b in self.b.values()
        )


def attach_lora(params, lora: LoraSpec, seed=0) -> AdapterState:
    """Create adapters on every projection whose name ends in a target.

    A is random-normal (std 0.02), B is zero, so the adapted model computes
    exactly the base model's outputs until the first update."""
    rng = np.random.default_rng(seed)
    state = AdapterState(lora)
    for target in lora.targets:
        matches = [n for n in sorted(params) if n.split(".")[-1] == target]
        if not matches:
            raise ValueError(f"no parameter matches adapter target {target!r}")
        for name in matches:
            d_in, d_out = params[name].shape
            state.base[name] = params[name].copy()
            state.a[name] = rng.normal(0.0, 0.02, size=(lora.rank, d_in))
            state.b[name] = np.zeros((d_out, lora.rank))
    return state


def merge(adapters: AdapterState, params):
    """Fold adapter deltas into the stored weights (inference view)."""
    if adapters.merged:
        raise ValueError("adapters already merged")
    out = dict(params)
    for name in adapters.names:
        out[name] = adapters.base[name] + adapters.delta(name)
    adapters.merged = True
    return out


def split(adapters: AdapterState, params):
    """Restore the frozen base weights bitwise (update view)."""
    if not adapters.merged:
        raise ValueError("adapters already split")
    out = dict(params)
    for name in adapters.names:
        out[name] = adapters.base[name]
    adapters.merged = False
    return out


class Adam:
    """Adaptive moment estimation with 64-bit state."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for name, grad in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * grad * grad
            mhat = self.m[name] / correction1
            vhat = self.v[name] / correction2
            params[name] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _check_finite(loss, step):
    if not math.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss {loss!r} at step {step}")


def fft_step(params, spec, batch, config: TrainConfig, adam: Adam, step=0):
    """One full-finetuning update over a sentence batch. Returns the loss."""
    loss, grads = loss_and_grads(params, spec, batch)
    _check_finite(loss, step)
    if config.learning_rate > 0:
        adam.step(params, grads)
    return loss


def lora_step(params, spec, batch, config, adam, adapters: AdapterState, step=0):
    """One adapter update: gradients of the merged weights are projected
    onto the factors, the factors step, and the merged weights are
    recomputed from the frozen base. Base parameters never change."""
    if not adapters.merged:
        raise ValueError("lora_step requires merged effective weights")
    loss, grads = loss_and_grads(params, spec, batch)
    _check_finite(loss, step)
    if config.learning_rate > 0:
        scale = adapters.lora.scale
        factor_params = {}
        factor_grads = {}
        for name in adapters.names:
            g = grads[name]  # gradient of the effective (d_in, d_out) weight
            factor_params[f"{name}.A"] = adapters.a[name]
            factor_params[f"{name}.B"] = adapters.b[name]
            factor_grads[f"{name}.A"] = scale * (g @ adapters.b[name]).T
            factor_grads[f"{name}.B"] = scale * (adapters.a[name] @ g).T
        adam.step(factor_params, factor_grads)
        for name in adapters.names:
            params[name] = adapters.base[name] + adapters.delta(name)
    return loss


def sentence_batches(n, batch_size, rng):
    """Shuffled index batches; all but possibly the last have batch_size."""
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


# ---------------------------------------------------------------------------
# Task preparation
# ---------------------------------------------------------------------------


@dataclass
class EvalSplit:
    sources: list  # encoded source id sequences
    gold: list  # wiki-stripped gold TripleSets
    sentences: list


@dataclass
class TaskData:
    """Everything a run needs: tokenizer, encoded splits, eval targets."""

    spec: ModelSpec
    tokenizer: Tokenizer
    wiki_table: object
    train: list  # (src ids, tgt ids) pairs
    val: EvalSplit
    test: EvalSplit


def _encode_pair(tokenizer, pair, config):
    src = tokenizer.encode(pair.input)[: config.max_source_len]
    tgt = tokenizer.encode(pair.target, add_eos=True)[: config.max_target_len]
    if tgt[-1] != tokenizer.eos_id:
        tgt[-1] = tokenizer.eos_id
    return src, tgt


def _encode_eval(tokenizer, pairs, config):
    sources = []
    gold = []
    sentences = []
    for sentence, graph in pairs:
        stripped, _ = strip_wiki(graph)
        sources.append(tokenizer.encode(TASK_PREFIX + sentence)[: config.max_source_len])
        gold.append(to_triples(stripped))
        sentences.append(sentence)
    return EvalSplit(sources, gold, sentences)


def prepare_task(train_pairs, val_pairs, test_pairs, config: TrainConfig,
                 base_spec: ModelSpec = None, vocab_size=512) -> TaskData:
    """Build tokenizer and encodings from raw (sentence, graph) corpora."""
    base_spec = base_spec or ModelSpec()
    wiki_table = build_wiki_table([g for _, g in train_pairs])
    texts = []
    encoded_pairs = []
    for sentence, graph in train_pairs:
        stripped, _ = strip_wiki(graph)
        pair = make_pair(sentence, stripped)
        encoded_pairs.append(pair)
        texts += [pair.input, pair.target]
    tokenizer = train_tokenizer(texts, vocab_size)
    spec = replace(
        base_spec,
        vocab_size=len(tokenizer),
        max_len=max(config.max_source_len, config.max_target_len, base_spec.max_len),
    )
    train = [_encode_pair(tokenizer, p, config) for p in encoded_pairs]
    return TaskData(
        spec=spec,
        tokenizer=tokenizer,
        wiki_table=wiki_table,
        train=train,
        val=_encode_eval(tokenizer, val_pairs, config),
        test=_encode_eval(tokenizer, test_pairs, config),
    )


def decode_graphs(params, spec, tokenizer, sources, max_steps):
    """Greedy decode, then repair + deserialize each output into a graph."""
    outputs = greedy_decode_batch(
        params, spec, sources, max_steps, eos_id=tokenizer.eos_id,
        start_id=tokenizer.pad_id,
    )
    return [deserialize(tokenizer.decode(ids)) for ids in outputs]


def eval_split_counts(params, spec, tokenizer, split: EvalSplit, config, seed=0):
    """Per-sentence Smatch counts of greedy decodes against stripped gold."""
    graphs = decode_graphs(params, spec, tokenizer, split.sources, config.max_target_len)
    preds = [to_triples(g) for g in graphs]
    return smatch_counts(preds, split.gold, restarts=4, seed=seed)


@dataclass
class Checkpoint:
    epoch: int
    val_smatch: float
    params: dict
    val_counts: list = field(default_factory=list)


def select_best(checkpoints, validation=None) -> Checkpoint:
    """Highest validation Smatch; earliest epoch wins ties."""
    if not checkpoints:
        raise ValueError("no checkpoints")
    best = checkpoints[0]
    for ckpt in checkpoints[1:]:
        if ckpt.val_smatch > best.val_smatch:
            best = ckpt
    return best


@dataclass
class FitResult:
    checkpoints: list
    metrics: list  # one dict per epoch
    best: Checkpoint


def fit(params, task: TaskData, config: TrainConfig, adapters=None,
        eval_seed=0, log=None) -> FitResult:
    """Run one tuning stage with end-of-epoch validation selection.

    The initial model is scored and kept as the epoch-0 checkpoint, so the
    stage's selected model is never worse on validation than its start.
    """
    rng = np.random.default_rng(config.seed)
    adam = Adam(config.learning_rate)
    step_fn = fft_step if adapters is None else (
        lambda p, s, b, c, a, step: lora_step(p, s, b, c, a, adapters, step)
    )

    def validation_checkpoint(epoch):
        counts = eval_split_counts(
            params, task.spec, task.tokenizer, task.val, config, seed=eval_seed
        )
        score = micro_score(counts).f1
        return Checkpoint(epoch, score, copy.deepcopy(params), counts)

    checkpoints = [validation_checkpoint(0)]
    metrics = [{"epoch": 0, "loss": None, "val_smatch": checkpoints[0].val_smatch}]
    step = 0
    for epoch in range(1, config.epochs + 1):
        losses = []
        for batch_idx in sentence_batches(len(task.train), config.batch_size, rng):
            batch = [task.train[i] for i in batch_idx]
            losses.append(step_fn(params, task.spec, batch, config, adam, step))
            step += 1
        ckpt = validation_checkpoint(epoch)
        checkpoints.append(ckpt)
        row = {
            "epoch": epoch,
            "loss": float(np.mean(losses)) if losses else None,
            "val_smatch": ckpt.val_smatch,
        }
        metrics.append(row)
        if log:
            log(row)
    return FitResult(checkpoints, metrics, select_best(checkpoints))


@dataclass
class TwoStageResult:
    stage1: FitResult
    stage1_test_counts: list
    per_spec: list  # dicts with rank/alpha/seed/scores/test_counts/result
    report: dict

    @property
    def stage1_test_smatch(self):
        return micro_score(self.stage1_test_counts).f1


def fft_then_lora(task: TaskData, fft_config: TrainConfig,
                  lora_specs=DEFAULT_LORA_SPECS, lora_config: TrainConfig = None,
                  log=None) -> TwoStageResult:
    """Two-stage schedule: full finetune, then adapter-tune the selected
    model once per adapter configuration, each with its own derived seed
    (configuration and seed vary together).

    The report carries stage-1 and per-spec test Smatch plus the mean and
    standard deviation over the adapter configurations. With zero stage-2
    epochs the selected stage-2 model is the stage-1 model, so the report
    reproduces stage-1 scores exactly."""
    if lora_config is None:
        lora_config = TrainConfig(mode=LORA, epochs=fft_config.epochs,
                                  batch_size=fft_config.batch_size,
                                  max_source_len=fft_config.max_source_len,
                                  max_target_len=fft_config.max_target_len,
                                  seed=fft_config.seed)
    params = init_params(task.spec, seed=fft_config.seed)
    stage1 = fit(params, task, fft_config, log=log)
    base = stage1.best.params
    stage1_test_counts = eval_split_counts(
        base, task.spec, task.tokenizer, task.test, fft_config
    )
    stage1_test = micro_score(stage1_test_counts).f1

    per_spec = []
    for index, lora in enumerate(lora_specs):
        run_seed = lora_config.seed + 1000 * (index + 1)
        lora_params = copy.deepcopy(base)
        adapters = attach_lora(lora_params, lora, seed=run_seed)
        lora_params = merge(adapters, lora_params)
        stage_config = replace(lora_config, seed=run_seed)
        result = fit(lora_params, task, stage_config, adapters=adapters, log=log)
        test_counts = eval_split_counts(
            result.best.params, task.spec, task.tokenizer, task.test, stage_config
        )
        per_spec.append({
            "rank": lora.rank,
            "alpha": lora.alpha,
            "seed": run_seed,
            "val_smatch": result.best.val_smatch,
            "test_smatch": micro_score(test_counts).f1,
            "test_counts": test_counts,
            "result": result,
        })

    scores = [r["test_smatch"] for r in per_spec]
    report = {
        "stage1_val_smatch": stage1.best.val_smatch,
        "stage1_test_smatch": stage1_test,
        "per_spec": [
            {k: r[k] for k in ("rank", "alpha", "seed", "val_smatch", "test_smatch")}
            for r in per_spec
        ],
        "test_smatch_mean": float(np.mean(scores)) if scores else stage1_test,
        "test_smatch_std": float(np.std(scores)) if scores else 0.0,
    }
    return TwoStageResult(stage1, stage1_test_counts, per_spec, report)


def lora_only(task: TaskData, config: TrainConfig, lora: LoraSpec = None,
              init_seed=None, log=None):
    """Adapter tuning applied directly to a randomly initialized base model
    (no full finetuning stage). Returns (FitResult, test counts)."""
    lora = lora or LoraSpec()
    init_seed = config.seed if init_seed is None else init_seed
    params = init_params(task.spec, seed=init_seed)
    adapters = attach_lora(params, lora, seed=config.seed)
    params = merge(adapters, params)
    result = fit(params, task, config, adapters=adapters, log=log)
    test_counts = eval_split_counts(
        result.best.params, task.spec, task.tokenizer, task.test, config
    )
    return result, test_counts


def make_synthetic_task(seed, n_train, n_val, n_test, config, base_spec=None,
                        vocab_size=512):
    """Generate disjoint synthetic splits and prepare them for training."""
    train = generate_synthetic(seed, n_train)
    val = generate_synthetic(seed + 1, n_val)
    test = generate_synthetic(seed + 2, n_test)
    return prepare_task(train, val, test, config, base_spec, vocab_size)
