"""Batch evaluation: algorithm runners, prediction-difference curves, and
state-error tables.

All algorithms are evaluated on one shared batch of examples. The
prediction of algorithm A for example e at context length t is its one-step
forecast of ``y_t`` given the system parameters it is entitled to see plus
``h_1, y_1, ..., h_{t-1}, y_{t-1}, h_t`` (and ``u_t`` when controls are
present). The mean squared prediction difference (MSPD) between two
algorithms at length t is the batch mean of the squared difference of
those forecasts, averaged over measurement components.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import codec, kernels
from .baselines import sgd_estimate  # noqa: F401  (re-exported for harness users)
from .codec import ContextMatrix
from .errors import AlignmentError, ConfigurationError
from .filters import dual_kf_run, kf_run
from .sampler import SamplerConfig, example_rng, sample_example
from .ssm import SystemParams
from .tape import build_tape, compile_dual_kf_program, compile_kf_program, run_steps

__all__ = [
    "AlgorithmId",
    "Example",
    "evaluate",
    "examples_from_dataset",
    "generate_dataset",
    "mspd",
    "mspd_curve",
    "parse_algorithm_id",
    "predictions_for",
    "state_estimates_for",
    "state_mse",
]


# ---------------------------------------------------------------------------
# Algorithm identifiers
# ---------------------------------------------------------------------------

_PLAIN = ("kf", "kf-seq", "dual-kf", "vm-kf", "vm-dual", "ols")
_PARAMETRIC = ("sgd", "ridge", "external")
_ID_RE = re.compile(r"^(?P<name>[\w-]+)\((?P<param>.*)\)$")


@dataclass(frozen=True)
class AlgorithmId:
    """A named prediction algorithm, e.g. ``kf`` or ``sgd(0.01)``."""

    name: str
    param: float | str | None = None

    def __post_init__(self):
        if self.name in _PLAIN:
            if self.param is not None:
                raise ConfigurationError(f"{self.name} takes no parameter")
        elif self.name == "sgd":
            if not (isinstance(self.param, float) and self.param > 0):
                raise ConfigurationError("sgd requires a learning rate > 0")
        elif self.name == "ridge":
            if not (isinstance(self.param, float) and self.param >= 0):
                raise ConfigurationError("ridge requires lambda >= 0")
        elif self.name == "external":
            if not isinstance(self.param, str):
                raise ConfigurationError("external requires a predictions path")
        else:
            raise ConfigurationError(f"unknown algorithm {self.name!r}")

    def __str__(self) -> str:
        if self.param is None:
            return self.name
        if isinstance(self.param, float):
            return f"{self.name}({self.param:g})"
        return f"{self.name}({self.param})"


def parse_algorithm_id(s: str) -> AlgorithmId:
    s = s.strip()
    m = _ID_RE.match(s)
    if m:
        name, param = m.group("name"), m.group("param")
        if name == "external":
            return AlgorithmId(name, param)
        try:
            return AlgorithmId(name, float(param))
        except ValueError:
            raise ConfigurationError(f"bad parameter in algorithm id {s!r}") from None
    return AlgorithmId(s)


# ---------------------------------------------------------------------------
# Shared example batches
# ---------------------------------------------------------------------------

@dataclass
class Example:
    """One dataset record, decoded back into arrays."""

    params: SystemParams
    x_seq: np.ndarray        # (N+1, n) ground-truth states
    y_seq: np.ndarray        # (N, m)
    context: ContextMatrix


def generate_dataset(sampler: SamplerConfig, count: int, scheme: str,
                     step: int = 0) -> dict:
    """Sample a batch on per-example substreams and encode it as a dataset
    document (the same structure :func:`ickalman.codec.read_dataset` returns)."""
    if count < 1:
        raise ConfigurationError(f"count must be >= 1, got {count}")
    if scheme == "control" and not sampler.with_control:
        sampler = SamplerConfig(**{**sampler.to_dict(), "with_control": True})
    examples = [sample_example(sampler, step, example_rng(sampler.seed, i))
                for i in range(count)]
    return codec.dataset_document(examples, scheme, sampler.seed)


def examples_from_dataset(doc: dict) -> list[Example]:
    n, m, N, scheme = doc["n"], doc["m"], doc["N"], doc["scheme"]
    out = []
    for rec in doc["examples"]:
        ctx = ContextMatrix(data=np.asarray(rec["context"], dtype=np.float64),
                            scheme=scheme, n=n, m=m, N=N)
        p = rec["params"]
        dec = codec.decode(ctx)
        params = SystemParams(
            n=n, m=m,
            F=np.asarray(p["F"], dtype=np.float64),
            Q=np.asarray(p["Q"], dtype=np.float64),
            R=np.asarray(p["R"], dtype=np.float64),
            H_seq=dec.H_seq,
            B=None if p.get("B") is None else np.asarray(p["B"], dtype=np.float64),
            u_seq=(None if p.get("u_seq") is None
                   else np.asarray(p["u_seq"], dtype=np.float64)),
        )
        out.append(Example(params=params,
                           x_seq=np.asarray(rec["states"], dtype=np.float64),
                           y_seq=np.asarray(rec["targets"],
                                            dtype=np.float64).reshape(N, m),
                           context=ctx))
    return out


def _stack(examples: list[Example]):
    F = np.stack([e.params.F for e in examples])
    Q = np.stack([e.params.Q for e in examples])
    H = np.stack([e.params.H_seq for e in examples])
    r = np.stack([e.params.r_diag for e in examples])
    y = np.stack([e.y_seq for e in examples])
    return F, Q, H, r, y


def _drift(examples: list[Example]):
    if examples[0].params.B is None:
        return None
    return np.stack([(e.params.u_seq @ e.params.B.T) for e in examples])


# ---------------------------------------------------------------------------
# Prediction runners
# ---------------------------------------------------------------------------

def _require_scalar(examples, algo):
    if examples[0].params.m != 1:
        raise ConfigurationError(f"{algo} requires scalar measurements")


def _require_no_control(examples, algo):
    if examples[0].params.B is not None:
        raise ConfigurationError(f"{algo} does not support control inputs")


def _kf_predictions(examples, sequential: bool):
    F, Q, H, r, y = _stack(examples)
    B, N, m, n = H.shape
    x0 = np.zeros((B, n))
    P0 = np.broadcast_to(np.eye(n), (B, n, n)).copy()
    drift = _drift(examples)
    if sequential:
        preds, x_filt = kernels.seq_kf_forward(F, Q, H, r, y, x0, P0, drift)
    elif m == 1:
        preds, x_filt = kernels.scalar_kf_forward(
            F, Q, H[:, :, 0, :], r[:, 0], y[:, :, 0], x0, P0, drift)
        preds = preds[:, :, None]
    else:
        preds = np.empty((B, N, m))
        x_filt = np.empty((B, N + 1, n))
        for b, e in enumerate(examples):
            out = kf_run(e.params, e.y_seq, update="matrix")
            preds[b], x_filt[b] = out.y_pred, out.x_filt
    return preds, x_filt


def _dual_predictions(examples):
    B = len(examples)
    N, m = examples[0].y_seq.shape
    n = examples[0].params.n
    preds = np.empty((B, N, 1))
    x_filt = np.empty((B, N + 1, n))
    for b, e in enumerate(examples):
        states, y_pred = dual_kf_run(e.params.Q, e.params.R[0, 0],
                                     e.params.H_seq, e.y_seq)
        preds[b, :, 0] = y_pred
        x_filt[b] = np.stack([s.state.x_hat for s in states])
    return preds, x_filt


def _vm_predictions(examples, mode: str):
    n = examples[0].params.n
    N = examples[0].y_seq.shape[0]
    scheme = "scalar" if mode == "kf" else "scalar-no-params"
    program = (compile_kf_program(n, N) if mode == "kf"
               else compile_dual_kf_program(n, N))
    B = len(examples)
    preds = np.empty((B, N, 1))
    x_filt = np.empty((B, N + 1, n))
    x_filt[:, 0] = 0.0
    for b, e in enumerate(examples):
        ctx = codec.encode(e.params, e.y_seq, scheme)
        tape = build_tape(ctx, mode)
        snaps = run_steps(tape, program)
        preds[b, :, 0] = [s.y_pred for s in snaps]
        x_filt[b, 1:] = np.stack([s.x_hat for s in snaps])
    return preds, x_filt


def _sgd_state_paths(examples, alpha: float):
    """Running SGD estimate after every measurement row; returns (B, N+1, n)
    with index t holding the estimate after all rows of steps 1..t."""
    F, Q, H, r, y = _stack(examples)
    B, N, m, n = H.shape
    x = np.zeros((B, n))
    path = np.empty((B, N + 1, n))
    path[:, 0] = x
    for t in range(N):
        for j in range(m):
            hj = H[:, t, j]
            resid = np.einsum("bi,bi->b", hj, x) - y[:, t, j]
            x = x - 2.0 * alpha * resid[:, None] * hj
        path[:, t + 1] = x
    return path


def _sgd_predictions(examples, alpha: float):
    H = np.stack([e.params.H_seq for e in examples])
    path = _sgd_state_paths(examples, alpha)
    preds = np.einsum("btmi,bti->btm", H, path[:, :-1])
    return preds, path


def _svd_regression_states(examples, lam: float | None):
    """Per-length regression estimates via one batched SVD per length.

    ``lam=None`` gives the minimum-norm least-squares solution (pseudo
    inverse); ``lam>0`` the ridge solution. Returns (B, N+1, n) where index
    t is the estimate from all measurement rows of steps 1..t.
    """
    F, Q, H, r, y = _stack(examples)
    B, N, m, n = H.shape
    A = H.reshape(B, N * m, n)
    rhs = y.reshape(B, N * m)
    states = np.zeros((B, N + 1, n))
    for t in range(1, N + 1):
        rows = t * m
        u, s, vt = np.linalg.svd(A[:, :rows, :], full_matrices=False)
        if lam is None:
            cutoff = np.finfo(np.float64).eps * max(rows, n) * s[:, :1]
            inv = np.where(s > cutoff, 1.0 / np.where(s > 0, s, 1.0), 0.0)
        else:
            inv = s / (s * s + lam)
        uty = np.einsum("brk,br->bk", u, rhs[:, :rows])
        states[:, t] = np.einsum("bkn,bk->bn", vt, inv * uty)
    return states


def _regression_predictions(examples, lam: float | None):
    H = np.stack([e.params.H_seq for e in examples])
    states = _svd_regression_states(examples, lam)
    preds = np.einsum("btmi,bti->btm", H, states[:, :-1])
    return preds, states


def _external_predictions(examples, path: str):
    doc = codec.read_predictions(path)
    B = len(examples)
    N, m = examples[0].y_seq.shape
    if (doc["count"], doc["N"], doc["m"]) != (B, N, m):
        raise AlignmentError(
            f"{path}: predictions describe ({doc['count']}, {doc['N']}, "
            f"{doc['m']}) but the dataset has ({B}, {N}, {m})")
    return np.asarray(doc["predictions"], dtype=np.float64), None


def predictions_for(examples: list[Example], algo: AlgorithmId) -> np.ndarray:
    """One-step predictions of ``algo`` on the batch, shape (B, N, m)."""
    preds, _ = _run(examples, algo)
    return preds


def state_estimates_for(examples: list[Example], algo: AlgorithmId) -> np.ndarray:
    """State estimates of ``algo``: (B, N+1, n); index t is the estimate of
    x_t after absorbing the measurements of steps 1..t."""
    _, states = _run(examples, algo)
    if states is None:
        raise ConfigurationError(f"{algo} does not expose state estimates")
    return states


def _run(examples, algo: AlgorithmId):
    if not examples:
        raise ConfigurationError("empty example batch")
    if algo.name == "kf":
        return _kf_predictions(examples, sequential=False)
    if algo.name == "kf-seq":
        return _kf_predictions(examples, sequential=True)
    if algo.name == "dual-kf":
        _require_scalar(examples, algo)
        _require_no_control(examples, algo)
        return _dual_predictions(examples)
    if algo.name == "vm-kf":
        _require_scalar(examples, algo)
        _require_no_control(examples, algo)
        return _vm_predictions(examples, "kf")
    if algo.name == "vm-dual":
        _require_scalar(examples, algo)
        _require_no_control(examples, algo)
        return _vm_predictions(examples, "dual")
    if algo.name == "sgd":
        return _sgd_predictions(examples, algo.param)
    if algo.name == "ols":
        return _regression_predictions(examples, None)
    if algo.name == "ridge":
        return _regression_predictions(examples, algo.param)
    if algo.name == "external":
        return _external_predictions(examples, algo.param)
    raise ConfigurationError(f"unknown algorithm {algo.name!r}")


# ---------------------------------------------------------------------------
# MSPD and state error
# ---------------------------------------------------------------------------

def _pred_array(preds) -> np.ndarray:
    if isinstance(preds, dict):
        return np.asarray(preds["predictions"], dtype=np.float64)
    return np.asarray(preds, dtype=np.float64)


def _check_aligned(a, b) -> None:
    if isinstance(a, dict) and isinstance(b, dict):
        for key in ("count", "N", "m"):
            if a[key] != b[key]:
                raise AlignmentError(
                    f"prediction files disagree on {key}: {a[key]} vs {b[key]}")
        sa, sb = a.get("dataset_seed"), b.get("dataset_seed")
        if sa is not None and sb is not None and sa != sb:
            raise AlignmentError(
                f"prediction files come from different datasets "
                f"(seed {sa} vs {sb})")


def mspd(preds_a, preds_b, at_length: int) -> float:
    """Mean squared prediction difference at one context length (1-based);
    for multi-component measurements the squared differences are averaged
    over components."""
    _check_aligned(preds_a, preds_b)
    a, b = _pred_array(preds_a), _pred_array(preds_b)
    if a.shape != b.shape:
        raise AlignmentError(f"prediction shapes differ: {a.shape} vs {b.shape}")
    if not 1 <= at_length <= a.shape[1]:
        raise ConfigurationError(f"context length {at_length} out of range "
                                 f"1..{a.shape[1]}")
    d = a[:, at_length - 1] - b[:, at_length - 1]
    return float(np.mean(np.mean(d * d, axis=-1)))


def mspd_curve(preds_a, preds_b):
    """MSPD at every context length. Returns (values (N,), stderr (N,))
    where stderr is the standard error of the per-example mean."""
    _check_aligned(preds_a, preds_b)
    a, b = _pred_array(preds_a), _pred_array(preds_b)
    if a.shape != b.shape:
        raise AlignmentError(f"prediction shapes differ: {a.shape} vs {b.shape}")
    d2 = np.mean((a - b) ** 2, axis=-1)          # (B, N)
    values = d2.mean(axis=0)
    stderr = d2.std(axis=0, ddof=1) / np.sqrt(d2.shape[0]) if d2.shape[0] > 1 \
        else np.zeros_like(values)
    return values, stderr


def state_mse(examples: list[Example], algo: AlgorithmId):
    """Squared state-estimation error per context length.

    Returns ``(mse_final, mse_all)``: ``mse_final[t-1]`` is the batch mean
    of ``||x_hat(t) - x_t||^2`` and ``mse_all[t-1]`` the running mean of
    ``mse_final`` over lengths 1..t.
    """
    states = state_estimates_for(examples, algo)
    truth = np.stack([e.x_seq for e in examples])
    err = states[:, 1:] - truth[:, 1:]
    mse_final = np.mean(np.sum(err * err, axis=-1), axis=0)
    mse_all = np.cumsum(mse_final) / np.arange(1, mse_final.shape[0] + 1)
    return mse_final, mse_all


# ---------------------------------------------------------------------------
# The full evaluation pipeline
# ---------------------------------------------------------------------------

def _all_pairs(names):
    return [(names[i], names[j])
            for i in range(len(names)) for j in range(i + 1, len(names))]


def evaluate(config: dict, seed_override: int | None = None) -> dict:
    """Run the full MSPD evaluation described by ``config``.

    Returns a result dictionary with the dataset document, per-algorithm
    predictions, MSPD rows, and (optionally) state-error rows. See
    :mod:`ickalman.cli` for the file-producing wrapper.
    """
    if "dataset" not in config:
        raise ConfigurationError("evaluation config needs a 'dataset' entry")
    ds_cfg = config["dataset"]
    sampler_dict = dict(ds_cfg.get("sampler", {}))
    if seed_override is not None:
        sampler_dict["seed"] = seed_override
    sampler = SamplerConfig.from_dict(sampler_dict)
    scheme = ds_cfg.get("scheme", "scalar")
    doc = generate_dataset(sampler, ds_cfg.get("count", 100), scheme,
                           ds_cfg.get("step", 0))
    examples = examples_from_dataset(doc)

    algo_ids = [parse_algorithm_id(s) for s in config.get("algorithms", ["kf"])]
    names = [str(a) for a in algo_ids]
    preds = {str(a): predictions_for(examples, a) for a in algo_ids}

    pairs = config.get("pairs")
    pairs = _all_pairs(names) if pairs is None else [tuple(p) for p in pairs]
    batch = len(examples)
    N = examples[0].y_seq.shape[0]

    mspd_rows = []
    for a_name, b_name in pairs:
        if a_name not in preds or b_name not in preds:
            raise ConfigurationError(f"pair ({a_name}, {b_name}) references an "
                                     "algorithm not in the 'algorithms' list")
        values, stderr = mspd_curve(preds[a_name], preds[b_name])
        for t in range(N):
            mspd_rows.append({"context_length": t + 1,
                              "algorithm_a": a_name, "algorithm_b": b_name,
                              "mspd": float(values[t]),
                              "stderr": float(stderr[t]), "batch": batch})

    state_rows = []
    if config.get("state_mse", False):
        for algo, name in zip(algo_ids, names):
            if algo.name == "external":
                continue
            mse_final, mse_all = state_mse(examples, algo)
            for t in range(N):
                state_rows.append({"context_length": t + 1, "algorithm": name,
                                   "mse_final": float(mse_final[t]),
                                   "mse_all": float(mse_all[t]), "batch": batch})

    return {"dataset": doc, "examples": examples, "predictions": preds,
            "algorithms": names, "mspd_rows": mspd_rows, "state_rows": state_rows}


def mspd_rows_to_csv(rows) -> str:
    lines = ["context_length,algorithm_a,algorithm_b,mspd,stderr,batch"]
    for r in rows:
        lines.append(f"{r['context_length']},{r['algorithm_a']},"
                     f"{r['algorithm_b']},{r['mspd']!r},{r['stderr']!r},"
                     f"{r['batch']}")
    return "\n".join(lines) + "\n"


def state_rows_to_csv(rows) -> str:
    lines = ["context_length,algorithm,mse_final,mse_all,batch"]
    for r in rows:
        lines.append(f"{r['context_length']},{r['algorithm']},"
                     f"{r['mse_final']!r},{r['mse_all']!r},{r['batch']}")
    return "\n".join(lines) + "\n"
