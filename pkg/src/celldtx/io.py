"""Model files and CSV artifacts.

The model file is JSON.  Floats are written with ``repr`` precision, so
save -> load -> forward is bit-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .actions import ActionSpace
from .agent import CellDtxAgent
from .harness import EpisodeRecord, LoadReport, SweepResult
from .neural import AdamState, Mlp
from .rewards import RewardSpec

MODEL_FORMAT = "celldtx-model"
MODEL_VERSION = 1


class ModelFormatError(ValueError):
    pass


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    if isinstance(v, list):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.integer):
        return int(v)
    return v


def model_to_dict(agent: CellDtxAgent, actions: ActionSpace, reward: RewardSpec, seed: int) -> dict:
    if not agent.is_ready:
        raise ValueError("agent has not fitted its normalizers; nothing to save")
    net = agent.net_
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "seed": int(seed),
        "layer_sizes": net.layer_sizes,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "normalizers": agent.normalizers_.tolist(),
        "actions": actions.to_list(),
        "reward": reward.to_dict(),
        "agent_params": {k: _jsonable(v) for k, v in agent.get_params().items()},
        "training_steps": int(agent.n_steps_),
    }


def save_model(path, agent, actions, reward, seed) -> None:
    text = json.dumps(model_to_dict(agent, actions, reward, seed), sort_keys=True)
    Path(path).write_text(text + "\n")


def load_model(path) -> tuple[CellDtxAgent, ActionSpace, RewardSpec, int]:
    """Rebuild an inference-ready agent, its action space, reward spec and seed."""
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(d, dict) or d.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: not a {MODEL_FORMAT} file")
    try:
        return _model_from_dict(d)
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model file ({exc!r})") from None


def _model_from_dict(d: dict):
    if d.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {d.get('version')}")
    weights = [np.asarray(w, dtype=float) for w in d["weights"]]
    biases = [np.asarray(b, dtype=float) for b in d["biases"]]
    net = Mlp(weights, biases)
    if net.layer_sizes != d["layer_sizes"]:
        raise ModelFormatError("layer sizes do not match the stored parameters")
    actions = ActionSpace.from_list(d["actions"])
    if len(actions) != net.layer_sizes[-1]:
        raise ModelFormatError("action space size does not match the output layer")
    params = dict(d["agent_params"])
    params["hidden_layer_sizes"] = tuple(params["hidden_layer_sizes"])
    agent = CellDtxAgent(**params)
    agent._initialize(net.layer_sizes[0])
    agent.net_ = net
    agent.adam_ = AdamState.for_net(net, lr=agent.learning_rate)
    agent.normalizers_ = np.asarray(d["normalizers"], dtype=float)
    agent.n_steps_ = int(d.get("training_steps", 0))
    return agent, actions, RewardSpec.from_dict(d["reward"]), int(d["seed"])


def write_convergence(path, q_log) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "mean_max_q", "loss_moving_average"])
        for step, q, loss in q_log:
            w.writerow([int(step), repr(float(q)), repr(float(loss))])


def read_convergence(path) -> list[tuple[int, float, float]]:
    with open(path, newline="") as fh:
        return [
            (int(r["step"]), float(r["mean_max_q"]), float(r["loss_moving_average"]))
            for r in csv.DictReader(fh)
        ]


def write_records(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EpisodeRecord.header())
        for r in records:
            w.writerow(r.row())


def read_records(path) -> list[EpisodeRecord]:
    with open(path, newline="") as fh:
        return [EpisodeRecord.from_row(r) for r in csv.DictReader(fh)]


def write_sweep(path, sweep: SweepResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["action", "cycle_length", "on_duration", "x", "y", "reward", "best"])
        for r in sweep.rows:
            w.writerow([r.action, r.cycle_length, r.on_duration, repr(r.x), repr(r.y),
                        repr(r.reward), int(r.action == sweep.best)])


def write_report(path, report: LoadReport, table_path=None, series_path=None) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(report.rows())
    if table_path is not None:
        Path(table_path).write_text(report.table() + "\n")
    if series_path is not None:
        Path(series_path).write_text(json.dumps(report.series(), indent=2, sort_keys=True) + "\n")
