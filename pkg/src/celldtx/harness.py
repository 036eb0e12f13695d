"""Episode orchestration: training, inference, baseline, oracle sweeps and reports.

Every random draw comes from a stream keyed by (master seed, mode, episode,
cell, purpose), so agent, baseline and oracle runs that share a key see
byte-identical traffic.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import cellsim
from .actions import DEFAULT_CYCLES, DEFAULT_ON_DURATIONS, ActionSpace, DtxConfig, enumerate_actions
from .agent import CellDtxAgent
from .cellsim import CellScenario
from .metrics import OBSERVATION_FIELDS, extract_observation, period_metrics
from .rewards import RewardSpec
from .traffic import (
    DELAY_REQUIREMENTS,
    MEAN_INTERARRIVALS,
    PACKET_SIZES,
    Trace,
    build_trace,
    offered_load,
    sample_ue_profiles,
)

log = logging.getLogger(__name__)

# stream keys
TRAIN, INFER, PROBE = 1, 2, 3
DEPLOY, TRAFFIC, EXPLORE, OFFSET, AGENT = 0, 1, 2, 3, 4

LIGHT_MAX, HEAVY_MIN = 0.4, 0.8
CATEGORIES = ("light", "medium", "heavy")


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


@dataclass
class ScenarioConfig:
    n_cells: int = 21
    ues_per_cell: float = 10.0
    capacity_mode: str = "load"
    capacity_range: tuple = (250.0, 2500.0)
    utilization_range: tuple = (0.05, 0.95)
    packet_sizes: tuple = PACKET_SIZES
    interarrivals: tuple = MEAN_INTERARRIVALS
    delay_reqs: tuple = DELAY_REQUIREMENTS
    min_deadline: int = 50
    cycle_set: tuple = DEFAULT_CYCLES
    on_set: tuple = DEFAULT_ON_DURATIONS
    reset_ms: int = 500
    train_step_ms: int = 1500
    infer_step_ms: int = 1000
    infer_steps: int = 10
    drain_ms: int = 100
    train_episodes: int = 500
    infer_episodes: int = 10
    reward: RewardSpec = field(default_factory=lambda: RewardSpec("qos_approx"))
    agent: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        for name in ("reset_ms", "train_step_ms", "infer_step_ms", "drain_ms", "min_deadline"):
            v = getattr(self, name)
            if int(v) != v or v <= 0:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        lo, hi = self.capacity_range
        if not 0 < lo <= hi:
            raise ValueError("capacity_range must satisfy 0 < low <= high")
        lo, hi = self.utilization_range
        if not 0 < lo <= hi:
            raise ValueError("utilization_range must satisfy 0 < low <= high")
        if self.capacity_mode not in ("load", "absolute"):
            raise ValueError("capacity_mode must be 'load' or 'absolute'")
        if self.drain_ms < max(self.delay_reqs):
            raise ValueError("drain_ms must cover the largest delay requirement")
        if min(self.delay_reqs) < self.min_deadline:
            raise ValueError("a delay requirement is below min_deadline")
        if isinstance(self.reward, dict):
            self.reward = RewardSpec.from_dict(self.reward)
        for name in ("capacity_range", "utilization_range", "packet_sizes", "interarrivals", "delay_reqs",
                     "cycle_set", "on_set"):
            setattr(self, name, tuple(getattr(self, name)))

    def action_space(self) -> ActionSpace:
        return enumerate_actions(self.min_deadline, self.cycle_set, self.on_set)

    def make_agent(self) -> CellDtxAgent:
        params = {"n_actions": len(self.action_space()), "random_state": [self.seed, AGENT]}
        params.update(self.agent)
        if "hidden_layer_sizes" in params:
            params["hidden_layer_sizes"] = tuple(params["hidden_layer_sizes"])
        return CellDtxAgent(**params)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["reward"] = self.reward.to_dict()
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class Cell:
    """One independently simulated cell of an episode with its traffic."""

    scenario: CellScenario
    trace: Trace

    @property
    def capacity(self) -> float:
        return self.scenario.capacity


def sample_cell(cfg: ScenarioConfig, rng: np.random.Generator) -> CellScenario:
    """Draw UE count, UE profiles and a constant capacity for one cell.

    In ``"load"`` mode the capacity is the cell's mean offered load divided
    by a target utilisation drawn uniformly from ``utilization_range``; in
    ``"absolute"`` mode it is log-uniform over ``capacity_range`` bytes/TTI.
    """
    n_ues = max(1, int(rng.poisson(cfg.ues_per_cell)))
    profiles = sample_ue_profiles(rng, n_ues, cfg.packet_sizes, cfg.interarrivals, cfg.delay_reqs)
    if cfg.capacity_mode == "load":
        rho = rng.uniform(*cfg.utilization_range)
        capacity = offered_load(profiles) / rho
    else:
        lo, hi = cfg.capacity_range
        capacity = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    return CellScenario(float(capacity), tuple(profiles))


def deploy(cfg: ScenarioConfig, mode: int, episode: int, duration: int) -> list[Cell]:
    cells = []
    for c in range(cfg.n_cells):
        scen = sample_cell(cfg, stream(cfg.seed, mode, episode, c, DEPLOY))
        trace = build_trace(scen.ue_profiles, duration, stream(cfg.seed, mode, episode, c, TRAFFIC))
        cells.append(Cell(scen, trace))
    return cells


def simulate(cell: Cell, config: DtxConfig, t0: int, t1: int, drain: int) -> cellsim.SimResult:
    """Run the cell on its arrivals in [t0, t1), re-based to start at TTI 0."""
    return cellsim.run(cell.scenario, config, t1 - t0, drain, cell.trace.window(t0, t1))


ALWAYS_ON = DtxConfig(1, 1, 0)


def reset_observation(cell: Cell, cfg: ScenarioConfig) -> np.ndarray:
    res = simulate(cell, ALWAYS_ON, 0, cfg.reset_ms, cfg.drain_ms)
    return extract_observation(res).to_array()


@dataclass
class EpisodeRecord:
    mode: str
    episode: int
    cell: int
    step: int
    capacity: float
    action: int
    cycle_length: int
    on_duration: int
    start_offset: int
    x: float
    y: float
    prb_util: float
    reward: float
    observation: np.ndarray  # state the action was chosen from

    def row(self) -> list:
        head = [self.mode, self.episode, self.cell, self.step, repr(self.capacity),
                self.action, self.cycle_length, self.on_duration, self.start_offset,
                repr(self.x), repr(self.y), repr(self.prb_util), repr(self.reward)]
        return head + [repr(float(v)) for v in self.observation]

    @staticmethod
    def header() -> list[str]:
        return ["mode", "episode", "cell", "step", "capacity", "action", "cycle_length",
                "on_duration", "start_offset", "x", "y", "prb_util", "reward",
                *OBSERVATION_FIELDS]

    @classmethod
    def from_row(cls, row: dict) -> "EpisodeRecord":
        return cls(
            mode=row["mode"], episode=int(row["episode"]), cell=int(row["cell"]),
            step=int(row["step"]), capacity=float(row["capacity"]),
            action=int(row["action"]), cycle_length=int(row["cycle_length"]),
            on_duration=int(row["on_duration"]), start_offset=int(row["start_offset"]),
            x=float(row["x"]), y=float(row["y"]), prb_util=float(row["prb_util"]),
            reward=float(row["reward"]),
            observation=np.array([float(row[k]) for k in OBSERVATION_FIELDS]),
        )


def run_training_episode(
    agent: CellDtxAgent, cfg: ScenarioConfig, episode: int, actions: ActionSpace | None = None
) -> list[EpisodeRecord]:
    """One reset + one RL step on a fresh deployment; feeds the agent.

    Start offsets are 0 during training.
    """
    actions = actions or cfg.action_space()
    t_end = cfg.reset_ms + cfg.train_step_ms
    cells = deploy(cfg, TRAIN, episode, t_end)
    states = np.array([reset_observation(cell, cfg) for cell in cells])
    eps = agent.epsilon(episode)
    chosen = agent.select_actions(states, eps, stream(cfg.seed, TRAIN, episode, 0, EXPLORE))
    records = []
    for c, (cell, a) in enumerate(zip(cells, chosen)):
        conf = actions.config(int(a))
        res = simulate(cell, conf, cfg.reset_ms, t_end, cfg.drain_ms)
        pm = period_metrics(res)
        r = cfg.reward(pm.x, pm.y)
        records.append(EpisodeRecord(
            "train", episode, c, 0, cell.capacity, int(a), conf.cycle_length,
            conf.on_duration, 0, pm.x, pm.y, pm.prb_util, r, states[c],
        ))
    agent.partial_fit(states, chosen, [rec.reward for rec in records])
    return records


def train(
    cfg: ScenarioConfig,
    n_episodes: int | None = None,
    callback: Callable[[int, list[EpisodeRecord], CellDtxAgent], None] | None = None,
) -> tuple[CellDtxAgent, list[EpisodeRecord]]:
    actions = cfg.action_space()
    agent = cfg.make_agent()
    history = []
    n = cfg.train_episodes if n_episodes is None else n_episodes
    for ep in range(n):
        recs = run_training_episode(agent, cfg, ep, actions)
        history.extend(recs)
        if callback is not None:
            callback(ep, recs, agent)
        if (ep + 1) % 50 == 0:
            log.info("episode %d: eps=%.3f buffer=%d steps=%d", ep + 1,
                     agent.epsilon(ep), len(agent.buffer_), agent.n_steps_)
    return agent, history


Policy = Callable[[np.ndarray], np.ndarray]


def run_inference_episode(
    policy: Policy | None,
    cfg: ScenarioConfig,
    episode: int,
    actions: ActionSpace | None = None,
    mode: str = "infer",
) -> list[EpisodeRecord]:
    """Reset followed by ``cfg.infer_steps`` steps of greedy control.

    ``policy`` maps an (n_cells, 8) observation array to action indices;
    ``None`` keeps every cell always active (the baseline).  Non-trivial
    patterns get a uniformly random start offset.
    """
    actions = actions or cfg.action_space()
    t_end = cfg.reset_ms + cfg.infer_steps * cfg.infer_step_ms
    cells = deploy(cfg, INFER, episode, t_end)
    states = np.array([reset_observation(cell, cfg) for cell in cells])
    offset_rng = stream(cfg.seed, INFER, episode, 0, OFFSET)
    records = []
    for k in range(cfg.infer_steps):
        if policy is None:
            chosen = np.full(len(cells), actions.always_active_index)
        else:
            chosen = np.asarray(policy(states))
        t0 = cfg.reset_ms + k * cfg.infer_step_ms
        t1 = t0 + cfg.infer_step_ms
        next_states = np.empty_like(states)
        for c, (cell, a) in enumerate(zip(cells, chosen)):
            cycle, on = actions[int(a)]
            offset = int(offset_rng.integers(cycle)) if policy is not None else 0
            conf = DtxConfig(cycle, on, offset)
            res = simulate(cell, conf, t0, t1, cfg.drain_ms)
            pm = period_metrics(res)
            records.append(EpisodeRecord(
                mode, episode, c, k, cell.capacity, int(a), cycle, on, offset,
                pm.x, pm.y, pm.prb_util, cfg.reward(pm.x, pm.y), states[c],
            ))
            next_states[c] = extract_observation(
                res, fallback_capability=states[c][-1]).to_array()
        states = next_states
    return records


def run_inference(agent: CellDtxAgent, cfg: ScenarioConfig, n_episodes: int | None = None,
                  actions: ActionSpace | None = None) -> list[EpisodeRecord]:
    n = cfg.infer_episodes if n_episodes is None else n_episodes
    actions = actions or cfg.action_space()
    out = []
    for ep in range(n):
        out.extend(run_inference_episode(agent.predict, cfg, ep, actions))
    return out


def run_baseline(cfg: ScenarioConfig, n_episodes: int | None = None) -> list[EpisodeRecord]:
    n = cfg.infer_episodes if n_episodes is None else n_episodes
    actions = cfg.action_space()
    out = []
    for ep in range(n):
        out.extend(run_inference_episode(None, cfg, ep, actions, mode="baseline"))
    return out


# ---------------------------------------------------------------- oracle sweep


@dataclass
class ProbeCell:
    """A held-out cell plus repeated traffic realisations for brute-force evaluation."""

    scenario: CellScenario
    traces: list  # one Trace per repetition, each covering reset + step

    def cell(self, rep: int = 0) -> Cell:
        return Cell(self.scenario, self.traces[rep])


def make_probe_cell(cfg: ScenarioConfig, probe_id: int, repetitions: int = 4) -> ProbeCell:
    scen = sample_cell(cfg, stream(cfg.seed, PROBE, probe_id, 0, DEPLOY))
    duration = cfg.reset_ms + cfg.train_step_ms
    traces = [
        build_trace(scen.ue_profiles, duration, stream(cfg.seed, PROBE, probe_id, r, TRAFFIC))
        for r in range(repetitions)
    ]
    return ProbeCell(scen, traces)


@dataclass
class SweepRow:
    action: int
    cycle_length: int
    on_duration: int
    x: float
    y: float
    reward: float


@dataclass
class SweepResult:
    rows: list
    best: int

    def reward_of(self, action: int) -> float:
        return self.rows[action].reward

    @property
    def best_reward(self) -> float:
        return self.rows[self.best].reward


def oracle_sweep(
    cell_or_cells: Cell | Sequence[Cell],
    actions: ActionSpace,
    reward: RewardSpec,
    t0: int,
    t1: int,
    drain: int,
) -> SweepResult:
    """Evaluate every action on the same traffic realisations (common random numbers).

    Rewards are computed per repetition and averaged; the best action is the
    first one attaining the largest mean reward.
    """
    cells = [cell_or_cells] if isinstance(cell_or_cells, Cell) else list(cell_or_cells)
    rows = []
    for a, (cycle, on) in enumerate(actions):
        conf = DtxConfig(cycle, on, 0)
        xs, ys, rs = [], [], []
        for cell in cells:
            pm = period_metrics(simulate(cell, conf, t0, t1, drain))
            xs.append(pm.x)
            ys.append(pm.y)
            rs.append(reward(pm.x, pm.y))
        rows.append(SweepRow(a, cycle, on, float(np.mean(xs)), float(np.mean(ys)),
                             float(np.mean(rs))))
    best = int(np.argmax([r.reward for r in rows]))
    return SweepResult(rows, best)


def sweep_probe(cfg: ScenarioConfig, probe: ProbeCell, actions: ActionSpace | None = None):
    actions = actions or cfg.action_space()
    cells = [probe.cell(r) for r in range(len(probe.traces))]
    return oracle_sweep(cells, actions, cfg.reward, cfg.reset_ms,
                        cfg.reset_ms + cfg.train_step_ms, cfg.drain_ms)


def probe_agreement(agent: CellDtxAgent, cfg: ScenarioConfig, n_probes: int = 50,
                    repetitions: int = 4, tol: float = 0.05) -> list[dict]:
    """Agent choice vs brute-force best on held-out probe cells."""
    actions = cfg.action_space()
    out = []
    for pid in range(n_probes):
        probe = make_probe_cell(cfg, pid, repetitions)
        state = reset_observation(probe.cell(0), cfg)
        chosen = int(agent.predict(state[None, :])[0])
        sweep = sweep_probe(cfg, probe, actions)
        gap = sweep.best_reward - sweep.reward_of(chosen)
        out.append({
            "probe": pid, "capacity": probe.scenario.capacity, "chosen": chosen,
            "best": sweep.best, "chosen_reward": sweep.reward_of(chosen),
            "best_reward": sweep.best_reward, "gap": gap, "ok": gap <= tol,
        })
    return out


# --------------------------------------------------------------------- report


def categorize(util: float) -> str:
    """Load category from baseline PRB utilisation: [0,.4) / [.4,.8] / (.8,1]."""
    if util < LIGHT_MAX:
        return "light"
    if util <= HEAVY_MIN:
        return "medium"
    return "heavy"


@dataclass
class CategoryStats:
    category: str
    n_cells: int
    agent_power: float
    baseline_power: float
    agent_y: float
    baseline_y: float

    @property
    def energy_saving(self) -> float:
        if self.n_cells == 0:
            return float("nan")
        return 1.0 - self.agent_power / self.baseline_power

    @property
    def rate_loss(self) -> float:
        if self.n_cells == 0:
            return float("nan")
        return 1.0 - self.agent_y / self.baseline_y


@dataclass
class LoadReport:
    categories: dict

    def __getitem__(self, name) -> CategoryStats:
        return self.categories[name]

    def rows(self) -> list[list]:
        out = [["category", "n_cells", "agent_power", "baseline_power", "agent_y",
                "baseline_y", "energy_saving", "rate_loss"]]
        for name in CATEGORIES:
            s = self.categories[name]
            out.append([name, s.n_cells, repr(s.agent_power), repr(s.baseline_power),
                        repr(s.agent_y), repr(s.baseline_y), repr(s.energy_saving),
                        repr(s.rate_loss)])
        return out

    def table(self) -> str:
        lines = [f"{'load':<8}{'cells':>6}{'P agent':>10}{'P base':>10}{'y agent':>9}"
                 f"{'y base':>9}{'saving':>9}{'loss':>8}"]
        for name in CATEGORIES:
            s = self.categories[name]
            if s.n_cells == 0:
                lines.append(f"{name:<8}{0:>6}  (no cells)")
                continue
            lines.append(
                f"{name:<8}{s.n_cells:>6}{s.agent_power:>10.2f}{s.baseline_power:>10.2f}"
                f"{s.agent_y:>9.4f}{s.baseline_y:>9.4f}{100 * s.energy_saving:>8.1f}%"
                f"{100 * s.rate_loss:>7.2f}%"
            )
        return "\n".join(lines)

    def series(self) -> dict:
        """Bar-chart series for power and delivered-ratio comparisons."""
        names = [n for n in CATEGORIES if self.categories[n].n_cells]
        return {
            "categories": names,
            "power": {
                "agent": [self.categories[n].agent_power for n in names],
                "baseline": [self.categories[n].baseline_power for n in names],
            },
            "delivered_ratio": {
                "agent": [self.categories[n].agent_y for n in names],
                "baseline": [self.categories[n].baseline_y for n in names],
            },
        }


def _per_cell(records: Iterable[EpisodeRecord]) -> dict:
    acc = {}
    for r in records:
        acc.setdefault((r.episode, r.cell), []).append(r)
    return {
        k: (np.mean([r.x for r in v]), np.mean([r.y for r in v]),
            np.mean([r.prb_util for r in v]))
        for k, v in acc.items()
    }


def categorize_and_report(agent_records, baseline_records) -> LoadReport:
    agent = _per_cell(agent_records)
    base = _per_cell(baseline_records)
    if set(agent) != set(base):
        raise ValueError("agent and baseline records cover different cells")
    groups = {name: [] for name in CATEGORIES}
    for key in sorted(base):
        groups[categorize(base[key][2])].append(key)
    cats = {}
    for name, keys in groups.items():
        if not keys:
            cats[name] = CategoryStats(name, 0, float("nan"), float("nan"),
                                       float("nan"), float("nan"))
            continue
        cats[name] = CategoryStats(
            name, len(keys),
            agent_power=float(np.mean([agent[k][0] for k in keys])) * cellsim.MAX_DL_POWER,
            baseline_power=float(np.mean([base[k][0] for k in keys])) * cellsim.MAX_DL_POWER,
            agent_y=float(np.mean([agent[k][1] for k in keys])),
            baseline_y=float(np.mean([base[k][1] for k in keys])),
        )
    return LoadReport(cats)
