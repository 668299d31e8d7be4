"""Episode and campaign orchestration.

A campaign runs ``repetitions`` independent repetitions of one technique on
one route. Each repetition owns a fresh agent and rng (seed ``base_seed + r``)
and plays episodes back to back until ``budget_steps`` simulator ticks are
spent; learned state carries over between episodes.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from adsbench import __version__
from adsbench.deepq import DqnConfig, DqnTestingAgent, ObsNormalizer
from adsbench.agents import FRAMES, MorlotAgent, QAgent, RandomAgent, encode_observation
from adsbench.microworld import WorldState, apply_action, blocked_by_halted_vif, reset_scenario, step
from adsbench.monitors import (
    REQUIREMENTS,
    DetectionMode,
    DistanceVector,
    Requirement,
    SensorReadings,
    ViolationEvent,
    compute_distances,
    detect_violations,
    fuse_distances,
    read_sensors,
    reward_vector,
)
from adsbench.routes import ROUTE_IDS, ConfigError, RouteSpec, builtin_route

TECHNIQUES = ("random", "q", "morlot", "dqn")
MODES = ("replication", "extension")
CAUSES = ("destination", "timeout", "collision", "overtake")
TIMELINE_SAMPLES = 12


@dataclass(frozen=True)
class CampaignConfig:
    technique: str = "random"
    route: str = "straight"
    mode: str = "replication"
    detection: str | None = None  # None: technique default
    budget_steps: int = 200_000
    episode_timeout: int = 600
    repetitions: int = 1
    base_seed: int = 0
    eps_start: float = 1.0
    eps_end: float = 0.1
    anneal_fraction: float = 0.2
    action_repeat: int = 1
    frame: str | None = None  # None: technique default
    key_decimals: int | None = None  # None: full precision
    alpha: float = 0.1
    gamma: float = 0.99
    tie_break: str = "random"
    spawn_jitter: float = 0.05  # m, uniform per axis per actor at each reset
    growth_interval: int = 1000
    record_ticks: bool = False
    log_selection: bool = False
    route_file: str | None = None
    dqn_lr: float = 1e-3
    dqn_batch: int = 64
    dqn_capacity: int = 100_000
    dqn_target_sync: int = 1_000
    dqn_warmup: int = 1_000
    dqn_train_every: int = 1
    dqn_reward_scale: float = 0.1

    def __post_init__(self) -> None:
        if self.technique not in TECHNIQUES:
            raise ConfigError(f"unknown technique {self.technique!r}")
        if self.route_file is None and self.route not in ROUTE_IDS:
            raise ConfigError(f"unknown route {self.route!r}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.detection is not None:
            DetectionMode(self.detection)
        if self.frame is not None and self.frame not in FRAMES:
            raise ConfigError(f"unknown frame {self.frame!r}")
        if self.episode_timeout < 1:
            raise ConfigError("episode_timeout must be >= 1")
        if self.budget_steps <= self.episode_timeout:
            raise ConfigError("budget_steps must exceed episode_timeout")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if not 0.0 < self.anneal_fraction <= 1.0:
            raise ConfigError("anneal_fraction must be in (0, 1]")
        if not (0.0 <= self.eps_end <= 1.0 and 0.0 <= self.eps_start <= 1.0):
            raise ConfigError("epsilon values must be in [0, 1]")
        if self.action_repeat < 1:
            raise ConfigError("action_repeat must be >= 1")
        if self.key_decimals is not None and self.key_decimals < 0:
            raise ConfigError("key_decimals must be >= 0")
        if self.tie_break not in ("random", "lowest"):
            raise ConfigError("tie_break must be 'random' or 'lowest'")
        if self.spawn_jitter < 0.0:
            raise ConfigError("spawn_jitter must be >= 0")
        if self.growth_interval < 1:
            raise ConfigError("growth_interval must be >= 1")

    @property
    def detection_mode(self) -> DetectionMode:
        if self.detection is not None:
            return DetectionMode(self.detection)
        return DetectionMode.SENSOR if self.technique == "random" else DetectionMode.FUSED

    @property
    def observation_frame(self) -> str:
        """Tabular keys use the absolute layout; the DQN sees EV-relative features."""
        if self.frame is not None:
            return self.frame
        return "relative" if self.technique == "dqn" else "absolute"

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CampaignConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def load_route(self) -> RouteSpec:
        if self.route_file is not None:
            from adsbench.routes import load_route

            return load_route(self.route_file)
        return builtin_route(self.route)

    def dqn_config(self) -> DqnConfig:
        return DqnConfig(
            gamma=self.gamma, lr=self.dqn_lr, batch=self.dqn_batch, capacity=self.dqn_capacity,
            target_sync=self.dqn_target_sync, warmup=self.dqn_warmup, train_every=self.dqn_train_every,
            reward_scale=self.dqn_reward_scale,
        )

    def campaign_id(self) -> str:
        digest = hashlib.sha1(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:8]
        return f"{self.technique}-{self.route}-{self.mode}-{self.detection_mode.value}-s{self.base_seed}-{digest}"


def epsilon_at(step: int, config: CampaignConfig) -> float:
    """Linear anneal from eps_start to eps_end over the first anneal_fraction of the budget."""
    horizon = config.anneal_fraction * config.budget_steps
    if step >= horizon:
        return config.eps_end
    return config.eps_start + (config.eps_end - config.eps_start) * (step / horizon)


def overtake_detected(world: WorldState) -> bool:
    return world.project("ev").s > world.project("vif").s + world.ev.length


# -- per-episode records -------------------------------------------------------


@dataclass
class TickRecord:
    tick: int
    action: int
    distances: DistanceVector
    sensors: SensorReadings
    rewards: tuple[float, ...]


@dataclass
class EpisodeLog:
    episode: int
    start_step: int
    ticks: int = 0
    cause: str | None = None
    events: list[ViolationEvent] = field(default_factory=list)
    vif_xy: list[tuple[float, float]] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    records: list[TickRecord] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(e.requirement is Requirement.R2_DV for e in self.events)


def make_agent(config: CampaignConfig, route: RouteSpec, seed: int):
    if config.technique == "random":
        return RandomAgent()
    if config.technique == "q":
        return QAgent(Requirement.R2_DV, config.key_decimals, config.alpha, config.gamma, config.tie_break)
    if config.technique == "morlot":
        return MorlotAgent(config.key_decimals, config.alpha, config.gamma, config.tie_break)
    # learning randomness is drawn from its own stream, so the action stream
    # stays the one RANDOM would see
    normalizer = ObsNormalizer(route, config.observation_frame)
    return DqnTestingAgent(normalizer, config.dqn_config(), np.random.default_rng([seed, 1]))


def run_episode(config: CampaignConfig, agent, route: RouteSpec, rng: np.random.Generator,
                episode: int, start_step: int, selection: list | None = None,
                spawn_rng: np.random.Generator | None = None, limit: int | None = None) -> EpisodeLog:
    """Play one episode starting at global step ``start_step``.

    ``rng`` feeds the agent's action choices; ``spawn_rng`` the start-pose jitter.
    """
    mode = config.detection_mode
    extension = config.mode == "extension"
    sensor_based = mode is not DetectionMode.THRESHOLD
    budget = config.budget_steps if limit is None else limit
    log = EpisodeLog(episode, start_step)
    world = reset_scenario(route, jitter=config.spawn_jitter, rng=spawn_rng)
    frame = config.observation_frame
    obs = encode_observation(world, frame)
    agent.reset(obs)
    latched: set[Requirement] = set()
    step_no = start_step
    tick = 0
    done = False
    while not done:
        epsilon = epsilon_at(step_no, config)
        if selection is not None:
            m = agent.state
            snapshot = (step_no, list(m.uncovered), list(m.last_reward))
        action = agent.act(epsilon, rng)
        if selection is not None:
            selection.append((*snapshot, agent.last_choice))
        log.actions.append(action)
        world = apply_action(world, action)
        violated_any: set[Requirement] = set()
        for _ in range(config.action_repeat):
            world = step(world)
            tick += 1
            cause = None
            proj = world.project("ev")
            if proj.s >= route.route_length:
                cause = "destination"
            elif world.ev.halted:
                cause = "collision"
            elif extension and overtake_detected(world):
                cause = "overtake"
            elif tick >= config.episode_timeout or step_no + 1 >= budget or blocked_by_halted_vif(world):
                # a deadlock behind a halted VIF can only run out the clock
                cause = "timeout"
            d = compute_distances(world)
            sensors = read_sensors(world) if sensor_based or config.record_ticks else None
            violated = detect_violations(world, d, mode, cause is not None, sensors)
            if extension:
                violated &= {Requirement.R2_DV}
                if violated and cause is None:
                    cause = "collision"
            for req in sorted(violated - latched):
                log.events.append(ViolationEvent(req, tick, episode, step_no))
            latched |= violated
            violated_any |= violated
            log.vif_xy.append((world.vif.pose.x, world.vif.pose.y))
            step_no += 1
            if mode is DetectionMode.FUSED:
                d = fuse_distances(d, sensors)
            if config.record_ticks:
                log.records.append(TickRecord(tick, action, d, sensors, reward_vector(d, violated)))
            if cause is not None:
                log.cause = cause
                done = True
                break
        rewards = reward_vector(d, violated_any)
        agent.learn(action, rewards, frozenset(violated_any), encode_observation(world, frame),
                    done and log.cause != "timeout")
    log.ticks = tick
    return log


def replay_detection(log: EpisodeLog, mode: DetectionMode | str) -> set[Requirement]:
    """Collision requirements a detection mode reports on a recorded episode.

    Needs ``record_ticks``; only the distance/sensor requirements are
    re-derived (R5/R6 do not depend on the detection mode).
    """
    from adsbench.monitors import COLLISION_REQUIREMENTS

    mode = DetectionMode(mode)
    found: set[Requirement] = set()
    for rec in log.records:
        d, s = rec.distances, rec.sensors
        if mode is DetectionMode.SENSOR:
            hits = {Requirement.R2_DV: s.vif, Requirement.R3_DP: s.ped, Requirement.R4_DS: s.obstacle}
        else:
            if mode is DetectionMode.FUSED:
                d = fuse_distances(d, s)
            hits = {Requirement.R2_DV: d.dv <= 0.0, Requirement.R3_DP: d.dp <= 0.0, Requirement.R4_DS: d.ds <= 0.0}
        found |= {r for r in COLLISION_REQUIREMENTS if hits[r]}
    return found


# -- repetitions ----------------------------------------------------------------


@dataclass
class RepetitionResult:
    index: int
    seed: int
    steps: int = 0
    episodes: int = 0
    events: list[ViolationEvent] = field(default_factory=list)
    causes: dict[str, int] = field(default_factory=dict)
    growth: list[tuple[int, list[int]]] = field(default_factory=list)
    trajectories: list[dict] = field(default_factory=list)
    selection: list[tuple] = field(default_factory=list)
    actions_digest: str = ""
    logs: list[EpisodeLog] = field(default_factory=list)
    losses: list[tuple[int, float]] = field(default_factory=list)
    failed: str | None = None

    def totals(self) -> dict[str, int]:
        out = {r.name: 0 for r in REQUIREMENTS}
        for e in self.events:
            out[e.requirement.name] += 1
        return out

    @property
    def violations(self) -> int:
        return len(self.events)


def run_repetition(config: CampaignConfig, index: int, keep_logs: bool = False,
                   stop_after: int | None = None) -> RepetitionResult:
    """One repetition. ``stop_after`` truncates it after that many steps while
    the epsilon schedule still spans the full ``budget_steps``."""
    seed = config.base_seed + index
    route = config.load_route()
    rng = np.random.default_rng(seed)
    agent = make_agent(config, route, seed)
    spawn_rng = np.random.default_rng([seed, 2])
    res = RepetitionResult(index, seed, causes={c: 0 for c in CAUSES})
    digest = hashlib.sha1()
    tabular = config.technique in ("q", "morlot")
    selection = res.selection if (config.log_selection and config.technique == "morlot") else None
    next_growth = config.growth_interval
    step_no = 0
    episode = 0
    limit = config.budget_steps if stop_after is None else min(stop_after, config.budget_steps)
    while step_no < limit:
        log = run_episode(config, agent, route, rng, episode, step_no, selection, spawn_rng, limit)
        step_no += log.ticks
        res.events.extend(log.events)
        res.causes[log.cause] += 1
        digest.update(bytes(log.actions))
        if log.failed:
            res.trajectories.append({
                "episode": episode,
                "cause": log.cause,
                "vif_xy": [[round(x, 3), round(y, 3)] for x, y in log.vif_xy],
            })
        if tabular:
            while next_growth <= step_no:
                res.growth.append((step_no, agent.growth()))
                next_growth += config.growth_interval
        if keep_logs:
            res.logs.append(log)
        episode += 1
    if tabular and (not res.growth or res.growth[-1][0] != step_no):
        res.growth.append((step_no, agent.growth()))
    if config.technique == "dqn":
        res.losses = list(agent.losses)
    res.steps = step_no
    res.episodes = episode
    res.actions_digest = digest.hexdigest()
    return res


# -- timelines --------------------------------------------------------------------


def sample_steps(budget: int, samples: int = TIMELINE_SAMPLES) -> list[int]:
    """Sample points 0, budget/samples, ..., budget (samples + 1 points)."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    return [(i * budget) // samples for i in range(samples + 1)]


def timeline_rows(events: list[ViolationEvent], budget: int, mode: str, samples: int = TIMELINE_SAMPLES) -> list[tuple]:
    """(sample_index, step, coverage, violations_total) per sample point.

    An event at global step ``t`` counts for every sample with step >= t.
    Coverage is the covered fraction of the mode's objectives (six in
    replication, R2 alone in extension).
    """
    objectives = len(REQUIREMENTS) if mode == "replication" else 1
    ordered = sorted(events, key=lambda e: e.step)
    rows = []
    j = 0
    covered: set[Requirement] = set()
    for i, s in enumerate(sample_steps(budget, samples)):
        while j < len(ordered) and ordered[j].step <= s:
            covered.add(ordered[j].requirement)
            j += 1
        rows.append((i, s, len(covered) / objectives, j))
    return rows


def coverage_timeline(rep: RepetitionResult, budget: int, mode: str, samples: int = TIMELINE_SAMPLES) -> list[float]:
    """Covered fraction (replication) or cumulative violations (extension) per sample."""
    rows = timeline_rows(rep.events, budget, mode, samples)
    if mode == "replication":
        return [r[2] for r in rows]
    return [float(r[3]) for r in rows]


# -- output -------------------------------------------------------------------------


@dataclass
class CampaignResult:
    config: CampaignConfig
    repetitions: list[RepetitionResult]
    directory: Path | None = None

    @property
    def failed(self) -> list[int]:
        return [r.index for r in self.repetitions if r.failed]

    def violations(self) -> list[int]:
        return [r.violations for r in self.repetitions]

    def final_coverage(self) -> list[float]:
        """Covered fraction of the mode's objectives at the end of each repetition."""
        return [timeline_rows(r.events, self.config.budget_steps, self.config.mode)[-1][2] for r in self.repetitions]


def _csv(rows, header: str) -> str:
    lines = [header]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def write_repetition(config: CampaignConfig, res: RepetitionResult, rep_dir: Path) -> None:
    rep_dir.mkdir(parents=True, exist_ok=True)
    with open(rep_dir / "events.jsonl", "w") as fh:
        for e in res.events:
            fh.write(e.to_json() + "\n")
    rows = timeline_rows(res.events, config.budget_steps, config.mode)
    (rep_dir / "timeline.csv").write_text(_csv(rows, "sample_index,step,coverage,violations_total"))
    if config.technique in ("q", "morlot"):
        if config.technique == "q":
            header = "step,distinct_states"
            grows = [(s, g[0]) for s, g in res.growth]
        else:
            header = "step,distinct_states," + ",".join(f"distinct_{r.name}" for r in REQUIREMENTS)
            grows = [(s, sum(g), *g) for s, g in res.growth]
        (rep_dir / "qtable_growth.csv").write_text(_csv(grows, header))
    with open(rep_dir / "trajectories.jsonl", "w") as fh:
        for t in res.trajectories:
            fh.write(json.dumps(t, sort_keys=True) + "\n")
    if res.selection:
        sel = [
            (s, "" if ch is None else ch.name, ";".join(r.name for r in unc), *[repr(v) for v in last])
            for s, unc, last, ch in res.selection
        ]
        header = "step,chosen,uncovered," + ",".join(f"last_reward_{r.name}" for r in REQUIREMENTS)
        (rep_dir / "selection.csv").write_text(_csv(sel, header))
    if res.losses:
        (rep_dir / "loss.csv").write_text(_csv(res.losses, "step,loss"))
    summary = {
        "index": res.index,
        "seed": res.seed,
        "steps": res.steps,
        "episodes": res.episodes,
        "violations": res.violations,
        "totals": res.totals(),
        "causes": res.causes,
        "actions_sha1": res.actions_digest,
    }
    (rep_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")


def _run_and_write(args: tuple[CampaignConfig, int, str | None]) -> RepetitionResult:
    config, index, out_dir = args
    res = run_repetition(config, index)
    if out_dir is not None:
        try:
            write_repetition(config, res, Path(out_dir) / f"rep_{index}")
        except OSError as exc:
            res.failed = f"{type(exc).__name__}: {exc}"
    # the per-step selection log can be large; it already lives on disk
    if out_dir is not None:
        res.selection = []
    return res


def meta_dict(config: CampaignConfig, reps: list[RepetitionResult]) -> dict[str, Any]:
    meta: dict[str, Any] = {
        "campaign_id": config.campaign_id(),
        "version": __version__,
        "config": config.to_dict(),
        "detection_mode": config.detection_mode.value,
        "observation_frame": config.observation_frame,
        "seeds": [config.base_seed + r for r in range(config.repetitions)],
        "timeline_samples": TIMELINE_SAMPLES,
        "repetitions": [
            {"index": r.index, "seed": r.seed, "steps": r.steps, "violations": r.violations,
             "status": "failed" if r.failed else "ok", **({"error": r.failed} if r.failed else {})}
            for r in reps
        ],
    }
    if config.technique == "dqn":
        meta["dqn"] = config.dqn_config().to_dict()
    return meta


def run_campaign(config: CampaignConfig, out_root: str | Path | None = None, jobs: int = 1) -> CampaignResult:
    """Run every repetition (in up to ``jobs`` processes) and write the outputs."""
    out_dir = None
    if out_root is not None:
        out_dir = Path(out_root) / config.campaign_id()
        out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(config, r, None if out_dir is None else str(out_dir)) for r in range(config.repetitions)]
    jobs = max(1, min(jobs, config.repetitions))
    if jobs == 1:
        reps = [_run_and_write(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reps = list(pool.map(_run_and_write, tasks))
    result = CampaignResult(config, reps, out_dir)
    if out_dir is not None:
        try:
            (out_dir / "meta.json").write_text(json.dumps(meta_dict(config, reps), sort_keys=True, indent=1) + "\n")
        except OSError as exc:
            for r in reps:
                r.failed = r.failed or f"meta: {exc}"
    return result


def default_jobs() -> int:
    return os.cpu_count() or 1


def with_overrides(config: CampaignConfig, **changes) -> CampaignConfig:
    return replace(config, **changes)
