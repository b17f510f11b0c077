"""Budgeted test-suite selection via Monte Carlo Tree Search with UCT.

A search state is an ordered partial suite; an action appends a case that
still fits the remaining budget; states where nothing fits are terminal.
Terminal reward blends suite coverage and an externally supplied defect
detection estimate (default weights 0.6 / 0.4); the estimator must be a
pure function of the case set. The search is seeded and single-threaded,
tie-breaking lexicographically on case id everywhere, so identical inputs
give identical suites. The best-so-far suite is seeded with a
greedy-by-marginal-coverage baseline, which the returned result can
therefore never undercut. Rollouts complete a state either uniformly at
random (default) or greedily by marginal reward per cost with a seeded
exploration slice ("greedy" policy).

run_feedback_loop wraps generate -> optimize -> validate cycles, declaring
convergence when the best reward stops improving (epsilon 0.01) and the
validator's ensemble confidence reaches the 0.95 threshold, always stopping
by cycle 10.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .errors import ConfigError, DomainError
from .generation import SutModel, TestCase, generate_cases

MAX_CYCLES = 10
CONVERGENCE_EPSILON = 0.01
CONFIDENCE_THRESHOLD = 0.95
# Greedy rollouts keep a seeded random slice so repeated playouts from one
# state explore different completions instead of repeating one trajectory.
ROLLOUT_EPSILON = 0.3


@dataclass(frozen=True)
class OptimizerConfig:
    budget: float
    coverage_weight: float = 0.6
    detection_weight: float = 0.4
    exploration_c: float = math.sqrt(2)
    iterations: int = 2000
    rollout_policy: str = "random"
    seed: int = 0

    def __post_init__(self):
        if abs(self.coverage_weight + self.detection_weight - 1.0) > 1e-9:
            raise ConfigError(
                f"coverage and detection weights must sum to 1, got "
                f"{self.coverage_weight} + {self.detection_weight}"
            )
        if self.budget <= 0:
            raise ConfigError("budget must be positive")
        if self.iterations <= 0:
            raise ConfigError("iterations must be positive")
        if self.exploration_c <= 0:
            raise ConfigError("exploration constant must be positive")
        if self.rollout_policy not in ("random", "greedy"):
            raise ConfigError(f"unknown rollout policy {self.rollout_policy!r}")

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "coverage_weight": self.coverage_weight,
            "detection_weight": self.detection_weight,
            "exploration_c": self.exploration_c,
            "iterations": self.iterations,
            "rollout_policy": self.rollout_policy,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "OptimizerConfig":
        return cls(**raw)


@dataclass
class MctsNode:
    chosen: tuple[str, ...]
    visits: int = 0
    total_reward: float = 0.0
    children: dict[str, "MctsNode"] = field(default_factory=dict)

    @property
    def mean_reward(self) -> float:
        return self.total_reward / self.visits if self.visits else 0.0


def reward(
    suite: list[TestCase],
    sut: SutModel,
    detection_estimate: float,
    cfg: OptimizerConfig,
) -> float:
    if not 0.0 <= detection_estimate <= 1.0:
        raise DomainError(f"detection estimate must be in [0,1], got {detection_estimate}")
    covered = set()
    for case in suite:
        covered |= case.covered_units
    cov = len(covered) / len(sut.coverage_units)
    return cfg.coverage_weight * cov + cfg.detection_weight * detection_estimate


def uct_score(mean: float, visits: int, parent_visits: int, c: float) -> float:
    return mean + c * math.sqrt(math.log(parent_visits) / visits)


def uct_select(node: MctsNode, c: float) -> str:
    """Pick a child id: unvisited first, else max UCT; ties go lexicographic."""
    if not node.children:
        raise DomainError("uct_select on a node with no children")
    unvisited = sorted(cid for cid, child in node.children.items() if child.visits == 0)
    if unvisited:
        return unvisited[0]
    best_id = None
    best_score = -math.inf
    for cid in sorted(node.children):
        child = node.children[cid]
        score = uct_score(child.mean_reward, child.visits, max(node.visits, 1), c)
        if score > best_score:
            best_id, best_score = cid, score
    return best_id


class _SuiteSearch:
    def __init__(self, pool: list[TestCase], sut: SutModel, cfg: OptimizerConfig, estimator):
        self.cfg = cfg
        self.case_by_id = {c.id: c for c in pool}
        self.cost = {c.id: c.cost for c in pool}
        self.units = {c.id: c.covered_units for c in pool}
        self.total_units = len(sut.coverage_units)
        self.estimator = estimator
        self.rng = random.Random(cfg.seed)
        self._reward_cache: dict[frozenset, float] = {}

    def evaluate(self, chosen: tuple[str, ...]) -> float:
        key = frozenset(chosen)
        cached = self._reward_cache.get(key)
        if cached is not None:
            return cached
        covered = set()
        for cid in chosen:
            covered |= self.units[cid]
        cov = len(covered) / self.total_units
        suite = [self.case_by_id[cid] for cid in sorted(chosen)]
        det = self.estimator(suite)
        if not 0.0 <= det <= 1.0:
            raise DomainError(f"detection estimator returned {det}, expected [0,1]")
        value = self.cfg.coverage_weight * cov + self.cfg.detection_weight * det
        self._reward_cache[key] = value
        return value

    def legal_actions(self, chosen: tuple[str, ...]) -> list[str]:
        spent = sum(self.cost[cid] for cid in chosen)
        taken = set(chosen)
        return sorted(
            cid
            for cid in self.case_by_id
            if cid not in taken and spent + self.cost[cid] <= self.cfg.budget
        )

    def rollout(self, chosen: tuple[str, ...]) -> tuple[str, ...]:
        current = chosen
        while True:
            legal = self.legal_actions(current)
            if not legal:
                return current
            if self.cfg.rollout_policy == "greedy" and self.rng.random() >= ROLLOUT_EPSILON:
                current = current + (self._greedy_pick(current, legal),)
            else:
                current = current + (self.rng.choice(legal),)

    def _greedy_pick(self, chosen: tuple[str, ...], legal: list[str]) -> str:
        """Best marginal reward gain per cost; ids are pre-sorted so ties stay lexicographic."""
        base = self.evaluate(chosen)
        best_id = legal[0]
        best_gain = -math.inf
        for cid in legal:
            gain = (self.evaluate(chosen + (cid,)) - base) / self.cost[cid]
            if gain > best_gain:
                best_id, best_gain = cid, gain
        return best_id


def greedy_suite(pool: list[TestCase], budget: float) -> list[TestCase]:
    """Greedy-by-marginal-coverage baseline under the same budget."""
    remaining = sorted(pool, key=lambda c: c.id)
    chosen: list[TestCase] = []
    covered: set[str] = set()
    spent = 0.0
    while True:
        best = None
        best_gain = -1.0
        for case in remaining:
            if spent + case.cost > budget:
                continue
            gain = len(case.covered_units - covered)
            if gain > best_gain:
                best, best_gain = case, gain
        if best is None:
            return chosen
        chosen.append(best)
        covered |= best.covered_units
        spent += best.cost
        remaining.remove(best)


def optimize_suite(
    pool: list[TestCase],
    sut: SutModel,
    cfg: OptimizerConfig,
    detection_estimator,
) -> tuple[list[TestCase], MctsNode]:
    """Search for the best suite under budget; returns (suite, root stats)."""
    if not pool:
        raise DomainError("case pool is empty")
    affordable = [c for c in pool if c.cost <= cfg.budget]
    if len(affordable) < len(pool):
        import logging

        logging.getLogger(__name__).warning(
            "excluded %d case(s) costing more than the budget", len(pool) - len(affordable)
        )
    if not affordable:
        raise DomainError("no case fits the budget")

    search = _SuiteSearch(affordable, sut, cfg, detection_estimator)
    root = MctsNode(chosen=())

    baseline = greedy_suite(affordable, cfg.budget)
    best_ids = tuple(c.id for c in baseline)
    best_reward = search.evaluate(best_ids)

    for _ in range(cfg.iterations):
        node = root
        path = [root]
        while True:
            legal = search.legal_actions(node.chosen)
            if not legal:
                terminal_ids = node.chosen
                value = search.evaluate(terminal_ids)
                break
            if not node.children:
                node.children = {
                    cid: MctsNode(chosen=node.chosen + (cid,)) for cid in legal
                }
            chosen_id = uct_select(node, cfg.exploration_c)
            child = node.children[chosen_id]
            path.append(child)
            if child.visits == 0:
                terminal_ids = search.rollout(child.chosen)
                value = search.evaluate(terminal_ids)
                break
            node = child
        if value > best_reward + 1e-12:
            best_reward = value
            best_ids = terminal_ids
        for visited in path:
            visited.visits += 1
            visited.total_reward += value

    suite = [search.case_by_id[cid] for cid in best_ids]
    return suite, root


@dataclass
class ConvergenceReport:
    cycles_used: int
    converged: bool
    best_reward_history: list[float]
    final_confidence: float
    aborted: bool = False
    best_suite_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "cycles_used": self.cycles_used,
            "converged": self.converged,
            "best_reward_history": list(self.best_reward_history),
            "final_confidence": self.final_confidence,
            "aborted": self.aborted,
            "best_suite_ids": list(self.best_suite_ids),
        }


def run_feedback_loop(
    reqs,
    sut: SutModel,
    cfg: OptimizerConfig,
    validator,
    detection_estimator=None,
    previous_best: float | None = None,
    generator=generate_cases,
) ->tuple:
    """Bounded generate -> optimize -> validate convergence loop.

    `validator(suite)` returns the ensemble confidence for the optimized
    suite and may raise, which aborts the loop with a partial report.
    `previous_best` is the reward of the currently deployed suite, if any;
    with one supplied, the loop may converge on its first cycle.
    Returns (ConvergenceReport, best suite).
    """
    estimator = detection_estimator or (lambda suite: 0.0)
    history: list[float] = []
    best_suite: list[TestCase] = []
    best_reward = -math.inf
    confidence = 0.0
    converged = False
    cycles = 0

    for cycle in range(1, MAX_CYCLES + 1):
        cycles = cycle
        pool = generator(reqs, sut, cfg.seed + cycle)
        cycle_cfg = OptimizerConfig(
            budget=cfg.budget,
            coverage_weight=cfg.coverage_weight,
            detection_weight=cfg.detection_weight,
            exploration_c=cfg.exploration_c,
            iterations=cfg.iterations,
            rollout_policy=cfg.rollout_policy,
            seed=cfg.seed + cycle,
        )
        suite, _stats = optimize_suite(pool, sut, cycle_cfg, estimator)
        cycle_reward = reward(suite, sut, estimator(suite), cycle_cfg)
        if cycle_reward > best_reward:
            best_reward = cycle_reward
            best_suite = suite
        history.append(best_reward)

        try:
            confidence = float(validator(best_suite))
        except Exception:
            report = ConvergenceReport(
                cycles_used=cycles,
                converged=False,
                best_reward_history=history,
                final_confidence=confidence,
                aborted=True,
                best_suite_ids=[c.id for c in best_suite],
            )
            return report, best_suite

        if cycle == 1:
            improvement = (
                best_reward - previous_best if previous_best is not None else math.inf
            )
        else:
            improvement = history[-1] - history[-2]
        if improvement < CONVERGENCE_EPSILON and confidence >= CONFIDENCE_THRESHOLD:
            converged = True
            break

    report = ConvergenceReport(
        cycles_used=cycles,
        converged=converged,
        best_reward_history=history,
        final_confidence=confidence,
        best_suite_ids=[c.id for c in best_suite],
    )
    return report, best_suite
