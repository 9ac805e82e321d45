"""Value-estimate metric, realized discounted returns and normalized scores."""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .core import EnvModel, InvalidInputError
from .neural import MlpParameters, forward
from .tabular import epsilon_greedy

TABLES = {"noop": "noop", "human-start": "human_start"}


def value_estimate_metric(params: MlpParameters, states) -> float:
    """Mean over visited states of max_a Q(s, a), states given as feature rows."""
    x = np.atleast_2d(np.asarray(states, dtype=float))
    if x.shape[0] < 1:
        raise InvalidInputError("need at least one visited state")
    return float(forward(params, x).max(axis=1).mean())


@dataclass
class GroundTruth:
    mean_return: float
    visited_states: list = field(repr=False)
    episodes: int = 0
    truncated: int = 0

    @property
    def steps(self) -> int:
        return len(self.visited_states)


def ground_truth_return(env: EnvModel, params: MlpParameters, episodes: int, gamma: float | None,
                        eps: float, rng: np.random.Generator, max_steps: int | None = None) -> GroundTruth:
    """Average realized discounted return from every state visited by eps-greedy rollouts.

    Episodes hitting ``max_steps`` are cut off and counted in ``truncated``;
    their returns only include the rewards seen before the cut.
    """
    if episodes < 1:
        raise InvalidInputError("episodes must be positive")
    gamma = env.discount if gamma is None else gamma
    max_steps = env.max_steps if max_steps is None else max_steps
    q_all = forward(params, np.eye(env.state_count))
    returns, visited, truncated = [], [], 0
    for _ in range(episodes):
        s = env.initial_state
        rewards = []
        for _ in range(max_steps):
            visited.append(s)
            t = env.step(s, epsilon_greedy(q_all[s], eps, rng), rng)
            rewards.append(t.reward)
            if t.terminal:
                break
            s = t.next_state
        else:
            truncated += 1
        g = 0.0
        tail = []
        for r in reversed(rewards):
            g = r + gamma * g
            tail.append(g)
        returns.extend(reversed(tail))
    return GroundTruth(float(np.mean(returns)), visited, episodes, truncated)


# -- normalized scores --------------------------------------------------------


class DegenerateRecordError(InvalidInputError):
    pass


class ScoreTableError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreRecord:
    game: str
    score_random: float
    score_human: float
    score_agent: float


def normalize_score(rec: ScoreRecord) -> float:
    """Improvement over random play as a fraction of the human-random gap.

    The gap is taken in absolute value: for the one published game where
    the random score exceeds the human score (Video Pinball, human starts)
    this is the convention the published normalized tables follow.
    """
    gap = rec.score_human - rec.score_random
    if gap == 0:
        raise DegenerateRecordError(f"{rec.game}: human and random scores coincide")
    return (rec.score_agent - rec.score_random) / abs(gap)


@dataclass(frozen=True)
class Summary:
    median: float
    mean: float
    count: int


def summarize(values) -> Summary:
    values = list(values)
    if not values:
        raise InvalidInputError("cannot summarize an empty list")
    return Summary(statistics.median(values), statistics.fmean(values), len(values))


@dataclass
class ScoreTable:
    games: list
    random: list
    human: list
    agents: dict  # column name -> list of float or None (absent)

    def records(self, agent: str) -> list[ScoreRecord]:
        """Records for ``agent``, skipping games where its score is absent."""
        if agent not in self.agents:
            raise KeyError(f"unknown agent column {agent!r}; have {sorted(self.agents)}")
        return [ScoreRecord(g, r, h, a)
                for g, r, h, a in zip(self.games, self.random, self.human, self.agents[agent])
                if a is not None]


def _parse_cell(text, lineno, column):
    text = text.strip()
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise ScoreTableError(f"line {lineno}: {column} value {text!r} is not a number") from None


def parse_score_table(text: str) -> ScoreTable:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ScoreTableError("line 1: empty score table")
    header = [h.strip() for h in rows[0]]
    if header[:3] != ["game", "random", "human"] or len(header) < 4:
        raise ScoreTableError(f"line 1: expected header game,random,human,<agent>..., got {header}")
    table = ScoreTable([], [], [], {a: [] for a in header[3:]})
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ScoreTableError(f"line {lineno}: expected {len(header)} cells, got {len(row)}")
        game = row[0].strip()
        if game in table.games:
            raise ScoreTableError(f"line {lineno}: duplicate game {game!r}")
        rnd = _parse_cell(row[1], lineno, "random")
        hum = _parse_cell(row[2], lineno, "human")
        if rnd is None or hum is None:
            raise ScoreTableError(f"line {lineno}: random and human scores are required")
        table.games.append(game)
        table.random.append(rnd)
        table.human.append(hum)
        for name, cell in zip(header[3:], row[3:]):
            table.agents[name].append(_parse_cell(cell, lineno, name))
    if not table.games:
        raise ScoreTableError("line 2: score table has no records")
    return table


def load_score_table(path) -> ScoreTable:
    with open(path, newline="") as fh:
        return parse_score_table(fh.read())


def fixture_text(table: str, kind: str = "raw") -> str:
    """Contents of a shipped fixture; ``kind`` is ``raw`` or ``normalized``."""
    try:
        stem = TABLES[table]
    except KeyError:
        raise KeyError(f"unknown table {table!r}; expected one of {sorted(TABLES)}") from None
    return resources.files("doubleq").joinpath("data", f"{stem}_{kind}.csv").read_text()


def load_fixture(table: str) -> ScoreTable:
    return parse_score_table(fixture_text(table))


def load_published_normalized(table: str) -> dict:
    """Printed normalized percentages: ``{agent: {game: percent}}`` (absent cells skipped)."""
    rows = list(csv.DictReader(io.StringIO(fixture_text(table, "normalized"))))
    agents = [k for k in rows[0] if k != "game"]
    return {a: {r["game"]: float(r[a]) for r in rows if r[a].strip()} for a in agents}


def normalized_column(table: ScoreTable, agent: str) -> dict:
    """``{game: normalized fraction}`` for every game where ``agent`` has a score."""
    return {rec.game: normalize_score(rec) for rec in table.records(agent)}

