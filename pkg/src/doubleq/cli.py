"""Command-line entry point: ``doubleq <subcommand> [options]``.

Every option can also be given in a flat ``key=value`` config file
(``--config FILE``; keys are option names with dashes or underscores,
``#`` starts a comment). Flags override the file, the file overrides
built-in defaults. Each run writes ``manifest.txt`` to its output directory
in the same format, so ``--config <out>/manifest.txt`` repeats the run.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bias_lab, evaluation, polyfit, svg
from .core import ENV_KINDS, make_env, rng_stream
from .deep_agent import ATARI_SCALE, AgentConfig, train_deep
from .neural import load_checkpoint
from .tabular import TabularSchedule, train_tabular

COMMANDS = ("bias-bars", "polyfit", "tabular-train", "deep-train", "eval-value", "scores")


class UsageError(Exception):
    pass


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if str(text).strip().lower() in ("", "none") else float(text)


def _opt_int(text):
    return None if str(text).strip().lower() in ("", "none") else int(text)


# name -> (type, default, choices, help)
COMMON = {
    "seed": (int, 0, None, "run seed (64-bit unsigned)"),
    "out": (str, None, None, "output directory (default runs/<subcommand>)"),
    "svg": (_bool, False, None, "also write SVG figures"),
}
ENV = {
    "env": (str, "noisy-terminal", ENV_KINDS, "toy environment kind"),
    "actions": (_opt_int, None, None, "number of actions (default 10 for noisy-terminal, 2 for chains)"),
    "length": (int, 3, None, "chain length"),
    "means": (str, "0", None, "noisy-terminal reward means: one value or a comma list"),
    "sigma": (float, 1.0, None, "reward noise standard deviation"),
    "step_reward": (float, 1.0, None, "chain forward reward"),
    "goal_reward": (float, 0.0, None, "extra chain reward on the final move"),
    "discount": (float, 0.99, None, "environment discount"),
    "max_steps": (int, 100, None, "episode length cap"),
}
_AGENT = AgentConfig()
OPTIONS = {
    "bias-bars": {
        "m_max": (int, 10, None, "largest number of actions"),
        "reps": (int, 100, None, "repetitions per bar"),
        "noise": (str, "standard-normal", bias_lab.NOISES, "error distribution"),
    },
    "polyfit": {
        "grid_points": (int, 601, None, "evenly spaced evaluation states on [-6, 6]"),
    },
    "tabular-train": {
        **ENV,
        "algo": (str, "both", ("q", "double-q", "both"), "algorithm"),
        "episodes": (int, 1000, None, "training episodes"),
        "seeds": (int, 1, None, "number of consecutive seeds starting at --seed"),
        "alpha": (float, 0.1, None, "step size"),
        "alpha_decay": (float, 0.0, None, "step size alpha / (1 + decay * episode)"),
        "epsilon_start": (float, 0.1, None, "initial exploration rate"),
        "epsilon_end": (float, 0.1, None, "final exploration rate"),
        "epsilon_episodes": (int, 0, None, "episodes of linear exploration annealing"),
    },
    "deep-train": {
        **{**ENV, "env": (str, "chain", ENV_KINDS, "toy environment kind")},
        "algo": (str, "ddqn", ("dqn", "ddqn"), "DQN or Double DQN"),
        "steps": (int, 50_000, None, "environment steps"),
        "tuned": (_bool, False, None, "tuned variant: 3x target period, eps 0.01/0.001, shared output bias"),
        "gamma": (_opt_float, None, None, "agent discount (default: environment discount; Atari 0.99)"),
        "lr": (float, _AGENT.lr, None, "RMSProp learning rate (Atari 0.00025)"),
        "rms_decay": (float, _AGENT.rms_decay, None, "RMSProp squared-gradient decay (Atari 0.95)"),
        "target_period": (int, _AGENT.target_period, None,
                          f"steps between target syncs (Atari {ATARI_SCALE.target_period})"),
        "replay_capacity": (int, _AGENT.replay_capacity, None,
                            f"replay memory size (Atari {ATARI_SCALE.replay_capacity})"),
        "minibatch": (int, _AGENT.minibatch, None, "minibatch size (Atari 32)"),
        "update_every": (int, _AGENT.update_every, None, "steps between updates (Atari 4)"),
        "learn_start": (int, _AGENT.learn_start, None, "transitions stored before learning"),
        "epsilon_start": (float, _AGENT.epsilon_start, None, "initial exploration (Atari 1.0)"),
        "epsilon_end": (float, _AGENT.epsilon_end, None, "final exploration (Atari 0.1)"),
        "epsilon_anneal": (int, _AGENT.epsilon_anneal, None,
                           f"annealing steps (Atari {ATARI_SCALE.epsilon_anneal})"),
        "eval_epsilon": (float, _AGENT.eval_epsilon, None, "evaluation exploration (Atari 0.05)"),
        "eval_every": (int, _AGENT.eval_every, None, "steps between trace records"),
        "hidden": (str, "64", None, "hidden layer widths, comma separated"),
        "shared_output_bias": (_bool, False, None, "one bias shared by all action outputs"),
        "clip_rewards": (_bool, True, None, "clip rewards to [-1, 1]"),
        "huber": (_bool, False, None, "clip the TD error to [-1, 1] in the gradient"),
    },
    "eval-value": {
        **ENV,
        "checkpoint": (str, None, None, "network checkpoint written by deep-train"),
        "episodes": (int, 10, None, "evaluation episodes"),
        "eval_epsilon": (float, 0.05, None, "exploration during evaluation"),
        "gamma": (_opt_float, None, None, "discount for realized returns (default: environment)"),
    },
    "scores": {
        "table": (str, "noop", tuple(evaluation.TABLES), "score table"),
        "agent": (str, "double_dqn", None, "agent column"),
    },
}


@dataclass
class RunConfig:
    experiment: str
    seed: int
    out: Path
    params: dict = field(default_factory=dict)
    emit_svg: bool = False

    def manifest(self) -> str:
        lines = [f"# doubleq {self.experiment}", f"seed={self.seed}", f"out={self.out}",
                 f"svg={str(self.emit_svg).lower()}"]
        for k in sorted(self.params):
            v = self.params[k]
            if isinstance(v, bool):
                v = str(v).lower()
            lines.append(f"{k}={'none' if v is None else v}")
        return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="doubleq", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}")
    sub.required = True
    for cmd in COMMANDS:
        epilog = None
        if cmd == "deep-train":
            epilog = ("Atari-scale settings: gamma=0.99 lr=0.00025 rms_decay=0.95 target_period=10000 "
                      "(tuned 30000) replay_capacity=1000000 minibatch=32 update_every=4 "
                      "epsilon 1.0->0.1 over 1000000 steps (tuned 0.01) eval_epsilon=0.05 (tuned 0.001)")
        p = sub.add_parser(cmd, epilog=epilog,
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.add_argument("--config", default=argparse.SUPPRESS, help="key=value config file")
        for name, (typ, default, choices, help_) in {**COMMON, **OPTIONS[cmd]}.items():
            flag = "--" + name.replace("_", "-")
            kw = dict(dest=name, default=argparse.SUPPRESS, help=f"{help_} (default: {default})")
            if typ is _bool:
                p.add_argument(flag, action=argparse.BooleanOptionalAction, **kw)
            else:
                p.add_argument(flag, type=typ, choices=choices, **kw)
    return parser


def read_config_file(path, cmd: str) -> dict:
    known = {**COMMON, **OPTIONS[cmd]}
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r} for {cmd}")
        typ, _, choices, _ = known[key]
        try:
            v = typ(value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from None
        if choices is not None and v not in choices:
            raise UsageError(f"{path}:{lineno}: {key} must be one of {choices}")
        values[key] = v
    return values


def parse_args(argv=None) -> RunConfig:
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    cmd = ns.pop("command")
    known = {**COMMON, **OPTIONS[cmd]}
    values = {k: v[1] for k, v in known.items()}
    if "config" in ns:
        try:
            values.update(read_config_file(ns.pop("config"), cmd))
        except UsageError as exc:
            parser.error(str(exc))
    values.update(ns)
    seed = values.pop("seed")
    if not 0 <= seed < 2**64:
        parser.error(f"seed must be a 64-bit unsigned integer, got {seed}")
    out = values.pop("out") or f"runs/{cmd}"
    emit_svg = values.pop("svg")
    return RunConfig(cmd, seed, Path(out), values, emit_svg)


# -- output ------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    if isinstance(v, (np.floating, np.integer)):
        return _fmt(v.item())
    return str(v)


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def _env_from(p: dict):
    means = [float(x) for x in str(p["means"]).split(",")]
    return make_env(p["env"], actions=p["actions"], length=p["length"],
                    means=means[0] if len(means) == 1 else means, sigma=p["sigma"],
                    step_reward=p["step_reward"], goal_reward=p["goal_reward"],
                    discount=p["discount"], max_steps=p["max_steps"])


def _agent_config(p: dict) -> AgentConfig:
    cfg = AgentConfig(gamma=p["gamma"], lr=p["lr"], rms_decay=p["rms_decay"],
                      target_period=p["target_period"], replay_capacity=p["replay_capacity"],
                      minibatch=p["minibatch"], update_every=p["update_every"],
                      learn_start=p["learn_start"], epsilon_start=p["epsilon_start"],
                      epsilon_end=p["epsilon_end"], epsilon_anneal=p["epsilon_anneal"],
                      eval_epsilon=p["eval_epsilon"], eval_every=p["eval_every"],
                      hidden=tuple(int(h) for h in str(p["hidden"]).split(",") if h.strip()),
                      shared_output_bias=p["shared_output_bias"], clip_rewards=p["clip_rewards"],
                      huber=p["huber"])
    return cfg.tuned() if p["tuned"] else cfg


def _run_bias_bars(cfg: RunConfig) -> None:
    p = cfg.params
    rows = bias_lab.bias_bars(p["m_max"], p["reps"], cfg.seed, p["noise"])
    write_csv(cfg.out / "bias_bars.csv", ("m", "estimator", "mean_bias", "stderr", "reps", "seed"), rows)
    if cfg.emit_svg:
        ms = list(range(1, p["m_max"] + 1))
        series = {e: [r["mean_bias"] for r in rows if r["estimator"] == e] for e in ("single", "double")}
        (cfg.out / "bias_bars.svg").write_text(svg.bar_chart("bias vs number of actions", ms, series))


def _run_polyfit(cfg: RunConfig) -> None:
    grid = np.linspace(polyfit.STATE_MIN, polyfit.STATE_MAX, cfg.params["grid_points"])
    cols = ("row", "s", "v_true", "q_max", "single_bias", "double_bias")
    for row, kind, d in polyfit.CONFIGURATIONS:
        c = polyfit.bias_curves(kind, d, grid)
        rows = (dict(row=row, s=float(s), v_true=float(v), q_max=float(q), single_bias=float(b1),
                     double_bias=float(b2))
                for s, v, q, b1, b2 in zip(c.states, c.v_true, c.q_max, c.single_bias, c.double_bias))
        write_csv(cfg.out / f"polyfit_row{row}.csv", cols, rows)
        if cfg.emit_svg:
            x = list(c.states)
            title = f"row {row}: {kind}, degree {d}"
            (cfg.out / f"polyfit_row{row}_estimates.svg").write_text(svg.line_chart(
                title, x, {"true": list(c.v_true), **{f"a{i + 1}": list(e) for i, e in enumerate(c.estimates)}}))
            (cfg.out / f"polyfit_row{row}_bias.svg").write_text(svg.line_chart(
                title, x, {"single": list(c.single_bias), "double": list(c.double_bias)}))


def _run_tabular(cfg: RunConfig) -> None:
    p = cfg.params
    env = _env_from(p)
    schedule = TabularSchedule(p["epsilon_start"], p["epsilon_end"], p["epsilon_episodes"],
                               p["alpha"], p["alpha_decay"])
    algos = ("q", "double-q") if p["algo"] == "both" else (p["algo"],)
    rows = []
    for seed in range(cfg.seed, cfg.seed + p["seeds"]):
        for algo in algos:
            trace, _ = train_tabular(env, algo, p["episodes"], schedule, seed)
            rows.extend(trace.rows())
    write_csv(cfg.out / "tabular_trace.csv",
              ("episode", "algo", "seed", "start_value_estimate", "greedy_return"), rows)


def _run_deep(cfg: RunConfig) -> None:
    p = cfg.params
    env = _env_from(p)
    algo = "dqn" if p["algo"] == "dqn" else "double-dqn"
    trace, _ = train_deep(env, algo, _agent_config(p), p["steps"], cfg.seed,
                          checkpoint_dir=cfg.out / "checkpoints")
    write_csv(cfg.out / "trace.csv", trace.COLUMNS, trace.rows())
    if cfg.emit_svg:
        (cfg.out / "trace.svg").write_text(svg.line_chart(
            f"{algo} on {env.kind}", trace.step,
            {"value estimate": trace.value_estimate, "greedy return": trace.greedy_return}))


def _run_eval_value(cfg: RunConfig) -> None:
    p = cfg.params
    if not p["checkpoint"]:
        raise UsageError("eval-value needs --checkpoint")
    env = _env_from(p)
    params = load_checkpoint(p["checkpoint"])
    truth = evaluation.ground_truth_return(env, params, p["episodes"], p["gamma"], p["eval_epsilon"],
                                           rng_stream(cfg.seed, "eval"))
    estimate = evaluation.value_estimate_metric(params, np.eye(env.state_count)[truth.visited_states])
    write_csv(cfg.out / "value_report.csv",
              ("value_estimate", "ground_truth_return", "steps", "episodes", "truncated"),
              [dict(value_estimate=estimate, ground_truth_return=truth.mean_return, steps=truth.steps,
                    episodes=truth.episodes, truncated=truth.truncated)])
    print(f"value estimate {estimate:.4f} ground truth {truth.mean_return:.4f} over {truth.steps} states")


def _run_scores(cfg: RunConfig) -> None:
    p = cfg.params
    table = evaluation.load_fixture(p["table"])
    try:
        values = evaluation.normalized_column(table, p["agent"])
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    for game, v in values.items():
        print(f"{game:<22s} {100 * v:9.2f}%")
    s = evaluation.summarize(values.values())
    print(f"{p['table']} {p['agent']} over {s.count} games: median {100 * s.median:.1f}% mean {100 * s.mean:.1f}%")
    write_csv(cfg.out / f"scores_{p['table']}_{p['agent']}.csv", ("game", "normalized_percent"),
              [dict(game=g, normalized_percent=100 * v) for g, v in values.items()])


RUNNERS = {
    "bias-bars": _run_bias_bars,
    "polyfit": _run_polyfit,
    "tabular-train": _run_tabular,
    "deep-train": _run_deep,
    "eval-value": _run_eval_value,
    "scores": _run_scores,
}


def run(cfg: RunConfig) -> int:
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
        (cfg.out / "manifest.txt").write_text(cfg.manifest())
        RUNNERS[cfg.experiment](cfg)
    except UsageError as exc:
        print(f"doubleq {cfg.experiment}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, ArithmeticError, KeyError) as exc:
        print(f"doubleq {cfg.experiment}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    return run(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
