"""Command-line front end.

Every subcommand writes its tables (CSV + JSON lines), a ``config.json`` that
reproduces the run, and, unless ``--no-plots``, PNG figures into ``--out``.

Exit codes: 0 success, 2 invalid configuration, 3 a checked property failed
(safety/liveness violation, bound not met, truncated run).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .adversary import KINDS, SILENT, SPOOF_SOURCE, VOTE_FORGERY, AdversaryStrategy
from .base_protocol import DEFAULT_CAP, PROTOCOLS, CorrectnessMap
from .bounds import (
    BETA,
    PUBLISHED_ALPHA,
    TARGET,
    bound_curve,
    g,
    iterated_product_bound,
    limit_certificate,
)
from .experiments import PLACEMENT_MODES, monte_carlo_F, monte_carlo_P, reference_alpha, worst_case_experiment
from .grid import GridSpec
from .io import read_placement, write_json, write_table
from .reliable import fraction_report, rel_k_array, verify_reliable
from .sim import DEFAULT_BUDGET, DELAY_RULES, POLICIES, Schedule, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSERT = 3

COMMANDS = ("simulate", "analyze", "verify", "worstcase", "montecarlo", "bounds")
AUTO_RECORD_NODES = 1024


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str = "analyze"
    n: int = 10
    k: int = 1
    seed: int | None = None
    trials: int = 1
    adversary: str | None = None  # None: all three core strategies for verify, silent otherwise
    fake_source: list | None = None
    placement_file: str | None = None
    placement: list | None = None
    mu: list = field(default_factory=list)
    out: str = "results"
    protocol: str = "relay"
    cap: int = DEFAULT_CAP
    policy: str = "random"
    rule: str = "byzantine-first"
    source: list | None = None
    payload: str = "hello"
    record: bool | None = None
    event_budget: int = DEFAULT_BUDGET
    byzantine_budget: int | None = None
    mode: str | None = None
    count: int = 1000
    max_sources: int | None = None
    quantity: str = "P"
    workers: int = 1
    alpha: str = "auto"  # auto: the published value at n=10, the enumerated one otherwise
    beta: float = BETA
    target: float = TARGET
    gamma: float | None = None
    mu_min: float = 0.999
    mu_max: float = 1.0
    points: int = 101
    plots: bool = True

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names - {"version"})
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_json(self) -> str:
        return json.dumps({"version": __version__, **self.to_dict()}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def spec(self) -> GridSpec:
        return GridSpec(self.n, self.k)

    def params(self) -> dict:
        """Parameter block stamped on every table."""
        keep = ("command", "n", "k", "seed", "protocol", "cap")
        return {"version": __version__, **{k: getattr(self, k) for k in keep}}

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        for kind in self.adversaries():
            if kind not in KINDS:
                raise ConfigError(f"unknown adversary {kind!r}; known: {KINDS}")
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; known: {sorted(PROTOCOLS)}")
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}; known: {POLICIES}")
        if self.rule not in DELAY_RULES:
            raise ConfigError(f"unknown delay rule {self.rule!r}; known: {DELAY_RULES}")
        if self.trials < 1 or self.count < 1 or self.cap < 1 or self.workers < 1:
            raise ConfigError("trials, count, cap and workers must be >= 1")
        if self.mode is not None and self.mode not in PLACEMENT_MODES:
            raise ConfigError(f"unknown placement mode {self.mode!r}; known: {PLACEMENT_MODES}")
        if self.quantity not in ("P", "F"):
            raise ConfigError("quantity must be P or F")
        if self.seed is not None and not 0 <= self.seed < 2**63:
            raise ConfigError("seed must lie in [0, 2**63)")
        if any(not 0.0 <= m <= 1.0 for m in self.mu):
            raise ConfigError("mu values must lie in [0, 1]")
        try:
            self.spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def adversaries(self) -> list[str]:
        if self.adversary is None:
            return [SILENT, SPOOF_SOURCE, VOTE_FORGERY] if self.command == "verify" else [SILENT]
        return [a.strip() for a in self.adversary.split(",") if a.strip()]

    def needs_seed(self) -> bool:
        if self.command in ("simulate", "verify", "montecarlo"):
            return True
        if self.command == "worstcase":
            return self.resolved_mode() != "exhaustive"
        if self.command == "analyze":
            return bool(self.mu) and not self.has_explicit_placement()
        return False

    def has_explicit_placement(self) -> bool:
        return self.placement_file is not None or self.placement is not None

    def resolved_mode(self) -> str:
        return self.mode or ("exhaustive" if self.k == 1 else "clustered")

    def alpha_value(self) -> Fraction:
        if self.alpha == "auto":
            return PUBLISHED_ALPHA if self.n == 10 else reference_alpha(self.n, self.protocol)
        if self.alpha == "published":
            return PUBLISHED_ALPHA
        if self.alpha == "reference":
            return reference_alpha(self.n, self.protocol)
        try:
            return Fraction(self.alpha)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"alpha must be auto, published, reference or a fraction, got {self.alpha!r}") from None


# ---------------------------------------------------------------------------
# helpers


def _correctness(cfg: ExperimentConfig) -> CorrectnessMap:
    side = cfg.spec().side()
    if cfg.placement_file is not None:
        return CorrectnessMap.from_byzantine(side, read_placement(cfg.placement_file, side))
    if cfg.placement is not None:
        return CorrectnessMap.from_byzantine(side, [tuple(b) for b in cfg.placement])
    if cfg.mu:
        if len(cfg.mu) != 1:
            raise ConfigError("a random placement takes a single --mu value")
        return CorrectnessMap.random(side, cfg.mu[0], np.random.default_rng(cfg.seed))
    return CorrectnessMap.all_correct(side)


def _node_rows(corr: CorrectnessMap, rel: np.ndarray, extra=None) -> list[dict]:
    rows = []
    side = corr.side
    for i in range(side):
        for j in range(side):
            row = {"i": i, "j": j, "correct": bool(corr.status[i, j]), "reliable": bool(rel[i, j])}
            if extra is not None:
                row.update(extra(i, j))
            rows.append(row)
    return rows


def _say(msg: str) -> None:
    print(msg, flush=True)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: ExperimentConfig) -> int:
    spec = cfg.spec()
    corr = _correctness(cfg)
    out = Path(cfg.out)
    correct = corr.correct_nodes()
    if not correct:
        raise ConfigError("no correct node left to broadcast")
    source = tuple(cfg.source) if cfg.source else correct[0]
    if not corr.is_correct(source):
        raise ConfigError(f"source {source} is Byzantine")
    payload = cfg.payload.encode()
    kind = cfg.adversaries()
    if len(kind) != 1:
        raise ConfigError("simulate takes exactly one adversary")
    strategy = AdversaryStrategy(kind[0], fake_source=tuple(cfg.fake_source) if cfg.fake_source else None,
                                 seed=cfg.seed)
    record = cfg.record if cfg.record is not None else spec.num_nodes() <= AUTO_RECORD_NODES
    trace = run(spec, corr, strategy, Schedule(cfg.policy, cfg.seed, cfg.rule), [(source, payload)],
                cap=cfg.cap, protocol=cfg.protocol, budget=cfg.event_budget, record=record)
    rel = rel_k_array(spec, corr, cfg.protocol)

    genuine = (source, payload)
    forged_rows = []
    safety = liveness = 0
    for node, acc in sorted(trace.accepted.items()):
        in_rel = bool(rel[node])
        if in_rel and rel[source] and genuine not in acc:
            liveness += 1
        for s, m in acc:
            if (s, m) != genuine:
                forged_rows.append({"node": list(node), "in_rel": in_rel, "source": list(s), "payload": repr(m)})
                if in_rel and rel[s]:
                    safety += 1

    def extra(i, j):
        acc = trace.accepted.get((i, j))
        return {"accepted": bool(acc and genuine in acc),
                "forged": 0 if acc is None else sum(1 for x in acc if x != genuine)}

    rows = _node_rows(corr, rel, extra)
    accepted = trace.accepted_count(source, payload)
    summary = {
        **cfg.params(),
        "source": list(source),
        "accepted": accepted,
        "correct": len(correct),
        "reliable": int(rel.sum()),
        "delivered": trace.delivered,
        "sent": trace.sent,
        "dropped": trace.dropped,
        "truncated": trace.truncated,
        "forged_acceptances": len(forged_rows),
        "forged_in_rel": sum(1 for r in forged_rows if r["in_rel"]),
        "safety_violations": safety,
        "liveness_failures": liveness,
    }
    write_table(out, "nodes", rows, cfg.params())
    write_table(out, "forged", forged_rows, cfg.params())
    write_json(out / "summary.json", summary)
    if record:
        (out / "trace.jsonl").write_text(trace.to_jsonl())
    if cfg.plots:
        from .plotting import plot_reliable_map

        acc_arr = np.array([[r["accepted"] for r in rows[i * corr.side:(i + 1) * corr.side]]
                            for i in range(corr.side)])
        plot_reliable_map(corr.status, acc_arr, out / "acceptance.png", spec.n if spec.k > 1 else None,
                          title=f"accepted {accepted}/{len(correct)}")
    _say(f"{accepted}/{len(correct)} accepted")
    _say(f"forged acceptances: {len(forged_rows)} ({summary['forged_in_rel']} at reliable nodes)")
    for r in forged_rows[:20]:
        _say(f"  node {tuple(r['node'])} accepted forged {tuple(r['source'])}:{r['payload']}"
             f"{' [in Rel]' if r['in_rel'] else ''}")
    if trace.truncated:
        _say("run truncated by the event budget")
    return EXIT_ASSERT if (trace.truncated or safety or liveness) else EXIT_OK


def cmd_analyze(cfg: ExperimentConfig) -> int:
    spec = cfg.spec()
    corr = _correctness(cfg)
    out = Path(cfg.out)
    report = fraction_report(spec, corr, cfg.protocol)
    rel = rel_k_array(spec, corr, cfg.protocol)
    write_json(out / "report.json", {**cfg.params(), **report})
    write_table(out, "reliable", _node_rows(corr, rel), cfg.params())
    if cfg.plots:
        from .plotting import plot_reliable_map

        plot_reliable_map(corr.status, rel, out / "reliable.png", spec.n if spec.k > 1 else None)
    _say(f"reliable {report['reliable']}/{report['nodes']} fraction {report['fraction']:.6f}")
    for lv in report["levels"]:
        _say(f"  level {lv['level']}: {lv['correct_macro_nodes']}/{lv['macro_nodes']} correct macro-nodes")
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig) -> int:
    spec = cfg.spec()
    corr = _correctness(cfg)
    out = Path(cfg.out)
    rows, examples = [], []
    ok = True
    for kind in cfg.adversaries():
        rep = verify_reliable(spec, corr, trials=cfg.trials, adversaries=(kind,), seed=cfg.seed,
                              max_sources=cfg.max_sources, policy=cfg.policy, cap=cfg.cap,
                              protocol=cfg.protocol, budget=cfg.event_budget)
        d = rep.to_dict()
        examples.extend(d.pop("counterexamples"))
        rows.append({"adversary": kind, **d})
        ok &= rep.ok
        _say(f"{kind}: runs={rep.runs} pairs={rep.pairs_checked} liveness_failures={rep.liveness_failures} "
             f"safety_violations={rep.safety_violations} truncated={rep.truncated_runs}")
    write_table(out, "verify", rows, cfg.params())
    write_table(out, "counterexamples", examples, cfg.params())
    _say("OK" if ok else "VIOLATIONS FOUND")
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_worstcase(cfg: ExperimentConfig) -> int:
    spec = cfg.spec()
    out = Path(cfg.out)
    res = worst_case_experiment(spec, cfg.resolved_mode(), budget=cfg.byzantine_budget, count=cfg.count,
                                seed=cfg.seed, protocol=cfg.protocol)
    summary = res.to_dict()
    write_json(out / "summary.json", {**cfg.params(), **summary})
    write_table(out, "placements", res.rows, cfg.params())
    if cfg.plots and res.rows:
        from .plotting import plot_fraction_hist

        plot_fraction_hist([r["fraction"] for r in res.rows], summary["bound"], out / "fractions.png",
                           title=f"{res.mode}, {res.budget} Byzantine, n={spec.n} k={spec.k}")
    _say(f"{res.mode}: {res.tested} placements, min fraction {summary['min_fraction']:.6f} "
         f"(bound {summary['bound']:.4f}) -> {'PASS' if res.passed else 'FAIL'}")
    return EXIT_OK if res.passed else EXIT_ASSERT


def cmd_montecarlo(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    alpha = cfg.alpha_value()
    mus = cfg.mu or [0.999]
    # g only bounds P when every single-Byzantine placement leaves a correct macro-node
    applies = bool(worst_case_experiment(GridSpec(cfg.n, 1), protocol=cfg.protocol,
                                         keep_rows=False).all_macro_correct)
    if not applies:
        _say(f"note: some single-Byzantine placements at n={cfg.n} break macro-correctness; "
             "the analytic bound does not apply and is reported only")
    rows = []
    ok = True
    for mu in mus:
        if cfg.quantity == "P":
            res = monte_carlo_P(mu, cfg.n, cfg.trials, cfg.seed, protocol=cfg.protocol, workers=cfg.workers)
            bound = g(mu, cfg.n, alpha)
        else:
            res = monte_carlo_F(mu, cfg.spec(), cfg.trials, cfg.seed, protocol=cfg.protocol, workers=cfg.workers)
            bound = iterated_product_bound(mu, cfg.k, cfg.n, alpha)
        holds = res.estimate + 3 * res.stderr >= bound
        if applies:
            ok &= holds
        rows.append({**res.to_dict(), "bound": bound, "alpha": float(alpha), "bound_applies": applies,
                     "within_3sigma": holds})
        verdict = ("ok" if holds else "BELOW BOUND") if applies else "n/a"
        _say(f"{cfg.quantity}(mu={mu}) k={res.params['k']}: {res.estimate:.6f} +- {res.stderr:.6f} "
             f"(bound {bound:.6f}) {verdict}")
    write_table(out, "montecarlo", rows, cfg.params())
    if cfg.plots:
        from .plotting import plot_mc

        plot_mc(rows, out / "montecarlo.png")
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_bounds(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    alpha = cfg.alpha_value()
    if cfg.gamma is not None and not 0.0 < cfg.gamma < 1.0:
        raise ConfigError(f"gamma must lie in (0, 1), got {cfg.gamma}")
    if not 0.0 <= cfg.mu_min <= cfg.mu_max <= 1.0 or cfg.points < 2:
        raise ConfigError("need 0 <= mu_min <= mu_max <= 1 and points >= 2")
    cert = limit_certificate(cfg.n, alpha, cfg.beta, cfg.target)
    mus = np.linspace(cfg.mu_min, cfg.mu_max, cfg.points).tolist()
    try:
        rows = bound_curve(mus, cfg.n, alpha, cfg.beta, gamma=cfg.gamma)
    except ValueError as exc:
        if cert.passed:
            raise
        rows = []
        _say(f"no curve: {exc}")
    write_json(out / "certificate.json", {**cfg.params(), "alpha_fraction": str(alpha), **cert.to_dict()})
    write_table(out, "certificate_steps", cert.steps, cfg.params())
    write_table(out, "curve", rows, cfg.params())
    if cfg.plots and rows:
        from .plotting import plot_bound_curves

        plot_bound_curves(rows, out / "bounds.png", cfg.target)
    for s in cert.steps:
        _say(f"  {s['name']}: {s['value']} {'' if not s['gate'] else ('ok' if s['passed'] else 'FAILED')}")
    verdict = "PASS" if cert.passed else f"FAIL at {cert.first_failure}"
    _say(f"certificate {verdict}: gamma={cert.gamma} i0={cert.i0} bound={cert.bound}")
    return EXIT_OK if cert.passed else EXIT_ASSERT


HANDLERS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "verify": cmd_verify,
    "worstcase": cmd_worstcase,
    "montecarlo": cmd_montecarlo,
    "bounds": cmd_bounds,
}


# ---------------------------------------------------------------------------
# argument parsing


def _node(text: str) -> list:
    parts = text.replace(",", " ").split()
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'i,j', got {text!r}")
    return [int(parts[0]), int(parts[1])]


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--config", help="JSON config; explicit flags override it")
    common.add_argument("--n", type=int, help="cluster side N (even, >= 4)")
    common.add_argument("--k", type=int, help="hierarchy depth")
    common.add_argument("--seed", type=int, help="master seed (required by randomized commands)")
    common.add_argument("--trials", type=int)
    common.add_argument("--adversary", help=f"one of {', '.join(KINDS)}; verify takes a comma list")
    common.add_argument("--placement-file", dest="placement_file", help="Byzantine nodes, 'i j' per line")
    common.add_argument("--out", help="output directory")
    common.add_argument("--protocol", help="base protocol")
    common.add_argument("--cap", type=int, help="forwarding cap of the base protocol")
    common.add_argument("--mu", type=float, action="append", help="correctness probability (repeatable)")
    common.add_argument("--no-plots", dest="plots", action="store_false")
    common.add_argument("--dump-config", dest="dump_config", action="store_true",
                        help="print the resolved config and exit")

    parser = argparse.ArgumentParser(prog="gridcast", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"gridcast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run one broadcast")
    p.add_argument("--source", type=_node, default=S)
    p.add_argument("--payload", default=S)
    p.add_argument("--fake-source", dest="fake_source", type=_node, default=S)
    p.add_argument("--policy", choices=POLICIES, default=S)
    p.add_argument("--rule", choices=DELAY_RULES, default=S)
    p.add_argument("--record", action=argparse.BooleanOptionalAction, default=S)
    p.add_argument("--event-budget", dest="event_budget", type=int, default=S)

    sub.add_parser("analyze", parents=[common], help="reliable-set report")

    p = sub.add_parser("verify", parents=[common], help="check Rel against simulated adversaries")
    p.add_argument("--max-sources", dest="max_sources", type=int, default=S)
    p.add_argument("--policy", choices=POLICIES, default=S)
    p.add_argument("--event-budget", dest="event_budget", type=int, default=S)

    p = sub.add_parser("worstcase", parents=[common], help="minimum Rel fraction over placements")
    p.add_argument("--mode", choices=PLACEMENT_MODES, default=S)
    p.add_argument("--count", type=int, default=S)
    p.add_argument("--byzantine", dest="byzantine_budget", type=int, default=S,
                   help="number of Byzantine nodes (default 2^(k-1))")

    p = sub.add_parser("montecarlo", parents=[common], help="estimate P or F and compare with the bound")
    p.add_argument("--quantity", choices=("P", "F"), default=S)
    p.add_argument("--workers", type=int, default=S)
    p.add_argument("--alpha", default=S, help="auto, published, reference or a fraction such as 9856/9900")

    p = sub.add_parser("bounds", parents=[common], help="limit-bound certificate and curves")
    p.add_argument("--alpha", default=S, help="auto, published, reference or a fraction such as 9856/9900")
    p.add_argument("--beta", type=float, default=S)
    p.add_argument("--target", type=float, default=S)
    p.add_argument("--gamma", type=float, default=S, help="override the slope used for the curves")
    p.add_argument("--mu-min", dest="mu_min", type=float, default=S)
    p.add_argument("--mu-max", dest="mu_max", type=float, default=S)
    p.add_argument("--points", type=int, default=S)
    return parser


def resolve_config(argv=None) -> tuple[ExperimentConfig, bool]:
    args = vars(build_parser().parse_args(argv))
    dump = args.pop("dump_config", False)
    cfg_path = args.pop("config", None)
    if cfg_path is not None:
        try:
            cfg = ExperimentConfig.from_json(Path(cfg_path).read_text())
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"cannot load config {cfg_path}: {exc}") from None
    else:
        cfg = ExperimentConfig()
    for key, value in args.items():
        setattr(cfg, key, value)
    return cfg, dump


def main(argv=None) -> int:
    try:
        cfg, dump = resolve_config(argv)
        cfg.validate()
        if dump:
            print(cfg.to_json())
            return EXIT_OK
        if cfg.needs_seed() and cfg.seed is None:
            raise ConfigError(f"{cfg.command} is randomized: pass --seed")
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(cfg.to_json() + "\n")
        return HANDLERS[cfg.command](cfg)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
