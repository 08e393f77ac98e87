"""Configuration-driven experiment runner.

A single TOML file describes the graph, the objectives, the algorithm, and
the output layout; everything downstream (generators, link activation,
gossip events, stepsize search) is seeded, so identical configs produce
byte-identical trace CSVs.  See the bundled files under
``pushpull/configs/`` for the schema in use.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import certify as certify_mod
from . import gossip as gossip_mod
from .digraph import (
    Digraph,
    GraphSequence,
    leader_follower_split,
    random_strongly_connected,
    read_edge_list,
    write_edge_list,
)
from .mixing import (
    MixingPair,
    ValidationReport,
    build_norm_kit,
    validate_assumptions,
    write_matrix_csv,
)
from .objectives import ObjectiveSet, huber_set, random_quadratic_set
from .synchronous import (
    DivergenceError,
    StepsizeProfile,
    TimeVaryingMixing,
    Variant,
    run,
)
from .trace import RunTrace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CERTIFY = 3
EXIT_DIVERGED = 4

OUTPUT_DIR_ENV = "PUSHPULL_OUTPUT_DIR"

# One plotting "iteration" of the single-neighbor gossip protocol is
# conventionally a handful of ticks so curves stay comparable with the
# synchronous families; broadcast ticks touch more agents, hence fewer.
DEFAULT_TICKS_PER_POINT = {"single": 5, "all": 3}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()[:16]


def graph_hash(g: Digraph) -> str:
    payload = canonical_json({"n": g.n, "edges": [list(e) for e in g.sorted_edges]})
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def bundled_config_path(name: str) -> Path:
    here = Path(__file__).parent / "configs" / f"{name}.toml"
    return here


def load_config(path_or_name) -> dict:
    path = Path(path_or_name)
    if not path.exists():
        candidate = bundled_config_path(str(path_or_name))
        if candidate.exists():
            path = candidate
        else:
            raise ConfigError("config", f"no such file or bundled config: {path_or_name}")
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"TOML parse error: {exc}") from exc
    validate_config(cfg)
    return cfg


def _require(cfg: dict, section: str, key: str, types, optional=False, default=None):
    block = cfg.get(section)
    if block is None:
        raise ConfigError(section, "missing section")
    if key not in block:
        if optional:
            return default
        raise ConfigError(f"{section}.{key}", "missing required key")
    val = block[key]
    if not isinstance(val, types):
        raise ConfigError(
            f"{section}.{key}", f"expected {types}, got {type(val).__name__}"
        )
    return val


def validate_config(cfg: dict) -> None:
    for section in ("graph", "objective", "algorithm"):
        if section not in cfg:
            raise ConfigError(section, "missing section")

    gblock = cfg["graph"]
    if "file" in gblock:
        if not Path(gblock["file"]).exists():
            raise ConfigError("graph.file", f"no such file: {gblock['file']}")
    else:
        n = _require(cfg, "graph", "n", int)
        m = _require(cfg, "graph", "m", int)
        _require(cfg, "graph", "seed", int)
        if m < n or m > n * (n - 1):
            raise ConfigError("graph.m", f"need n <= m <= n(n-1), got m={m} for n={n}")
    if "leaders" in gblock and not isinstance(gblock["leaders"], list):
        raise ConfigError("graph.leaders", "expected a list of agent ids")
    if "activation_probability" in gblock:
        p = gblock["activation_probability"]
        if not isinstance(p, (int, float)) or not (0 < p <= 1):
            raise ConfigError("graph.activation_probability", "expected a number in (0, 1]")

    otype = _require(cfg, "objective", "type", str)
    if otype not in ("huber", "quadratic"):
        raise ConfigError("objective.type", f"unknown objective type {otype!r}")
    _require(cfg, "objective", "p", int)
    _require(cfg, "objective", "seed", int)
    if "n" in cfg["objective"] and "n" in gblock and cfg["objective"]["n"] != gblock["n"]:
        raise ConfigError("objective.n", "agent count disagrees with the graph block")

    fam = _require(cfg, "algorithm", "family", str)
    if fam not in ("pushpull", "gossip"):
        raise ConfigError("algorithm.family", f"unknown family {fam!r}")
    _require(cfg, "algorithm", "budget", int)
    variant = _require(cfg, "algorithm", "variant", str, optional=True, default="standard")
    if fam == "pushpull" and variant not in {v.value for v in Variant}:
        raise ConfigError("algorithm.variant", f"unknown variant {variant!r}")
    if fam == "gossip":
        if variant not in ("single", "all"):
            raise ConfigError("algorithm.variant", "gossip variant must be 'single' or 'all'")
        gamma = _require(cfg, "algorithm", "gamma", (int, float))
        if not (0 < gamma < 1):
            raise ConfigError("algorithm.gamma", "gamma must lie in (0, 1)")
        if "activation_probability" in gblock and gblock["activation_probability"] < 1:
            raise ConfigError(
                "graph.activation_probability",
                "random link activation is a synchronous-family option",
            )
    step = cfg["algorithm"].get("stepsize", "auto")
    if isinstance(step, str):
        if step not in ("auto", "certified"):
            raise ConfigError("algorithm.stepsize", f"unknown stepsize policy {step!r}")
    elif isinstance(step, (int, float)):
        if step < 0:
            raise ConfigError("algorithm.stepsize", "stepsize must be nonnegative")
    elif isinstance(step, list):
        if not all(isinstance(s, (int, float)) and s >= 0 for s in step):
            raise ConfigError("algorithm.stepsize", "stepsize list must be nonnegative numbers")
    else:
        raise ConfigError("algorithm.stepsize", "expected 'auto', 'certified', number, or list")


@dataclass
class Experiment:
    cfg: dict
    g_base: Digraph
    g_pull: Digraph
    g_push: Digraph
    leader_edges: frozenset
    pair: MixingPair
    obj: ObjectiveSet
    time_varying: bool
    report: ValidationReport | None = None

    @property
    def n(self) -> int:
        return self.g_base.n

    def mixing(self):
        if not self.time_varying:
            return self.pair
        gblock = self.cfg["graph"]
        p = gblock["activation_probability"]
        seed = gblock.get("activation_seed", 0)
        seq_pull = GraphSequence(self.g_pull, p, seed, self.leader_edges & self.g_pull.edges)
        seq_push = GraphSequence(self.g_push, p, seed, self.leader_edges & self.g_push.edges)
        return TimeVaryingMixing(seq_pull, seq_push, self.pair)


def build_experiment(cfg: dict) -> Experiment:
    gblock = cfg["graph"]
    if "file" in gblock:
        g = read_edge_list(gblock["file"])
    else:
        g = random_strongly_connected(gblock["n"], gblock["m"], gblock["seed"])

    leader_edges = frozenset()
    g_pull = g_push = g
    if gblock.get("leaders"):
        try:
            g_pull, g_push, leader_edges = leader_follower_split(
                g, gblock["leaders"], gblock.get("leader_seed", 0)
            )
        except ValueError as exc:
            raise ConfigError("graph.leaders", str(exc)) from exc

    ob = cfg["objective"]
    if ob["type"] == "huber":
        obj = huber_set(
            g.n,
            ob["p"],
            ob["seed"],
            delta=ob.get("delta", 1.0),
            offset_scale=ob.get("offset_scale", 1.0),
        )
    else:
        obj = random_quadratic_set(
            g.n,
            ob["p"],
            ob["seed"],
            weight_range=tuple(ob.get("weight_range", (1.0, 2.0))),
            target_scale=ob.get("target_scale", 1.0),
        )

    pair = MixingPair.from_graphs(g_pull, g_push)
    time_varying = bool(
        gblock.get("activation_probability") and gblock["activation_probability"] < 1
    )
    return Experiment(
        cfg=cfg,
        g_base=g,
        g_pull=g_pull,
        g_push=g_push,
        leader_edges=leader_edges,
        pair=pair,
        obj=obj,
        time_varying=time_varying,
    )


def resolve_profile(exp: Experiment) -> StepsizeProfile:
    """Apply the configured stepsize policy for the synchronous family."""
    cfg = exp.cfg
    step = cfg["algorithm"].get("stepsize", "auto")
    n = exp.n
    if isinstance(step, list):
        if len(step) != n:
            raise ConfigError("algorithm.stepsize", f"need {n} entries, got {len(step)}")
        return StepsizeProfile(np.array(step, dtype=float))
    if isinstance(step, (int, float)):
        return StepsizeProfile.uniform(n, float(step))
    if step == "certified":
        if exp.time_varying:
            raise ConfigError(
                "algorithm.stepsize", "certified stepsizes need a static graph"
            )
        kit = build_norm_kit(exp.pair)
        m0 = float(exp.pair.u @ exp.pair.v) / n
        alpha = certify_mod.certified_stepsize(exp.pair, kit, exp.obj, m0)
        return StepsizeProfile.uniform(n, alpha)
    # Geometric probe grid starting at the smooth-strongly-convex step.
    variant = Variant(cfg["algorithm"].get("variant", "standard"))
    base = 2.0 / (exp.obj.mu + exp.obj.L)
    budget = min(500, cfg["algorithm"]["budget"])
    mixing = exp.mixing()
    best = None
    for j in range(15):
        alpha = base * 2.0**-j
        profile = StepsizeProfile.uniform(n, alpha)
        try:
            tr = run(exp.obj, mixing, profile, variant, budget=budget, tol=0.0)
        except DivergenceError:
            continue
        score = tr.final_residual
        if not np.isfinite(score):
            continue
        if best is None or score < best[1]:
            best = (alpha, score)
    if best is None:
        raise ConfigError("algorithm.stepsize", "every probe stepsize diverged")
    return StepsizeProfile.uniform(n, best[0])


def resolve_gossip_alpha(exp: Experiment, gamma: float) -> float:
    cfg = exp.cfg
    step = cfg["algorithm"].get("stepsize", "auto")
    if isinstance(step, (int, float)) and not isinstance(step, bool):
        return float(step)
    if isinstance(step, list):
        raise ConfigError("algorithm.stepsize", "gossip needs a common stepsize")
    expectations = gossip_mod.expected_matrices(exp.g_pull, exp.g_push, gamma)
    if step == "certified":
        kit = certify_mod.build_gossip_kit(expectations)
        bounds = certify_mod.certified_gossip_bounds(expectations, kit, exp.obj, gamma)
        if not bounds.gamma_ok:
            raise certify_mod.CertificationError(bounds.reason)
        return bounds.alpha_bound
    mode = exp.cfg["algorithm"].get("variant", "single")
    base = 2.0 / (exp.obj.mu + exp.obj.L)
    budget = min(2000, cfg["algorithm"]["budget"])
    best = None
    for j in range(15):
        alpha = base * 2.0**-j
        try:
            tr = gossip_mod.run_gossip(
                exp.obj,
                exp.g_pull,
                exp.g_push,
                alpha,
                gamma,
                budget,
                seed=0,
                mode=mode,
                expectations=expectations,
            )
        except (DivergenceError, ValueError):
            continue
        score = tr.final_residual
        if not np.isfinite(score):
            continue
        if best is None or score < best[1]:
            best = (alpha, score)
    if best is None:
        raise ConfigError("algorithm.stepsize", "every probe stepsize diverged")
    return best[0]


def _fitted_rate(trace: RunTrace, squared: bool) -> float | None:
    series = trace.residual if squared else np.sqrt(np.maximum(trace.residual, 0.0))
    try:
        return certify_mod.fit_rate(series, ks=trace.k.astype(float)).rate
    except certify_mod.WindowError:
        return None


def output_dir(cfg: dict) -> Path:
    override = os.environ.get(OUTPUT_DIR_ENV)
    directory = override or cfg.get("output", {}).get("directory", "out")
    return Path(directory)


def run_experiment(cfg: dict, outdir: Path | None = None) -> dict:
    """Build, validate, (optionally) certify, run, and write artifacts.

    Returns the summary dict; raises ConfigError / CertificationError /
    DivergenceError for the CLI to map onto exit codes.
    """
    exp = build_experiment(cfg)
    outdir = Path(outdir) if outdir is not None else output_dir(cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    fam = cfg["algorithm"]["family"]
    budget = cfg["algorithm"]["budget"]
    tol = float(cfg["algorithm"].get("tol", 0.0))

    summary: dict = {
        "config_hash": chash,
        "graph_hash": graph_hash(exp.g_base),
        "objective": exp.obj.to_config(),
        "family": fam,
    }

    certificate = None
    if fam == "pushpull":
        profile = resolve_profile(exp)
        report = validate_assumptions(exp.pair, profile.alphas)
        (outdir / "validation.txt").write_text("\n".join(report.lines()) + "\n")
        if not report.ok:
            failing = "; ".join(c.name for c in report.failures())
            raise ConfigError("graph", f"assumption validation failed: {failing}")
        variant = Variant(cfg["algorithm"].get("variant", "standard"))
        if cfg["algorithm"].get("certify"):
            if exp.time_varying:
                raise ConfigError("algorithm.certify", "certificates need a static graph")
            kit = build_norm_kit(exp.pair)
            certificate = certify_mod.synchronous_certificate(
                exp.pair, kit, exp.obj, profile
            )
        trace = run(
            exp.obj,
            exp.mixing(),
            profile,
            variant,
            budget=budget,
            tol=tol,
        )
        trace.metadata["config_hash"] = chash
        trace.to_csv(outdir / "trace.csv")
        if cfg.get("output", {}).get("write_matrices"):
            write_matrix_csv(outdir / "R.csv", exp.pair.R, "row_stochastic")
            write_matrix_csv(outdir / "C.csv", exp.pair.C, "column_stochastic")
        summary.update(
            {
                "variant": variant.value,
                "stepsizes": profile.alphas.tolist(),
                "fitted_rate": _fitted_rate(trace, squared=False),
                **trace.summary(),
            }
        )
    else:
        gamma = float(cfg["algorithm"]["gamma"])
        mode = cfg["algorithm"].get("variant", "single")
        alpha = resolve_gossip_alpha(exp, gamma)
        report = validate_assumptions(exp.pair, np.full(exp.n, alpha))
        (outdir / "validation.txt").write_text("\n".join(report.lines()) + "\n")
        if not report.ok:
            failing = "; ".join(c.name for c in report.failures())
            raise ConfigError("graph", f"assumption validation failed: {failing}")
        expectations = gossip_mod.expected_matrices(exp.g_pull, exp.g_push, gamma)
        if cfg["algorithm"].get("certify"):
            kit = certify_mod.build_gossip_kit(expectations)
            bounds = certify_mod.certified_gossip_bounds(expectations, kit, exp.obj, gamma)
            if not bounds.gamma_ok:
                raise certify_mod.CertificationError(bounds.reason)
            certificate = certify_mod.gossip_certificate(
                expectations, kit, exp.obj, alpha, gamma
            )
        seeds = cfg["algorithm"].get("seeds", [0])
        record_every = cfg["algorithm"].get(
            "record_every", DEFAULT_TICKS_PER_POINT[mode]
        )
        write_events = bool(cfg.get("output", {}).get("write_events"))
        traces = []
        for s in seeds:
            tr = gossip_mod.run_gossip(
                exp.obj,
                exp.g_pull,
                exp.g_push,
                alpha,
                gamma,
                budget,
                tol=tol,
                seed=int(s),
                mode=mode,
                record_every=record_every,
                expectations=expectations,
                collect_events=write_events,
            )
            tr.metadata["config_hash"] = chash
            tr.to_csv(outdir / f"trace_seed{int(s)}.csv")
            if write_events:
                with open(outdir / f"events_seed{int(s)}.csv", "w") as fh:
                    fh.write("k,i,j,l\n")
                    for row in tr.metadata.get("events", []):
                        fh.write(",".join(str(x) for x in row) + "\n")
            traces.append(tr)
        # Early-stopped replicas leave ragged grids; aggregate the common prefix.
        common = min(len(t) for t in traces)
        mean_sq = np.stack([t.residual[:common] for t in traces]).mean(axis=0)
        ks_common = traces[0].k[:common]
        with open(outdir / "mean_square.csv", "w") as fh:
            fh.write("k,mean_residual\n")
            for kk, vv in zip(ks_common, mean_sq):
                fh.write(f"{int(kk)},{float(vv)!r}\n")
        summary.update(
            {
                "mode": mode,
                "alpha": alpha,
                "gamma": gamma,
                "seeds": [int(s) for s in seeds],
                "final_residual_mean": float(mean_sq[-1]),
                "iterations": int(ks_common[-1]),
                "status": traces[0].metadata.get("status"),
            }
        )
        try:
            summary["fitted_rate"] = certify_mod.fit_rate(
                mean_sq, ks=ks_common.astype(float)
            ).rate
        except certify_mod.WindowError:
            summary["fitted_rate"] = None

    if certificate is not None:
        payload = certificate.to_dict()
        payload["provenance"] = {
            "config_hash": chash,
            "graph_hash": graph_hash(exp.g_base),
            "objective_hash": hashlib.sha256(
                canonical_json(exp.obj.to_config()).encode()
            ).hexdigest()[:16],
        }
        (outdir / "certificate.json").write_text(json.dumps(payload, indent=2) + "\n")
        summary["certificate_rho"] = certificate.rho
        summary["alpha_bound"] = certificate.alpha_bound

    (outdir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def certify_experiment(cfg: dict, outdir: Path | None = None) -> dict:
    """Emit the certificate artifacts; compare against a run when one exists."""
    exp = build_experiment(cfg)
    outdir = Path(outdir) if outdir is not None else output_dir(cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    fam = cfg["algorithm"]["family"]
    if fam == "pushpull":
        if exp.time_varying:
            raise ConfigError("algorithm.certify", "certificates need a static graph")
        profile = resolve_profile(exp)
        kit = build_norm_kit(exp.pair)
        cert = certify_mod.synchronous_certificate(exp.pair, kit, exp.obj, profile)
        observed_source = outdir / "trace.csv"
        squared = False
    else:
        gamma = float(cfg["algorithm"]["gamma"])
        expectations = gossip_mod.expected_matrices(exp.g_pull, exp.g_push, gamma)
        kit = certify_mod.build_gossip_kit(expectations)
        bounds = certify_mod.certified_gossip_bounds(expectations, kit, exp.obj, gamma)
        if not bounds.gamma_ok:
            raise certify_mod.CertificationError(bounds.reason)
        alpha = resolve_gossip_alpha(exp, gamma)
        cert = certify_mod.gossip_certificate(expectations, kit, exp.obj, alpha, gamma)
        observed_source = outdir / "mean_square.csv"
        squared = True

    payload = cert.to_dict()
    payload["provenance"] = {
        "config_hash": config_hash(cfg),
        "graph_hash": graph_hash(exp.g_base),
        "objective_hash": hashlib.sha256(
            canonical_json(exp.obj.to_config()).encode()
        ).hexdigest()[:16],
    }
    if observed_source.exists():
        if squared:
            data = np.genfromtxt(observed_source, delimiter=",", names=True)
            series, ks = data["mean_residual"], data["k"]
        else:
            tr = RunTrace.read_csv(observed_source)
            series, ks = np.sqrt(np.maximum(tr.residual, 0.0)), tr.k.astype(float)
        try:
            observed = certify_mod.fit_rate(series, ks=ks).rate
            payload["comparison"] = {
                "observed_rate": observed,
                "predicted_rho": cert.rho,
                "observed_le_predicted_plus_margin": bool(observed <= cert.rho + 0.05),
            }
        except certify_mod.WindowError:
            payload["comparison"] = None
    (outdir / "certificate.json").write_text(json.dumps(payload, indent=2) + "\n")
    return payload


def validate_target(
    graph_path: str | None,
    cfg: dict | None,
    alpha: float = 1.0,
    push_graph_path: str | None = None,
):
    """Validation report for a raw graph file (pair) or a full config."""
    from .mixing import build_column_stochastic, build_row_stochastic, validate_matrices

    if cfg is not None:
        exp = build_experiment(cfg)
        return validate_assumptions(exp.pair, np.full(exp.n, alpha))
    g_pull = read_edge_list(graph_path)
    g_push = read_edge_list(push_graph_path) if push_graph_path else g_pull
    return validate_matrices(
        build_row_stochastic(g_pull),
        build_column_stochastic(g_push),
        np.full(g_pull.n, alpha),
    )


def gen_graph(n: int, m: int, seed: int, out_path) -> Digraph:
    g = random_strongly_connected(n, m, seed)
    write_edge_list(g, out_path)
    return g
