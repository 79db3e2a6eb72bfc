"""Config-driven experiment runner.

Parses bracketed key=value configs, executes the named experiment, and
writes schema-versioned CSVs plus a JSON manifest with checksums; figures
are rendered next to each CSV unless disabled. Given the same config,
seed, and tool version, the CSV bytes are identical on every run and for
every worker count: rows are produced in grid order, all parallel
reductions are order-independent, and floats are printed with repr.
"""
from __future__ import annotations

import configparser
import hashlib
import importlib.resources
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channels import Dmc, Pmf, Sdmc, load_channel
from .deviation import (
    lemma1_bound,
    martingale_check,
    monte_carlo_deviation,
    verify_lemma1_exhaustive,
)
from .errors import BoundViolated, ConfigParse
from .isac import (
    ConverseParams,
    DistortionFn,
    build_good_message_set,
    delta_lower_bound,
    frontier_sweep,
    load_code,
    load_distortion,
    message_failure_profile,
    restricted_measure_mass,
    simulate_code,
    triple_deviation_probabilities,
)
from .rng import RngStream
from .surgery import (
    expected_replacement_success,
    find_surgery_sites,
    is_well_ordered,
    well_order_step,
)
from .trees import (
    ScoreParams,
    StrategyTree,
    enumerate_trees,
    exhaustive_max_success,
    format_tree,
    load_tree,
    node_count,
    optimal_strategy,
    optimal_tree,
    strategy_from_tree,
    success_probability,
)

SCHEMA_LINE = "# schema=1"
KINDS = (
    "lemma1-scan",
    "optimal-audit",
    "surgery-audit",
    "martingale-audit",
    "mc-deviation",
    "isac-frontier",
    "isac-simulate",
    "converse-demo",
)
_EQUALITY_TOL = 1e-12
_EXHAUSTIVE_STRATEGY_CAP = 4096


@dataclass
class ExperimentConfig:
    """Parsed, validated experiment description."""

    kind: str
    path: Path
    raw_bytes: bytes
    channel: object
    n_values: list[int]
    mu_values: list[float] | None
    mu_schedule: str | None
    a_values: list[int]
    b_values: list[int]
    trials: int
    samples: int
    state_pmf: Pmf | None
    distortion: DistortionFn | None
    code: object
    distortion_cap: float
    resolution: int
    eps: float
    delta: float
    etas: list[float]
    seed: int
    out_dir: Path
    workers: int
    plots: bool
    emit_trees: bool
    tree_path: Path | None

    def mus_for(self, n: int) -> list[float]:
        if self.mu_schedule is not None:
            return [float(n) ** -0.25]
        return list(self.mu_values or [])


@dataclass
class RunManifest:
    """Reproducibility record written next to the outputs."""

    kind: str
    config_sha256: str
    seed: int
    workers: int
    version: str
    all_pass: bool
    outputs: dict = field(default_factory=dict)
    wall_clock_s: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


def _resolve_path(value: str, base: Path) -> Path:
    if value.startswith("pkgdata:"):
        name = value.split(":", 1)[1]
        return Path(str(importlib.resources.files("chanprobe") / "data" / name))
    p = Path(value)
    return p if p.is_absolute() else base / p


def _int_list(raw: str) -> list[int]:
    try:
        return [int(tok) for tok in raw.replace(",", " ").split()]
    except ValueError:
        raise ConfigParse(f"expected integers, got {raw!r}") from None


def _float_list(raw: str) -> list[float]:
    try:
        return [float(tok) for tok in raw.replace(",", " ").split()]
    except ValueError:
        raise ConfigParse(f"expected numbers, got {raw!r}") from None


def load_config(
    path,
    kind: str | None = None,
    out: str | None = None,
    seed: int | None = None,
    workers: int | None = None,
    plots: bool | None = None,
) -> ExperimentConfig:
    """Read and validate a config file; CLI values override file values."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ConfigParse(f"cannot read config {path}: {e}") from None
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(raw.decode())
    except (configparser.Error, UnicodeDecodeError) as e:
        raise ConfigParse(f"bad config syntax: {e}") from None

    def get(section, key, default=None):
        if parser.has_option(section, key):
            return parser.get(section, key).strip()
        return default

    cfg_kind = get("experiment", "kind")
    if kind is not None and cfg_kind is not None and kind != cfg_kind:
        raise ConfigParse(
            f"config is for kind {cfg_kind!r} but {kind!r} was requested"
        )
    kind = kind or cfg_kind
    if kind not in KINDS:
        raise ConfigParse(f"unknown experiment kind {kind!r}")

    base = path.parent
    channel = None
    if parser.has_section("channel"):
        specs = [k for k in ("bsc", "path", "pkgdata") if get("channel", k) is not None]
        if len(specs) != 1:
            raise ConfigParse("[channel] needs exactly one of: bsc, path, pkgdata")
        if specs[0] == "bsc":
            channel = Dmc.bsc(float(get("channel", "bsc")))
        else:
            value = get("channel", specs[0])
            if specs[0] == "pkgdata":
                value = f"pkgdata:{value}"
            channel = load_channel(_resolve_path(value, base))

    mu_values: list[float] | None = None
    mu_schedule: str | None = None
    raw_mu = get("grid", "mu")
    if raw_mu is not None:
        if raw_mu.replace(" ", "") == "n^-1/4":
            mu_schedule = "n^-1/4"
        else:
            mu_values = _float_list(raw_mu)

    state_pmf = None
    if get("isac", "state_pmf") is not None:
        state_pmf = Pmf(np.array(_float_list(get("isac", "state_pmf"))))
    distortion = None
    if get("isac", "distortion") is not None:
        distortion = load_distortion(_resolve_path(get("isac", "distortion"), base))
    code = None
    if get("isac", "code") is not None:
        code = load_code(_resolve_path(get("isac", "code"), base))

    try:
        config = ExperimentConfig(
            kind=kind,
            path=path,
            raw_bytes=raw,
            channel=channel,
            n_values=_int_list(get("grid", "n", "")) if get("grid", "n") else [],
            mu_values=mu_values,
            mu_schedule=mu_schedule,
            a_values=_int_list(get("grid", "a", "0")),
            b_values=_int_list(get("grid", "b", "1")),
            trials=int(get("mc", "trials", "10000")),
            samples=int(get("grid", "samples", "100")),
            state_pmf=state_pmf,
            distortion=distortion,
            code=code,
            distortion_cap=float(get("isac", "distortion_cap", "0.5")),
            resolution=int(get("isac", "resolution", "101")),
            eps=float(get("isac", "eps", "0.3")),
            delta=float(get("isac", "delta", "0.3")),
            etas=_float_list(get("isac", "eta", "0.1")),
            seed=seed if seed is not None else int(get("run", "seed", "0")),
            out_dir=Path(out) if out else base / get("run", "out", "out"),
            workers=workers if workers is not None else int(get("run", "workers", "1")),
            plots=plots if plots is not None else get("run", "plots", "true") == "true",
            emit_trees=get("run", "emit_trees", "false") == "true",
            tree_path=(
                _resolve_path(get("grid", "tree"), base)
                if get("grid", "tree") is not None
                else None
            ),
        )
    except ValueError as e:
        raise ConfigParse(f"bad config value: {e}") from None
    return config


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigParse(message)


def _dmc(config: ExperimentConfig) -> Dmc:
    _require(isinstance(config.channel, Dmc), "this experiment needs a dmc channel")
    return config.channel


def _sdmc(config: ExperimentConfig) -> Sdmc:
    _require(isinstance(config.channel, Sdmc), "this experiment needs an sdmc channel")
    return config.channel


def _grid(config: ExperimentConfig):
    _require(bool(config.n_values), "[grid] n is required")
    _require(
        config.mu_values is not None or config.mu_schedule is not None,
        "[grid] mu is required",
    )
    for n in config.n_values:
        for mu in config.mus_for(n):
            for a in config.a_values:
                for b in config.b_values:
                    yield n, mu, a, b


DEVIATION_HEADER = ["n", "mu", "a", "b", "method", "value", "ci", "bound", "pass"]


def _run_lemma1_scan(config: ExperimentConfig):
    dmc = _dmc(config)
    rows = []
    all_pass = True
    for n, mu, a, b in _grid(config):
        params = ScoreParams(a=a, b=b, mu=mu, dmc=dmc)
        try:
            report = verify_lemma1_exhaustive(n, params, workers=config.workers)
            ok = report.passed
            value = report.exact_or_estimate
        except BoundViolated:
            _, value = exhaustive_max_success(n, params, workers=config.workers)
            ok = False
        rows.append([n, mu, a, b, "exact_enumeration", value, 0.0,
                     lemma1_bound(n, mu), ok])
        all_pass &= ok
    return {"deviation.csv": (DEVIATION_HEADER, rows)}, {}, all_pass


def _run_mc_deviation(config: ExperimentConfig):
    dmc = _dmc(config)
    rows = []
    all_pass = True
    for idx, (n, mu, a, b) in enumerate(_grid(config)):
        params = ScoreParams(a=a, b=b, mu=mu, dmc=dmc)
        strategy = optimal_strategy(n, params)
        rng = RngStream(config.seed, idx << 32)
        report = monte_carlo_deviation(
            strategy, n, params, config.trials, rng, workers=config.workers
        )
        rows.append([n, mu, a, b, "monte_carlo", report.exact_or_estimate,
                     report.ci_halfwidth, report.bound, report.passed])
        all_pass &= report.passed
    return {"deviation.csv": (DEVIATION_HEADER, rows)}, {}, all_pass


def _run_optimal_audit(config: ExperimentConfig):
    dmc = _dmc(config)
    header = ["n", "mu", "a", "b", "optimal_value", "exhaustive_value",
              "abs_diff", "pass"]
    rows = []
    artifacts = {}
    all_pass = True
    for index, (n, mu, a, b) in enumerate(_grid(config)):
        params = ScoreParams(a=a, b=b, mu=mu, dmc=dmc)
        opt_value = success_probability(optimal_tree(n, params), params)
        best_tree, exh_value = exhaustive_max_success(
            n, params, workers=config.workers
        )
        diff = abs(opt_value - exh_value)
        ok = diff <= _EQUALITY_TOL
        rows.append([n, mu, a, b, opt_value, exh_value, diff, ok])
        all_pass &= ok
        if config.emit_trees:
            artifacts[f"argmax_tree_{index}.txt"] = format_tree(best_tree)
    return {"optimal_audit.csv": (header, rows)}, artifacts, all_pass


def _run_surgery_audit(config: ExperimentConfig):
    dmc = _dmc(config)
    _require(bool(config.n_values), "[grid] n is required")
    mu = config.mus_for(config.n_values[0])[0]
    a, b = config.a_values[0], config.b_values[0]
    id_header = ["n", "tree", "node", "expected", "actual", "abs_diff", "pass"]
    wo_header = ["n", "tree", "steps", "within_node_count", "monotone_ok",
                 "final_well_ordered", "pass"]
    id_rows, wo_rows = [], []
    all_pass = True
    if config.tree_path is not None:
        single = load_tree(config.tree_path)
        _require(
            single.x_size <= dmc.num_inputs
            and single.y_size == dmc.num_outputs,
            "tree alphabets do not fit the configured channel",
        )
        schedule = [(single.n, [(0, single)])]
    else:
        schedule = [
            (n, enumerate(enumerate_trees(n, dmc.num_inputs, dmc.num_outputs)))
            for n in config.n_values
        ]
    for n, trees in schedule:
        params = ScoreParams(a=a, b=b, mu=mu, dmc=dmc)
        for index, tree in trees:
            base = success_probability(tree, params)
            for site in find_surgery_sites(tree, a):
                expected = expected_replacement_success(site, params)
                diff = abs(expected - base)
                ok = diff <= _EQUALITY_TOL
                id_rows.append([n, index, site.node, expected, base, diff, ok])
                all_pass &= ok
            current, previous, steps, monotone = tree, base, 0, True
            cap = tree.num_nodes
            while not is_well_ordered(current, a) and steps <= cap:
                current = well_order_step(current, params)
                value = success_probability(current, params)
                monotone &= value >= previous - _EQUALITY_TOL
                previous = value
                steps += 1
            finished = is_well_ordered(current, a)
            ok = finished and steps <= cap and monotone
            wo_rows.append([n, index, steps, steps <= cap, monotone, finished, ok])
            all_pass &= ok
    return (
        {"surgery_identity.csv": (id_header, id_rows),
         "well_order.csv": (wo_header, wo_rows)},
        {},
        all_pass,
    )


def _run_martingale_audit(config: ExperimentConfig):
    dmc = _dmc(config)
    _require(bool(config.n_values), "[grid] n is required")
    mu = config.mus_for(config.n_values[0])[0]
    a, b = config.a_values[0], config.b_values[0]
    header = ["n", "mode", "strategy", "max_abs_step_bias", "pass"]
    rows = []
    all_pass = True
    for n in config.n_values:
        params = ScoreParams(a=a, b=b, mu=mu, dmc=dmc)
        total = dmc.num_inputs ** node_count(n, dmc.num_outputs)
        if total <= _EXHAUSTIVE_STRATEGY_CAP:
            trees = enumerate(enumerate_trees(n, dmc.num_inputs, dmc.num_outputs))
            mode = "exhaustive"
        else:
            rng = RngStream(config.seed, n)
            picks = rng.generator().integers(
                0, dmc.num_inputs,
                size=(config.samples, node_count(n, dmc.num_outputs)),
            )
            trees = enumerate(
                StrategyTree(n, dmc.num_inputs, dmc.num_outputs, labels)
                for labels in picks
            )
            mode = "sampled"
        for index, tree in trees:
            report = martingale_check(strategy_from_tree(tree), n, params)
            ok = report.max_abs_step_bias <= _EQUALITY_TOL
            rows.append([n, mode, index, report.max_abs_step_bias, ok])
            all_pass &= ok
    return {"martingale.csv": (header, rows)}, {}, all_pass


def _run_isac_frontier(config: ExperimentConfig):
    sdmc = _sdmc(config)
    _require(config.state_pmf is not None, "[isac] state_pmf is required")
    _require(config.distortion is not None, "[isac] distortion is required")
    points = frontier_sweep(sdmc, config.state_pmf, config.distortion,
                            config.resolution)
    header = [f"p_x{i}" for i in range(sdmc.num_inputs)] + ["R_bits", "D"]
    rows = [
        [*(float(w) for w in pt.input_pmf.weights), pt.rate, pt.distortion]
        for pt in points
    ]
    return {"frontier.csv": (header, rows)}, {}, True


def _run_isac_simulate(config: ExperimentConfig):
    sdmc = _sdmc(config)
    _require(config.state_pmf is not None, "[isac] state_pmf is required")
    _require(config.distortion is not None, "[isac] distortion is required")
    _require(config.code is not None, "[isac] code is required")
    stats = simulate_code(
        config.code, sdmc, config.state_pmf, config.distortion,
        config.distortion_cap, config.trials, RngStream(config.seed, 0),
    )
    header = ["trials", "p_error", "p_error_lo", "p_error_hi",
              "p_excess", "p_excess_lo", "p_excess_hi"]
    rows = [[stats.trials, stats.p_error, *stats.p_error_ci,
             stats.p_excess, *stats.p_excess_ci]]
    return {"simulate.csv": (header, rows)}, {}, True


def _run_converse_demo(config: ExperimentConfig):
    sdmc = _sdmc(config)
    _require(config.state_pmf is not None, "[isac] state_pmf is required")
    _require(config.distortion is not None, "[isac] distortion is required")
    _require(config.code is not None, "[isac] code is required")
    code, pmf, dist = config.code, config.state_pmf, config.distortion
    n = code.n
    mu_n = ConverseParams.mu_n(n)
    triple_bound = lemma1_bound(n, mu_n)
    msg_header = ["eta", "m", "failure_prob", "in_good_set", "delta_mass",
                  "max_triple_dev_prob", "triple_bound", "pass"]
    sum_header = ["eta", "gamma_n", "good_fraction", "markov_ok",
                  "mu_n", "delta_floor", "good_entropy_bits",
                  "entropy_floor_bits", "pass"]
    msg_rows, sum_rows = [], []
    all_pass = True
    failures = [
        message_failure_profile(code, sdmc, pmf, dist, config.distortion_cap, m)[2]
        for m in range(code.num_messages)
    ]
    for eta in config.etas:
        cp = ConverseParams(eps=config.eps, delta=config.delta, eta=eta,
                            distortion_cap=config.distortion_cap)
        good, gamma = build_good_message_set(code, sdmc, pmf, dist, cp)
        fraction = len(good) / code.num_messages
        markov_ok = fraction >= gamma - _EQUALITY_TOL
        floor = delta_lower_bound(n, sdmc.num_inputs, sdmc.num_states,
                                  sdmc.num_outputs, eta)
        for m in range(code.num_messages):
            delta_mass = restricted_measure_mass(code, sdmc, pmf, dist, m, cp)
            dev = triple_deviation_probabilities(code, sdmc, pmf, dist, m, mu_n)
            worst_dev = float(dev.max())
            ok = worst_dev <= triple_bound + _EQUALITY_TOL
            if floor > 0.0 and m in good:
                ok &= delta_mass >= floor - _EQUALITY_TOL
            msg_rows.append([eta, m, failures[m], m in good, delta_mass,
                             worst_dev, triple_bound, ok])
            all_pass &= ok
        # uniform law on the good set: entropy = log2 |good| >= log2(gamma M)
        good_entropy = float(np.log2(len(good))) if good else float("-inf")
        entropy_floor = (
            float(np.log2(gamma * code.num_messages)) if gamma > 0 else float("-inf")
        )
        entropy_ok = (not good) or gamma <= 0 or good_entropy >= entropy_floor - 1e-9
        ok = markov_ok and entropy_ok
        sum_rows.append([eta, gamma, fraction, markov_ok, mu_n, floor,
                         good_entropy, entropy_floor, ok])
        all_pass &= ok
    return (
        {"converse_messages.csv": (msg_header, msg_rows),
         "converse_summary.csv": (sum_header, sum_rows)},
        {},
        all_pass,
    )


_RUNNERS = {
    "lemma1-scan": _run_lemma1_scan,
    "optimal-audit": _run_optimal_audit,
    "surgery-audit": _run_surgery_audit,
    "martingale-audit": _run_martingale_audit,
    "mc-deviation": _run_mc_deviation,
    "isac-frontier": _run_isac_frontier,
    "isac-simulate": _run_isac_simulate,
    "converse-demo": _run_converse_demo,
}


def _format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def format_csv(header: list[str], rows: list[list]) -> str:
    lines = [SCHEMA_LINE, ",".join(header)]
    lines.extend(",".join(_format_value(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def run(config: ExperimentConfig) -> RunManifest:
    """Execute the configured experiment and write CSVs, figures, manifest."""
    runner = _RUNNERS[config.kind]
    manifest = RunManifest(
        kind=config.kind,
        config_sha256=_sha256(config.raw_bytes),
        seed=config.seed,
        workers=config.workers,
        version=__version__,
        all_pass=False,
    )
    t0 = time.perf_counter()
    tables, artifacts, all_pass = runner(config)
    t1 = time.perf_counter()
    config.out_dir.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in tables.items():
        data = format_csv(header, rows).encode()
        (config.out_dir / name).write_bytes(data)
        manifest.outputs[name] = _sha256(data)
    for name, text in artifacts.items():
        data = text.encode()
        (config.out_dir / name).write_bytes(data)
        manifest.outputs[name] = _sha256(data)
    t2 = time.perf_counter()
    if config.plots:
        from . import plots

        for figure in plots.render(config.kind, tables, config.out_dir):
            manifest.outputs[figure] = _sha256(
                (config.out_dir / figure).read_bytes()
            )
    t3 = time.perf_counter()
    manifest.all_pass = bool(all_pass)
    manifest.wall_clock_s = {
        "compute": round(t1 - t0, 3),
        "write": round(t2 - t1, 3),
        "figures": round(t3 - t2, 3),
    }
    (config.out_dir / "manifest.json").write_text(manifest.to_json())
    return manifest
