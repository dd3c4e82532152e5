"""Scenario files: schema, loading, and the simulation driver.

A scenario is one TOML file that fully determines a run (see
``SCENARIO_SCHEMA`` and the bundled examples in ``qkdf/scenarios``).
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import tomli

from .bits import unpack_le
from .engine import InProcessChannel, PipelinePolicy, PipelineStats, QKDLink
from .errors import ConfigError, KeyStarvation
from .qchannel import ChannelParams, EveKind, EveModel
from .relaynet import LinkStatus, RelayGraph, link_key, link_monitor, transport_key
from .tunnel import PoolPairSource, RelaySource, Tunnel, TunnelPolicy

log = logging.getLogger(__name__)

_POS_INT = {"type": "integer", "minimum": 1}

_CHANNEL = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "mu": {"type": "number", "exclusiveMinimum": 0},
        "loss_db": {"type": "number", "minimum": 0},
        "detector_efficiency": {"type": "number", "minimum": 0, "maximum": 1},
        "dark_count_prob": {"type": "number", "minimum": 0, "maximum": 1},
        "intrinsic_qber": {"type": "number", "minimum": 0, "maximum": 1},
        "pulse_count": {"type": "integer", "minimum": 0},
    },
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "nodes", "links"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "blocks": _POS_INT,
        "seconds": {"type": "number", "exclusiveMinimum": 0},
        "nodes": {"type": "array", "minItems": 2, "uniqueItems": True, "items": {"type": "string", "minLength": 1}},
        "channel": _CHANNEL,
        "pipeline": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "defense": {"enum": ["bennett", "slutsky"]},
                "c": {"type": "number", "minimum": 0},
                "qber_threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
                "min_block_bits": _POS_INT,
                "max_block_bits": _POS_INT,
                "max_frames_per_block": _POS_INT,
                "r": {"type": "number", "minimum": 0},
                "m1": {"type": "number", "minimum": 0, "maximum": 1},
                "m2": {"type": "number", "minimum": 0, "maximum": 1},
                "link_kind": {"enum": ["weak_coherent", "entangled"]},
                "auth_low_watermark": {"type": "integer", "minimum": 0},
                "auth_replenish_bits": _POS_INT,
            },
        },
        "monitor": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"window": _POS_INT, "recovery_blocks": _POS_INT},
        },
        "links": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["a", "b"],
                "properties": {
                    "a": {"type": "string"},
                    "b": {"type": "string"},
                    "auth_bits": {"type": "integer", "minimum": 256},
                    "auth_key": {"type": "string", "pattern": "^([0-9a-fA-F]{2}){32,}$"},
                    "cut_at_block": _POS_INT,
                    "channel": _CHANNEL,
                    "eve": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["kind"],
                        "properties": {
                            "kind": {"enum": [k.value for k in EveKind]},
                            "intercept_fraction": {"type": "number", "minimum": 0, "maximum": 1},
                        },
                    },
                },
            },
        },
        "transports": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["src", "dst", "key_len"],
                "properties": {
                    "src": {"type": "string"},
                    "dst": {"type": "string"},
                    "key_len": _POS_INT,
                    "every": _POS_INT,
                },
            },
        },
        "tunnels": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "src", "dst"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "src": {"type": "string"},
                    "dst": {"type": "string"},
                    "mode": {"enum": ["reseed", "otp"]},
                    "rekey_interval": {"type": "number", "exclusiveMinimum": 0},
                    "rekey_kbytes": {"type": "number", "exclusiveMinimum": 0},
                    "key_bits": {"enum": [128, 192, 256]},
                    "blocks_per_negotiation": _POS_INT,
                    "otp_pad_bits": _POS_INT,
                    "negotiation_timeout": {"type": "number", "exclusiveMinimum": 0},
                    "bytes_per_round": {"type": "integer", "minimum": 0},
                    "auth_bits": {"type": "integer", "minimum": 256},
                },
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "stats": {"type": "string"},
                "csv": {"type": "string"},
                "summary": {"type": "string"},
                "transports": {"type": "string"},
                "tunnels": {"type": "string"},
            },
        },
    },
    "oneOf": [{"required": ["blocks"]}, {"required": ["seconds"]}],
}

DEFAULT_AUTH_BITS = 1 << 22
BUNDLED = ("baseline", "intercept", "ring4", "lowloss")


@dataclass(frozen=True)
class LinkSpec:
    a: str
    b: str
    channel: ChannelParams
    eve: EveModel
    auth_bits: int = DEFAULT_AUTH_BITS
    cut_at_block: int | None = None
    auth_key: bytes | None = None  # prepositioned key; overrides auth_bits

    @property
    def name(self) -> str:
        return f"{self.a}-{self.b}"


@dataclass(frozen=True)
class TransportSpec:
    src: str
    dst: str
    key_len: int
    every: int = 1


@dataclass(frozen=True)
class TunnelSpec:
    name: str
    src: str
    dst: str
    policy: TunnelPolicy
    bytes_per_round: int = 0
    auth_bits: int = 1 << 20


@dataclass(frozen=True)
class OutputSpec:
    stats: str = "stats.jsonl"
    csv: str | None = None
    summary: str = "summary.txt"
    transports: str = "transports.jsonl"
    tunnels: str = "tunnels.jsonl"


@dataclass(frozen=True)
class Scenario:
    name: str
    nodes: tuple[str, ...]
    links: tuple[LinkSpec, ...]
    policy: PipelinePolicy = PipelinePolicy()
    seed: int = 0
    blocks: int | None = None
    seconds: float | None = None
    monitor_window: int = 10
    recovery_blocks: int = 20
    transports: tuple[TransportSpec, ...] = ()
    tunnels: tuple[TunnelSpec, ...] = ()
    output: OutputSpec = OutputSpec()
    description: str = ""


def _where(err: jsonschema.ValidationError) -> str:
    path = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
    return path.lstrip(".") or "<top level>"


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    errors = sorted(jsonschema.Draft202012Validator(SCENARIO_SCHEMA).iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{source}: {_where(e)}: {e.message}" for e in errors]
        raise ConfigError("\n".join(lines))
    return _build(raw, source)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists() and str(path) in BUNDLED:
        return bundled(str(path))
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from None
    return parse_scenario(text, str(path))


def bundled(name: str) -> Scenario:
    text = resources.files("qkdf").joinpath("scenarios", f"{name}.toml").read_text(encoding="utf-8")
    return parse_scenario(text, f"bundled:{name}")


def _build(raw: dict, source: str) -> Scenario:
    nodes = tuple(raw["nodes"])
    base = dict(raw.get("channel", {}))
    links = []
    seen = set()
    for i, lk in enumerate(raw["links"]):
        where = f"{source}: links[{i}]"
        for end in ("a", "b"):
            if lk[end] not in nodes:
                raise ConfigError(f"{where}.{end}: unknown node {lk[end]!r}")
        try:
            a, b = link_key(lk["a"], lk["b"])
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        if (a, b) in seen:
            raise ConfigError(f"{where}: duplicate link {a}-{b}")
        seen.add((a, b))
        try:
            params = ChannelParams(**{**base, **lk.get("channel", {})})
            eve = EveModel(**lk.get("eve", {}))
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        if "auth_key" in lk and "auth_bits" in lk:
            raise ConfigError(f"{where}: give auth_key or auth_bits, not both")
        key = bytes.fromhex(lk["auth_key"]) if "auth_key" in lk else None
        bits = 8 * len(key) if key else lk.get("auth_bits", DEFAULT_AUTH_BITS)
        links.append(LinkSpec(a, b, params, eve, bits, lk.get("cut_at_block"), key))
    links.sort(key=lambda s: (s.a, s.b))

    try:
        policy = PipelinePolicy(**raw.get("pipeline", {}))
    except (ConfigError, TypeError) as exc:
        raise ConfigError(f"{source}: pipeline: {exc}") from None

    def check_pair(kind, i, spec):
        for end in ("src", "dst"):
            if spec[end] not in nodes:
                raise ConfigError(f"{source}: {kind}[{i}].{end}: unknown node {spec[end]!r}")
        if spec["src"] == spec["dst"]:
            raise ConfigError(f"{source}: {kind}[{i}]: src and dst must differ")

    transports = []
    for i, t in enumerate(raw.get("transports", [])):
        check_pair("transports", i, t)
        transports.append(TransportSpec(t["src"], t["dst"], t["key_len"], t.get("every", 1)))

    tunnels = []
    for i, t in enumerate(raw.get("tunnels", [])):
        check_pair("tunnels", i, t)
        try:
            pol = TunnelPolicy(
                mode=t.get("mode", "reseed"),
                rekey_interval=t.get("rekey_interval", 60.0),
                rekey_kbytes=t.get("rekey_kbytes"),
                key_bits_per_session=t.get("key_bits", 256),
                qkd_blocks_per_negotiation=t.get("blocks_per_negotiation", 1),
                negotiation_timeout=t.get("negotiation_timeout", 120.0),
                otp_pad_bits=t.get("otp_pad_bits", 1 << 16),
            )
        except ConfigError as exc:
            raise ConfigError(f"{source}: tunnels[{i}]: {exc}") from None
        tunnels.append(TunnelSpec(t["name"], t["src"], t["dst"], pol, t.get("bytes_per_round", 0), t.get("auth_bits", 1 << 20)))
    if len({t.name for t in tunnels}) != len(tunnels):
        raise ConfigError(f"{source}: tunnel names must be unique")

    mon = raw.get("monitor", {})
    return Scenario(
        name=raw["name"],
        nodes=nodes,
        links=tuple(links),
        policy=policy,
        seed=raw.get("seed", 0),
        blocks=raw.get("blocks"),
        seconds=raw.get("seconds"),
        monitor_window=mon.get("window", 10),
        recovery_blocks=mon.get("recovery_blocks", 20),
        transports=tuple(transports),
        tunnels=tuple(tunnels),
        output=OutputSpec(**raw.get("output", {})),
        description=raw.get("description", ""),
    )


# -- running -------------------------------------------------------------------


@dataclass
class RunResult:
    scenario: Scenario
    stats: list[PipelineStats] = field(default_factory=list)
    transports: list[dict] = field(default_factory=list)
    tunnels: list[dict] = field(default_factory=list)
    events: list[tuple] = field(default_factory=list)
    link_status: dict[str, str] = field(default_factory=dict)
    sim_time: float = 0.0
    rounds: int = 0

    @property
    def alarmed(self) -> bool:
        return any(ev[1] == LinkStatus.ALARMED.value for ev in self.events) or any(
            s.reason == "eavesdropping suspected" for s in self.stats
        )


def _seed(root: int, *path: int) -> list[int]:
    return [root, *path]


def run_scenario(sc: Scenario, jobs: int = 1) -> RunResult:
    graph = RelayGraph(sc.nodes, sc.policy.qber_threshold, sc.recovery_blocks)
    engines: list[QKDLink] = []
    for i, spec in enumerate(sc.links):
        eng = QKDLink(
            spec.channel,
            spec.eve,
            sc.policy,
            seed=_seed(sc.seed, 1, i),
            name=spec.name,
            session_id=i + 1,
            auth_key=None if spec.auth_key is None else unpack_le(spec.auth_key, 8 * len(spec.auth_key)),
            auth_key_bits=spec.auth_bits,
        )
        lk = graph.add_engine_link(spec.a, spec.b, eng)
        lk.window = type(lk.window)(maxlen=sc.monitor_window)
        engines.append(eng)

    transport_rng = np.random.default_rng(_seed(sc.seed, 2))
    tunnels = []
    for j, ts in enumerate(sc.tunnels):
        rng = np.random.default_rng(_seed(sc.seed, 3, j))
        key = link_key(ts.src, ts.dst)
        if key in graph.links:
            pools = graph.links[key].pools
            source = PoolPairSource(pools[ts.src], pools[ts.dst])
        else:
            source = RelaySource(graph, ts.src, ts.dst, rng)
        chan = InProcessChannel.prepositioned(1000 + j, rng, ts.auth_bits)
        tun = Tunnel(ts.name, ts.policy, source, chan, nonce_source=rng.bytes)
        tunnels.append((ts, tun, rng, {"refused": 0}))

    res = RunResult(sc)
    pool = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None
    rnd = 0
    try:
        while True:
            if sc.blocks is not None and rnd >= sc.blocks:
                break
            if sc.seconds is not None and res.sim_time >= sc.seconds:
                break
            rnd += 1
            for spec in sc.links:
                if spec.cut_at_block == rnd:
                    link_monitor(graph, (spec.a, spec.b), cut=True)
            active = [e for e, s in zip(engines, sc.links) if graph.links[(s.a, s.b)].status is not LinkStatus.CUT]
            if pool is not None:
                results = list(pool.map(lambda e: e.run_block(), active))
            else:
                results = [e.run_block() for e in active]
            for eng, r in zip(active, results):
                res.stats.append(r.stats)
                a, b = eng.name.split("-", 1)
                link_monitor(graph, (a, b), r.stats)
            res.sim_time = max((e.sim_time for e in engines), default=0.0)

            for t in sc.transports:
                if rnd % t.every:
                    continue
                tr = transport_key(graph, t.src, t.dst, t.key_len, transport_rng)
                res.transports.append(
                    {
                        "round": rnd,
                        "transport_id": tr.transport_id.hex(),
                        "src": t.src,
                        "dst": t.dst,
                        "key_len": t.key_len,
                        "path": tr.path,
                        "completed": tr.completed,
                        "reason": tr.reason,
                        "consumed": sum(rc.bits for rc in tr.receipts),
                    }
                )

            for ts, tun, rng, counters in tunnels:
                tun.advance(res.sim_time - tun.clock)
                if tun.up and ts.bytes_per_round:
                    data = rng.bytes(ts.bytes_per_round)
                    try:
                        if tun.send(data) != data:
                            raise AssertionError("tunnel round trip mismatch")
                    except KeyStarvation:
                        counters["refused"] += 1
                res.tunnels.append(
                    {
                        "tunnel": ts.name,
                        "round": rnd,
                        "sim_time": res.sim_time,
                        "mode": ts.policy.mode.value,
                        "up": tun.up,
                        "bytes_delivered": tun.bytes_delivered,
                        "rollovers": tun.rollovers,
                        "negotiations": len(tun.negotiations),
                        "confirm_failures": tun.confirm_failures,
                        "refused": counters["refused"],
                    }
                )
    finally:
        if pool is not None:
            pool.shutdown()
    res.rounds = rnd
    res.events = [(f"{k[0]}-{k[1]}", status, why) for k, status, why in graph.events]
    res.link_status = {f"{a}-{b}": lk.status.value for (a, b), lk in graph.links.items()}
    return res


# -- outputs -----------------------------------------------------------------------


def stats_jsonl(stats: list[PipelineStats]) -> str:
    return "".join(json.dumps(s.as_dict()) + "\n" for s in stats)


def stats_csv(rows: list[dict]) -> str:
    import csv
    import io

    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=PipelineStats.columns(), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


RECONCILED_REASONS = ("eavesdropping suspected", "insufficient entropy")


def link_summary(rows: list[dict]) -> dict[str, dict]:
    out: dict[str, dict] = {}
    for r in rows:
        agg = out.setdefault(
            r["link"],
            {"blocks": 0, "delivered": 0, "key_bits": 0, "b": 0, "e": 0, "d": 0, "alarms": 0, "key_rate": 0.0, "aborted": 0},
        )
        agg["blocks"] += 1
        # only reconciled blocks have a known error count
        if r["status"] == "delivered" or r["reason"] in RECONCILED_REASONS:
            agg["b"] += r["b"]
            agg["e"] += r["e"]
            agg["d"] += r["d"]
        if r["status"] == "delivered":
            agg["delivered"] += 1
            agg["key_bits"] += r["resultant"]
        agg["alarms"] += r["reason"] == "eavesdropping suspected"
        agg["aborted"] += r["status"] == "aborted"
        agg["key_rate"] = r["key_rate"]
    for agg in out.values():
        agg["qber"] = agg["e"] / agg["b"] if agg["b"] else 0.0
    return out


def summary_text(res: RunResult) -> str:
    sc = res.scenario
    rows = [s.as_dict() for s in res.stats]
    lines = [
        f"scenario: {sc.name}",
        f"seed: {sc.seed}",
        f"defense: {sc.policy.defense.value}  c={sc.policy.c}  qber_threshold={sc.policy.qber_threshold}",
        f"rounds: {res.rounds}  simulated time: {res.sim_time:.3f} s",
        "",
        "links:",
    ]
    total_bits = 0
    for name, agg in link_summary(rows).items():
        total_bits += agg["key_bits"]
        lines.append(
            f"  {name}: status={res.link_status.get(name, '?')} blocks={agg['blocks']} delivered={agg['delivered']} "
            f"key_bits={agg['key_bits']} qber={agg['qber']:.4f} (e={agg['e']}/b={agg['b']}) "
            f"net_key_rate={agg['key_rate']:.2f} b/s alarmed_blocks={agg['alarms']} aborted={agg['aborted']}"
        )
    rate = total_bits / res.sim_time if res.sim_time else 0.0
    lines.append(f"final key rate (all links, gross): {rate:.2f} bits/s")
    lines.append(f"alarms raised: {sum(1 for e in res.events if e[1] == 'alarmed')}")
    for ev in res.events:
        lines.append(f"  event: {ev[0]} -> {ev[1]} ({ev[2]})")
    done = sum(t["completed"] for t in res.transports)
    lines.append(f"transports completed: {done}/{len(res.transports)}")
    last: dict[str, dict] = {}
    for rec in res.tunnels:
        last[rec["tunnel"]] = rec
    for name, rec in last.items():
        lines.append(
            f"tunnel {name}: mode={rec['mode']} up={rec['up']} bytes={rec['bytes_delivered']} "
            f"rollovers={rec['rollovers']} refused={rec['refused']}"
        )
    return "\n".join(lines) + "\n"


def write_outputs(res: RunResult, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = res.scenario.output
    paths = {"stats": out / spec.stats, "summary": out / spec.summary}
    paths["stats"].write_text(stats_jsonl(res.stats), encoding="utf-8")
    paths["summary"].write_text(summary_text(res), encoding="utf-8")
    if spec.csv:
        paths["csv"] = out / spec.csv
        paths["csv"].write_text(stats_csv([s.as_dict() for s in res.stats]), encoding="utf-8")
    if res.transports:
        paths["transports"] = out / spec.transports
        paths["transports"].write_text("".join(json.dumps(t) + "\n" for t in res.transports), encoding="utf-8")
    if res.tunnels:
        paths["tunnels"] = out / spec.tunnels
        paths["tunnels"].write_text("".join(json.dumps(t) + "\n" for t in res.tunnels), encoding="utf-8")
    return paths


def with_overrides(sc: Scenario, seed: int | None = None, defense: str | None = None) -> Scenario:
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        sc = replace(sc, seed=seed)
    if defense is not None:
        sc = replace(sc, policy=replace(sc.policy, defense=defense))
    return sc
