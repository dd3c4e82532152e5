"""Aggregate stats files from one or more runs into a text report and CSV."""

from __future__ import annotations

import json
from pathlib import Path

from .engine import PipelineStats
from .scenario import link_summary, stats_csv

_BLOCK_KEYS = set(PipelineStats.columns())


def load_records(paths: list[Path]) -> tuple[list[dict], list[dict], list[dict], list[str]]:
    blocks, tunnels, transports, warnings = [], [], [], []
    for path in paths:
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            warnings.append(f"{path}: {exc.strerror or exc}")
            continue
        for no, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                warnings.append(f"{path}:{no}: corrupt record ({exc.msg})")
                continue
            if not isinstance(rec, dict):
                warnings.append(f"{path}:{no}: not a JSON object")
            elif _BLOCK_KEYS <= rec.keys():
                blocks.append(rec)
            elif "tunnel" in rec:
                tunnels.append(rec)
            elif "transport_id" in rec:
                transports.append(rec)
            else:
                warnings.append(f"{path}:{no}: unrecognised record")
    return blocks, tunnels, transports, warnings


def build_report(paths: list[Path]) -> tuple[str, str, list[str]]:
    blocks, tunnels, transports, warnings = load_records(paths)
    lines = [f"block records: {len(blocks)}"]
    for name, agg in sorted(link_summary(blocks).items()):
        lines.append(
            f"  link {name}: blocks={agg['blocks']} delivered={agg['delivered']} key_bits={agg['key_bits']} "
            f"qber={agg['qber']:.4f} key_rate={agg['key_rate']:.2f} b/s alarmed_blocks={agg['alarms']}"
        )
    if transports:
        done = sum(bool(t.get("completed")) for t in transports)
        lines.append(f"transports: {done}/{len(transports)} completed")
    last: dict[str, dict] = {}
    for t in tunnels:
        last[t["tunnel"]] = t
    for name, t in sorted(last.items()):
        lines.append(
            f"  tunnel {name}: bytes={t.get('bytes_delivered', 0)} rollovers={t.get('rollovers', 0)} "
            f"refused={t.get('refused', 0)} up={t.get('up')}"
        )
    if warnings:
        lines.append(f"warnings: {len(warnings)} (report is partial)")
    return "\n".join(lines) + "\n", stats_csv(blocks), warnings
