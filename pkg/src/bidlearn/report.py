"""Convergence metrics built from trajectory logs, plus CSV/JSONL export."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .analysis import ReferenceStrategy
from .engine import TrajectoryLog

SCHEMA_VERSION = 1


@dataclass
class ConvergenceReport:
    H: int
    n: int
    window: int
    T0: int
    horizon: int
    agreement_phase: str
    windows: list = field(default_factory=list)
    rollout: list | None = None
    regret: list = field(default_factory=list)
    regret_kind: str = "exact-counterfactual"
    warnings: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def agreement_curve(self) -> np.ndarray:
        return np.array([np.nan if w["agreement"] is None else w["agreement"] for w in self.windows])

    def rollout_bids(self) -> np.ndarray:
        """(n, H) greedy bid per bidder and value; 0 where unobserved."""
        out = np.zeros((self.n, self.H), dtype=np.int64)
        for row in self.rollout or []:
            out[row["bidder"], row["value"] - 1] = row["bid"]
        return out

    def regret_curve(self, bidder: int) -> np.ndarray:
        pts = [(r["t"], r["regret"]) for r in self.regret if r["bidder"] == bidder]
        return np.array(pts, dtype=float).reshape(-1, 2)


def _segment(log: TrajectoryLog):
    cfg = log.config
    if cfg.horizon > cfg.T0:
        return cfg.T0, cfg.horizon, "exploit"
    return 0, cfg.horizon, "explore"


def regret_checkpoints(log: TrajectoryLog, points: int = 10) -> np.ndarray:
    """Cadence multiples up to the horizon, else ``points`` evenly spaced rounds."""
    cfg = log.config
    T = cfg.horizon
    if cfg.logging_cadence:
        cps = np.arange(cfg.logging_cadence, T + 1, cfg.logging_cadence, dtype=np.int64)
        if cps.size:
            return cps
    return np.unique(np.linspace(0, T, points + 1).astype(np.int64)[1:])


def regret_table(log: TrajectoryLog, checkpoints) -> np.ndarray:
    """Per-bidder context-averaged external regret at each checkpoint.

    Uses exact counterfactual sums replayed from the log; the realized side
    is the tie-expected utility of the bid actually played.
    """
    cfg = log.config
    H, n = cfg.grid.H, cfg.n
    mech = cfg.mechanism
    T = cfg.horizon
    cps = np.asarray(checkpoints, dtype=np.int64)
    out = np.zeros((n, cps.size))
    vals = np.ascontiguousarray(log.values[:T])
    bids = np.ascontiguousarray(log.bids[:T])
    for i in range(n):
        cum = np.zeros((cps.size, H, H))
        real = np.zeros((cps.size, H))
        kernels.replay_rewards(int(mech.kind), mech.diffs, mech.slots, vals, bids, H, i, cps, cum, real)
        out[i] = (cum.max(axis=2) - real).mean(axis=1)
    return out


def build_report(log: TrajectoryLog, ref: ReferenceStrategy | None = None, window: int | None = None,
                 checkpoints=None) -> ConvergenceReport:
    cfg = log.config
    H, n = cfg.grid.H, cfg.n
    window = int(window or cfg.window)
    lo, hi, phase = _segment(log)
    notes = []
    if window > hi - lo:
        msg = f"window {window} exceeds the {hi - lo} rounds available; using a single window"
        warnings.warn(msg)
        notes.append(msg)
        window = max(hi - lo, 1)
    rep = ConvergenceReport(H, n, window, cfg.T0, cfg.horizon, phase, warnings=notes)

    vals = log.values[lo:hi]
    bids = log.bids[lo:hi]
    hits = ref.table[vals - 1, bids - 1] if ref is not None else None
    welfare_round = (log.allocation[lo:hi] * vals / H).sum(axis=1)
    revenue_round = log.payments[lo:hi].sum(axis=1)
    for w, start in enumerate(range(0, hi - lo, window)):
        stop = min(start + window, hi - lo)
        dec = (stop - start) * n
        agreement = float(hits[start:stop].sum() / dec) if hits is not None else None
        rep.windows.append({
            "window": w,
            "t_start": lo + start + 1,
            "t_end": lo + stop,
            "decisions": dec,
            "agreement": agreement,
            "revenue": float(revenue_round[start:stop].mean()),
            "welfare": float(welfare_round[start:stop].mean()),
        })

    if cfg.rollout_rounds > 0:
        sl = log.rollout_slice()
        rows = []
        for i in range(n):
            counts = np.zeros((H, H), dtype=np.int64)
            np.add.at(counts, (log.values[sl, i] - 1, log.bids[sl, i] - 1), 1)
            for v in range(1, H + 1):
                obs = int(counts[v - 1].sum())
                if not obs:
                    continue
                b = int(counts[v - 1].argmax()) + 1
                rows.append({
                    "bidder": i,
                    "value": v,
                    "bid": b,
                    "in_reference": bool(ref.contains(v, b)) if ref is not None else None,
                    "observations": obs,
                })
        rep.rollout = rows
    else:
        rep.warnings.append("no rollout rounds; rollout table omitted")

    cps = regret_checkpoints(log) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
    table = regret_table(log, cps)
    for i in range(n):
        for q, t in enumerate(cps):
            rep.regret.append({"bidder": i, "t": int(t), "regret": float(table[i, q])})
    return rep


# --- export / import ---------------------------------------------------------

_META_KEYS = ("schema_version", "H", "n", "window", "T0", "horizon", "agreement_phase", "regret_kind", "warnings")
_CSV_COLUMNS = ("section", "key", "text", "window", "t_start", "t_end", "decisions", "agreement", "revenue",
                "welfare", "bidder", "value", "bid", "in_reference", "observations", "t", "regret")
_SECTION_FIELDS = {
    "window": ("window", "t_start", "t_end", "decisions", "agreement", "revenue", "welfare"),
    "rollout": ("bidder", "value", "bid", "in_reference", "observations"),
    "regret": ("bidder", "t", "regret"),
}
_INT_FIELDS = {"window", "t_start", "t_end", "decisions", "bidder", "value", "bid", "observations", "t"}
_FLOAT_FIELDS = {"agreement", "revenue", "welfare", "regret"}


def _meta(rep: ConvergenceReport) -> dict:
    d = {k: getattr(rep, k) for k in _META_KEYS}
    d["rollout_omitted"] = rep.rollout is None
    return d


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def export_report(rep: ConvergenceReport, path, fmt: str = "jsonl"):
    """Write ``rep`` as JSONL (one record per line) or a long-format CSV."""
    fmt = fmt.lower()
    if fmt == "jsonl":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps({"section": "meta", **_meta(rep)}) + "\n")
            for row in rep.windows:
                fh.write(json.dumps({"section": "window", **row}) + "\n")
            for row in rep.rollout or []:
                fh.write(json.dumps({"section": "rollout", **row}) + "\n")
            for i in range(rep.n):
                pts = [[r["t"], r["regret"]] for r in rep.regret if r["bidder"] == i]
                fh.write(json.dumps({"section": "regret", "bidder": i, "points": pts}) + "\n")
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=_CSV_COLUMNS, lineterminator="\n")
            wr.writeheader()
            for key, val in _meta(rep).items():
                wr.writerow({"section": "meta", "key": key, "text": json.dumps(val)})
            for section, rows in (("window", rep.windows), ("rollout", rep.rollout or []), ("regret", rep.regret)):
                for row in rows:
                    wr.writerow({"section": section, **{k: _fmt(v) for k, v in row.items()}})
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def _report_from_parts(meta: dict, windows, rollout, regret) -> ConvergenceReport:
    omitted = meta.pop("rollout_omitted")
    rep = ConvergenceReport(**meta)
    rep.windows = windows
    rep.rollout = None if omitted else rollout
    rep.regret = regret
    return rep


def _parse_cell(key, text):
    if text == "":
        return None
    if key == "in_reference":
        return text == "true"
    if key in _INT_FIELDS:
        return int(text)
    if key in _FLOAT_FIELDS:
        return float(text)
    return text


def load_report(path, fmt: str | None = None) -> ConvergenceReport:
    """Parse a file written by :func:`export_report`."""
    fmt = (fmt or ("csv" if str(path).endswith(".csv") else "jsonl")).lower()
    meta, windows, rollout, regret = {}, [], [], []
    if fmt == "jsonl":
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                section = rec.pop("section")
                if section == "meta":
                    meta = rec
                elif section == "window":
                    windows.append(rec)
                elif section == "rollout":
                    rollout.append(rec)
                elif section == "regret":
                    i = rec["bidder"]
                    regret.extend({"bidder": i, "t": int(t), "regret": r} for t, r in rec["points"])
        regret.sort(key=lambda r: r["bidder"])
    else:
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                section = row["section"]
                if section == "meta":
                    meta[row["key"]] = json.loads(row["text"])
                    continue
                rec = {k: _parse_cell(k, row[k]) for k in _SECTION_FIELDS[section]}
                {"window": windows, "rollout": rollout, "regret": regret}[section].append(rec)
    return _report_from_parts(meta, windows, rollout, regret)


def summarize(rep: ConvergenceReport) -> dict:
    curve = rep.agreement_curve()
    last = curve[-1] if curve.size else math.nan
    flags = [r["in_reference"] for r in rep.rollout or [] if r["in_reference"] is not None]
    return {
        "final_agreement": None if math.isnan(last) else float(last),
        "rollout_in_reference": float(np.mean(flags)) if flags else None,
        "final_regret": [float(rep.regret_curve(i)[-1, 1]) for i in range(rep.n) if rep.regret_curve(i).size],
    }
