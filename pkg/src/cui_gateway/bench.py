"""Streaming-vs-batch latency benchmark against an in-process gateway.

Scenario file format::

    {"scenarios": [
        {"name": "three-sentences",
         "delays": {"llm_initial_ms": 100, "llm_inter_sentence_ms": 200, "tts_per_call_ms": 50},
         "sentence_count": 3, "repetitions": 10, "modes": ["streaming", "batch"]}
    ]}

Only mock providers are allowed: the expected latencies are sums of the
configured delays, which is meaningless for remote services.
"""

from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .client import GatewayClient, ServerError
from .errors import ConfigError
from .providers.mock import MockDelays
from .server import GatewayServer, ServerConfig

MODES = ("streaming", "batch")
METRICS = ("ttfa_ms", "total_ms")
DEFAULT_JITTER_MS = 60.0
CSV_COLUMNS = ("scenario", "mode", "metric", "median_ms", "min_ms", "max_ms")
UTTERANCE = "Hi"


class BenchError(Exception):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    delays: MockDelays = field(default_factory=MockDelays)
    sentence_count: int = 3
    repetitions: int = 10
    modes: tuple[str, ...] = MODES

    def __post_init__(self):
        if self.repetitions < 3:
            raise ConfigError(f"scenario {self.name!r}: repetitions must be >= 3")
        if self.sentence_count < 1:
            raise ConfigError(f"scenario {self.name!r}: sentence_count must be >= 1")
        bad = [m for m in self.modes if m not in MODES]
        if bad or not self.modes:
            raise ConfigError(f"scenario {self.name!r}: modes must be a non-empty subset of {MODES}")

    @classmethod
    def from_dict(cls, obj: dict) -> Scenario:
        providers = obj.get("providers", {})
        for role, name in providers.items():
            if name != "mock":
                raise ConfigError(f"scenario {obj.get('name')!r}: {role} provider {name!r} is not a mock")
        return cls(
            name=obj["name"],
            delays=MockDelays.from_params(obj.get("delays", {})),
            sentence_count=obj.get("sentence_count", 3),
            repetitions=obj.get("repetitions", 10),
            modes=tuple(obj.get("modes", MODES)),
        )

    def session_config(self, mode: str) -> dict:
        params = {
            "llm_initial_ms": self.delays.llm_initial_ms,
            "llm_inter_sentence_ms": self.delays.llm_inter_sentence_ms,
            "tts_per_call_ms": self.delays.tts_per_call_ms,
            "stt_ms": self.delays.stt_ms,
            "sentence_count": self.sentence_count,
        }
        return {
            "session_label": f"bench-{self.name}-{mode}",
            "stt": {"provider": "mock"},
            "llm": {"provider": "mock"},
            "tts": {"provider": "mock"},
            "history": False,
            "streaming": mode == "streaming",
            "provider_params": params,
        }

    def expected_ttfa_ms(self, mode: str) -> float:
        """Lower bound implied by the mock delays."""
        d = self.delays
        base = d.stt_ms + d.llm_initial_ms + d.tts_per_call_ms
        if mode == "batch":
            base += (self.sentence_count - 1) * d.llm_inter_sentence_ms
        return base


def load_scenarios(path: str | Path) -> list[Scenario]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    items = doc["scenarios"] if isinstance(doc, dict) else doc
    return [Scenario.from_dict(item) for item in items]


@dataclass(frozen=True)
class Aggregate:
    median: float
    min: float
    max: float

    @classmethod
    def of(cls, values: list[float]) -> Aggregate:
        return cls(statistics.median(values), min(values), max(values))


@dataclass
class ScenarioResult:
    scenario: Scenario
    samples: dict[str, dict[str, list[float]]] = field(default_factory=dict)

    def stats(self, mode: str, metric: str) -> Aggregate:
        return Aggregate.of(self.samples[mode][metric])

    def rows(self):
        for mode in self.scenario.modes:
            for metric in METRICS:
                agg = self.stats(mode, metric)
                yield (self.scenario.name, mode, metric, agg.median, agg.min, agg.max)


def run_scenario(scenario: Scenario, server: GatewayServer | None = None) -> ScenarioResult:
    """Run every mode ``repetitions`` times and collect client-side timings.

    A fresh loopback server is started unless one is supplied.
    """
    own = server is None
    if own:
        server = GatewayServer(ServerConfig(bind_address="127.0.0.1:0"))
        server.start()
    result = ScenarioResult(scenario)
    try:
        for mode in scenario.modes:
            samples = {metric: [] for metric in METRICS}
            with GatewayClient(*server.address) as client:
                client.configure(scenario.session_config(mode))
                for _ in range(scenario.repetitions):
                    report = client.audio_turn(UTTERANCE.encode("utf-8"))
                    if report.ttfa_ms is None or report.total_ms is None:
                        raise BenchError(f"{scenario.name}/{mode}: turn produced no audio")
                    samples["ttfa_ms"].append(report.ttfa_ms)
                    samples["total_ms"].append(report.total_ms)
            result.samples[mode] = samples
    except (ServerError, OSError) as exc:
        raise BenchError(f"{scenario.name}: turn failed: {exc}") from exc
    finally:
        if own:
            server.shutdown()
    return result


def check_analytic(result: ScenarioResult, jitter_ms: float = DEFAULT_JITTER_MS) -> list[str]:
    """Compare medians with the delay model; returns human-readable violations."""
    sc = result.scenario
    problems = []
    for mode in sc.modes:
        lo = sc.expected_ttfa_ms(mode)
        med = result.stats(mode, "ttfa_ms").median
        if not lo <= med <= lo + jitter_ms:
            problems.append(f"{sc.name}/{mode}: median ttfa {med:.1f} ms outside [{lo:.0f}, {lo + jitter_ms:.0f}]")
    if set(MODES) <= set(sc.modes) and sc.sentence_count >= 2 and sc.delays.llm_inter_sentence_ms >= 100:
        s = result.stats("streaming", "ttfa_ms").median
        b = result.stats("batch", "ttfa_ms").median
        if not s < b:
            problems.append(f"{sc.name}: streaming ttfa {s:.1f} ms not below batch {b:.1f} ms")
    return problems


def emit_report(results: list[ScenarioResult], path: str | Path, out=None) -> None:
    if not results:
        raise ValueError("no results to report")
    out = out or sys.stdout
    rows = [row for r in results for row in r.rows()]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for name, mode, metric, med, lo, hi in rows:
            writer.writerow([name, mode, metric, f"{med:.3f}", f"{lo:.3f}", f"{hi:.3f}"])
    width = max(len(r[0]) for r in rows)
    print(f"{'scenario':<{width}}  {'mode':<9}  {'metric':<8}  {'median':>9}  {'min':>9}  {'max':>9}", file=out)
    for name, mode, metric, med, lo, hi in rows:
        print(f"{name:<{width}}  {mode:<9}  {metric:<8}  {med:9.1f}  {lo:9.1f}  {hi:9.1f}", file=out)


def main(argv=None) -> int:
    default_scenarios = Path(__file__).with_name("scenarios") / "default.json"
    p = argparse.ArgumentParser(prog="cui-bench", description="Compare streaming and batch time-to-first-audio.")
    p.add_argument("--scenarios", default=str(default_scenarios), help="scenario JSON file")
    p.add_argument("--out", default="report.csv", help="CSV report path (default %(default)s)")
    p.add_argument("--jitter-ms", type=float, default=DEFAULT_JITTER_MS, help="scheduling allowance for the analytic check")
    p.add_argument("--strict", action="store_true", help="exit 1 when a median misses the analytic model")
    args = p.parse_args(argv)

    try:
        scenarios = load_scenarios(args.scenarios)
    except (OSError, ValueError, KeyError, ConfigError) as exc:
        print(f"cui-bench: bad scenario file: {exc}", file=sys.stderr)
        return 2
    results, problems = [], []
    for sc in scenarios:
        try:
            result = run_scenario(sc)
        except BenchError as exc:
            print(f"cui-bench: {exc}", file=sys.stderr)
            return 1
        results.append(result)
        problems += check_analytic(result, args.jitter_ms)
    try:
        emit_report(results, args.out)
    except (OSError, ValueError) as exc:
        print(f"cui-bench: cannot write report: {exc}", file=sys.stderr)
        return 1
    for line in problems:
        print(f"WARNING {line}")
    if not problems:
        print(f"all medians within the delay model (+{args.jitter_ms:g} ms)")
    return 1 if problems and args.strict else 0


if __name__ == "__main__":
    sys.exit(main())
