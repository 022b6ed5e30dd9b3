"""Rules-to-text adapter for chat-completion anomaly detection.

The rule set is rendered as numbered English sentences, record windows are
rendered as fixed-width tables, and the reply is parsed back into per-record
predictions. Clients are pluggable: a real HTTPS endpoint, a directory of
canned reply files, or a mock that runs the rule engine internally.
"""

import json
import os
import re
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from . import rules as rules_mod
from .errors import InvariantViolationError, ToolkitError
from .records import GooseRecord, Label, LabeledDataset
from .rules import Level, RuleId, RuleSet

DEFAULT_TOKEN_ENV = "GRIDSENTRY_API_TOKEN"

_SYSTEM_TEXT = (
    "You are an intrusion detection assistant for IEC 61850 substation "
    "traffic. You receive a table of packet records; each row has a "
    "window-relative index. Reply with a single JSON object of the form "
    '{"anomalies": [<indices of anomalous rows>]} and nothing else. '
    "If every row looks normal, reply {\"anomalies\": []}."
)

_RULE_TEXT = {
    RuleId.G_DI_1: ('If data has the same "DM" and "SM," "sqNum" should be '
                    "increased every time."),
    RuleId.G_DI_2: ('If there is any change in "data1" or "data2," "stNum" '
                    'should be increased by 1 and "sqNum" should be reset to 0.'),
    RuleId.G_DI_3: ('If data has the same "DM" and "SM," once "stNum" is '
                    "increased, it cannot go back to smaller numbers."),
    RuleId.G_DOS_1: "There are up to 10 packets (rows) within 10 ms.",
    RuleId.G_SYS_1: "There should be a packet (dataset) within 10 s.",
    RuleId.G_RE_1: ('If there is any change in "data1" or "data2," "stNum" '
                    'should be increased 1 and "sqNum" should be reset to 0; '
                    "a previously seen combination must not reappear."),
    RuleId.S_DI_1: 'The range of "smpCnt" is from 0 to 4799.',
    RuleId.S_DI_2: ('Once the "smpCnt" is increased, it should be increased '
                    "up to 4799 and then reset to 0."),
    RuleId.S_DI_3: ('"smpCnt" cannot be decreased until it reaches 4799 and '
                    "resets to 0."),
    RuleId.S_DOS_1: "A normal time interval should be around 208 microseconds.",
    RuleId.S_DOS_2: "There are up to 12 packets within 2.083 ms.",
    RuleId.S_SYS_1: '"smpCnt" should be increased every time by 1.',
}


@dataclass
class ChatClientConfig:
    endpoint_url: str = ""
    model_name: str = ""
    auth_token_env_var_name: str = DEFAULT_TOKEN_ENV
    timeout_ms: int = 30_000
    max_retries: int = 2
    window_size: int = 20

    def validate(self):
        if self.window_size < 1:
            raise InvariantViolationError("window_size must be >= 1")
        if self.max_retries < 0:
            raise InvariantViolationError("max_retries must be >= 0")
        if self.timeout_ms <= 0:
            raise InvariantViolationError("timeout_ms must be positive")


@dataclass
class PromptBundle:
    system_text: str
    rules_text: str
    records_text: str
    window: Tuple[int, int]  # (start_index, length)

    def validate(self):
        rows = [ln for ln in self.records_text.splitlines() if ln.strip()]
        if len(rows) - 1 != self.window[1]:  # header row + one row per record
            raise InvariantViolationError(
                f"records_text has {len(rows) - 1} rows, window says {self.window[1]}"
            )

    def user_text(self) -> str:
        parts = []
        if self.rules_text:
            parts.append("Known traffic rules:\n" + self.rules_text)
        parts.append("Packet records:\n" + self.records_text)
        parts.append('Reply with {"anomalies": [indices]}.')
        return "\n\n".join(parts)


@dataclass
class DetectorResponse:
    anomalous_indices: frozenset
    raw_text: str
    warnings: List[str] = field(default_factory=list)


def serialize_rules(rules: RuleSet, protocol: str) -> str:
    """Render the enabled rules for one protocol as numbered sentences."""
    if protocol not in ("GOOSE", "SV"):
        raise InvariantViolationError(f"unknown protocol {protocol!r}")
    if rules.level == Level.WITHOUT:
        return ""
    order = rules_mod.GOOSE_RULES if protocol == "GOOSE" else rules_mod.SV_RULES
    enabled = [r for r in order if r in rules.enabled]
    return "\n".join(f"{i}. {_RULE_TEXT[r]}" for i, r in enumerate(enabled, start=1))


def _records_table(records: Sequence, start: int) -> str:
    if records and isinstance(records[0], GooseRecord):
        header = ["idx", "time_us", "dm", "sm", "stNum", "sqNum", "data1", "data2"]
        rows = [[str(i), str(r.time_us), r.dm, r.sm, str(r.stNum), str(r.sqNum),
                 str(r.data1).lower(), str(r.data2).lower()]
                for i, r in enumerate(records)]
    else:
        header = ["idx", "time_us", "dm", "sm", "smpCnt"]
        rows = [[str(i), str(r.time_us), r.dm, r.sm, str(r.smpCnt)]
                for i, r in enumerate(records)]
    widths = [max(len(header[c]), *(len(row[c]) for row in rows)) if rows
              else len(header[c]) for c in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for row in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    return "\n".join(lines)


def build_prompts(dataset: LabeledDataset, rules: RuleSet,
                  cfg: ChatClientConfig) -> List[PromptBundle]:
    """Split the dataset into consecutive windows, one prompt per window."""
    cfg.validate()
    dataset.validate()
    rules_text = serialize_rules(rules, dataset.protocol)
    bundles = []
    for start in range(0, len(dataset.records), cfg.window_size):
        chunk = dataset.records[start : start + cfg.window_size]
        bundle = PromptBundle(
            system_text=_SYSTEM_TEXT,
            rules_text=rules_text,
            records_text=_records_table(chunk, start),
            window=(start, len(chunk)),
        )
        bundle.validate()
        bundles.append(bundle)
    return bundles


_JSON_OBJ = re.compile(r"\{[^{}]*\}", re.DOTALL)


def parse_response(raw: str, window_len: int) -> DetectorResponse:
    """Pull {"anomalies": [...]} out of a possibly chatty reply."""
    warnings: List[str] = []
    payload = None
    for match in _JSON_OBJ.finditer(raw):
        try:
            obj = json.loads(match.group(0))
        except ValueError:
            continue
        if isinstance(obj, dict) and "anomalies" in obj:
            payload = obj
            break
    if payload is None or not isinstance(payload.get("anomalies"), list):
        warnings.append("unparseable-response: no anomalies object found; "
                        "window scored all-normal")
        return DetectorResponse(frozenset(), raw, warnings)
    indices = set()
    for item in payload["anomalies"]:
        if isinstance(item, bool) or not isinstance(item, int):
            warnings.append(f"non-integer index {item!r} dropped")
            continue
        if not 0 <= item < window_len:
            warnings.append(f"index {item} outside window of {window_len}; dropped")
            continue
        indices.add(item)
    return DetectorResponse(frozenset(indices), raw, warnings)


# ---------------------------------------------------------------------------
# Clients
# ---------------------------------------------------------------------------

class ChatClient:
    """Interface: complete(bundle, window_id) -> raw reply text."""

    def complete(self, bundle: PromptBundle, window_id: int) -> str:
        raise NotImplementedError


class HttpChatClient(ChatClient):
    """One JSON POST per window: {model, messages}, bearer token from env."""

    def __init__(self, cfg: ChatClientConfig):
        cfg.validate()
        if not cfg.endpoint_url:
            raise InvariantViolationError("HttpChatClient needs endpoint_url")
        self.cfg = cfg

    def complete(self, bundle: PromptBundle, window_id: int) -> str:
        import requests

        token = os.environ.get(self.cfg.auth_token_env_var_name, "")
        body = {
            "model": self.cfg.model_name,
            "messages": [
                {"role": "system", "content": bundle.system_text},
                {"role": "user", "content": bundle.user_text()},
            ],
        }
        headers = {"Content-Type": "application/json"}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        resp = requests.post(self.cfg.endpoint_url, json=body, headers=headers,
                             timeout=self.cfg.timeout_ms / 1000)
        resp.raise_for_status()
        data = resp.json()
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            return json.dumps(data)


class MockFixtureClient(ChatClient):
    """Replays canned reply files: <dir>/window_<id>.txt, one per window."""

    def __init__(self, fixture_dir: str):
        self.fixture_dir = fixture_dir

    def complete(self, bundle: PromptBundle, window_id: int) -> str:
        path = os.path.join(self.fixture_dir, f"window_{window_id}.txt")
        if not os.path.exists(path):
            raise ToolkitError(f"missing fixture reply {path}")
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()


class RulesMockClient(ChatClient):
    """Deterministic offline mock that answers by running the rule engine.

    Predictions are computed once over the full dataset, then sliced per
    window and returned in the wire format the parser expects.
    """

    def __init__(self, dataset: LabeledDataset, rules: RuleSet):
        verdicts = rules_mod.detect_batch(dataset, rules)
        self._predictions = rules_mod.verdicts_to_predictions(
            verdicts, len(dataset.records))

    def complete(self, bundle: PromptBundle, window_id: int) -> str:
        start, length = bundle.window
        flagged = [i for i in range(length) if self._predictions[start + i]]
        return json.dumps({"anomalies": flagged})


@dataclass
class LlmRunReport:
    predictions: List[bool]
    failed_windows: List[int]
    warnings: List[str]


def detect_llm(dataset: LabeledDataset, rules: RuleSet, cfg: ChatClientConfig,
               client: ChatClient,
               transcript_path: Optional[str] = None) -> LlmRunReport:
    """Window the dataset, query the client, and assemble absolute predictions.

    A window that keeps failing after max_retries is recorded and scored
    all-normal; the run continues.
    """
    bundles = build_prompts(dataset, rules, cfg)
    predictions = [False] * len(dataset.records)
    failed: List[int] = []
    warnings: List[str] = []
    transcript = open(transcript_path, "w", encoding="utf-8") if transcript_path else None
    try:
        for window_id, bundle in enumerate(bundles):
            response = None
            last_error = None
            for attempt in range(cfg.max_retries + 1):
                try:
                    raw = client.complete(bundle, window_id)
                except Exception as exc:  # endpoint/transport failures retry
                    last_error = f"window {window_id} attempt {attempt}: {exc}"
                    continue
                response = parse_response(raw, bundle.window[1])
                if transcript is not None:
                    transcript.write(json.dumps({
                        "window": window_id, "attempt": attempt,
                        "system": bundle.system_text, "user": bundle.user_text(),
                        "reply": raw,
                        "flagged": sorted(response.anomalous_indices),
                    }, sort_keys=True) + "\n")
                break
            if response is None:
                failed.append(window_id)
                warnings.append(last_error or f"window {window_id} failed")
                continue
            warnings.extend(f"window {window_id}: {w}" for w in response.warnings)
            start = bundle.window[0]
            for rel in response.anomalous_indices:
                predictions[start + rel] = True
    finally:
        if transcript is not None:
            transcript.close()
    return LlmRunReport(predictions=predictions, failed_windows=failed,
                        warnings=warnings)
