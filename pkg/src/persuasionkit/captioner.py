"""Remote caption acquisition with a two-prompt refusal fallback.

Protocol per instance: send the primary prompt; on a content-policy
refusal send the fallback prompt once; a second refusal is terminal
(``refused_both``).  Transport failures (network, 5xx, timeouts) are
retried up to 3 times per request with exponential backoff; refusals are
never retried.  Requests use a chat-completions style wire format whose
user message carries a text part and an image part.

The credential is read from an environment variable at send time and is
never written to logs, checkpoints or reports.
"""

from __future__ import annotations

import base64
import json
import logging
import mimetypes
import os
import random
import re
import threading
import time
from collections.abc import Callable, Iterable, Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .corpus import CAPTION_SOURCES, MemeInstance

__all__ = [
    "PromptTemplate",
    "PRIMARY_PROMPT",
    "FALLBACK_PROMPT",
    "render_prompt",
    "ProviderConfig",
    "TransportError",
    "HttpTransport",
    "CaptionOutcome",
    "STATUS_OK_PROMPT1",
    "STATUS_OK_PROMPT2",
    "STATUS_REFUSED_BOTH",
    "STATUS_TRANSPORT_ERROR",
    "TokenBucket",
    "caption_instance",
    "caption_corpus",
    "load_checkpoint",
    "checkpoint_to_captions",
]

logger = logging.getLogger(__name__)

PLACEHOLDER = "{meme_text}"

STATUS_OK_PROMPT1 = "ok_prompt1"
STATUS_OK_PROMPT2 = "ok_prompt2"
STATUS_REFUSED_BOTH = "refused_both"
STATUS_TRANSPORT_ERROR = "transport_error"

_TERMINAL_STATUSES = {STATUS_OK_PROMPT1, STATUS_OK_PROMPT2, STATUS_REFUSED_BOTH}

CAPTION_SOURCE = "external-zero-shot"

# Responses that start like these are treated as content-policy refusals
# even when the provider reports a normal finish reason.
DEFAULT_REFUSAL_PATTERNS = (
    r"^i'?\s?m sorry",
    r"^i am sorry",
    r"^i apologize",
    r"^i can'?not\b",
    r"^i can'?t\b",
    r"^i won'?t\b",
    r"^i'?\s?m unable\b",
    r"^i am unable\b",
    r"^as an ai\b",
    r"^sorry, but i\b",
)


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt body with at most one ``{meme_text}`` placeholder.

    The primary prompt embeds the meme text; the fallback prompt carries
    no placeholder and relies on the attached image alone.
    """

    body: str
    max_words: int = 200

    def __post_init__(self):
        n = self.body.count(PLACEHOLDER)
        if n > 1:
            raise ValueError(f"template contains {n} {PLACEHOLDER!r} placeholders")
        if not self.body:
            raise ValueError("template body must be nonempty")


def render_prompt(template: PromptTemplate, meme_text: str) -> str:
    """Substitute the meme text into the template in a single pass.

    The replacement is literal: a meme text that itself contains
    ``{meme_text}`` is inserted verbatim, never re-expanded.  Templates
    without a placeholder render unchanged.
    """
    return template.body.replace(PLACEHOLDER, meme_text, 1)


PRIMARY_PROMPT = PromptTemplate(
    "Memes are one of the most popular types of content used in an online "
    "disinformation campaign. They are mostly effective on social media "
    "platforms since there they can easily reach a large number of users. "
    "This is a meme with the following text written inside the meme: "
    '"{meme_text}". In no more than 200 words, write a caption for this '
    "meme and say what is the meme poster trying to convey?"
)

FALLBACK_PROMPT = PromptTemplate(
    "Memes are one of the most popular types of content used in an online "
    "disinformation campaign. They are mostly effective on social media "
    "platforms since there they can easily reach a large number of users. "
    "Memes in a disinformation campaign achieve their goal of influencing "
    "the users through a number of rhetorical and psychological techniques, "
    "such as causal oversimplification, name calling, smear. Identifying "
    "these memes are very useful and it can help to remove them from the "
    "internet and have a better and more calm place. To do so I want your "
    "help. I want to create a caption and find what this meme is trying to "
    "convey in order to train a model to find these memes. I provided a "
    "meme to you. In no more than 200 words, write a caption for this meme "
    "and say what is the meme poster trying to convey?"
)


@dataclass(frozen=True)
class ProviderConfig:
    """Remote captioning provider settings.

    ``credential_env`` names the environment variable holding the API
    key; the value itself is never stored on this object.
    """

    endpoint: str
    model: str = "gpt-4-vision-preview"
    credential_env: str = "PERSUASIONKIT_API_KEY"
    max_tokens: int = 300
    temperature: float | None = None
    timeout: float = 60.0
    max_transport_retries: int = 3
    backoff_base: float = 1.0
    refusal_patterns: tuple[str, ...] = DEFAULT_REFUSAL_PATTERNS
    primary: PromptTemplate = PRIMARY_PROMPT
    fallback: PromptTemplate = FALLBACK_PROMPT


class TransportError(RuntimeError):
    """Network-level failure talking to the caption provider."""


def _image_part(image_ref: str) -> dict:
    """Build the image message part; local files become data URLs.

    Image bytes are passed through opaquely (base64), never decoded.
    """
    if re.match(r"^(https?|data):", image_ref):
        return {"type": "image_url", "image_url": {"url": image_ref}}
    if os.path.exists(image_ref):
        mime = mimetypes.guess_type(image_ref)[0] or "application/octet-stream"
        with open(image_ref, "rb") as fh:
            payload = base64.b64encode(fh.read()).decode("ascii")
        return {
            "type": "image_url",
            "image_url": {"url": f"data:{mime};base64,{payload}"},
        }
    # Leave unknown references for the provider to resolve.
    return {"type": "image_url", "image_url": {"url": image_ref}}


def build_request(cfg: ProviderConfig, prompt: str, image_ref: str) -> dict:
    """Chat-completions request body: one user turn, text part then image part."""
    body: dict = {
        "model": cfg.model,
        "messages": [
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": prompt},
                    _image_part(image_ref),
                ],
            }
        ],
        "max_tokens": cfg.max_tokens,
    }
    if cfg.temperature is not None:
        body["temperature"] = cfg.temperature
    return body


class HttpTransport:
    """POSTs request bodies to the provider endpoint.

    The Authorization header is attached here and only here; redacted
    debug logging strips it before anything reaches a log record.
    """

    def __init__(self, cfg: ProviderConfig, session=None):
        self.cfg = cfg
        if session is None:
            import requests

            session = requests.Session()
        self.session = session

    def send(self, body: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        credential = os.environ.get(self.cfg.credential_env)
        if credential:
            headers["Authorization"] = f"Bearer {credential}"
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug(
                "POST %s body=%s auth=%s",
                self.cfg.endpoint,
                json.dumps(body)[:2000],
                "Bearer ***" if credential else "none",
            )
        try:
            resp = self.session.post(
                self.cfg.endpoint,
                json=body,
                headers=headers,
                timeout=self.cfg.timeout,
            )
        except Exception as exc:
            raise TransportError(f"request failed: {type(exc).__name__}") from None
        if resp.status_code >= 400:
            raise TransportError(f"provider returned HTTP {resp.status_code}")
        try:
            return resp.json()
        except Exception:
            raise TransportError("provider returned non-JSON body") from None


@dataclass(frozen=True)
class CaptionOutcome:
    id: str
    status: str
    caption: str | None
    attempts: int
    model: str


@dataclass
class _Clock:
    """Injectable time source so tests can run on a fake clock."""

    monotonic: Callable[[], float] = time.monotonic
    sleep: Callable[[float], None] = time.sleep


class TokenBucket:
    """Blocking token bucket: ``rate_per_minute`` requests, burst of 1."""

    def __init__(self, rate_per_minute: float, clock: _Clock | None = None):
        if rate_per_minute <= 0:
            raise ValueError("rate_per_minute must be positive")
        self.rate = rate_per_minute / 60.0
        self.capacity = 1.0
        self.tokens = 1.0
        self.clock = clock or _Clock()
        self.last = self.clock.monotonic()
        self._lock = threading.Lock()

    def acquire(self):
        while True:
            with self._lock:
                now = self.clock.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.last) * self.rate)
                self.last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self.clock.sleep(wait)


def _is_refusal(resp: dict, patterns: Iterable[str]) -> tuple[bool, str]:
    """Classify a provider response; returns (refused, caption_text)."""
    try:
        choice = resp["choices"][0]
    except (KeyError, IndexError, TypeError):
        raise TransportError("malformed provider response: no choices")
    finish = choice.get("finish_reason")
    message = choice.get("message") or {}
    content = message.get("content")
    if isinstance(content, list):  # providers may return structured parts
        content = "".join(
            part.get("text", "") for part in content if isinstance(part, dict)
        )
    text = (content or "").strip()
    if finish == "content_filter":
        return True, text
    if not text:
        return True, text
    for pat in patterns:
        if re.search(pat, text, re.IGNORECASE):
            return True, text
    return False, text


def _send_with_retries(
    transport,
    body: dict,
    cfg: ProviderConfig,
    clock: _Clock,
    rng: random.Random,
) -> tuple[dict | None, int]:
    """Returns (response or None, wire attempts used)."""
    attempts = 0
    for trial in range(cfg.max_transport_retries + 1):
        try:
            attempts += 1
            return transport.send(body), attempts
        except TransportError as exc:
            if trial == cfg.max_transport_retries:
                logger.warning("transport gave up after %d attempts: %s", attempts, exc)
                return None, attempts
            delay = cfg.backoff_base * (2.0**trial) + rng.uniform(0.0, 0.25)
            logger.info("transport error (%s); retrying in %.2fs", exc, delay)
            clock.sleep(delay)
    return None, attempts  # unreachable


def caption_instance(
    inst: MemeInstance,
    cfg: ProviderConfig,
    transport,
    clock: _Clock | None = None,
    rng: random.Random | None = None,
) -> CaptionOutcome:
    """Run the two-prompt protocol for one instance.

    Requires an image reference.  The caption is logged (not truncated)
    if it exceeds the template word budget.
    """
    if not inst.image:
        raise ValueError(f"instance {inst.id!r} has no image reference")
    clock = clock or _Clock()
    rng = rng or random.Random()
    attempts = 0
    for template, ok_status in (
        (cfg.primary, STATUS_OK_PROMPT1),
        (cfg.fallback, STATUS_OK_PROMPT2),
    ):
        prompt = render_prompt(template, inst.text)
        body = build_request(cfg, prompt, inst.image)
        resp, used = _send_with_retries(transport, body, cfg, clock, rng)
        attempts += used
        if resp is None:
            return CaptionOutcome(inst.id, STATUS_TRANSPORT_ERROR, None, attempts, cfg.model)
        try:
            refused, text = _is_refusal(resp, cfg.refusal_patterns)
        except TransportError as exc:
            logger.warning("instance %s: %s", inst.id, exc)
            return CaptionOutcome(inst.id, STATUS_TRANSPORT_ERROR, None, attempts, cfg.model)
        if refused:
            logger.info("instance %s: refusal on %s", inst.id, ok_status)
            continue
        if len(text.split()) > template.max_words:
            logger.warning(
                "instance %s: caption exceeds %d words (%d)",
                inst.id,
                template.max_words,
                len(text.split()),
            )
        return CaptionOutcome(inst.id, ok_status, text, attempts, cfg.model)
    return CaptionOutcome(inst.id, STATUS_REFUSED_BOTH, None, attempts, cfg.model)


# -- checkpointing ---------------------------------------------------------

def _outcome_record(outcome: CaptionOutcome) -> dict:
    return {
        "id": outcome.id,
        "caption": outcome.caption,
        "source": CAPTION_SOURCE,
        "status": outcome.status,
        "attempts": outcome.attempts,
        "model": outcome.model,
    }


def load_checkpoint(path: str) -> dict[str, CaptionOutcome]:
    """Read a JSONL checkpoint; later records for an id win."""
    out: dict[str, CaptionOutcome] = {}
    if not os.path.exists(path):
        return out
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"checkpoint line {lineno}: invalid JSON: {exc}") from None
            out[rec["id"]] = CaptionOutcome(
                id=rec["id"],
                status=rec["status"],
                caption=rec.get("caption"),
                attempts=int(rec.get("attempts", 0)),
                model=rec.get("model", ""),
            )
    return out


def checkpoint_to_captions(
    outcomes: Mapping[str, CaptionOutcome],
) -> dict[str, tuple[str, str]]:
    """Successful outcomes as a captions map suitable for merge_captions."""
    return {
        iid: (o.caption or "", CAPTION_SOURCE)
        for iid, o in outcomes.items()
        if o.status in (STATUS_OK_PROMPT1, STATUS_OK_PROMPT2)
    }


def caption_corpus(
    corpus: Iterable[MemeInstance],
    cfg: ProviderConfig,
    transport,
    checkpoint_path: str | None = None,
    concurrency: int = 1,
    rate_per_minute: float | None = None,
    force: bool = False,
    clock: _Clock | None = None,
    seed: int = 0,
) -> dict[str, CaptionOutcome]:
    """Caption every image-bearing instance that still needs work.

    Skips instances that already carry a caption (unless ``force``) and
    ids whose checkpointed status is terminal (ok or refused_both), so
    reruns after an interruption issue requests only for incomplete ids.
    Outcomes are appended to the checkpoint as they complete; the returned
    map includes resumed terminal outcomes.
    """
    clock = clock or _Clock()
    done: dict[str, CaptionOutcome] = {}
    if checkpoint_path:
        for iid, outcome in load_checkpoint(checkpoint_path).items():
            if outcome.status in _TERMINAL_STATUSES:
                done[iid] = outcome

    todo: list[MemeInstance] = []
    skipped_captioned = 0
    for inst in corpus:
        if not inst.image:
            continue
        if inst.id in done:
            continue
        if inst.caption is not None and not force:
            skipped_captioned += 1
            continue
        todo.append(inst)
    if skipped_captioned:
        logger.info("skipping %d instances that already have captions", skipped_captioned)

    bucket = TokenBucket(rate_per_minute, clock) if rate_per_minute else None
    write_lock = threading.Lock()
    results: dict[str, CaptionOutcome] = dict(done)

    ckpt_fh = open(checkpoint_path, "a", encoding="utf-8") if checkpoint_path else None

    def work(inst: MemeInstance) -> CaptionOutcome:
        if bucket is not None:
            bucket.acquire()
        outcome = caption_instance(
            inst, cfg, transport, clock=clock, rng=random.Random(f"{seed}:{inst.id}")
        )
        with write_lock:
            if ckpt_fh is not None:
                ckpt_fh.write(json.dumps(_outcome_record(outcome), ensure_ascii=False) + "\n")
                ckpt_fh.flush()
            results[outcome.id] = outcome
        return outcome

    try:
        if concurrency <= 1:
            for inst in todo:
                work(inst)
        else:
            with ThreadPoolExecutor(max_workers=concurrency) as pool:
                list(pool.map(work, todo))
    finally:
        if ckpt_fh is not None:
            ckpt_fh.close()
    return results
