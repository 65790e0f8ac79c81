"""Clients for the three generative services the pipeline depends on:
image generation driven by a staged prompt chain, monocular depth
prediction, and open-vocabulary segmentation.

Two client families implement the same interface:

``HttpGenerationClient``
    Talks HTTP+JSON to a provider adapter (see the endpoint docstrings
    for the wire schema). Live calls are bounded by a timeout and a
    capped exponential-backoff retry loop. Credentials travel only via
    the ``VLAD_SERVICE_TOKEN`` environment variable.

``ReplayClient``
    Serves previously recorded exchanges from a fixture directory,
    bit-deterministically, so the full pipeline runs offline. Wrap a
    live client in ``RecordingClient`` to produce those fixtures.

The three prompt-stage template texts ship with the package and are
filled in by ``default_prompt_chain``.
"""

from __future__ import annotations

import base64
import dataclasses
import io
import json
import os
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import requests

from .clouds import Frame, Label
from .errors import (
    DimensionMismatchError,
    GenerationRefusedError,
    MalformedResponseError,
    ServiceUnavailableError,
)
from .lifting import (
    BinaryMask,
    DepthMap,
    load_depth_f32,
    load_mask_png,
    load_rgb_png,
    save_depth_f32,
    save_mask_png,
    save_rgb_png,
)

WIRE_SCHEMA_VERSION = 1
DEFAULT_TIMEOUT_S = 120.0
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF_S = 0.5
MAX_BACKOFF_S = 30.0
TOKEN_ENV_VAR = "VLAD_SERVICE_TOKEN"
DEFAULT_MAX_OPENING_PX = 120

CHAIN_FILENAME = "chain.json"
GENERATED_FILENAME = "generated.png"
DEPTH_FILENAME = "depth_g.f32"
MASK_FILENAMES = {
    (Label.OBJECT, Frame.GENERATED): "mask_object_g.png",
    (Label.ROD, Frame.GENERATED): "mask_rod_g.png",
    (Label.OBJECT, Frame.SCENE): "mask_object_s.png",
    (Label.ROD, Frame.SCENE): "mask_rod_s.png",
}


# --- Payload encoding ----------------------------------------------------


def encode_rgb_b64(image: np.ndarray) -> str:
    buf = io.BytesIO()
    save_rgb_png(image, buf)
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_rgb_b64(data: str) -> np.ndarray:
    try:
        return load_rgb_png(io.BytesIO(base64.b64decode(data, validate=True)))
    except Exception as exc:
        raise MalformedResponseError(f"bad image payload: {exc}") from exc


def encode_mask_b64(mask: BinaryMask) -> str:
    buf = io.BytesIO()
    save_mask_png(mask, buf)
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_mask_b64(data: str) -> BinaryMask:
    try:
        return load_mask_png(io.BytesIO(base64.b64decode(data, validate=True)))
    except Exception as exc:
        raise MalformedResponseError(f"bad mask payload: {exc}") from exc


def encode_depth_b64(depth: DepthMap) -> str:
    vals = np.where(depth.validity, depth.values, np.nan).astype("<f4")
    return base64.b64encode(vals.tobytes()).decode("ascii")


def decode_depth_b64(data: str, width: int, height: int) -> DepthMap:
    try:
        raw = base64.b64decode(data, validate=True)
    except Exception as exc:
        raise MalformedResponseError(f"bad depth payload: {exc}") from exc
    if len(raw) != width * height * 4:
        raise MalformedResponseError(
            f"depth payload holds {len(raw)} bytes, expected {width * height * 4}"
        )
    vals = np.frombuffer(raw, dtype="<f4").reshape(height, width).astype(np.float64)
    try:
        return DepthMap(vals)
    except ValueError as exc:
        raise MalformedResponseError(f"bad depth values: {exc}") from exc


# --- Domain types ---------------------------------------------------------


@dataclass(frozen=True)
class TokenCounts:
    output: int = 0
    reasoning: int = 0

    def __post_init__(self):
        if self.output < 0 or self.reasoning < 0:
            raise ValueError("token counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.output + self.reasoning

    def __add__(self, other: "TokenCounts") -> "TokenCounts":
        return TokenCounts(self.output + other.output, self.reasoning + other.reasoning)

    def to_json_dict(self) -> dict:
        return {"output": self.output, "reasoning": self.reasoning}

    @classmethod
    def from_json_dict(cls, data) -> "TokenCounts":
        return cls(int(data.get("output", 0)), int(data.get("reasoning", 0)))


@dataclass(frozen=True, eq=False)
class PromptChain:
    """The staged texts driving one image generation.

    ``t0_constraints`` states the physical grasp constraints, and with
    the input image prompts the reasoning stage; ``t1_meta`` asks the
    model to distill that reasoning into a generation prompt;
    ``t2_generated`` is the resulting prompt; ``tc_constraints`` bounds
    how the edit may change the image; ``inpaint_mask`` marks where the
    edit may paint (the complement of the object mask).
    """

    t0_constraints: str
    reasoning: str
    t1_meta: str
    t2_generated: str
    tc_constraints: str
    inpaint_mask: BinaryMask

    def require_generation_prompt(self) -> None:
        if not self.t2_generated.strip():
            raise ValueError("generation requested before a prompt was produced")

    def to_json_dict(self) -> dict:
        return {
            "t0_constraints": self.t0_constraints,
            "reasoning": self.reasoning,
            "t1_meta": self.t1_meta,
            "t2_generated": self.t2_generated,
            "tc_constraints": self.tc_constraints,
        }


@dataclass(frozen=True, eq=False)
class GenerationExchange:
    """Everything one generation round produced, sufficient for replay."""

    chain: PromptChain
    input_image: np.ndarray
    output_image: np.ndarray
    token_counts: TokenCounts
    provider: str

    def __post_init__(self):
        if self.input_image.shape[:2] != self.output_image.shape[:2]:
            raise DimensionMismatchError(
                f"generated image {self.output_image.shape[:2]} does not match "
                f"input {self.input_image.shape[:2]}"
            )


def _load_template(name: str) -> str:
    return (resources.files("vlad") / "templates" / name).read_text()


def default_prompt_chain(
    object_mask: BinaryMask, max_opening_px: int = DEFAULT_MAX_OPENING_PX
) -> PromptChain:
    """Seed chain from the shipped templates; reasoning and generation
    prompt start empty and are filled in by the service calls."""
    if max_opening_px < 1:
        raise ValueError("max_opening_px must be positive")
    return PromptChain(
        t0_constraints=_load_template("grasp_constraints.txt").format(
            max_opening_px=max_opening_px
        ),
        reasoning="",
        t1_meta=_load_template("prompt_request.txt"),
        t2_generated="",
        tc_constraints=_load_template("edit_constraints.txt"),
        inpaint_mask=object_mask.complement(),
    )


# --- Client interface ------------------------------------------------------


class GenerationClient:
    """Interface the pipeline codes against; see module docstring."""

    provider = "abstract"

    def run_chain(
        self,
        image: np.ndarray,
        templates: PromptChain,
        sample_id: str,
        seed: int = 0,
        three_step: bool = True,
    ) -> GenerationExchange:
        raise NotImplementedError

    def predict_depth(self, image: np.ndarray, sample_id: str) -> DepthMap:
        raise NotImplementedError

    def segment(
        self,
        image: np.ndarray,
        query: Label,
        frame: Frame,
        sample_id: str,
    ) -> BinaryMask:
        raise NotImplementedError


def run_prompt_chain(
    client: GenerationClient,
    image: np.ndarray,
    templates: PromptChain,
    sample_id: str = "",
    seed: int = 0,
    three_step: bool = True,
) -> GenerationExchange:
    """Execute the staged generation: constraints -> reasoning ->
    generation prompt -> edited image. With ``three_step`` off, the
    constraint text itself is used as the generation prompt and the
    exchange records empty reasoning."""
    return client.run_chain(
        image, templates, sample_id=sample_id, seed=seed, three_step=three_step
    )


def predict_depth(
    client: GenerationClient, image: np.ndarray, sample_id: str = ""
) -> DepthMap:
    return client.predict_depth(image, sample_id=sample_id)


def segment(
    client: GenerationClient,
    image: np.ndarray,
    query: Label,
    frame: Frame = Frame.GENERATED,
    sample_id: str = "",
) -> BinaryMask:
    return client.segment(image, query, frame=frame, sample_id=sample_id)


# --- HTTP client ------------------------------------------------------------


def _query_name(query: Label) -> str:
    if query not in (Label.OBJECT, Label.ROD):
        raise ValueError(f"segmentation query must be OBJECT or ROD, got {query}")
    return query.value


class HttpGenerationClient(GenerationClient):
    """HTTP+JSON provider adapter client.

    Endpoints (all POST, all JSON, images as base64 PNG):

    ``/v1/chat-step``
        Request: {schema_version, step: "reason"|"prompt"|"generate",
        texts: [str, ...], image_b64, mask_b64?, sample_id, seed}.
        Response: {text, tokens?} for the text steps; {image_b64,
        tokens?} for "generate"; {refused: true, reason?} when the
        provider declines. tokens = {output, reasoning}.

    ``/v1/depth``
        Request: {schema_version, image_b64, sample_id}.
        Response: {width, height, depth_b64} with depth_b64 holding raw
        row-major little-endian float32 meters (NaN = invalid).

    ``/v1/segment``
        Request: {schema_version, image_b64, query: "object"|"rod",
        domain: "scene"|"generated", sample_id}.
        Response: {mask_b64}.
    """

    def __init__(
        self,
        base_url: str,
        timeout: float = DEFAULT_TIMEOUT_S,
        retries: int = DEFAULT_RETRIES,
        backoff: float = DEFAULT_BACKOFF_S,
        session: requests.Session | None = None,
        sleeper=time.sleep,
    ):
        if retries < 0:
            raise ValueError("retries must be nonnegative")
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.session = session or requests.Session()
        self._sleep = sleeper
        self.provider = self.base_url

    def _headers(self) -> dict:
        token = os.environ.get(TOKEN_ENV_VAR)
        return {"Authorization": f"Bearer {token}"} if token else {}

    def _post_json(self, path: str, payload: dict) -> dict:
        try:
            response = self.session.post(
                f"{self.base_url}{path}",
                json=payload,
                timeout=self.timeout,
                headers=self._headers(),
            )
        except requests.RequestException as exc:
            raise ServiceUnavailableError(f"{path}: {exc}") from exc
        if response.status_code >= 500:
            raise ServiceUnavailableError(f"{path}: status {response.status_code}")
        if response.status_code != 200:
            raise ServiceUnavailableError(
                f"{path}: unexpected status {response.status_code}: "
                f"{response.text[:200]}"
            )
        try:
            data = response.json()
        except ValueError as exc:
            raise MalformedResponseError(f"{path}: response is not JSON") from exc
        if not isinstance(data, dict):
            raise MalformedResponseError(f"{path}: expected a JSON object")
        if data.get("refused"):
            raise GenerationRefusedError(
                f"{path}: provider declined: {data.get('reason', 'unspecified')}"
            )
        return data

    def _with_retries(self, fn, retryable):
        last_error = None
        for attempt in range(self.retries + 1):
            try:
                return fn()
            except retryable as exc:
                last_error = exc
                if attempt < self.retries:
                    self._sleep(min(self.backoff * (2**attempt), MAX_BACKOFF_S))
        raise last_error

    def _chat_step(self, step, texts, image, mask, sample_id, seed) -> dict:
        payload = {
            "schema_version": WIRE_SCHEMA_VERSION,
            "step": step,
            "texts": list(texts),
            "image_b64": encode_rgb_b64(image),
            "sample_id": sample_id,
            "seed": seed,
        }
        if mask is not None:
            payload["mask_b64"] = encode_mask_b64(mask)

        def attempt():
            data = self._post_json("/v1/chat-step", payload)
            key = "image_b64" if step == "generate" else "text"
            if key not in data:
                raise MalformedResponseError(f"chat-step {step}: missing {key!r}")
            return data

        return self._with_retries(
            attempt,
            (ServiceUnavailableError, MalformedResponseError, GenerationRefusedError),
        )

    def run_chain(self, image, templates, sample_id, seed=0, three_step=True):
        tokens = TokenCounts()
        if three_step:
            reason_data = self._chat_step(
                "reason", [templates.t0_constraints], image, None, sample_id, seed
            )
            tokens = tokens + TokenCounts.from_json_dict(reason_data.get("tokens", {}))
            reasoning = str(reason_data["text"])
            prompt_data = self._chat_step(
                "prompt",
                [templates.t0_constraints, reasoning, templates.t1_meta],
                image,
                None,
                sample_id,
                seed,
            )
            tokens = tokens + TokenCounts.from_json_dict(prompt_data.get("tokens", {}))
            generation_prompt = str(prompt_data["text"])
        else:
            reasoning = ""
            generation_prompt = templates.t0_constraints
        chain = dataclasses.replace(
            templates, reasoning=reasoning, t2_generated=generation_prompt
        )
        chain.require_generation_prompt()
        image_data = self._chat_step(
            "generate",
            [chain.tc_constraints, chain.t2_generated],
            image,
            chain.inpaint_mask,
            sample_id,
            seed,
        )
        tokens = tokens + TokenCounts.from_json_dict(image_data.get("tokens", {}))
        output = decode_rgb_b64(image_data["image_b64"])
        if output.shape[:2] != image.shape[:2]:
            raise MalformedResponseError(
                f"generated image {output.shape[:2]} does not match input "
                f"{image.shape[:2]}"
            )
        return GenerationExchange(
            chain=chain,
            input_image=image,
            output_image=output,
            token_counts=tokens,
            provider=self.provider,
        )

    def predict_depth(self, image, sample_id):
        payload = {
            "schema_version": WIRE_SCHEMA_VERSION,
            "image_b64": encode_rgb_b64(image),
            "sample_id": sample_id,
        }

        def attempt():
            return self._post_json("/v1/depth", payload)

        data = self._with_retries(attempt, (ServiceUnavailableError,))
        try:
            width, height = int(data["width"]), int(data["height"])
            depth_b64 = data["depth_b64"]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponseError(f"depth: bad response shape: {exc}") from exc
        if (height, width) != image.shape[:2]:
            raise DimensionMismatchError(
                f"depth {height}x{width} does not match image "
                f"{image.shape[0]}x{image.shape[1]}"
            )
        return decode_depth_b64(depth_b64, width, height)

    def segment(self, image, query, frame, sample_id):
        payload = {
            "schema_version": WIRE_SCHEMA_VERSION,
            "image_b64": encode_rgb_b64(image),
            "query": _query_name(query),
            "domain": frame.value,
            "sample_id": sample_id,
        }

        def attempt():
            return self._post_json("/v1/segment", payload)

        data = self._with_retries(attempt, (ServiceUnavailableError,))
        if "mask_b64" not in data:
            raise MalformedResponseError("segment: missing 'mask_b64'")
        mask = decode_mask_b64(data["mask_b64"])
        if mask.bits.shape != image.shape[:2]:
            raise DimensionMismatchError(
                f"mask {mask.bits.shape} does not match image {image.shape[:2]}"
            )
        return mask


# --- Replay and recording ----------------------------------------------------


class ReplayClient(GenerationClient):
    """Serves recorded fixtures; every answer is a pure function of the
    fixture directory contents, so replays are bit-deterministic."""

    provider = "replay"

    def __init__(self, root):
        self.root = Path(root)
        if not self.root.is_dir():
            raise ServiceUnavailableError(f"fixture root not found: {self.root}")

    def _fixture_path(self, sample_id: str, filename: str) -> Path:
        path = self.root / sample_id / filename
        if not path.is_file():
            raise ServiceUnavailableError(f"missing fixture file: {path}")
        return path

    def _load_chain_record(self, sample_id: str) -> dict:
        path = self._fixture_path(sample_id, CHAIN_FILENAME)
        try:
            data = json.loads(path.read_text())
        except ValueError as exc:
            raise MalformedResponseError(f"{path}: invalid JSON") from exc
        if not isinstance(data, dict):
            raise MalformedResponseError(f"{path}: expected a JSON object")
        return data

    def run_chain(self, image, templates, sample_id, seed=0, three_step=True):
        record = self._load_chain_record(sample_id)
        try:
            chain = PromptChain(
                t0_constraints=str(record["t0_constraints"]),
                reasoning=str(record["reasoning"]),
                t1_meta=str(record["t1_meta"]),
                t2_generated=str(record["t2_generated"]),
                tc_constraints=str(record["tc_constraints"]),
                inpaint_mask=templates.inpaint_mask,
            )
        except KeyError as exc:
            raise MalformedResponseError(f"chain.json missing field {exc}") from exc
        chain.require_generation_prompt()
        output = load_rgb_png(self._fixture_path(sample_id, GENERATED_FILENAME))
        if output.shape[:2] != image.shape[:2]:
            raise MalformedResponseError(
                f"fixture image {output.shape[:2]} does not match input "
                f"{image.shape[:2]}"
            )
        return GenerationExchange(
            chain=chain,
            input_image=image,
            output_image=output,
            token_counts=TokenCounts.from_json_dict(record.get("token_counts", {})),
            provider=str(record.get("provider", self.provider)),
        )

    def predict_depth(self, image, sample_id):
        depth = load_depth_f32(self._fixture_path(sample_id, DEPTH_FILENAME))
        if (depth.height, depth.width) != image.shape[:2]:
            raise DimensionMismatchError(
                f"fixture depth {depth.height}x{depth.width} does not match "
                f"image {image.shape[0]}x{image.shape[1]}"
            )
        return depth

    def segment(self, image, query, frame, sample_id):
        _query_name(query)
        filename = MASK_FILENAMES[(query, frame)]
        mask = load_mask_png(self._fixture_path(sample_id, filename))
        if mask.bits.shape != image.shape[:2]:
            raise DimensionMismatchError(
                f"fixture mask {mask.bits.shape} does not match image "
                f"{image.shape[:2]}"
            )
        return mask


class RecordingClient(GenerationClient):
    """Pass-through wrapper that persists every exchange as replay
    fixtures under ``root``."""

    def __init__(self, inner: GenerationClient, root):
        self.inner = inner
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.provider = inner.provider

    def _sample_dir(self, sample_id: str) -> Path:
        directory = self.root / sample_id
        directory.mkdir(parents=True, exist_ok=True)
        return directory

    def run_chain(self, image, templates, sample_id, seed=0, three_step=True):
        exchange = self.inner.run_chain(
            image, templates, sample_id=sample_id, seed=seed, three_step=three_step
        )
        directory = self._sample_dir(sample_id)
        record = exchange.chain.to_json_dict()
        record["schema_version"] = WIRE_SCHEMA_VERSION
        record["provider"] = exchange.provider
        record["token_counts"] = exchange.token_counts.to_json_dict()
        (directory / CHAIN_FILENAME).write_text(
            json.dumps(record, indent=2, sort_keys=True) + "\n"
        )
        save_rgb_png(exchange.output_image, directory / GENERATED_FILENAME)
        return exchange

    def predict_depth(self, image, sample_id):
        depth = self.inner.predict_depth(image, sample_id=sample_id)
        save_depth_f32(depth, self._sample_dir(sample_id) / DEPTH_FILENAME)
        return depth

    def segment(self, image, query, frame, sample_id):
        mask = self.inner.segment(image, query, frame=frame, sample_id=sample_id)
        filename = MASK_FILENAMES[(query, frame)]
        save_mask_png(mask, self._sample_dir(sample_id) / filename)
        return mask


def parse_client_spec(spec: str) -> GenerationClient:
    """Build a client from a CLI-style spec string.

    ``replay:DIR`` replays fixtures from DIR; an ``http://...`` or
    ``https://...`` URL talks to a live provider adapter.
    """
    if spec.startswith("replay:"):
        return ReplayClient(spec[len("replay:") :])
    if spec.startswith(("http://", "https://")):
        return HttpGenerationClient(spec)
    raise ValueError(f"unrecognized client spec: {spec!r}")
