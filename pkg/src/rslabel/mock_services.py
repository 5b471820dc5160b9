"""Deterministic in-process mock of the proposal and naming services.

Responses are derived from a hash of the request URI, so a run against the
mock is reproducible regardless of concurrency. Transient failures (HTTP 503
on the first attempts of a deterministic subset of requests) can be injected
to exercise the client's retry path.
"""

from __future__ import annotations

import hashlib
import json
import random
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

MOCK_VOCAB = [
    "Road",
    "Airport runway",
    "Airport",
    "Runway",
    "Airplanes",
    "Ship",
    "Harbor",
    "Storage tank",
    "Bridge",
    "Vehicle",
]


def _seed_for(uri: str) -> int:
    return int.from_bytes(hashlib.sha256(uri.encode("utf-8")).digest()[:8], "big")


def make_proposals(image_uri: str, count_range=(8, 16)) -> list[dict]:
    """Table-shaped proposal rows, deterministic in the image URI."""
    rng = random.Random(_seed_for(image_uri))
    n = rng.randint(*count_range)
    rows = []
    for i in range(n):
        w = rng.randint(5, 120)
        h = rng.randint(5, 120)
        x = rng.randint(0, 900)
        y = rng.randint(0, 900)
        rows.append(
            {
                "id": i,
                "area": w * h,
                "bbox": [x, y, w, h],
                "point_input_x": x + w / 2,
                "point_input_y": y + h / 2,
                "predicted_iou": round(rng.uniform(0.80, 1.0), 4),
                "stability_score": round(rng.uniform(0.88, 1.0), 4),
                "crop_box": [max(0, x - 10), max(0, y - 10), w + 20, h + 20],
            }
        )
    return rows


def make_naming_text(crop_uri: str) -> str:
    """A naming response in the documented prose shape, deterministic in the
    crop URI. A slice of responses is Unrecognized and another slice carries
    a low likelihood, so the rule filter always has something to drop."""
    rng = random.Random(_seed_for(crop_uri) ^ 0xC0FFEE)
    roll = rng.random()
    if roll < 0.15:
        return (
            '"Unrecognized" with a likelihood of 0.8. The image is too blurry '
            "to determine the object category."
        )
    category = rng.choice(MOCK_VOCAB)
    likelihood = 0.3 if roll < 0.30 else round(rng.uniform(0.6, 1.0), 1)
    return (
        f'"{category}" with a likelihood of {likelihood}. The image shows '
        f"features characteristic of a {category.lower()}."
    )


class MockServiceState:
    def __init__(self, fail_rate: float = 0.0, fail_seed: int = 0):
        self.fail_rate = fail_rate
        self.fail_seed = fail_seed
        self._attempts: dict[str, int] = {}
        self._lock = threading.Lock()

    def should_fail(self, key: str) -> bool:
        """Deterministically fail the first attempt of a fail_rate slice of
        requests; retries of the same request succeed."""
        with self._lock:
            attempt = self._attempts.get(key, 0)
            self._attempts[key] = attempt + 1
        if attempt > 0:
            return False
        h = _seed_for(f"{self.fail_seed}:{key}") % 10_000
        return h < self.fail_rate * 10_000


class _Handler(BaseHTTPRequestHandler):
    state: MockServiceState

    def log_message(self, *args):
        pass

    def _reply(self, code: int, doc: dict):
        body = json.dumps(doc).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        try:
            payload = json.loads(self.rfile.read(length))
        except json.JSONDecodeError:
            self._reply(400, {"error": "bad json"})
            return
        uri = payload.get("image_uri", "")
        if self.state.should_fail(f"{self.path}:{uri}"):
            self._reply(503, {"error": "transient"})
            return
        if self.path == "/proposals":
            self._reply(200, {"proposals": make_proposals(uri)})
        elif self.path == "/naming":
            self._reply(200, {"text": make_naming_text(uri)})
        else:
            self._reply(404, {"error": "unknown endpoint"})


class MockServices:
    """Both mock services on one local HTTP port; use as a context manager."""

    def __init__(self, fail_rate: float = 0.0, fail_seed: int = 0):
        self.state = MockServiceState(fail_rate=fail_rate, fail_seed=fail_seed)
        handler = type("Handler", (_Handler,), {"state": self.state})
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def proposal_endpoint(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}/proposals"

    @property
    def naming_endpoint(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}/naming"

    def __enter__(self) -> "MockServices":
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
