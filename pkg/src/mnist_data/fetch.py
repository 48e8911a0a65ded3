"""Download the canonical MNIST files."""

from __future__ import annotations

import hashlib
import logging
import os
from pathlib import Path

import httpx

from .idx_reader import MNIST_FILES

logger = logging.getLogger(__name__)
if not logger.hasHandlers():
    logging.basicConfig(level=logging.INFO)

MNIST_MIRROR = "https://ossci-datasets.s3.amazonaws.com/mnist/"

# The mirror can be slow to start streaming; allow a generous read timeout.
DEFAULT_HTTP_TIMEOUT = httpx.Timeout(120.0, connect=30.0)


def fetch_steps(data_dir: str | os.PathLike[str], base_url: str = MNIST_MIRROR) -> list[str]:
    """Shell commands equivalent to ``fetch_mnist``."""
    data_dir = Path(data_dir)
    steps = [f"mkdir -p {data_dir}"]
    steps += [f"curl -fL -o {data_dir / name}.gz {base_url}{name}.gz" for name in MNIST_FILES.values()]
    return steps


def fetch_mnist(
    data_dir: str | os.PathLike[str],
    *,
    base_url: str = MNIST_MIRROR,
    client: httpx.Client | None = None,
) -> list[Path]:
    """Download any missing ``*.gz`` MNIST file into ``data_dir``.

    Files already present (raw or compressed) are left untouched.
    """
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    owns_client = client is None
    client = client or httpx.Client(timeout=DEFAULT_HTTP_TIMEOUT, follow_redirects=True)
    written: list[Path] = []
    try:
        for name in MNIST_FILES.values():
            target = data_dir / f"{name}.gz"
            if target.exists() or (data_dir / name).exists():
                logger.info("Keeping existing %s", name)
                continue
            url = f"{base_url}{name}.gz"
            logger.info("Downloading %s", url)
            response = client.get(url)
            response.raise_for_status()
            partial = target.with_suffix(".gz.part")
            partial.write_bytes(response.content)
            partial.replace(target)
            logger.info("Saved %s sha256=%s", target, hashlib.sha256(response.content).hexdigest())
            written.append(target)
    finally:
        if owns_client:
            client.close()
    return written
